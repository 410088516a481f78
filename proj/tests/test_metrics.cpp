#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ounet/geometry.hpp"
#include "ounet/metrics.hpp"

using namespace ounet;

namespace {

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) pc.points.push_back({u(rng), u(rng), u(rng)});
  return pc;
}

PointCloud line(int n) {
  PointCloud pc;
  for (int i = 0; i < n; ++i) pc.points.push_back({static_cast<double>(i), 0, 0});
  return pc;
}

double min_pairwise(const PointCloud& pc) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pc.count(); ++i)
    for (std::size_t j = i + 1; j < pc.count(); ++j) best = std::min(best, squared_distance(pc[i], pc[j]));
  return std::sqrt(best);
}

}  // namespace

TEST(Chamfer, HandExamples) {
  const PointCloud p{{{0, 0, 0}}}, q{{{1, 0, 0}}};
  EXPECT_DOUBLE_EQ(chamfer(p, q), 2.0);
  EXPECT_DOUBLE_EQ(chamfer(p, p), 0.0);
  EXPECT_THROW(chamfer(p, PointCloud{}), InputError);
}

TEST(Chamfer, KdTreeMatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_cloud(1 + rng() % 512, rng);
    const auto q = random_cloud(1 + rng() % 512, rng);
    ASSERT_NEAR(chamfer(p, q), chamfer_brute_force(p, q), 1e-12);
    ASSERT_DOUBLE_EQ(chamfer(p, q), chamfer(q, p));
  }
}

TEST(Hausdorff, HandExamples) {
  const PointCloud p{{{0, 0, 0}, {2, 0, 0}}}, q{{{0, 0, 0}}};
  EXPECT_DOUBLE_EQ(hausdorff(p, q), 2.0);
  EXPECT_DOUBLE_EQ(hausdorff(q, p), 2.0);
  EXPECT_DOUBLE_EQ(hausdorff(p, p), 0.0);
  EXPECT_THROW(hausdorff(PointCloud{}, q), InputError);
}

TEST(Hausdorff, KdTreeMatchesBruteForce) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_cloud(1 + rng() % 300, rng);
    const auto q = random_cloud(1 + rng() % 300, rng);
    ASSERT_NEAR(hausdorff(p, q), hausdorff_brute_force(p, q), 1e-12);
  }
}

TEST(KdTree, DuplicatePointsTieToLowestIndex) {
  std::vector<Point3> pts(20, Point3{0.5, 0.5, 0.5});
  pts.push_back({0, 0, 0});
  const KdTree tree(pts);
  EXPECT_EQ(tree.nearest({0.5, 0.5, 0.5}).index, 0u);
  EXPECT_EQ(tree.nearest({0.5, 0.5, 0.5}, 0).index, 1u);
  EXPECT_EQ(tree.nearest({0.1, 0, 0}).index, 20u);
}

TEST(PointToSurface, AnalyticReference) {
  const auto sphere = ShapeSpec::sphere(1.0);
  EXPECT_NEAR(point_to_surface(sample_surface(sphere, 500, 1), sphere), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(point_to_surface(PointCloud{{{0, 0, 0}}}, sphere), 1.0);
  EXPECT_THROW(point_to_surface(PointCloud{}, sphere), InputError);
}

TEST(PointToSurface, DenseReferenceApproximatesAnalytic) {
  const auto sphere = ShapeSpec::sphere(1.0);
  const auto reference = sample_surface(sphere, 50000, 2);
  const double spacing = mean_spacing(reference);
  // Points 0.05 off the surface in both directions.
  auto pts = sample_surface(sphere, 400, 3);
  for (std::size_t i = 0; i < pts.count(); ++i) pts.points[i] = pts[i] * (i % 2 ? 1.05 : 0.95);
  const double analytic = point_to_surface(pts, sphere);
  const double approx = point_to_surface(pts, reference);
  EXPECT_LT(std::abs(approx - analytic), 2.0 * spacing);
}

TEST(Fps, CollinearHandSimulation) {
  EXPECT_EQ(farthest_point_indices(line(10), 3, 0), (std::vector<std::size_t>{0, 9, 4}));
}

TEST(Fps, FullCountIsPermutation) {
  std::mt19937_64 rng(4);
  const auto pc = random_cloud(50, rng);
  const auto idx = farthest_point_indices(pc, 50, 7);
  EXPECT_EQ(idx[0], 7u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 50u);
  EXPECT_THROW(farthest_point_indices(pc, 0), InputError);
  EXPECT_THROW(farthest_point_indices(pc, 51), InputError);
}

TEST(Fps, DominatesRandomSubsets) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    std::mt19937_64 rng(100 + trial);
    const auto pc = random_cloud(512, rng);
    const std::size_t k = 32;
    const auto fps = farthest_point_sample(pc, k, 0);
    std::vector<std::size_t> idx(pc.count());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    PointCloud random;
    for (std::size_t i = 0; i < k; ++i) random.points.push_back(pc[idx[i]]);
    EXPECT_GE(min_pairwise(fps), min_pairwise(random)) << "trial " << trial;
  }
}

TEST(CountMatch, DownsampleUpsampleAndIdentity) {
  std::mt19937_64 rng(5);
  const auto pc = random_cloud(100, rng);
  EXPECT_EQ(count_match(pc, 100), pc);
  EXPECT_EQ(count_match(pc, 10), farthest_point_sample(pc, 10, 0));
  const auto up = count_match(pc, 250, 1);
  ASSERT_EQ(up.count(), 250u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(up[i], pc[i]);
  const KdTree tree(pc.points);
  for (std::size_t i = 100; i < 250; ++i) EXPECT_LT(std::sqrt(tree.nearest(up[i]).squared_distance), 1e-3);
  EXPECT_EQ(count_match(pc, 250, 1), up);
  EXPECT_THROW(count_match(PointCloud{}, 5), InputError);
}

TEST(MetricsReport, JsonConventions) {
  MetricsReport r;
  r.cd = 0.5;
  r.n_pred = 3;
  r.n_ref = 4;
  const auto j = r.to_json();
  EXPECT_DOUBLE_EQ(j["cd"].get<double>(), 0.5);
  EXPECT_FALSE(j.contains("hd"));
  EXPECT_EQ(j["conventions"]["cd"], "squared");
  EXPECT_EQ(j["conventions"]["hd"], "unsquared");
}
