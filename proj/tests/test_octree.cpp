#include <random>

#include <gtest/gtest.h>

#include "ounet/geometry.hpp"
#include "ounet/metrics.hpp"
#include "ounet/octree.hpp"

using namespace ounet;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) pc.points.push_back({u(rng), u(rng), u(rng)});
  return pc;
}

PointCloud torus_cloud(std::size_t n, std::uint64_t seed) {
  return normalize_unit_cube(sample_surface(ShapeSpec::torus(0.6, 0.25), n, seed)).first;
}

}  // namespace

TEST(Morton, HandInterleavedCodes) {
  EXPECT_EQ(morton_encode(1, 1, 1, 1), 7u);
  EXPECT_EQ(morton_encode(3, 3, 3, 2), 63u);
  EXPECT_EQ(morton_encode(1, 0, 0, 1), 4u);
  EXPECT_EQ(morton_encode(0, 0, 1, 1), 1u);
  EXPECT_EQ(morton_encode(2, 0, 0, 2), 32u);
}

TEST(Morton, DecodeInvertsEncode) {
  std::mt19937_64 rng(1);
  for (int level = 0; level <= 10; ++level) {
    for (int i = 0; i < 50; ++i) {
      const std::uint32_t m = 1u << level;
      const std::uint32_t x = static_cast<std::uint32_t>(rng() % m), y = static_cast<std::uint32_t>(rng() % m),
                          z = static_cast<std::uint32_t>(rng() % m);
      EXPECT_EQ(morton_decode(morton_encode(x, y, z, level), level), (std::array<std::uint32_t, 3>{x, y, z}));
    }
  }
  EXPECT_THROW(morton_encode(4, 0, 0, 2), DomainError);
}

TEST(BuildOctree, SinglePointExample) {
  const Octree oct = build_octree(PointCloud{{{0.5, 0.5, 0.5}}}, 2, 1);
  EXPECT_TRUE(oct.check_invariants().empty());
  ASSERT_EQ(oct.level(0).size(), 1u);
  ASSERT_EQ(oct.level(1).size(), 8u);
  EXPECT_EQ(oct.level(1).nonempty, (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 1}));
  ASSERT_EQ(oct.level(2).size(), 1u);
  EXPECT_EQ(oct.level(2).codes[0], 63u);
}

TEST(BuildOctree, InvariantsHoldOnRandomClouds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Octree oct = build_octree(random_cloud(300, seed), 5, 2);
    EXPECT_TRUE(oct.check_invariants().empty());
    EXPECT_EQ(oct.level(2).size(), 64u);
  }
}

TEST(BuildOctree, RejectsOutOfCubeAndEmpty) {
  EXPECT_THROW(build_octree(PointCloud{{{1.5, 0, 0}}}, 3, 1), DomainError);
  EXPECT_THROW(build_octree(PointCloud{}, 3, 1), InputError);
  EXPECT_THROW(build_octree(PointCloud{{{0, 0, 0}}}, 3, 4), ConfigError);
}

TEST(BuildOctree, InsertionOrderIndependent) {
  auto pc = random_cloud(200, 3);
  const Octree a = build_octree(pc, 5, 2);
  std::shuffle(pc.points.begin(), pc.points.end(), std::mt19937_64(4));
  EXPECT_EQ(build_octree(pc, 5, 2), a);
}

TEST(NeighborTable, MatchesLinearScan) {
  const Octree oct = build_octree(random_cloud(150, 5), 4, 1);
  for (int l = 1; l <= 4; ++l) {
    const auto& lv = oct.level(l);
    const IndexTable t = neighbor_table(oct, l);
    for (std::size_t n = 0; n < lv.size(); ++n) {
      const auto xyz = morton_decode(lv.codes[n], l);
      for (int k = 0; k < kNeighborCount; ++k) {
        const auto off = neighbor_offset(k);
        std::int32_t expected = kSentinel;
        for (std::size_t m = 0; m < lv.size(); ++m) {
          const auto q = morton_decode(lv.codes[m], l);
          if (static_cast<int>(q[0]) - static_cast<int>(xyz[0]) == off[0] &&
              static_cast<int>(q[1]) - static_cast<int>(xyz[1]) == off[1] &&
              static_cast<int>(q[2]) - static_cast<int>(xyz[2]) == off[2])
            expected = static_cast<std::int32_t>(m);
        }
        ASSERT_EQ(t(n, static_cast<std::size_t>(k)), expected) << "level " << l << " node " << n << " k " << k;
      }
    }
  }
}

TEST(NeighborTable, CentreIsSelfAndOffsetsAreXMajor) {
  EXPECT_EQ(neighbor_offset(kNeighborCenter), (std::array<int, 3>{0, 0, 0}));
  EXPECT_EQ(neighbor_offset(0), (std::array<int, 3>{-1, -1, -1}));
  EXPECT_EQ(neighbor_offset(1), (std::array<int, 3>{-1, -1, 0}));
  EXPECT_EQ(neighbor_offset(9), (std::array<int, 3>{0, -1, -1}));
}

TEST(Batch, NoCrossSampleNeighbors) {
  const Octree a = build_octree(random_cloud(200, 6), 4, 2);
  const Octree b = build_octree(random_cloud(200, 7), 4, 2);
  const Octree ab = batch_octrees(std::vector<Octree>{a, b});
  EXPECT_TRUE(ab.check_invariants().empty());
  for (int l = 1; l <= 4; ++l) {
    const auto& lv = ab.level(l);
    const IndexTable t = neighbor_table(lv);
    const IndexTable tb = neighbor_table(b.level(l));
    const auto [b0, b1] = ab.sample_range(l, 1);
    for (std::size_t n = 0; n < lv.size(); ++n)
      for (std::size_t k = 0; k < 27; ++k) {
        const auto e = t(n, k);
        if (e != kSentinel) {
          EXPECT_EQ(lv.sample_ids[static_cast<std::size_t>(e)], lv.sample_ids[n]);
        }
      }
    for (std::size_t n = b0; n < b1; ++n)
      for (std::size_t k = 0; k < 27; ++k) {
        const auto own = tb(n - b0, k);
        EXPECT_EQ(t(n, k), own == kSentinel ? kSentinel : own + static_cast<std::int32_t>(b0));
      }
  }
  const auto parts = unbatch_octree(ab);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0], a);
  EXPECT_EQ(parts[1], b);
}

TEST(Tables, ChildAndParentSlotsAgree) {
  const Octree oct = build_octree(random_cloud(100, 8), 4, 1);
  for (int l = 2; l <= 4; ++l) {
    const IndexTable ct = child_table(oct.level(l - 1), oct.level(l));
    const IndexTable pt = parent_slot_table(oct.level(l - 1), oct.level(l));
    for (std::size_t c = 0; c < oct.level(l).size(); ++c) {
      const std::size_t slot = oct.level(l).codes[c] & 7u;
      const auto p = pt(c, slot);
      ASSERT_NE(p, kSentinel);
      EXPECT_EQ(ct(static_cast<std::size_t>(p), slot), static_cast<std::int32_t>(c));
      for (std::size_t s = 0; s < 8; ++s)
        if (s != slot) {
          EXPECT_EQ(pt(c, s), kSentinel);
        }
    }
  }
}

TEST(TeacherForcing, StructureIsChildrenOfNonEmptyNodes) {
  const Octree gt = build_octree(torus_cloud(500, 1), 5, 2);
  const Octree st = teacher_forced_structure(gt);
  EXPECT_TRUE(st.check_invariants().empty());
  for (int l = 3; l <= 5; ++l) {
    std::size_t parents = 0;
    for (auto f : st.level(l - 1).nonempty) parents += f;
    EXPECT_EQ(st.level(l).size(), 8 * parents);
    std::size_t occupied = 0;
    for (auto f : st.level(l).nonempty) occupied += f;
    EXPECT_EQ(occupied, gt.level(l).size());
  }
}

TEST(Targets, SinglePointLocalCoords) {
  const PointCloud pc{{{0.5, 0.5, 0.5}}};
  const Octree gt = build_octree(pc, 2, 1);
  const Octree st = teacher_forced_structure(gt);
  const auto t = extract_targets(gt, st, std::vector<PointCloud>{pc});
  ASSERT_EQ(t.local_coords.size(), 1u);
  EXPECT_EQ(st.level(2).codes[static_cast<std::size_t>(t.leaf_rows[0])], 63u);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(t.local_coords[0][k], -1.0, 1e-15);
  EXPECT_EQ(t.level_labels(1), (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 1}));
  const std::vector<std::uint8_t> leaf_labels{0, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_EQ(t.level_labels(2), leaf_labels);
}

TEST(Targets, DisplacementInverse) {
  const Octree gt = build_octree(PointCloud{{{0.5, 0.5, 0.5}}}, 2, 1);
  const std::vector<Vec3d> disp{{-1.0, -1.0, -1.0}};
  const auto pc = points_from_octree(gt, disp);
  ASSERT_EQ(pc.count(), 1u);
  EXPECT_EQ(pc[0], (Point3{0.5, 0.5, 0.5}));
}

TEST(Targets, ReconstructionWithinCellDiagonal) {
  const auto pc = torus_cloud(3000, 2);
  const int d = 5;
  const Octree gt = build_octree(pc, d, 2);
  const auto t = extract_targets(gt, gt, std::vector<PointCloud>{pc});
  const auto rec = points_from_octree(gt, t.local_coords);
  EXPECT_EQ(rec.count(), gt.level(d).size());
  const double diag = 2.0 * cell_half_size(d) * std::sqrt(3.0);
  EXPECT_LT(chamfer(rec, pc), diag * diag);
}

TEST(Targets, PointsInsideTheirCell) {
  const auto pc = torus_cloud(2000, 3);
  const Octree gt = build_octree(pc, 4, 2);
  const auto t = extract_targets(gt, teacher_forced_structure(gt), std::vector<PointCloud>{pc});
  for (const auto& v : t.local_coords)
    for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(v[k]), 1.0 + 1e-12);
}

TEST(Targets, DisplacementsClampedAndCountChecked) {
  const Octree gt = build_octree(PointCloud{{{0.5, 0.5, 0.5}}}, 2, 1);
  const auto pc = points_from_octree(gt, std::vector<Vec3d>{{100.0, 0.0, 0.0}});
  EXPECT_DOUBLE_EQ(pc[0].x, 0.75 + kDisplacementClamp * 0.25);
  EXPECT_THROW(points_from_octree(gt, std::vector<Vec3d>{}), ShapeError);
}
