#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "ounet/geometry.hpp"

namespace ounet {

// Static 3-d tree over a point set for exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Point3>& points) : points_(points) {
    if (points_.empty()) throw InputError("cannot build a k-d tree over an empty cloud");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
  }

  struct Hit {
    std::uint32_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  static constexpr std::uint32_t kNoExclude = std::numeric_limits<std::uint32_t>::max();

  // Closest point other than `exclude`; ties go to the lowest index.
  Hit nearest(const Point3& q, std::uint32_t exclude = kNoExclude) const {
    Hit best;
    search(0, q, exclude, best);
    return best;
  }

  std::size_t size() const noexcept { return points_.size(); }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct KdNode {
    std::uint32_t begin = 0, end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    Point3 lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      const Point3& p = points_[order_[i]];
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
    }
    int axis = 0;
    for (int k = 1; k < 3; ++k)
      if (hi[k] - lo[k] > hi[axis] - lo[axis]) axis = k;
    if (hi[axis] - lo[axis] <= 0.0) return id;
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    auto& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(std::uint32_t id, const Point3& q, std::uint32_t exclude, Hit& best) const {
    const KdNode& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = order_[i];
        if (idx == exclude) continue;
        const double d2 = squared_distance(points_[idx], q);
        if (d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index)) {
          best.squared_distance = d2;
          best.index = idx;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff < 0 ? n.left : n.right;
    const std::uint32_t far = diff < 0 ? n.right : n.left;
    search(near, q, exclude, best);
    if (diff * diff <= best.squared_distance) search(far, q, exclude, best);
  }

  const std::vector<Point3>& points_;
  std::vector<std::uint32_t> order_;
  std::vector<KdNode> nodes_;
};

namespace detail {

inline void require_nonempty(const PointCloud& p, const char* what) {
  if (p.empty()) throw InputError(std::string(what) + ": empty point cloud");
}

// Squared distance from each point of `from` to its nearest point of `to`.
inline std::vector<double> nn_squared(const PointCloud& from, const PointCloud& to) {
  const KdTree tree(to.points);
  std::vector<double> out(from.count());
  for (std::size_t i = 0; i < from.count(); ++i) out[i] = tree.nearest(from.points[i]).squared_distance;
  return out;
}

inline std::vector<double> nn_squared_brute(const PointCloud& from, const PointCloud& to) {
  std::vector<double> out(from.count(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < from.count(); ++i)
    for (const auto& q : to.points) out[i] = std::min(out[i], squared_distance(from.points[i], q));
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace detail

// Squared-distance Chamfer distance.
inline double chamfer(const PointCloud& p, const PointCloud& q) {
  detail::require_nonempty(p, "chamfer");
  detail::require_nonempty(q, "chamfer");
  return detail::mean(detail::nn_squared(p, q)) + detail::mean(detail::nn_squared(q, p));
}

inline double hausdorff(const PointCloud& p, const PointCloud& q) {
  detail::require_nonempty(p, "hausdorff");
  detail::require_nonempty(q, "hausdorff");
  return std::sqrt(std::max(detail::max_of(detail::nn_squared(p, q)), detail::max_of(detail::nn_squared(q, p))));
}

inline double chamfer_brute_force(const PointCloud& p, const PointCloud& q) {
  detail::require_nonempty(p, "chamfer");
  detail::require_nonempty(q, "chamfer");
  return detail::mean(detail::nn_squared_brute(p, q)) + detail::mean(detail::nn_squared_brute(q, p));
}

inline double hausdorff_brute_force(const PointCloud& p, const PointCloud& q) {
  detail::require_nonempty(p, "hausdorff");
  detail::require_nonempty(q, "hausdorff");
  return std::sqrt(
      std::max(detail::max_of(detail::nn_squared_brute(p, q)), detail::max_of(detail::nn_squared_brute(q, p))));
}

// Mean |sdf| against an analytic surface.
inline double point_to_surface(const PointCloud& p, const ShapeSpec& surface) {
  detail::require_nonempty(p, "point_to_surface");
  double s = 0.0;
  for (const auto& x : p.points) s += std::abs(signed_distance(surface, x));
  return s / static_cast<double>(p.count());
}

// Mean nearest-neighbour distance to a dense reference cloud.
inline double point_to_surface(const PointCloud& p, const PointCloud& reference) {
  detail::require_nonempty(p, "point_to_surface");
  detail::require_nonempty(reference, "point_to_surface reference");
  const KdTree tree(reference.points);
  double s = 0.0;
  for (const auto& x : p.points) s += std::sqrt(tree.nearest(x).squared_distance);
  return s / static_cast<double>(p.count());
}

// Mean distance from each point to its nearest other point.
inline double mean_spacing(const PointCloud& p) {
  if (p.count() < 2) throw InputError("mean_spacing needs at least two points");
  const KdTree tree(p.points);
  double s = 0.0;
  for (std::size_t i = 0; i < p.count(); ++i)
    s += std::sqrt(tree.nearest(p.points[i], static_cast<std::uint32_t>(i)).squared_distance);
  return s / static_cast<double>(p.count());
}

// Greedy max-min selection from `start`; ties go to the lowest index.
inline std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t k, std::size_t start = 0) {
  if (k < 1 || k > pc.count())
    throw InputError("farthest_point_sample: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(pc.count()) + "]");
  if (start >= pc.count()) throw InputError("farthest_point_sample: start index out of range");
  std::vector<double> dist(pc.count(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen{start};
  chosen.reserve(k);
  std::size_t last = start;
  while (chosen.size() < k) {
    std::size_t next = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < pc.count(); ++i) {
      dist[i] = std::min(dist[i], squared_distance(pc.points[i], pc.points[last]));
      if (dist[i] > far) {
        far = dist[i];
        next = i;
      }
    }
    chosen.push_back(next);
    last = next;
  }
  return chosen;
}

inline PointCloud farthest_point_sample(const PointCloud& pc, std::size_t k, std::size_t start = 0) {
  PointCloud out;
  for (auto i : farthest_point_indices(pc, k, start)) out.points.push_back(pc.points[i]);
  return out;
}

inline constexpr double kCountMatchJitter = 1e-4;

// FPS down to `target`, or duplicate random points with small jitter up to it.
inline PointCloud count_match(const PointCloud& pc, std::size_t target, std::uint64_t seed = 0) {
  if (pc.empty()) throw InputError("count_match: empty point cloud");
  if (target < 1) throw InputError("count_match: target count must be >= 1");
  if (pc.count() == target) return pc;
  if (pc.count() > target) return farthest_point_sample(pc, target, 0);
  PointCloud out = pc;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pc.count() - 1);
  std::normal_distribution<double> jitter(0.0, kCountMatchJitter);
  while (out.count() < target) {
    Point3 p = pc.points[pick(rng)];
    p.x += jitter(rng);
    p.y += jitter(rng);
    p.z += jitter(rng);
    out.points.push_back(p);
  }
  return out;
}

struct MetricsReport {
  std::optional<double> cd;
  std::optional<double> hd;
  std::optional<double> p2f;
  std::size_t n_pred = 0;
  std::size_t n_ref = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    if (cd) j["cd"] = *cd;
    if (hd) j["hd"] = *hd;
    if (p2f) j["p2f"] = *p2f;
    j["n_pred"] = n_pred;
    j["n_ref"] = n_ref;
    j["conventions"] = {{"cd", "squared"}, {"hd", "unsquared"}};
    return j;
  }
};

}  // namespace ounet
