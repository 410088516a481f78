#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "ounet/metrics.hpp"
#include "ounet/model.hpp"
#include "ounet/training.hpp"

namespace ounet {

// Patch-based processing for the non-patch ablation: FPS seeds, k-nearest
// neighbour patches normalised one by one, outputs stitched by concatenation + FPS.
struct PatchOptions {
  std::size_t patch_size = 512;
  std::size_t num_seeds = 8;
};

// Indices of the k points nearest to `center`, closest first (ties by index).
inline std::vector<std::size_t> k_nearest(const PointCloud& pc, const Point3& center, std::size_t k) {
  std::vector<std::size_t> idx(pc.count());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  auto closer = [&](std::size_t a, std::size_t b) {
    const double da = squared_distance(pc.points[a], center), db = squared_distance(pc.points[b], center);
    return da < db || (da == db && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);
  idx.resize(k);
  return idx;
}

inline PointCloud subset(const PointCloud& pc, const std::vector<std::size_t>& idx) {
  PointCloud out;
  out.points.reserve(idx.size());
  for (auto i : idx) out.points.push_back(pc.points[i]);
  return out;
}

struct PatchInferResult {
  PointCloud points;
  std::size_t patches = 0;
  std::size_t covered_inputs = 0;
  bool degenerate = false;
};

// Runs the network per patch. Without a target, the merged count scales the raw
// output by the fraction of input points the patches cover.
template <typename Real>
PatchInferResult infer_patches(OUNet<Real>& model, const PointCloud& input, const PatchOptions& opt,
                               std::optional<std::size_t> target = std::nullopt) {
  if (input.empty()) throw InputError("patch inference needs a non-empty input");
  const auto seeds = farthest_point_indices(input, std::min(opt.num_seeds, input.count()), 0);
  PatchInferResult res;
  PointCloud merged;
  std::vector<std::uint8_t> covered(input.count(), 0);
  std::size_t patch_inputs = 0;
  for (auto s : seeds) {
    const auto idx = k_nearest(input, input.points[s], opt.patch_size);
    for (auto i : idx) covered[i] = 1;
    patch_inputs += idx.size();
    const PointCloud patch = subset(input, idx);
    const CubeTransform t = unit_cube_transform(patch);
    auto out = model.infer({clamp_to_cube(t.apply(patch))});
    res.degenerate = res.degenerate || out.degenerate[0];
    const PointCloud back = t.invert(out.points[0]);
    merged.points.insert(merged.points.end(), back.points.begin(), back.points.end());
    ++res.patches;
  }
  res.covered_inputs = static_cast<std::size_t>(std::count(covered.begin(), covered.end(), 1));
  std::size_t want = target.value_or(0);
  if (!target) {
    const double frac = static_cast<double>(res.covered_inputs) / static_cast<double>(patch_inputs);
    want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(merged.count()) * frac)));
  }
  res.points = merged.empty() ? merged : count_match(merged, want);
  return res;
}

// Training-time counterpart: one random input patch and the ground-truth ball of
// the same radius, both in the patch's own normalised frame.
inline TrainSample extract_training_patch(const TrainSample& s, std::mt19937_64& rng, const PatchOptions& opt) {
  if (s.input.empty() || s.gt.empty()) throw InputError("patch extraction needs non-empty clouds");
  const std::size_t seed = std::uniform_int_distribution<std::size_t>(0, s.input.count() - 1)(rng);
  const Point3 c = s.input.points[seed];
  const auto idx = k_nearest(s.input, c, opt.patch_size);
  double r2 = 0.0;
  for (auto i : idx) r2 = std::max(r2, squared_distance(s.input.points[i], c));
  TrainSample out;
  out.task = s.task;
  PointCloud patch = subset(s.input, idx), ball;
  for (const auto& p : s.gt.points)
    if (squared_distance(p, c) <= r2) ball.points.push_back(p);
  if (ball.empty()) ball.points.push_back(s.gt.points[k_nearest(s.gt, c, 1)[0]]);
  const CubeTransform t = unit_cube_transform(patch);
  out.input = clamp_to_cube(t.apply(patch));
  out.gt = clamp_to_cube(t.apply(ball));
  return out;
}

}  // namespace ounet
