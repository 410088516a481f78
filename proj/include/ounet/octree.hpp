#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ounet/errors.hpp"
#include "ounet/geometry.hpp"
#include "ounet/index_table.hpp"

namespace ounet {

// Sample ids occupy the top 16 bits of a node key, so codes have 48 bits.
inline constexpr int kMaxOctreeDepth = 16;

// Bit i of x, y, z lands at bits 3i+2, 3i+1, 3i; the child slot of a code is
// therefore (x_bit << 2) | (y_bit << 1) | z_bit.
inline std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z, int level) {
  if (level < 0 || level > kMaxOctreeDepth) throw DomainError("octree level out of range");
  const std::uint64_t limit = std::uint64_t{1} << level;
  if (x >= limit || y >= limit || z >= limit)
    throw DomainError("cell index out of range for level " + std::to_string(level));
  std::uint64_t code = 0;
  for (int i = 0; i < level; ++i) {
    code |= static_cast<std::uint64_t>((x >> i) & 1u) << (3 * i + 2);
    code |= static_cast<std::uint64_t>((y >> i) & 1u) << (3 * i + 1);
    code |= static_cast<std::uint64_t>((z >> i) & 1u) << (3 * i);
  }
  return code;
}

inline std::array<std::uint32_t, 3> morton_decode(std::uint64_t code, int level) {
  std::array<std::uint32_t, 3> xyz{0, 0, 0};
  for (int i = 0; i < level; ++i) {
    xyz[0] |= static_cast<std::uint32_t>((code >> (3 * i + 2)) & 1u) << i;
    xyz[1] |= static_cast<std::uint32_t>((code >> (3 * i + 1)) & 1u) << i;
    xyz[2] |= static_cast<std::uint32_t>((code >> (3 * i)) & 1u) << i;
  }
  return xyz;
}

inline std::uint64_t node_key(std::int32_t sample, std::uint64_t code) {
  return (static_cast<std::uint64_t>(sample) << 48) | code;
}

inline double cell_half_size(int level) { return std::ldexp(1.0, -level); }

inline Point3 cell_center(std::uint64_t code, int level) {
  const auto xyz = morton_decode(code, level);
  const double width = 2.0 * cell_half_size(level);
  return {-1.0 + (xyz[0] + 0.5) * width, -1.0 + (xyz[1] + 0.5) * width,
          -1.0 + (xyz[2] + 0.5) * width};
}

// floor((p + 1) / 2 * 2^level) per axis, with the upper boundary folded into the last cell.
inline std::array<std::uint32_t, 3> cell_index(Point3 p, int level) {
  const double cells = std::ldexp(1.0, level);
  std::array<std::uint32_t, 3> idx{};
  for (int k = 0; k < 3; ++k) {
    const double v = std::floor((p[k] + 1.0) * 0.5 * cells);
    idx[k] = static_cast<std::uint32_t>(std::clamp(v, 0.0, cells - 1.0));
  }
  return idx;
}

inline std::uint64_t point_code(Point3 p, int level) {
  const auto idx = cell_index(p, level);
  return morton_encode(idx[0], idx[1], idx[2], level);
}

// One level of a linear octree: nodes sorted by (sample id, code).
class OctreeLevel {
 public:
  int depth = 0;
  std::vector<std::uint64_t> codes;
  std::vector<std::int32_t> sample_ids;
  std::vector<std::uint8_t> nonempty;

  std::size_t size() const noexcept { return codes.size(); }

  void build_index() {
    index_.clear();
    index_.reserve(codes.size() * 2);
    for (std::size_t i = 0; i < codes.size(); ++i)
      index_.emplace(node_key(sample_ids[i], codes[i]), static_cast<std::int32_t>(i));
  }

  std::int32_t find(std::int32_t sample, std::uint64_t code) const {
    auto it = index_.find(node_key(sample, code));
    return it == index_.end() ? kSentinel : it->second;
  }

  std::size_t index_size() const noexcept { return index_.size(); }

  friend bool operator==(const OctreeLevel& a, const OctreeLevel& b) {
    return a.depth == b.depth && a.codes == b.codes && a.sample_ids == b.sample_ids &&
           a.nonempty == b.nonempty;
  }

 private:
  std::unordered_map<std::uint64_t, std::int32_t> index_;
};

class Octree {
 public:
  Octree() = default;
  Octree(int max_depth, int full_depth, int num_samples, std::vector<OctreeLevel> levels)
      : max_depth_(max_depth), full_depth_(full_depth), num_samples_(num_samples),
        levels_(std::move(levels)) {
    if (static_cast<int>(levels_.size()) != max_depth_ + 1)
      throw InternalError("octree must hold max_depth + 1 levels");
    for (auto& l : levels_) l.build_index();
  }

  int max_depth() const noexcept { return max_depth_; }
  int full_depth() const noexcept { return full_depth_; }
  int num_samples() const noexcept { return num_samples_; }
  const OctreeLevel& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  const std::vector<OctreeLevel>& levels() const noexcept { return levels_; }

  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (const auto& l : levels_) n += l.size();
    return n;
  }

  // Row range [begin, end) of one sample at a level.
  std::pair<std::size_t, std::size_t> sample_range(int l, std::int32_t sample) const {
    const auto& ids = level(l).sample_ids;
    const auto lo = std::lower_bound(ids.begin(), ids.end(), sample);
    const auto hi = std::upper_bound(lo, ids.end(), sample);
    return {static_cast<std::size_t>(lo - ids.begin()), static_cast<std::size_t>(hi - ids.begin())};
  }

  friend bool operator==(const Octree& a, const Octree& b) {
    return a.max_depth_ == b.max_depth_ && a.full_depth_ == b.full_depth_ &&
           a.num_samples_ == b.num_samples_ && a.levels_ == b.levels_;
  }

  // Structural invariants; returns a description of every violation found.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> bad;
    for (int l = 0; l <= max_depth_; ++l) {
      const auto& lv = level(l);
      const std::string tag = "level " + std::to_string(l) + ": ";
      if (lv.depth != l) bad.push_back(tag + "depth tag mismatch");
      if (lv.sample_ids.size() != lv.size() || lv.nonempty.size() != lv.size()) {
        bad.push_back(tag + "array length mismatch");
        continue;
      }
      const std::uint64_t limit = std::uint64_t{1} << (3 * l);
      for (std::size_t i = 0; i < lv.size(); ++i) {
        if (lv.codes[i] >= limit) bad.push_back(tag + "code out of range");
        if (lv.sample_ids[i] < 0 || lv.sample_ids[i] >= num_samples_)
          bad.push_back(tag + "sample id out of range");
        if (i > 0) {
          if (lv.sample_ids[i] < lv.sample_ids[i - 1]) bad.push_back(tag + "sample ids unsorted");
          else if (lv.sample_ids[i] == lv.sample_ids[i - 1] && lv.codes[i] <= lv.codes[i - 1])
            bad.push_back(tag + "codes not strictly increasing");
        }
        if (lv.find(lv.sample_ids[i], lv.codes[i]) != static_cast<std::int32_t>(i))
          bad.push_back(tag + "hash index disagrees with sorted array");
        if (l > 0) {
          const std::int32_t p = level(l - 1).find(lv.sample_ids[i], lv.codes[i] >> 3);
          if (p == kSentinel) bad.push_back(tag + "missing parent");
          else if (l > full_depth_ && !level(l - 1).nonempty[static_cast<std::size_t>(p)])
            bad.push_back(tag + "child of an empty node");
        }
      }
      if (lv.index_size() != lv.size()) bad.push_back(tag + "hash index size mismatch");
      if (l <= full_depth_ && lv.size() != static_cast<std::size_t>(limit) * num_samples_)
        bad.push_back(tag + "full level incomplete");
    }
    return bad;
  }

 private:
  int max_depth_ = 0;
  int full_depth_ = 0;
  int num_samples_ = 0;
  std::vector<OctreeLevel> levels_;
};

namespace detail {

inline void validate_depths(int max_depth, int full_depth) {
  if (max_depth < 1 || max_depth > kMaxOctreeDepth)
    throw ConfigError("max_depth must lie in [1, " + std::to_string(kMaxOctreeDepth) + "]");
  if (full_depth < 0 || full_depth > max_depth)
    throw ConfigError("full_depth must lie in [0, max_depth]");
}

inline OctreeLevel full_level(int l, int num_samples) {
  OctreeLevel lv;
  lv.depth = l;
  const std::uint64_t cells = std::uint64_t{1} << (3 * l);
  lv.codes.reserve(cells * num_samples);
  for (int s = 0; s < num_samples; ++s)
    for (std::uint64_t c = 0; c < cells; ++c) {
      lv.codes.push_back(c);
      lv.sample_ids.push_back(s);
    }
  lv.nonempty.assign(lv.codes.size(), 0);
  return lv;
}

}  // namespace detail

// Nodes above full_depth exist iff at least one point falls in them; levels up to
// full_depth are complete with per-node occupancy flags.
inline Octree build_octree(const PointCloud& pc, int max_depth, int full_depth) {
  detail::validate_depths(max_depth, full_depth);
  if (pc.empty()) throw InputError("cannot build an octree from an empty cloud");
  std::vector<std::uint64_t> leaf;
  leaf.reserve(pc.count());
  for (const auto& p : pc.points) {
    if (!p.finite() || std::abs(p.x) > 1.0 || std::abs(p.y) > 1.0 || std::abs(p.z) > 1.0)
      throw DomainError("point outside [-1, 1]^3");
    leaf.push_back(point_code(p, max_depth));
  }
  std::sort(leaf.begin(), leaf.end());
  leaf.erase(std::unique(leaf.begin(), leaf.end()), leaf.end());

  std::vector<std::vector<std::uint64_t>> occupied(static_cast<std::size_t>(max_depth) + 1);
  occupied[static_cast<std::size_t>(max_depth)] = std::move(leaf);
  for (int l = max_depth - 1; l >= 0; --l) {
    auto& cur = occupied[static_cast<std::size_t>(l)];
    for (auto c : occupied[static_cast<std::size_t>(l) + 1])
      if (cur.empty() || cur.back() != (c >> 3)) cur.push_back(c >> 3);
  }

  std::vector<OctreeLevel> levels;
  levels.reserve(static_cast<std::size_t>(max_depth) + 1);
  for (int l = 0; l <= max_depth; ++l) {
    const auto& occ = occupied[static_cast<std::size_t>(l)];
    if (l <= full_depth) {
      OctreeLevel lv = detail::full_level(l, 1);
      for (auto c : occ) lv.nonempty[c] = 1;
      levels.push_back(std::move(lv));
    } else {
      OctreeLevel lv;
      lv.depth = l;
      lv.codes = occ;
      lv.sample_ids.assign(occ.size(), 0);
      lv.nonempty.assign(occ.size(), 1);
      levels.push_back(std::move(lv));
    }
  }
  return Octree(max_depth, full_depth, 1, std::move(levels));
}

inline Octree batch_octrees(std::span<const Octree> parts) {
  if (parts.empty()) throw InputError("cannot batch an empty list of octrees");
  const int d = parts[0].max_depth(), fd = parts[0].full_depth();
  int samples = 0;
  for (const auto& o : parts) {
    if (o.max_depth() != d || o.full_depth() != fd)
      throw ConfigError("batched octrees must share max_depth and full_depth");
    samples += o.num_samples();
  }
  std::vector<OctreeLevel> levels(static_cast<std::size_t>(d) + 1);
  for (int l = 0; l <= d; ++l) {
    auto& dst = levels[static_cast<std::size_t>(l)];
    dst.depth = l;
    std::int32_t base = 0;
    for (const auto& o : parts) {
      const auto& src = o.level(l);
      dst.codes.insert(dst.codes.end(), src.codes.begin(), src.codes.end());
      dst.nonempty.insert(dst.nonempty.end(), src.nonempty.begin(), src.nonempty.end());
      for (auto s : src.sample_ids) dst.sample_ids.push_back(s + base);
      base += o.num_samples();
    }
  }
  return Octree(d, fd, samples, std::move(levels));
}

inline std::vector<Octree> unbatch_octree(const Octree& batch) {
  std::vector<Octree> out;
  for (int s = 0; s < batch.num_samples(); ++s) {
    std::vector<OctreeLevel> levels(static_cast<std::size_t>(batch.max_depth()) + 1);
    for (int l = 0; l <= batch.max_depth(); ++l) {
      const auto& src = batch.level(l);
      auto& dst = levels[static_cast<std::size_t>(l)];
      dst.depth = l;
      const auto [b, e] = batch.sample_range(l, s);
      dst.codes.assign(src.codes.begin() + b, src.codes.begin() + e);
      dst.nonempty.assign(src.nonempty.begin() + b, src.nonempty.begin() + e);
      dst.sample_ids.assign(e - b, 0);
    }
    out.emplace_back(batch.max_depth(), batch.full_depth(), 1, std::move(levels));
  }
  return out;
}

// Offset k of the 3^3 stencil, x-major: k = (dx+1)*9 + (dy+1)*3 + (dz+1). Centre is 13.
inline constexpr int kNeighborCount = 27;
inline constexpr int kNeighborCenter = 13;

inline std::array<int, 3> neighbor_offset(int k) { return {k / 9 - 1, (k / 3) % 3 - 1, k % 3 - 1}; }

inline IndexTable neighbor_table(const OctreeLevel& lv) {
  const std::int64_t cells = std::int64_t{1} << lv.depth;
  IndexTable t(lv.size(), kNeighborCount);
  for (std::size_t n = 0; n < lv.size(); ++n) {
    const auto xyz = morton_decode(lv.codes[n], lv.depth);
    for (int k = 0; k < kNeighborCount; ++k) {
      if (k == kNeighborCenter) {
        t(n, k) = static_cast<std::int32_t>(n);
        continue;
      }
      const auto off = neighbor_offset(k);
      const std::int64_t x = xyz[0] + off[0], y = xyz[1] + off[1], z = xyz[2] + off[2];
      if (x < 0 || y < 0 || z < 0 || x >= cells || y >= cells || z >= cells) continue;
      t(n, k) = lv.find(lv.sample_ids[n], morton_encode(static_cast<std::uint32_t>(x),
                                                        static_cast<std::uint32_t>(y),
                                                        static_cast<std::uint32_t>(z), lv.depth));
    }
  }
  return t;
}

inline IndexTable neighbor_table(const Octree& oct, int level) {
  if (level < 1 || level > oct.max_depth()) throw DomainError("neighbor_table level out of range");
  return neighbor_table(oct.level(level));
}

// Rows of `parents` (level l-1) x 8 child slots -> row at `children` (level l).
inline IndexTable child_table(const OctreeLevel& parents, const OctreeLevel& children) {
  IndexTable t(parents.size(), 8);
  for (std::size_t c = 0; c < children.size(); ++c) {
    const std::int32_t p = parents.find(children.sample_ids[c], children.codes[c] >> 3);
    if (p == kSentinel) throw InternalError("octree node without parent");
    t(static_cast<std::size_t>(p), children.codes[c] & 7u) = static_cast<std::int32_t>(c);
  }
  return t;
}

// Rows of `children` x 8 slots; only the node's own slot holds its parent row.
inline IndexTable parent_slot_table(const OctreeLevel& parents, const OctreeLevel& children) {
  IndexTable t(children.size(), 8);
  for (std::size_t c = 0; c < children.size(); ++c) {
    const std::int32_t p = parents.find(children.sample_ids[c], children.codes[c] >> 3);
    if (p == kSentinel) throw InternalError("octree node without parent");
    t(c, children.codes[c] & 7u) = p;
  }
  return t;
}

// Split every flagged node at `lv` into its 8 child slots. The children carry no
// occupancy yet.
inline OctreeLevel split_level(const OctreeLevel& lv, std::span<const std::uint8_t> split) {
  OctreeLevel out;
  out.depth = lv.depth + 1;
  for (std::size_t n = 0; n < lv.size(); ++n) {
    if (!split[n]) continue;
    for (std::uint64_t s = 0; s < 8; ++s) {
      out.codes.push_back((lv.codes[n] << 3) | s);
      out.sample_ids.push_back(lv.sample_ids[n]);
    }
  }
  out.nonempty.assign(out.codes.size(), 0);
  return out;
}

// The decoder structure that follows the ground truth: complete up to full_depth,
// then the 8 child slots of every non-empty node, each flagged by gt occupancy.
inline Octree teacher_forced_structure(const Octree& gt) {
  std::vector<OctreeLevel> levels;
  for (int l = 0; l <= gt.full_depth(); ++l) levels.push_back(gt.level(l));
  for (int l = gt.full_depth() + 1; l <= gt.max_depth(); ++l) {
    auto& prev = levels.back();
    prev.build_index();
    OctreeLevel next = split_level(prev, prev.nonempty);
    const auto& ref = gt.level(l);
    next.build_index();
    for (std::size_t n = 0; n < next.size(); ++n) {
      const std::int32_t r = ref.find(next.sample_ids[n], next.codes[n]);
      next.nonempty[n] = r != kSentinel && ref.nonempty[static_cast<std::size_t>(r)];
    }
    levels.push_back(std::move(next));
  }
  return Octree(gt.max_depth(), gt.full_depth(), gt.num_samples(), std::move(levels));
}

using Vec3d = std::array<double, 3>;

// Mean of the points inside each node of one level, in half-cell units around
// the cell centre. Returns one row per node; empty nodes get (0,0,0) and a count of 0.
inline std::vector<Vec3d> local_point_means(const OctreeLevel& lv,
                                            std::span<const PointCloud> points_per_sample,
                                            std::vector<std::uint32_t>* counts = nullptr,
                                            bool require_present = false) {
  std::vector<Vec3d> sums(lv.size(), Vec3d{0, 0, 0});
  std::vector<std::uint32_t> cnt(lv.size(), 0);
  for (std::size_t s = 0; s < points_per_sample.size(); ++s) {
    for (const auto& p : points_per_sample[s].points) {
      const std::int32_t row = lv.find(static_cast<std::int32_t>(s), point_code(p, lv.depth));
      if (row == kSentinel) {
        if (require_present) throw InternalError("point falls outside every octree node");
        continue;
      }
      auto& acc = sums[static_cast<std::size_t>(row)];
      acc[0] += p.x;
      acc[1] += p.y;
      acc[2] += p.z;
      ++cnt[static_cast<std::size_t>(row)];
    }
  }
  const double half = cell_half_size(lv.depth);
  for (std::size_t n = 0; n < lv.size(); ++n) {
    if (cnt[n] == 0) continue;
    const Point3 c = cell_center(lv.codes[n], lv.depth);
    for (int k = 0; k < 3; ++k) sums[n][k] = (sums[n][k] / cnt[n] - c[k]) / half;
  }
  if (counts) *counts = std::move(cnt);
  return sums;
}

struct SupervisionTargets {
  int full_depth = 0;
  int max_depth = 0;
  // labels[l - full_depth][n]: occupancy of structure node n at level l.
  std::vector<std::vector<std::uint8_t>> labels;
  // Non-empty leaves (rows of the structure's max level) and their targets.
  std::vector<std::int32_t> leaf_rows;
  std::vector<Vec3d> local_coords;

  const std::vector<std::uint8_t>& level_labels(int l) const {
    return labels.at(static_cast<std::size_t>(l - full_depth));
  }
};

inline SupervisionTargets extract_targets(const Octree& gt, const Octree& structure,
                                          std::span<const PointCloud> gt_points) {
  if (structure.max_depth() != gt.max_depth() || structure.full_depth() != gt.full_depth() ||
      structure.num_samples() != gt.num_samples())
    throw ConfigError("structure and ground-truth octrees disagree on depth or batch size");
  if (static_cast<int>(gt_points.size()) != gt.num_samples())
    throw InternalError("one ground-truth cloud per sample is required");

  SupervisionTargets t;
  t.full_depth = gt.full_depth();
  t.max_depth = gt.max_depth();
  for (int l = gt.full_depth(); l <= gt.max_depth(); ++l) {
    const auto& lv = structure.level(l);
    const auto& ref = gt.level(l);
    if (l > gt.full_depth()) {
      // Every slot must be a child of a gt-non-empty node.
      const auto& up = structure.level(l - 1);
      for (std::size_t n = 0; n < lv.size(); ++n) {
        const std::int32_t p = up.find(lv.sample_ids[n], lv.codes[n] >> 3);
        if (p == kSentinel || !t.labels.back()[static_cast<std::size_t>(p)])
          throw InternalError("structure does not follow the ground-truth octree");
      }
    }
    std::vector<std::uint8_t> lab(lv.size(), 0);
    for (std::size_t n = 0; n < lv.size(); ++n) {
      const std::int32_t r = ref.find(lv.sample_ids[n], lv.codes[n]);
      lab[n] = r != kSentinel && ref.nonempty[static_cast<std::size_t>(r)];
    }
    t.labels.push_back(std::move(lab));
  }

  const auto& leaves = structure.level(gt.max_depth());
  std::vector<std::uint32_t> counts;
  const auto means = local_point_means(leaves, gt_points, &counts, /*require_present=*/true);
  const auto& leaf_labels = t.labels.back();
  for (std::size_t n = 0; n < leaves.size(); ++n) {
    if (!leaf_labels[n]) {
      if (counts[n] != 0) throw InternalError("ground-truth points fall in an empty leaf");
      continue;
    }
    if (counts[n] == 0) throw InternalError("non-empty ground-truth leaf without points");
    t.leaf_rows.push_back(static_cast<std::int32_t>(n));
    t.local_coords.push_back(means[n]);
  }
  return t;
}

inline constexpr double kDisplacementClamp = 1.5;

// One point per non-empty leaf: centre + clamp(displacement) * half cell size.
// Returns one cloud per sample.
inline std::vector<PointCloud> points_from_octree_per_sample(const Octree& oct,
                                                             std::span<const Vec3d> displacements) {
  const auto& leaves = oct.level(oct.max_depth());
  std::size_t nonempty = 0;
  for (auto f : leaves.nonempty) nonempty += f ? 1 : 0;
  if (displacements.size() != nonempty)
    throw ShapeError("displacement rows (" + std::to_string(displacements.size()) +
                     ") do not match non-empty leaves (" + std::to_string(nonempty) + ")");
  std::vector<PointCloud> out(static_cast<std::size_t>(oct.num_samples()));
  const double half = cell_half_size(oct.max_depth());
  std::size_t row = 0;
  for (std::size_t n = 0; n < leaves.size(); ++n) {
    if (!leaves.nonempty[n]) continue;
    const Point3 c = cell_center(leaves.codes[n], oct.max_depth());
    const auto& d = displacements[row++];
    Point3 p;
    for (int k = 0; k < 3; ++k)
      p[k] = c[k] + std::clamp(d[k], -kDisplacementClamp, kDisplacementClamp) * half;
    out[static_cast<std::size_t>(leaves.sample_ids[n])].points.push_back(p);
  }
  return out;
}

inline PointCloud points_from_octree(const Octree& oct, std::span<const Vec3d> displacements) {
  PointCloud all;
  for (auto& pc : points_from_octree_per_sample(oct, displacements))
    all.points.insert(all.points.end(), pc.points.begin(), pc.points.end());
  return all;
}

}  // namespace ounet
