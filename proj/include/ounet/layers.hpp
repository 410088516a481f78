#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ounet/autodiff.hpp"
#include "ounet/octree.hpp"

namespace ounet::nn {

using ad::Matrix;
using ad::Tape;
using ad::Value;

enum class NormKind { kGroup, kBatch };

inline std::string to_string(NormKind k) { return k == NormKind::kGroup ? "gn" : "bn"; }

inline NormKind norm_kind_from_string(const std::string& s) {
  if (s == "gn") return NormKind::kGroup;
  if (s == "bn") return NormKind::kBatch;
  throw ConfigError("unknown norm kind '" + s + "' (expected gn or bn)");
}

// Rows of one octree level grouped by sample id.
struct RowSamples {
  std::shared_ptr<const std::vector<std::int32_t>> ids;
  int num_samples = 1;

  static RowSamples of(const OctreeLevel& lv, int num_samples) {
    return {std::make_shared<const std::vector<std::int32_t>>(lv.sample_ids), num_samples};
  }
  std::size_t rows() const { return ids ? ids->size() : 0; }
};

// weight: (taps * C_in) x C_out, row blocks ordered by tap; bias: 1 x C_out.
template <typename Real>
struct ConvParams {
  Value<Real> weight;
  Value<Real> bias;
};

template <typename Real>
struct LinearParams {
  Value<Real> weight;  // C_in x C_out
  Value<Real> bias;    // 1 x C_out
};

template <typename Real>
struct NormParams {
  NormKind kind = NormKind::kGroup;
  int groups = 1;  // GN only
  Value<Real> gamma;
  Value<Real> beta;
  double eps = 1e-5;
  // BN only: running statistics (1 x C), updated in training mode.
  Matrix<Real>* running_mean = nullptr;
  Matrix<Real>* running_var = nullptr;
  double momentum = 0.1;
  bool training = true;
};

template <typename Real>
Value<Real> linear(const Value<Real>& x, const LinearParams<Real>& p) {
  return ad::add_row(ad::matmul(x, p.weight), p.bias);
}

// Shared core of the three octree convolutions: gather the tap rows listed in
// `taps` (absent -> zero), then one dense product with the stacked kernel.
template <typename Real>
Value<Real> tap_conv(const Value<Real>& x, const IndexTable& taps, const ConvParams<Real>& p,
                     const char* op) {
  if (p.weight.rows() != static_cast<Eigen::Index>(taps.cols) * x.cols())
    throw ShapeError(std::string(op) + ": weight has " + std::to_string(p.weight.rows()) +
                     " rows, expected " + std::to_string(taps.cols) + " x " +
                     std::to_string(x.cols()));
  if (p.bias.rows() != 1 || p.bias.cols() != p.weight.cols())
    throw ShapeError(std::string(op) + ": bias must be 1 x C_out");
  return ad::add_row(ad::matmul(ad::gather_rows(x, taps), p.weight), p.bias);
}

// 3^3 convolution over the nodes of one level; `neighbors` from neighbor_table().
template <typename Real>
Value<Real> octree_conv(const Value<Real>& x, const IndexTable& neighbors, const ConvParams<Real>& p) {
  if (static_cast<Eigen::Index>(neighbors.rows) != x.rows())
    throw ShapeError("octree_conv: input rows do not match the level's nodes");
  if (neighbors.cols != kNeighborCount) throw ShapeError("octree_conv: expected 27 taps");
  return tap_conv(x, neighbors, p, "octree_conv");
}

template <typename Real>
Value<Real> octree_conv(const Value<Real>& x, const Octree& oct, int level, const ConvParams<Real>& p) {
  return octree_conv(x, neighbor_table(oct, level), p);
}

// Strided 2^3 convolution from level l to l-1; `children` from child_table().
template <typename Real>
Value<Real> downsample(const Value<Real>& x, const IndexTable& children, const ConvParams<Real>& p) {
  if (children.cols != 8) throw ShapeError("downsample: expected 8 child taps");
  return tap_conv(x, children, p, "downsample");
}

template <typename Real>
Value<Real> downsample(const Value<Real>& x, const Octree& oct, int level, const ConvParams<Real>& p) {
  if (level < 1) throw DomainError("downsample level must be >= 1");
  if (x.rows() != static_cast<Eigen::Index>(oct.level(level).size()))
    throw ShapeError("downsample: input rows do not match the level's nodes");
  return downsample(x, child_table(oct.level(level - 1), oct.level(level)), p);
}

// Transposed 2^3 convolution from level l-1 to l: each child sees its parent
// through the kernel block of its own slot. `parent_slots` from parent_slot_table().
template <typename Real>
Value<Real> upsample(const Value<Real>& x, const IndexTable& parent_slots, const ConvParams<Real>& p) {
  if (parent_slots.cols != 8) throw ShapeError("upsample: expected 8 slot taps");
  return tap_conv(x, parent_slots, p, "upsample");
}

template <typename Real>
Value<Real> upsample(const Value<Real>& x, const Octree& oct, int level, const ConvParams<Real>& p) {
  if (level < 1) throw DomainError("upsample level must be >= 1");
  if (x.rows() != static_cast<Eigen::Index>(oct.level(level - 1).size()))
    throw ShapeError("upsample: input rows do not match the parent level's nodes");
  return upsample(x, parent_slot_table(oct.level(level - 1), oct.level(level)), p);
}

// GN: statistics per (sample, channel group) over that sample's nodes.
// BN: statistics per channel over every node of the batch; running averages in eval mode.
template <typename Real>
Value<Real> octree_norm(const Value<Real>& x, const RowSamples& samples, const NormParams<Real>& p) {
  if (static_cast<Eigen::Index>(samples.rows()) != x.rows())
    throw ShapeError("octree_norm: one sample id per row is required");
  const Eigen::Index c = x.cols();
  if (p.gamma.cols() != c || p.beta.cols() != c)
    throw ShapeError("octree_norm: affine parameters must be 1 x C");
  Tape<Real>& tape = x.tape();
  const Real eps = static_cast<Real>(p.eps);
  Value<Real> xhat;
  if (p.kind == NormKind::kGroup) {
    if (p.groups < 1 || c % p.groups != 0)
      throw ConfigError("group norm: " + std::to_string(c) + " channels not divisible into " +
                        std::to_string(p.groups) + " groups");
    const ad::GroupLayout layout{samples.ids, samples.num_samples, p.groups};
    const auto mean = ad::row_group_mean(x, layout);
    const auto var = ad::row_group_var(x, mean, layout);
    xhat = ad::normalize(x, mean, var, layout, eps);
  } else {
    const auto layout = ad::GroupLayout::make(std::vector<std::int32_t>(samples.rows(), 0), 1,
                                              static_cast<int>(c));
    if (p.training || !p.running_mean) {
      const auto mean = ad::row_group_mean(x, layout);
      const auto var = ad::row_group_var(x, mean, layout);
      if (p.training && p.running_mean && p.running_var && x.rows() > 0) {
        const Real m = static_cast<Real>(p.momentum);
        *p.running_mean = (Real(1) - m) * *p.running_mean + m * mean.data();
        *p.running_var = (Real(1) - m) * *p.running_var + m * var.data();
      }
      xhat = ad::normalize(x, mean, var, layout, eps);
    } else {
      xhat = ad::normalize(x, tape.constant(*p.running_mean), tape.constant(*p.running_var), layout, eps);
    }
  }
  return ad::add_row(ad::mul_row(xhat, p.gamma), p.beta);
}

template <typename Real>
struct ResidualParams {
  NormParams<Real> norm1;
  ConvParams<Real> conv1;
  NormParams<Real> norm2;
  ConvParams<Real> conv2;
  std::optional<LinearParams<Real>> shortcut;  // 1x1 projection when widths differ
};

// relu(x + conv2(norm2(relu(conv1(norm1(x))))))
template <typename Real>
Value<Real> residual_block(const Value<Real>& x, const IndexTable& neighbors, const RowSamples& samples,
                           const ResidualParams<Real>& p) {
  auto h = octree_conv(octree_norm(x, samples, p.norm1), neighbors, p.conv1);
  h = ad::relu(h);
  h = octree_conv(octree_norm(h, samples, p.norm2), neighbors, p.conv2);
  const auto shortcut = p.shortcut ? linear(x, *p.shortcut) : x;
  if (shortcut.cols() != h.cols())
    throw ShapeError("residual_block: channel mismatch without a projection");
  return ad::relu(ad::add(shortcut, h));
}

template <typename Real>
struct HeadParams {
  LinearParams<Real> hidden;  // C -> C/2
  LinearParams<Real> output;  // C/2 -> K
};

template <typename Real>
Value<Real> mlp_head(const Value<Real>& x, const HeadParams<Real>& p) {
  return linear(ad::relu(linear(x, p.hidden)), p.output);
}

// Logits (nodes x 2); column 1 is "non-empty".
template <typename Real>
Value<Real> occupancy_head(const Value<Real>& x, const HeadParams<Real>& p) {
  if (p.output.weight.cols() != 2) throw ShapeError("occupancy_head must emit 2 logits");
  return mlp_head(x, p);
}

// Leaf displacements in half-cell units (leaves x 3), no output activation.
template <typename Real>
Value<Real> displacement_head(const Value<Real>& x, const HeadParams<Real>& p) {
  if (p.output.weight.cols() != 3) throw ShapeError("displacement_head must emit 3 values");
  return mlp_head(x, p);
}

// Ties go to non-empty.
template <typename Real>
std::vector<std::uint8_t> predict_nonempty(const Matrix<Real>& logits) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = logits(i, 1) >= logits(i, 0);
  return out;
}

// Encoder row feeding each decoder row: present iff the output node is non-empty
// and the input octree has a node with the same key.
inline IndexTable guided_skip_rows(const OctreeLevel& input, const OctreeLevel& output,
                                   std::span<const std::uint8_t> nonempty) {
  if (input.depth != output.depth) throw ShapeError("guided_skip: level mismatch");
  if (nonempty.size() != output.size()) throw ShapeError("guided_skip: mask length mismatch");
  std::vector<std::int32_t> rows(output.size(), kSentinel);
  for (std::size_t n = 0; n < output.size(); ++n)
    if (nonempty[n]) rows[n] = input.find(output.sample_ids[n], output.codes[n]);
  return IndexTable::column(std::move(rows));
}

template <typename Real>
Value<Real> guided_skip(const Value<Real>& dec, const Value<Real>& enc, const OctreeLevel& input,
                        const OctreeLevel& output, std::span<const std::uint8_t> nonempty) {
  if (dec.rows() != static_cast<Eigen::Index>(output.size()) ||
      enc.rows() != static_cast<Eigen::Index>(input.size()) || dec.cols() != enc.cols())
    throw ShapeError("guided_skip: feature shapes do not match their octree levels");
  return ad::add(dec, ad::gather_rows(enc, guided_skip_rows(input, output, nonempty)));
}

}  // namespace ounet::nn
