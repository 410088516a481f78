#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ounet/layers.hpp"
#include "ounet/params.hpp"

namespace ounet {

using ad::Matrix;
using ad::Tape;
using ad::Value;

struct ModelConfig {
  int max_depth = 6;
  int full_depth = 2;
  // One width per level, from full_depth up to max_depth.
  std::vector<int> channels{32, 32, 16, 16, 8};
  nn::NormKind norm = nn::NormKind::kGroup;
  int group_size = 8;  // GN groups = channels / group_size
  int blocks = 2;      // residual blocks per level, encoder and decoder each

  static ModelConfig full_scale_preset() {
    ModelConfig c;
    c.max_depth = 8;
    c.full_depth = 2;
    c.channels = {256, 256, 128, 128, 64, 64, 32};
    return c;
  }
  // 8 channels at the leaves, doubling every two levels towards the root.
  static std::vector<int> default_channels(int max_depth, int full_depth) {
    std::vector<int> out;
    for (int l = full_depth; l <= max_depth; ++l) out.push_back(8 << ((max_depth - l + 1) / 2));
    return out;
  }
  static ModelConfig toy() {
    ModelConfig c;
    c.max_depth = 4;
    c.full_depth = 2;
    c.channels = {16, 16, 8};
    return c;
  }

  int channels_at(int level) const { return channels.at(static_cast<std::size_t>(level - full_depth)); }
  int groups_at(int level) const { return channels_at(level) / group_size; }

  void validate() const {
    if (max_depth < 1 || max_depth > kMaxOctreeDepth) throw ConfigError("max_depth out of range");
    if (full_depth < 1 || full_depth > max_depth) throw ConfigError("full_depth must lie in [1, max_depth]");
    if (static_cast<int>(channels.size()) != max_depth - full_depth + 1)
      throw ConfigError("channels must list " + std::to_string(max_depth - full_depth + 1) +
                        " widths (levels " + std::to_string(full_depth) + ".." +
                        std::to_string(max_depth) + ")");
    if (blocks < 0) throw ConfigError("blocks must be >= 0");
    for (int c : channels) {
      if (c < 2 || c % 2 != 0) throw ConfigError("channel widths must be even and >= 2");
      if (norm == nn::NormKind::kGroup && (group_size < 1 || c % group_size != 0))
        throw ConfigError("channel width " + std::to_string(c) + " is not divisible by the group size " +
                          std::to_string(group_size));
    }
  }

  nlohmann::json to_json() const {
    return {{"max_depth", max_depth}, {"full_depth", full_depth}, {"channels", channels},
            {"norm", nn::to_string(norm)}, {"group_size", group_size}, {"blocks", blocks}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.update_from_json(j);
    c.validate();
    return c;
  }

  void update_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig& c = *this;
    for (const auto& [key, value] : j.items()) {
      if (key == "max_depth") c.max_depth = value.get<int>();
      else if (key == "full_depth") c.full_depth = value.get<int>();
      else if (key == "channels") c.channels = value.get<std::vector<int>>();
      else if (key == "norm") c.norm = nn::norm_kind_from_string(value.get<std::string>());
      else if (key == "group_size") c.group_size = value.get<int>();
      else if (key == "blocks") c.blocks = value.get<int>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  }
};

// Per-level structure losses (index l - full_depth), regression loss, and their sum.
struct LossBreakdown {
  int full_depth = 0;
  std::vector<double> structure;
  double regression = 0.0;
  double total = 0.0;
};

// Normalised inputs and teacher-forcing supervision for one batch.
struct TrainBatch {
  Octree input;
  std::vector<PointCloud> input_points;
  Octree gt;
  std::vector<PointCloud> gt_points;
  Octree structure;
  SupervisionTargets targets;
};

inline TrainBatch make_train_batch(std::vector<PointCloud> inputs, std::vector<PointCloud> gts,
                                   const ModelConfig& cfg) {
  if (inputs.empty() || inputs.size() != gts.size())
    throw InputError("a batch needs matching, non-empty input and ground-truth lists");
  std::vector<Octree> in_parts, gt_parts;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    in_parts.push_back(build_octree(inputs[i], cfg.max_depth, cfg.full_depth));
    gt_parts.push_back(build_octree(gts[i], cfg.max_depth, cfg.full_depth));
  }
  TrainBatch b;
  b.input = batch_octrees(in_parts);
  b.gt = batch_octrees(gt_parts);
  b.structure = teacher_forced_structure(b.gt);
  b.targets = extract_targets(b.gt, b.structure, gts);
  b.input_points = std::move(inputs);
  b.gt_points = std::move(gts);
  return b;
}

struct InferOptions {
  // Upper bound on candidate slots per level; beyond it only the most confident
  // non-empty predictions are split.
  std::size_t max_nodes_per_level = std::size_t{1} << 22;
};

struct InferResult {
  Octree structure;
  std::vector<PointCloud> points;     // per sample, in the normalised frame
  std::vector<bool> degenerate;       // no slot predicted non-empty at some level
  bool truncated = false;             // max_nodes_per_level was hit
};

template <typename Real>
struct TrainForward {
  std::vector<Value<Real>> logits;            // per level, index l - full_depth
  Value<Real> displacement;                   // non-empty leaves x 3
  std::vector<Value<Real>> structure_losses;  // per level
  Value<Real> regression_loss;
  Value<Real> total;

  LossBreakdown breakdown(int full_depth) const {
    LossBreakdown b;
    b.full_depth = full_depth;
    for (const auto& v : structure_losses) b.structure.push_back(static_cast<double>(v.item()));
    b.regression = static_cast<double>(regression_loss.item());
    b.total = static_cast<double>(total.item());
    return b;
  }
};

// Fills the per-level structure losses, the regression loss and their unweighted
// sum from `out.logits` and `out.displacement`.
template <typename Real>
void score_decoder(TrainForward<Real>& out, const SupervisionTargets& targets) {
  if (out.logits.size() != targets.labels.size() || out.logits.empty())
    throw InternalError("one logit matrix per supervised level is required");
  out.structure_losses.clear();
  for (std::size_t i = 0; i < out.logits.size(); ++i)
    out.structure_losses.push_back(ad::softmax_cross_entropy(out.logits[i], std::span(targets.labels[i])));
  const auto& coords = targets.local_coords;
  if (out.displacement.rows() != static_cast<Eigen::Index>(coords.size()))
    throw InternalError("displacements misaligned with non-empty leaves");
  Matrix<Real> target(static_cast<Eigen::Index>(coords.size()), 3);
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (int k = 0; k < 3; ++k) target(static_cast<Eigen::Index>(i), k) = static_cast<Real>(coords[i][k]);
  out.regression_loss = ad::mse(out.displacement, out.displacement.tape().constant(std::move(target)));
  Value<Real> total = out.structure_losses.front();
  for (std::size_t i = 1; i < out.structure_losses.size(); ++i) total = ad::add(total, out.structure_losses[i]);
  out.total = ad::add(total, out.regression_loss);
}

// Octree U-Net: residual encoder over input nodes, coarse-to-fine decoder that
// predicts node occupancy per level, guided skips, leaf displacement regression.
template <typename Real>
class OUNet {
 public:
  using Bound = std::vector<Value<Real>>;

  explicit OUNet(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    build_parameters(rng);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  ad::ParamStore<Real>& params() noexcept { return params_; }
  const ad::ParamStore<Real>& params() const noexcept { return params_; }

  // BN uses batch statistics while training and running averages otherwise.
  void set_training(bool training) noexcept { training_ = training; }
  bool training() const noexcept { return training_; }

  void zero_parameters() {
    for (auto& p : params_)
      if (p.trainable) p.value.setZero();
  }

  // Encoder features per level (valid for full_depth..max_depth).
  std::vector<Value<Real>> encode(const Bound& b, const Octree& input,
                                  std::span<const PointCloud> input_points) {
    check_octree(input, "input");
    if (static_cast<int>(input_points.size()) != input.num_samples())
      throw InputError("one input cloud per batch sample is required");
    const int d = cfg_.max_depth, fd = cfg_.full_depth;
    Tape<Real>& tape = b.at(0).tape();
    std::vector<Value<Real>> feats(static_cast<std::size_t>(d) + 1);

    const auto& leaves = input.level(d);
    const auto means = local_point_means(leaves, input_points);
    Matrix<Real> x0(static_cast<Eigen::Index>(leaves.size()), 3);
    for (std::size_t n = 0; n < leaves.size(); ++n)
      for (int k = 0; k < 3; ++k) x0(static_cast<Eigen::Index>(n), k) = static_cast<Real>(means[n][k]);
    Value<Real> h = nn::linear(tape.constant(std::move(x0)), linear(b, lift_));

    for (int l = d; l >= fd; --l) {
      const auto& lv = input.level(l);
      if (l < d) h = nn::downsample(h, child_table(lv, input.level(l + 1)), conv(b, down_[idx(l + 1)]));
      h = run_blocks(b, h, lv, input.num_samples(), enc_blocks_[idx(l)]);
      feats[static_cast<std::size_t>(l)] = h;
    }
    return feats;
  }

  // Teacher-forced decode: the decoder grows along `batch.structure`.
  TrainForward<Real> decode_train(const Bound& b, const std::vector<Value<Real>>& enc,
                                  const TrainBatch& batch) {
    const int d = cfg_.max_depth, fd = cfg_.full_depth;
    const Octree& st = batch.structure;
    check_octree(st, "structure");
    if (batch.targets.labels.size() != static_cast<std::size_t>(d - fd + 1))
      throw InternalError("supervision targets do not cover every decoder level");
    TrainForward<Real> out;
    Value<Real> h = start_features(enc, batch.input, st.level(fd));
    for (int l = fd; l <= d; ++l) {
      const auto& lv = st.level(l);
      const auto& labels = batch.targets.level_labels(l);
      if (labels.size() != lv.size()) throw InternalError("labels misaligned with decoder nodes");
      if (l > fd) h = nn::upsample(h, parent_slot_table(st.level(l - 1), lv), conv(b, up_[idx(l - 1)]));
      h = run_blocks(b, h, lv, st.num_samples(), dec_blocks_[idx(l)]);
      auto logits = nn::occupancy_head(h, head(b, occ_[idx(l)]));
      out.logits.push_back(logits);
      h = nn::guided_skip(h, enc[static_cast<std::size_t>(l)], batch.input.level(l), lv, std::span(labels));
    }
    const auto& rows = batch.targets.leaf_rows;
    auto leaf_feats = ad::gather_rows(h, IndexTable::column(rows));
    out.displacement = nn::displacement_head(leaf_feats, head(b, disp_));
    score_decoder(out, batch.targets);
    return out;
  }

  TrainForward<Real> forward_train(const Bound& b, const TrainBatch& batch) {
    auto enc = encode(b, batch.input, batch.input_points);
    return decode_train(b, enc, batch);
  }

  // Free-running decode from the full level, splitting slots predicted non-empty.
  InferResult decode_infer(const Bound& b, const std::vector<Value<Real>>& enc, const Octree& input,
                           const InferOptions& opt = {}) {
    const int d = cfg_.max_depth, fd = cfg_.full_depth;
    const int ns = input.num_samples();
    InferResult res;
    res.points.resize(static_cast<std::size_t>(ns));
    res.degenerate.assign(static_cast<std::size_t>(ns), false);

    std::vector<OctreeLevel> levels;
    for (int l = 0; l < fd; ++l) levels.push_back(input.level(l));
    OctreeLevel cur = input.level(fd);
    Value<Real> h = start_features(enc, input, cur);
    std::vector<Vec3d> displacements;
    for (int l = fd; l <= d; ++l) {
      if (l > fd) {
        const OctreeLevel& prev = levels.back();
        cur = split_level(prev, prev.nonempty);
        cur.build_index();
        if (cur.size() == 0) {
          levels.push_back(std::move(cur));
          continue;
        }
        h = nn::upsample(h, parent_slot_table(prev, cur), conv(b, up_[idx(l - 1)]));
      }
      h = run_blocks(b, h, cur, ns, dec_blocks_[idx(l)]);
      const auto logits = nn::occupancy_head(h, head(b, occ_[idx(l)]));
      auto mask = nn::predict_nonempty(logits.data());
      if (l < d) res.truncated |= cap_splits(logits.data(), mask, opt.max_nodes_per_level / 8);

      // A sample with slots at this level but no non-empty prediction stops here
      // and emits the centres of its current slots.
      std::vector<std::uint8_t> any(static_cast<std::size_t>(ns), 0), present(static_cast<std::size_t>(ns), 0);
      for (std::size_t n = 0; n < cur.size(); ++n) {
        present[static_cast<std::size_t>(cur.sample_ids[n])] = 1;
        if (mask[n]) any[static_cast<std::size_t>(cur.sample_ids[n])] = 1;
      }
      for (int s = 0; s < ns; ++s) {
        if (!present[static_cast<std::size_t>(s)] || any[static_cast<std::size_t>(s)]) continue;
        res.degenerate[static_cast<std::size_t>(s)] = true;
        for (std::size_t n = 0; n < cur.size(); ++n)
          if (cur.sample_ids[n] == s)
            res.points[static_cast<std::size_t>(s)].points.push_back(cell_center(cur.codes[n], l));
      }
      cur.nonempty = mask;
      h = nn::guided_skip(h, enc[static_cast<std::size_t>(l)], input.level(l), cur, std::span(cur.nonempty));
      if (l == d) {
        std::vector<std::int32_t> rows;
        for (std::size_t n = 0; n < cur.size(); ++n)
          if (cur.nonempty[n]) rows.push_back(static_cast<std::int32_t>(n));
        if (!rows.empty()) {
          const auto disp = nn::displacement_head(ad::gather_rows(h, IndexTable::column(rows)), head(b, disp_));
          displacements.resize(rows.size());
          for (std::size_t i = 0; i < rows.size(); ++i)
            for (int k = 0; k < 3; ++k)
              displacements[i][k] = static_cast<double>(disp.data()(static_cast<Eigen::Index>(i), k));
        }
      }
      levels.push_back(std::move(cur));
    }
    res.structure = Octree(d, fd, ns, std::move(levels));
    auto leaf_points = points_from_octree_per_sample(res.structure, displacements);
    for (int s = 0; s < ns; ++s)
      if (!res.degenerate[static_cast<std::size_t>(s)])
        res.points[static_cast<std::size_t>(s)] = std::move(leaf_points[static_cast<std::size_t>(s)]);
    return res;
  }

  // Full inference on normalised clouds, without gradient recording.
  InferResult infer(const std::vector<PointCloud>& inputs, const InferOptions& opt = {}) {
    return infer_octree(build_input_octree(inputs), inputs, opt);
  }

  Octree build_input_octree(const std::vector<PointCloud>& inputs) const {
    if (inputs.empty()) throw InputError("inference needs at least one input cloud");
    std::vector<Octree> parts;
    for (const auto& pc : inputs) parts.push_back(build_octree(pc, cfg_.max_depth, cfg_.full_depth));
    return batch_octrees(parts);
  }

  // Network forward on a prebuilt input octree.
  InferResult infer_octree(const Octree& input, const std::vector<PointCloud>& inputs, const InferOptions& opt = {}) {
    Tape<Real> tape;
    const auto b = params_.bind(tape, /*requires_grad=*/false);
    const auto enc = encode(b, input, inputs);
    return decode_infer(b, enc, input, opt);
  }

  LossBreakdown evaluate_loss(const TrainBatch& batch) {
    Tape<Real> tape;
    const auto b = params_.bind(tape, /*requires_grad=*/false);
    return forward_train(b, batch).breakdown(cfg_.full_depth);
  }

  // Forward + backward; parameter grads are overwritten with d(total)/d(param).
  LossBreakdown compute_gradients(const TrainBatch& batch) {
    Tape<Real> tape;
    const auto b = params_.bind(tape);
    auto fwd = forward_train(b, batch);
    tape.backward(fwd.total);
    params_.zero_grads();
    params_.collect_grads(b);
    return fwd.breakdown(cfg_.full_depth);
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  struct LinearIdx { std::size_t w = kNone, b = kNone; };
  struct NormIdx { std::size_t gamma = kNone, beta = kNone, mean = kNone, var = kNone; };
  struct BlockIdx { NormIdx n1; LinearIdx c1; NormIdx n2; LinearIdx c2; };
  struct HeadIdx { LinearIdx hidden, out; };

  std::size_t idx(int level) const { return static_cast<std::size_t>(level - cfg_.full_depth); }

  void check_octree(const Octree& o, const char* what) const {
    if (o.max_depth() != cfg_.max_depth || o.full_depth() != cfg_.full_depth)
      throw ConfigError(std::string(what) + " octree depth does not match the model configuration");
  }

  Matrix<Real> normal(Eigen::Index r, Eigen::Index c, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    Matrix<Real> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(n(rng));
    return m;
  }

  LinearIdx add_linear(const std::string& name, int in, int out, int taps, double gain, std::mt19937_64& rng) {
    LinearIdx li;
    const double fan_in = static_cast<double>(taps) * in;
    li.w = params_.add(name + ".weight", normal(static_cast<Eigen::Index>(taps) * in, out, gain / std::sqrt(fan_in), rng));
    li.b = params_.add(name + ".bias", Matrix<Real>::Zero(1, out));
    return li;
  }

  NormIdx add_norm(const std::string& name, int c) {
    NormIdx ni;
    ni.gamma = params_.add(name + ".gamma", Matrix<Real>::Ones(1, c));
    ni.beta = params_.add(name + ".beta", Matrix<Real>::Zero(1, c));
    if (cfg_.norm == nn::NormKind::kBatch) {
      ni.mean = params_.add(name + ".running_mean", Matrix<Real>::Zero(1, c), false);
      ni.var = params_.add(name + ".running_var", Matrix<Real>::Ones(1, c), false);
    }
    return ni;
  }

  std::vector<BlockIdx> add_blocks(const std::string& prefix, int c, std::mt19937_64& rng) {
    std::vector<BlockIdx> out;
    const double he = std::sqrt(2.0);
    for (int i = 0; i < cfg_.blocks; ++i) {
      const std::string n = prefix + ".block" + std::to_string(i);
      BlockIdx bi;
      bi.n1 = add_norm(n + ".norm1", c);
      bi.c1 = add_linear(n + ".conv1", c, c, kNeighborCount, he, rng);
      bi.n2 = add_norm(n + ".norm2", c);
      bi.c2 = add_linear(n + ".conv2", c, c, kNeighborCount, he, rng);
      out.push_back(bi);
    }
    return out;
  }

  HeadIdx add_head(const std::string& name, int c, int k, double out_gain, std::mt19937_64& rng) {
    HeadIdx hi;
    hi.hidden = add_linear(name + ".hidden", c, c / 2, 1, std::sqrt(2.0), rng);
    hi.out = add_linear(name + ".out", c / 2, k, 1, out_gain, rng);
    return hi;
  }

  void build_parameters(std::mt19937_64& rng) {
    const int d = cfg_.max_depth, fd = cfg_.full_depth;
    const std::size_t nl = static_cast<std::size_t>(d - fd + 1);
    enc_blocks_.resize(nl);
    dec_blocks_.resize(nl);
    down_.resize(nl);
    up_.resize(nl);
    occ_.resize(nl);
    const double he = std::sqrt(2.0);
    lift_ = add_linear("enc.lift", 3, cfg_.channels_at(d), 1, he, rng);
    for (int l = d; l >= fd; --l) {
      const std::string p = "enc.l" + std::to_string(l);
      enc_blocks_[idx(l)] = add_blocks(p, cfg_.channels_at(l), rng);
      if (l > fd) down_[idx(l)] = add_linear(p + ".down", cfg_.channels_at(l), cfg_.channels_at(l - 1), 8, he, rng);
    }
    for (int l = fd; l <= d; ++l) {
      const std::string p = "dec.l" + std::to_string(l);
      // The parent feeds one child slot, so the fan-in is a single block.
      if (l < d) up_[idx(l)] = add_linear(p + ".up", cfg_.channels_at(l), cfg_.channels_at(l + 1), 8, he * std::sqrt(8.0), rng);
      dec_blocks_[idx(l)] = add_blocks(p, cfg_.channels_at(l), rng);
      occ_[idx(l)] = add_head(p + ".occupancy", cfg_.channels_at(l), 2, 1.0, rng);
    }
    disp_ = add_head("dec.displacement", cfg_.channels_at(d), 3, 0.1, rng);
  }

  nn::LinearParams<Real> linear(const Bound& b, const LinearIdx& i) const { return {b.at(i.w), b.at(i.b)}; }
  nn::ConvParams<Real> conv(const Bound& b, const LinearIdx& i) const { return {b.at(i.w), b.at(i.b)}; }
  nn::HeadParams<Real> head(const Bound& b, const HeadIdx& i) const { return {linear(b, i.hidden), linear(b, i.out)}; }

  nn::NormParams<Real> norm(const Bound& b, const NormIdx& i, int channels) {
    nn::NormParams<Real> p;
    p.kind = cfg_.norm;
    p.groups = cfg_.norm == nn::NormKind::kGroup ? channels / cfg_.group_size : channels;
    p.gamma = b.at(i.gamma);
    p.beta = b.at(i.beta);
    p.training = training_;
    if (i.mean != kNone) {
      p.running_mean = &params_[i.mean].value;
      p.running_var = &params_[i.var].value;
    }
    return p;
  }

  Value<Real> run_blocks(const Bound& b, Value<Real> h, const OctreeLevel& lv, int num_samples,
                         const std::vector<BlockIdx>& blocks) {
    if (blocks.empty()) return h;
    const IndexTable nbr = neighbor_table(lv);
    const auto samples = nn::RowSamples::of(lv, num_samples);
    const int c = static_cast<int>(h.cols());
    for (const auto& bi : blocks) {
      nn::ResidualParams<Real> rp{norm(b, bi.n1, c), conv(b, bi.c1), norm(b, bi.n2, c), conv(b, bi.c2), std::nullopt};
      h = nn::residual_block(h, nbr, samples, rp);
    }
    return h;
  }

  // The decoder's full level coincides with the encoder's bottleneck rows.
  Value<Real> start_features(const std::vector<Value<Real>>& enc, const Octree& input, const OctreeLevel& first) const {
    const auto& in = input.level(cfg_.full_depth);
    if (in.codes != first.codes || in.sample_ids != first.sample_ids)
      throw InternalError("decoder full level does not match the encoder bottleneck");
    return enc.at(static_cast<std::size_t>(cfg_.full_depth));
  }

  // Keeps at most `limit` non-empty predictions, preferring the largest margins.
  static bool cap_splits(const Matrix<Real>& logits, std::vector<std::uint8_t>& mask, std::size_t limit) {
    std::vector<std::size_t> on;
    for (std::size_t n = 0; n < mask.size(); ++n)
      if (mask[n]) on.push_back(n);
    if (on.size() <= limit) return false;
    auto margin = [&](std::size_t n) {
      return logits(static_cast<Eigen::Index>(n), 1) - logits(static_cast<Eigen::Index>(n), 0);
    };
    std::stable_sort(on.begin(), on.end(), [&](std::size_t a, std::size_t b) { return margin(a) > margin(b); });
    for (std::size_t i = limit; i < on.size(); ++i) mask[on[i]] = 0;
    return true;
  }

  ModelConfig cfg_;
  ad::ParamStore<Real> params_;
  bool training_ = true;
  LinearIdx lift_;
  std::vector<std::vector<BlockIdx>> enc_blocks_, dec_blocks_;
  std::vector<LinearIdx> down_, up_;
  std::vector<HeadIdx> occ_;
  HeadIdx disp_;
};

}  // namespace ounet
