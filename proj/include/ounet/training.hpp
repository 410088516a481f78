#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ounet/geometry.hpp"
#include "ounet/model.hpp"

namespace ounet {

enum class Task { kUpsample, kClean };

inline std::string to_string(Task t) { return t == Task::kUpsample ? "upsample" : "clean"; }

inline Task task_from_string(const std::string& s) {
  if (s == "upsample") return Task::kUpsample;
  if (s == "clean") return Task::kClean;
  throw ConfigError("unknown task '" + s + "' (expected upsample or clean)");
}

// SplitMix64 finaliser; derives independent stream seeds from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct TrainConfig {
  double lr0 = 5e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double poly_power = 0.9;
  int batch = 2;
  std::int64_t steps = 500;
  std::uint64_t seed = 0;
  double task_mix = 0.5;  // probability of the upsample task per sample
  std::vector<double> noise_levels{0.01, 0.02};
  bool augment = true;
  AugmentConfig augmentation;
  std::int64_t checkpoint_every = 0;  // 0: only at the end

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (!(task_mix >= 0.0 && task_mix <= 1.0)) throw ConfigError("task_mix must lie in [0, 1]");
    if (noise_levels.empty()) throw ConfigError("noise_levels must not be empty");
    for (double s : noise_levels)
      if (s < 0.0) throw ConfigError("noise levels must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"lr0", lr0},
            {"weight_decay", weight_decay},
            {"betas", {beta1, beta2}},
            {"eps", eps},
            {"poly_power", poly_power},
            {"batch", batch},
            {"steps", steps},
            {"seed", seed},
            {"task_mix", task_mix},
            {"noise_levels", noise_levels},
            {"augment", augment},
            {"checkpoint_every", checkpoint_every}};
  }

  // Overlays the keys present in `j`; unknown keys are rejected.
  void update_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "lr0") lr0 = v.get<double>();
      else if (key == "weight_decay") weight_decay = v.get<double>();
      else if (key == "betas") {
        const auto b = v.get<std::vector<double>>();
        if (b.size() != 2) throw ConfigError("betas must hold two values");
        beta1 = b[0];
        beta2 = b[1];
      } else if (key == "eps") eps = v.get<double>();
      else if (key == "poly_power") poly_power = v.get<double>();
      else if (key == "batch") batch = v.get<int>();
      else if (key == "steps") steps = v.get<std::int64_t>();
      else if (key == "seed") seed = v.get<std::uint64_t>();
      else if (key == "task_mix") task_mix = v.get<double>();
      else if (key == "noise_levels") noise_levels = v.get<std::vector<double>>();
      else if (key == "augment") augment = v.get<bool>();
      else if (key == "checkpoint_every") checkpoint_every = v.get<std::int64_t>();
      else throw ConfigError("unknown train config key '" + key + "'");
    }
  }
};

// Polynomial decay; query t in [0, T].
inline double poly_lr(double lr0, std::int64_t t, std::int64_t total, double power = 0.9) {
  if (total < 1) throw ConfigError("total steps must be >= 1");
  const double frac = std::clamp(static_cast<double>(t) / static_cast<double>(total), 0.0, 1.0);
  return lr0 * std::pow(1.0 - frac, power);
}

// One decoupled-weight-decay Adam update at step t >= 1 with learning rate lr.
// All gradients are checked before any parameter moves.
template <typename Real>
void adamw_step(ad::ParamStore<Real>& params, const TrainConfig& cfg, double lr, std::int64_t t) {
  if (t < 1) throw ConfigError("adamw_step requires t >= 1");
  for (const auto& p : params)
    if (p.trainable && !p.grad.allFinite())
      throw NumericError("non-finite gradient in '" + p.name + "' at step " + std::to_string(t));
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  for (auto& p : params) {
    if (!p.trainable) continue;
    p.first_moment = b1 * p.first_moment + (Real(1) - b1) * p.grad;
    p.second_moment = b2 * p.second_moment + (Real(1) - b2) * p.grad.cwiseProduct(p.grad);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double mhat = static_cast<double>(p.first_moment.data()[i]) / c1;
      const double vhat = static_cast<double>(p.second_moment.data()[i]) / c2;
      const double w = static_cast<double>(p.value.data()[i]);
      p.value.data()[i] = static_cast<Real>(w - lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w));
    }
  }
  params.step = t;
}

struct TrainSample {
  PointCloud input;
  PointCloud gt;
  Task task = Task::kUpsample;
};

struct SampleCounts {
  std::size_t sparse = 1000;
  std::size_t dense = 8000;
};

// Puts a raw (input, gt) pair into the frame the network sees: the input's own
// unit-cube normalisation (gt clamped into the cube), then a joint augmentation.
inline TrainSample finalize_sample(PointCloud input, PointCloud gt, Task task, std::uint64_t seed,
                                   bool augment_pair, const AugmentConfig& aug = {}) {
  const CubeTransform t = unit_cube_transform(input);
  TrainSample s;
  s.task = task;
  s.input = clamp_to_cube(t.apply(input));
  s.gt = clamp_to_cube(t.apply(gt));
  if (augment_pair) {
    const Augmentation a(derive_seed(seed, 7), aug);
    s.input = a.apply(s.input);
    s.gt = a.apply(s.gt);
  }
  return s;
}

inline TrainSample make_sample(const ShapeSpec& spec, Task task, const SampleCounts& counts, const NoiseSpec& noise,
                               std::uint64_t seed, bool augment_pair = true, const AugmentConfig& aug = {}) {
  spec.validate();
  if (counts.dense < 1 || (task == Task::kUpsample && (counts.sparse < 1 || counts.sparse >= counts.dense)))
    throw ConfigError("upsampling needs 1 <= sparse < dense point counts");
  const auto [gt, frame] = normalize_unit_cube(sample_surface(spec, counts.dense, derive_seed(seed, 1)));
  PointCloud input;
  if (task == Task::kUpsample) {
    input = frame.apply(sample_surface(spec, counts.sparse, derive_seed(seed, 2)));
  } else {
    NoiseSpec n = noise;
    n.seed = derive_seed(noise.seed ^ seed, 3);
    input = add_gaussian_noise(gt, n);
  }
  return finalize_sample(std::move(input), gt, task, seed, augment_pair, aug);
}

// Supplies raw training pairs for a task; the loop owns the randomness.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainSample draw(std::size_t item, Task task, double sigma, std::uint64_t seed, const TrainConfig& cfg) const = 0;
};

// Fresh surface samples per draw from a list of analytic shapes.
class ShapeSource : public SampleSource {
 public:
  ShapeSource(std::vector<ShapeSpec> shapes, SampleCounts counts, bool fixed_draws = false)
      : shapes_(std::move(shapes)), counts_(counts), fixed_(fixed_draws) {
    if (shapes_.empty()) throw InputError("training needs at least one shape");
  }
  std::size_t size() const override { return shapes_.size(); }
  TrainSample draw(std::size_t item, Task task, double sigma, std::uint64_t seed, const TrainConfig& cfg) const override {
    // Fixed draws reuse one surface sample per (shape, task) and vary only the noise.
    const std::uint64_t s = fixed_ ? derive_seed(item, task == Task::kUpsample ? 11 : 12) : seed;
    return make_sample(shapes_[item], task, counts_, NoiseSpec{sigma, seed}, s, cfg.augment, cfg.augmentation);
  }

 private:
  std::vector<ShapeSpec> shapes_;
  SampleCounts counts_;
  bool fixed_;
};

// Pre-generated dense/sparse clouds sharing one frame per item.
class CloudSource : public SampleSource {
 public:
  struct Item {
    PointCloud dense;
    PointCloud sparse;
  };
  explicit CloudSource(std::vector<Item> items) : items_(std::move(items)) {
    if (items_.empty()) throw InputError("training needs at least one sample");
    for (const auto& it : items_)
      if (it.dense.empty() || it.sparse.empty()) throw InputError("dataset sample with an empty cloud");
  }
  std::size_t size() const override { return items_.size(); }
  TrainSample draw(std::size_t item, Task task, double sigma, std::uint64_t seed, const TrainConfig& cfg) const override {
    const auto& it = items_[item];
    PointCloud input = task == Task::kUpsample ? it.sparse : add_gaussian_noise(it.dense, NoiseSpec{sigma, derive_seed(seed, 3)});
    return finalize_sample(std::move(input), it.dense, task, seed, cfg.augment, cfg.augmentation);
  }

 private:
  std::vector<Item> items_;
};

// Shuffled decks with the exact task proportion, so short windows see both tasks.
class TaskDeck {
 public:
  TaskDeck(double upsample_probability, std::uint64_t seed) : rng_(seed) {
    int size = 20;
    for (int n = 1; n <= 20; ++n) {
      const double k = upsample_probability * n;
      if (std::abs(k - std::round(k)) < 1e-9) {
        size = n;
        break;
      }
    }
    const int up = static_cast<int>(std::round(upsample_probability * size));
    for (int i = 0; i < size; ++i) template_.push_back(i < up ? Task::kUpsample : Task::kClean);
  }

  Task next() {
    if (pos_ == deck_.size()) {
      deck_ = template_;
      std::shuffle(deck_.begin(), deck_.end(), rng_);
      pos_ = 0;
    }
    return deck_[pos_++];
  }

 private:
  std::mt19937_64 rng_;
  std::vector<Task> template_, deck_;
  std::size_t pos_ = 0;
};

struct StepLog {
  std::int64_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
  int upsample_count = 0;
  int clean_count = 0;

  nlohmann::json to_json() const {
    return {{"step", step},
            {"lr", lr},
            {"loss_total", loss.total},
            {"loss_struct", loss.structure},
            {"loss_reg", loss.regression},
            {"task_counts", {{"upsample", upsample_count}, {"clean", clean_count}}}};
  }
};

using SampleTransform = std::function<TrainSample(TrainSample, std::mt19937_64&)>;

struct TrainHooks {
  std::ostream* log = nullptr;                                // JSONL: header, then one line per step
  std::function<void(std::int64_t step)> checkpoint;          // called every checkpoint_every steps and at the end
  SampleTransform transform;                                  // e.g. patch extraction
  nlohmann::json header_extra = nlohmann::json::object();
};

struct TrainResult {
  std::vector<StepLog> steps;
};

// Builds the batch for one step from the source, in slot order.
inline std::vector<TrainSample> draw_batch(const SampleSource& source, const TrainConfig& cfg, TaskDeck& deck,
                                           std::mt19937_64& rng, const SampleTransform& transform) {
  std::vector<TrainSample> out;
  for (int i = 0; i < cfg.batch; ++i) {
    const Task task = deck.next();
    const std::size_t item = std::uniform_int_distribution<std::size_t>(0, source.size() - 1)(rng);
    const double sigma = cfg.noise_levels[std::uniform_int_distribution<std::size_t>(0, cfg.noise_levels.size() - 1)(rng)];
    const std::uint64_t seed = rng();
    TrainSample s = source.draw(item, task, sigma, seed, cfg);
    if (transform) s = transform(std::move(s), rng);
    out.push_back(std::move(s));
  }
  return out;
}

template <typename Real>
TrainResult train_loop(OUNet<Real>& model, const SampleSource& source, const TrainConfig& cfg,
                       const TrainHooks& hooks = {}) {
  cfg.validate();
  if (source.size() == 0) throw InputError("training dataset is empty");
  model.set_training(true);
  std::mt19937_64 rng(derive_seed(cfg.seed, 100));
  TaskDeck deck(cfg.task_mix, derive_seed(cfg.seed, 101));
  if (hooks.log) {
    nlohmann::json header = {{"type", "header"}, {"train", cfg.to_json()}, {"model", model.config().to_json()}};
    for (const auto& [k, v] : hooks.header_extra.items()) header[k] = v;
    *hooks.log << header.dump() << '\n';
  }
  TrainResult result;
  const std::int64_t first = model.params().step + 1;
  for (std::int64_t t = first; t <= cfg.steps; ++t) {
    auto samples = draw_batch(source, cfg, deck, rng, hooks.transform);
    StepLog entry;
    entry.step = t;
    entry.lr = poly_lr(cfg.lr0, t - 1, cfg.steps, cfg.poly_power);
    std::vector<PointCloud> inputs, gts;
    for (auto& s : samples) {
      (s.task == Task::kUpsample ? entry.upsample_count : entry.clean_count) += 1;
      inputs.push_back(std::move(s.input));
      gts.push_back(std::move(s.gt));
    }
    const TrainBatch batch = make_train_batch(std::move(inputs), std::move(gts), model.config());
    entry.loss = model.compute_gradients(batch);
    if (!std::isfinite(entry.loss.total)) throw NumericError("non-finite loss at step " + std::to_string(t));
    adamw_step(model.params(), cfg, entry.lr, t);
    if (hooks.log) *hooks.log << entry.to_json().dump() << '\n';
    result.steps.push_back(std::move(entry));
    if (hooks.checkpoint && ((cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0) || t == cfg.steps))
      hooks.checkpoint(t);
  }
  if (hooks.log) hooks.log->flush();
  model.set_training(false);
  return result;
}

}  // namespace ounet
