#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ounet/layers.hpp"
#include "ounet/model.hpp"
#include "ounet/params.hpp"
#include "ounet/training.hpp"

namespace ounet {

struct GradCheckCase {
  std::string name;
  ad::GradCheckReport report;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckCase> cases;
  double tolerance = 1e-4;

  double max_error() const {
    double m = 0.0;
    for (const auto& c : cases) m = std::max(m, c.report.max_relative_error);
    return m;
  }
  bool passed() const {
    for (const auto& c : cases)
      if (!c.report.passed(tolerance) || c.report.checked == 0) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tolerance"] = tolerance;
    j["max_relative_error"] = max_error();
    j["passed"] = passed();
    for (const auto& c : cases)
      j["cases"].push_back({{"name", c.name},
                            {"max_relative_error", c.report.max_relative_error},
                            {"checked", c.report.checked},
                            {"excluded", c.report.excluded},
                            {"worst_parameter", c.report.worst_parameter},
                            {"worst_analytic", c.report.worst_analytic},
                            {"worst_numeric", c.report.worst_numeric}});
    return j;
  }
};

// Toy widths: 16 on the two coarsest levels, 8 below.
inline ModelConfig toy_config(int depth) {
  ModelConfig c;
  c.max_depth = depth;
  c.full_depth = 2;
  c.channels.clear();
  for (int l = c.full_depth; l <= depth; ++l) c.channels.push_back(l - c.full_depth < 2 ? 16 : 8);
  c.validate();
  return c;
}

namespace detail {

using Md = ad::Matrix<double>;
using Vd = ad::Value<double>;

inline Md random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Scalarises a layer output with fixed column weights and row weights that vary
// per row, so per-channel normalisation does not cancel the projection.
inline Vd project(const Vd& out, const Md& weights) {
  Md rows(1, out.rows());
  for (Eigen::Index r = 0; r < out.rows(); ++r) rows(0, r) = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(r) + 0.3);
  return ad::sum(ad::matmul(ad::matmul(out.tape().constant(rows), out), out.tape().constant(weights)));
}

}  // namespace detail

// Finite-difference checks of every layer and the full toy model in double precision.
inline GradCheckSuiteResult run_gradcheck_suite(std::uint64_t seed, int toy_depth = 4, double tolerance = 1e-4,
                                                std::size_t coords_per_param = 8) {
  using detail::Md;
  using detail::Vd;
  GradCheckSuiteResult result;
  result.tolerance = tolerance;
  ad::GradCheckOptions opt;
  opt.seed = seed;
  opt.tolerance = tolerance;
  opt.max_coords_per_param = coords_per_param;
  std::mt19937_64 rng(derive_seed(seed, 0));

  // A small two-sample octree at depth 3 for the layer cases.
  const int d = 3;
  std::vector<PointCloud> clouds{
      normalize_unit_cube(sample_surface(ShapeSpec::sphere(1.0), 40, derive_seed(seed, 1))).first,
      normalize_unit_cube(sample_surface(ShapeSpec::torus(0.6, 0.25), 40, derive_seed(seed, 2))).first};
  const Octree oct = batch_octrees(std::vector<Octree>{build_octree(clouds[0], d, 1), build_octree(clouds[1], d, 1)});
  const auto& leaves = oct.level(d);
  const auto& mid = oct.level(d - 1);
  const Eigen::Index n_leaf = static_cast<Eigen::Index>(leaves.size());
  const Eigen::Index n_mid = static_cast<Eigen::Index>(mid.size());
  const int c = 8;
  const auto samples_leaf = nn::RowSamples::of(leaves, oct.num_samples());
  const IndexTable nbr = neighbor_table(leaves);

  auto run = [&](const std::string& name, ad::ParamStore<double>& ps, const ad::LossFn<double>& f) {
    result.cases.push_back({name, ad::grad_check(f, ps, opt)});
  };

  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("w", detail::random_matrix(c, 6, rng, 0.5));
    ps.add("b", detail::random_matrix(1, 6, rng));
    const Md proj = detail::random_matrix(6, 1, rng);
    run("linear", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      return detail::project(nn::linear(b[0], nn::LinearParams<double>{b[1], b[2]}), proj);
    });
  }
  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("w", detail::random_matrix(27 * c, 6, rng, 0.2));
    ps.add("b", detail::random_matrix(1, 6, rng));
    const Md proj = detail::random_matrix(6, 1, rng);
    run("octree_conv", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      return detail::project(nn::octree_conv(b[0], nbr, nn::ConvParams<double>{b[1], b[2]}), proj);
    });
  }
  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("w", detail::random_matrix(8 * c, 6, rng, 0.3));
    ps.add("b", detail::random_matrix(1, 6, rng));
    const Md proj = detail::random_matrix(6, 1, rng);
    const IndexTable children = child_table(mid, leaves);
    run("downsample", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      return detail::project(nn::downsample(b[0], children, nn::ConvParams<double>{b[1], b[2]}), proj);
    });
  }
  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_mid, c, rng));
    ps.add("w", detail::random_matrix(8 * c, 6, rng, 0.3));
    ps.add("b", detail::random_matrix(1, 6, rng));
    const Md proj = detail::random_matrix(6, 1, rng);
    const IndexTable slots = parent_slot_table(mid, leaves);
    run("upsample", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      return detail::project(nn::upsample(b[0], slots, nn::ConvParams<double>{b[1], b[2]}), proj);
    });
  }
  for (auto kind : {nn::NormKind::kGroup, nn::NormKind::kBatch}) {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("gamma", detail::random_matrix(1, c, rng));
    ps.add("beta", detail::random_matrix(1, c, rng));
    const Md proj = detail::random_matrix(c, 1, rng);
    run(kind == nn::NormKind::kGroup ? "group_norm" : "batch_norm", ps, [&, kind](Tape<double>&, const std::vector<Vd>& b) {
      nn::NormParams<double> p;
      p.kind = kind;
      p.groups = 2;
      p.gamma = b[1];
      p.beta = b[2];
      return detail::project(nn::octree_norm(b[0], samples_leaf, p), proj);
    });
  }
  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("g1", detail::random_matrix(1, c, rng));
    ps.add("b1", detail::random_matrix(1, c, rng));
    ps.add("w1", detail::random_matrix(27 * c, c, rng, 0.2));
    ps.add("c1", detail::random_matrix(1, c, rng));
    ps.add("g2", detail::random_matrix(1, c, rng));
    ps.add("b2", detail::random_matrix(1, c, rng));
    ps.add("w2", detail::random_matrix(27 * c, c, rng, 0.2));
    ps.add("c2", detail::random_matrix(1, c, rng));
    const Md proj = detail::random_matrix(c, 1, rng);
    run("residual_block", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      nn::ResidualParams<double> p;
      p.norm1.groups = 2;
      p.norm1.gamma = b[1];
      p.norm1.beta = b[2];
      p.conv1 = {b[3], b[4]};
      p.norm2.groups = 2;
      p.norm2.gamma = b[5];
      p.norm2.beta = b[6];
      p.conv2 = {b[7], b[8]};
      return detail::project(nn::residual_block(b[0], nbr, samples_leaf, p), proj);
    });
  }
  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("hw", detail::random_matrix(c, c / 2, rng, 0.5));
    ps.add("hb", detail::random_matrix(1, c / 2, rng));
    ps.add("ow", detail::random_matrix(c / 2, 2, rng, 0.5));
    ps.add("ob", detail::random_matrix(1, 2, rng));
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n_leaf));
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng() & 1);
    run("occupancy_head_cross_entropy", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      nn::HeadParams<double> h{{b[1], b[2]}, {b[3], b[4]}};
      return ad::softmax_cross_entropy(nn::occupancy_head(b[0], h), std::span<const std::uint8_t>(labels));
    });
  }
  {
    ad::ParamStore<double> ps;
    ps.add("x", detail::random_matrix(n_leaf, c, rng));
    ps.add("hw", detail::random_matrix(c, c / 2, rng, 0.5));
    ps.add("hb", detail::random_matrix(1, c / 2, rng));
    ps.add("ow", detail::random_matrix(c / 2, 3, rng, 0.5));
    ps.add("ob", detail::random_matrix(1, 3, rng));
    const Md target = detail::random_matrix(n_leaf, 3, rng);
    run("displacement_head_mse", ps, [&](Tape<double>& tape, const std::vector<Vd>& b) {
      nn::HeadParams<double> h{{b[1], b[2]}, {b[3], b[4]}};
      return ad::mse(nn::displacement_head(b[0], h), tape.constant(target));
    });
  }
  {
    // Decoder level = the input level with a random non-empty mask.
    ad::ParamStore<double> ps;
    ps.add("dec", detail::random_matrix(n_leaf, c, rng));
    ps.add("enc", detail::random_matrix(n_leaf, c, rng));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n_leaf));
    for (auto& m : mask) m = static_cast<std::uint8_t>(rng() & 1);
    const Md proj = detail::random_matrix(c, 1, rng);
    run("guided_skip", ps, [&](Tape<double>&, const std::vector<Vd>& b) {
      return detail::project(nn::guided_skip(b[0], b[1], leaves, leaves, std::span<const std::uint8_t>(mask)), proj);
    });
  }

  // Full toy model, both normalisations, one sample per task.
  for (auto kind : {nn::NormKind::kGroup, nn::NormKind::kBatch}) {
    ModelConfig cfg = toy_config(toy_depth);
    cfg.norm = kind;
    OUNet<double> model(cfg, derive_seed(seed, 20));
    const auto up = make_sample(ShapeSpec::sphere(1.0), Task::kUpsample, {20, 60}, {}, derive_seed(seed, 21), false);
    const auto cl = make_sample(ShapeSpec::torus(0.6, 0.25), Task::kClean, {20, 60}, {0.02, 0}, derive_seed(seed, 22), false);
    const TrainBatch batch = make_train_batch({up.input, cl.input}, {up.gt, cl.gt}, cfg);
    run(std::string("model_") + nn::to_string(kind), model.params(),
        [&](Tape<double>&, const std::vector<Vd>& b) { return model.forward_train(b, batch).total; });
  }
  return result;
}

}  // namespace ounet
