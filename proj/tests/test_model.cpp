#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ounet/gradcheck.hpp"
#include "ounet/model.hpp"
#include "ounet/training.hpp"

using namespace ounet;

namespace {

using Md = ad::Matrix<double>;

PointCloud shape_cloud(const ShapeSpec& spec, std::size_t n, std::uint64_t seed) {
  return normalize_unit_cube(sample_surface(spec, n, seed)).first;
}

TrainBatch toy_batch(const ModelConfig& cfg) {
  const auto up = make_sample(ShapeSpec::sphere(1.0), Task::kUpsample, {40, 200}, {}, 1, false);
  const auto cl = make_sample(ShapeSpec::torus(0.6, 0.25), Task::kClean, {40, 200}, {0.02, 0}, 2, false);
  return make_train_batch({up.input, cl.input}, {up.gt, cl.gt}, cfg);
}

// Oracle logits and displacements that agree with the targets.
TrainForward<double> oracle_forward(ad::Tape<double>& tape, const SupervisionTargets& t, double dx) {
  TrainForward<double> out;
  for (const auto& labels : t.labels) {
    Md z(static_cast<Eigen::Index>(labels.size()), 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      z(static_cast<Eigen::Index>(i), 0) = labels[i] ? -10.0 : 10.0;
      z(static_cast<Eigen::Index>(i), 1) = labels[i] ? 10.0 : -10.0;
    }
    out.logits.push_back(tape.leaf(z));
  }
  Md disp(static_cast<Eigen::Index>(t.local_coords.size()), 3);
  for (std::size_t i = 0; i < t.local_coords.size(); ++i)
    for (int k = 0; k < 3; ++k) disp(static_cast<Eigen::Index>(i), k) = t.local_coords[i][k] + (k == 0 ? dx : 0.0);
  out.displacement = tape.leaf(disp);
  score_decoder(out, t);
  return out;
}

}  // namespace

TEST(ModelConfig, DefaultAndPresetChannels) {
  EXPECT_EQ(ModelConfig::default_channels(6, 2), (std::vector<int>{32, 32, 16, 16, 8}));
  EXPECT_EQ(ModelConfig::default_channels(8, 2), (std::vector<int>{64, 64, 32, 32, 16, 16, 8}));
  EXPECT_EQ(ModelConfig().channels, ModelConfig::default_channels(6, 2));
  const auto p = ModelConfig::full_scale_preset();
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.channels_at(2), 256);
  EXPECT_EQ(p.channels_at(8), 32);
  EXPECT_EQ(p.groups_at(8), 4);
}

TEST(ModelConfig, ValidationAndJson) {
  ModelConfig c;
  c.channels = {32, 16};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig();
  c.channels[4] = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  c.norm = nn::NormKind::kBatch;
  EXPECT_NO_THROW(c.validate());

  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(ModelConfig::from_json({{"depth", 5}}), ConfigError);
  EXPECT_THROW(ModelConfig::from_json({{"norm", "ln"}}), ConfigError);
}

TEST(OUNet, ParameterNamesAndBuffers) {
  ModelConfig cfg = ModelConfig::toy();
  OUNet<float> gn(cfg, 1);
  EXPECT_TRUE(gn.params().contains("enc.lift.weight"));
  EXPECT_TRUE(gn.params().contains("dec.displacement.out.weight"));
  EXPECT_TRUE(gn.params().contains("dec.l2.occupancy.out.weight"));
  EXPECT_TRUE(gn.params().contains("dec.l4.occupancy.out.weight"));
  EXPECT_FALSE(gn.params().contains("dec.l3.block0.norm1.running_mean"));
  cfg.norm = nn::NormKind::kBatch;
  OUNet<float> bn(cfg, 1);
  const auto i = bn.params().index_of("dec.l3.block0.norm1.running_mean");
  EXPECT_FALSE(bn.params()[i].trainable);
  // Same seed, same initial weights.
  OUNet<float> again(ModelConfig::toy(), 1);
  for (std::size_t k = 0; k < gn.params().size(); ++k) EXPECT_EQ(gn.params()[k].value, again.params()[k].value);
}

TEST(OUNet, OracleLogitsGiveNearZeroLoss) {
  const ModelConfig cfg = ModelConfig::toy();
  const TrainBatch batch = toy_batch(cfg);
  ad::Tape<double> tape;
  const auto out = oracle_forward(tape, batch.targets, 0.0);
  ASSERT_EQ(out.structure_losses.size(), static_cast<std::size_t>(cfg.max_depth - cfg.full_depth + 1));
  EXPECT_LT(out.total.item(), 1e-4);
  EXPECT_NEAR(out.regression_loss.item(), 0.0, 1e-15);
}

TEST(OUNet, RegressionLossIsComponentwiseMean) {
  const TrainBatch batch = toy_batch(ModelConfig::toy());
  ad::Tape<double> tape;
  const auto out = oracle_forward(tape, batch.targets, 0.1);
  EXPECT_NEAR(out.regression_loss.item(), 0.01 / 3.0, 1e-12);
  double structure = 0.0;
  for (const auto& v : out.structure_losses) structure += v.item();
  EXPECT_NEAR(out.total.item(), structure + 0.01 / 3.0, 1e-12);
}

TEST(OUNet, TrainForwardShapes) {
  const ModelConfig cfg = ModelConfig::toy();
  OUNet<float> model(cfg, 3);
  const auto up = make_sample(ShapeSpec::sphere(1.0), Task::kUpsample, {40, 200}, {}, 1, false);
  const auto cl = make_sample(ShapeSpec::torus(0.6, 0.25), Task::kClean, {40, 200}, {0.02, 0}, 2, false);
  const TrainBatch batch = make_train_batch({up.input, cl.input}, {up.gt, cl.gt}, cfg);
  ad::Tape<float> tape;
  const auto b = model.params().bind(tape);
  const auto fwd = model.forward_train(b, batch);
  for (int l = cfg.full_depth; l <= cfg.max_depth; ++l) {
    EXPECT_EQ(fwd.logits[static_cast<std::size_t>(l - cfg.full_depth)].rows(),
              static_cast<Eigen::Index>(batch.structure.level(l).size()));
  }
  EXPECT_EQ(fwd.displacement.rows(), static_cast<Eigen::Index>(batch.gt.level(cfg.max_depth).size()));
  EXPECT_TRUE(std::isfinite(fwd.total.item()));
  EXPECT_GT(fwd.total.item(), 0.0f);
}

TEST(OUNet, GradientsAreFiniteAndLossesAgree) {
  const ModelConfig cfg = ModelConfig::toy();
  OUNet<float> model(cfg, 4);
  const TrainBatch batch = toy_batch(cfg);
  const auto a = model.evaluate_loss(batch);
  const auto b = model.compute_gradients(batch);
  EXPECT_FLOAT_EQ(static_cast<float>(a.total), static_cast<float>(b.total));
  double norm = 0.0;
  for (const auto& p : model.params()) {
    ASSERT_TRUE(p.grad.allFinite()) << p.name;
    norm += p.grad.cast<double>().squaredNorm();
  }
  EXPECT_GT(norm, 0.0);
}

TEST(OUNet, ZeroParametersSplitEverySlot) {
  // All logits tie at zero, and ties go to non-empty.
  ModelConfig cfg = ModelConfig::toy();
  OUNet<double> model(cfg, 5);
  model.zero_parameters();
  const auto res = model.infer({shape_cloud(ShapeSpec::sphere(1.0), 100, 6)});
  ASSERT_EQ(res.points.size(), 1u);
  EXPECT_FALSE(res.degenerate[0]);
  EXPECT_EQ(res.structure.level(cfg.max_depth).size(), std::size_t{1} << (3 * cfg.max_depth));
  EXPECT_EQ(res.points[0].count(), std::size_t{1} << (3 * cfg.max_depth));
  // Zero displacement leaves every point at its cell centre.
  const auto& leaves = res.structure.level(cfg.max_depth);
  for (std::size_t n = 0; n < leaves.size(); ++n)
    EXPECT_EQ(res.points[0][n], cell_center(leaves.codes[n], cfg.max_depth));
}

TEST(OUNet, MaxNodesCapTruncates) {
  ModelConfig cfg = ModelConfig::toy();
  OUNet<double> model(cfg, 5);
  model.zero_parameters();
  InferOptions opt;
  opt.max_nodes_per_level = 64;
  const auto res = model.infer({shape_cloud(ShapeSpec::sphere(1.0), 100, 6)}, opt);
  EXPECT_TRUE(res.truncated);
  for (int l = cfg.full_depth + 1; l <= cfg.max_depth; ++l) EXPECT_LE(res.structure.level(l).size(), 64u);
}

TEST(OUNet, GroupNormBatchIndependence) {
  ModelConfig cfg;
  cfg.max_depth = 5;
  cfg.channels = ModelConfig::default_channels(5, 2);
  OUNet<double> model(cfg, 7);
  model.set_training(false);
  const auto a = shape_cloud(ShapeSpec::sphere(1.0), 300, 8);
  const auto b = shape_cloud(ShapeSpec::torus(0.6, 0.25), 300, 9);
  const auto both = model.infer({a, b});
  const std::vector<PointCloud> alone{model.infer({a}).points[0], model.infer({b}).points[0]};
  ASSERT_EQ(both.points.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    ASSERT_EQ(both.points[s].count(), alone[s].count());
    for (std::size_t i = 0; i < alone[s].count(); ++i)
      EXPECT_LT(std::sqrt(squared_distance(both.points[s][i], alone[s][i])), 1e-9);
  }
}

TEST(OUNet, BatchNormTrainingModeMixesSamples) {
  ModelConfig cfg = ModelConfig::toy();
  cfg.norm = nn::NormKind::kBatch;
  OUNet<double> model(cfg, 10);
  const auto a = shape_cloud(ShapeSpec::sphere(1.0), 100, 11);
  const auto b = shape_cloud(ShapeSpec::box(0.8, 0.6, 0.4), 100, 12);
  const auto c = shape_cloud(ShapeSpec::torus(0.6, 0.25), 100, 13);
  auto encode_first = [&](const std::vector<PointCloud>& in) {
    ad::Tape<double> tape;
    const auto bound = model.params().bind(tape, false);
    const Octree oct = model.build_input_octree(in);
    const auto feats = model.encode(bound, oct, in);
    const auto [lo, hi] = oct.sample_range(cfg.full_depth, 0);
    return Md(feats[static_cast<std::size_t>(cfg.full_depth)].data().middleRows(
        static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)));
  };
  EXPECT_GT((encode_first({a, b}) - encode_first({a, c})).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(OUNet, EncoderIsPermutationInvariant) {
  const ModelConfig cfg = ModelConfig::toy();
  OUNet<double> model(cfg, 14);
  auto pc = shape_cloud(ShapeSpec::torus(0.6, 0.25), 400, 15);
  auto encode = [&](const PointCloud& in) {
    ad::Tape<double> tape;
    const auto bound = model.params().bind(tape, false);
    const std::vector<PointCloud> v{in};
    const auto feats = model.encode(bound, model.build_input_octree(v), v);
    std::vector<Md> out;
    for (int l = cfg.full_depth; l <= cfg.max_depth; ++l) out.push_back(feats[static_cast<std::size_t>(l)].data());
    return out;
  };
  const auto before = encode(pc);
  std::shuffle(pc.points.begin(), pc.points.end(), std::mt19937_64(16));
  const auto after = encode(pc);
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_LT((before[i] - after[i]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OUNet, RejectsMismatchedInputs) {
  const ModelConfig cfg = ModelConfig::toy();
  OUNet<float> model(cfg, 17);
  EXPECT_THROW(model.infer({}), InputError);
  EXPECT_THROW(model.infer({PointCloud{{{2.0, 0.0, 0.0}}}}), DomainError);
  EXPECT_THROW(make_train_batch({shape_cloud(ShapeSpec::sphere(1.0), 10, 1)}, {}, cfg), InputError);
}

TEST(OUNet, ToyModelGradCheck) {
  const auto suite = run_gradcheck_suite(3, 4, 1e-4, 4);
  for (const auto& c : suite.cases) {
    EXPECT_GT(c.report.checked, 0u) << c.name;
    EXPECT_LT(c.report.max_relative_error, 1e-4) << c.name << " worst " << c.report.worst_parameter;
  }
}
