#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ounet/ounet.hpp"

namespace fs = std::filesystem;
using namespace ounet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& tok : split(s, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError(std::string("invalid number '") + tok + "' in " + what);
    }
  }
  return out;
}

// "sphere,torus:R=0.6,r=0.25,box" where a token with '=' but no ':' belongs to
// the preceding shape.
std::vector<ShapeSpec> parse_shape_list(const std::string& text) {
  std::vector<std::string> items;
  for (const auto& tok : split(text, ',')) {
    if (tok.find('=') != std::string::npos && tok.find(':') == std::string::npos && !items.empty())
      items.back() += (items.back().find(':') == std::string::npos ? ":" : ",") + tok;
    else
      items.push_back(tok);
  }
  if (items.empty()) throw UsageError("--shapes must list at least one shape");
  std::vector<ShapeSpec> out;
  for (const auto& it : items) {
    try {
      out.push_back(ShapeSpec::parse(it));
    } catch (const Error& e) {
      throw UsageError(std::string("bad shape '") + it + "': " + e.what());
    }
  }
  return out;
}

std::string noise_tag(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", level);
  return buf;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string out;
  std::string shapes = "sphere";
  std::size_t count = 1;
  std::size_t dense = 8000;
  std::size_t sparse = 1000;
  std::string noise_levels = "0.01,0.02";
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  const auto shapes = parse_shape_list(a.shapes);
  const auto levels = parse_doubles(a.noise_levels, "--noise-levels");
  for (double l : levels)
    if (l < 0) throw UsageError("noise levels must be >= 0");
  if (a.count < 1) throw UsageError("--count must be >= 1");
  if (a.sparse < 1 || a.dense < 1) throw UsageError("--dense and --sparse must be >= 1");
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create directory '" + a.out + "': " + ec.message());

  nlohmann::json manifest = {{"version", 1},
                             {"dense", a.dense},
                             {"sparse", a.sparse},
                             {"noise_levels", levels},
                             {"seed", a.seed},
                             {"normalization", "unit cube of each sample's dense cloud"},
                             {"samples", nlohmann::json::array()}};
  std::size_t index = 0;
  for (const auto& spec : shapes) {
    for (std::size_t k = 0; k < a.count; ++k, ++index) {
      char id[32];
      std::snprintf(id, sizeof id, "s%04zu", index);
      const std::uint64_t seed = derive_seed(a.seed, index);
      const auto [dense, frame] = normalize_unit_cube(sample_surface(spec, a.dense, derive_seed(seed, 1)));
      const PointCloud sparse = clamp_to_cube(frame.apply(sample_surface(spec, a.sparse, derive_seed(seed, 2))));
      const std::string dense_file = std::string(id) + "_dense.pcb";
      const std::string sparse_file = std::string(id) + "_sparse.pcb";
      io::write_pcb(fs::path(a.out) / dense_file, dense);
      io::write_pcb(fs::path(a.out) / sparse_file, sparse);
      nlohmann::json noisy = nlohmann::json::object();
      for (std::size_t i = 0; i < levels.size(); ++i) {
        const std::string f = std::string(id) + "_noisy_" + noise_tag(levels[i]) + ".pcb";
        io::write_pcb(fs::path(a.out) / f, add_gaussian_noise(dense, NoiseSpec{levels[i], derive_seed(seed, 10 + i)}));
        noisy[noise_tag(levels[i])] = f;
      }
      manifest["samples"].push_back({{"id", id},
                                     {"shape", std::string(to_string(spec.kind))},
                                     {"spec", spec.to_string()},
                                     {"params", spec.params},
                                     {"dense_file", dense_file},
                                     {"sparse_file", sparse_file},
                                     {"noisy_files", noisy},
                                     {"seed", seed},
                                     {"transform", {{"scale", frame.scale},
                                                    {"offset", {frame.offset.x, frame.offset.y, frame.offset.z}}}}});
    }
  }
  io::write_file_bytes(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << index << " samples to " << a.out << "\n";
  return 0;
}

std::vector<CloudSource::Item> load_dataset(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file_bytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid manifest.json: ") + e.what());
  }
  if (!manifest.contains("samples") || !manifest["samples"].is_array() || manifest["samples"].empty())
    throw InputError("manifest.json lists no samples");
  std::vector<CloudSource::Item> items;
  for (const auto& s : manifest["samples"]) {
    CloudSource::Item it;
    it.dense = io::read_cloud(dir / s.at("dense_file").get<std::string>());
    it.sparse = io::read_cloud(dir / s.at("sparse_file").get<std::string>());
    items.push_back(std::move(it));
  }
  return items;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string log;
  std::optional<int> depth, full_depth, blocks, batch;
  std::optional<std::string> channels, norm, patch_mode;
  std::optional<std::int64_t> steps, checkpoint_every;
  std::optional<double> lr, task_mix;
  std::optional<std::uint64_t> seed;
  bool no_augment = false;
};

int cmd_train(const TrainArgs& a) {
  ModelConfig mc;
  TrainConfig tc;
  std::string data = a.data, out = a.out, log = a.log;
  bool patch = false;
  bool channels_given = false;
  try {
    if (!a.config.empty()) {
      const auto j = nlohmann::json::parse(io::read_file_bytes(a.config));
      if (!j.is_object()) throw ConfigError("run config must be a JSON object");
      for (const auto& [key, v] : j.items()) {
        if (key == "model") {
          mc.update_from_json(v);
          channels_given = v.contains("channels");
        } else if (key == "train") tc.update_from_json(v);
        else if (key == "data") data = data.empty() ? v.get<std::string>() : data;
        else if (key == "out") out = out.empty() ? v.get<std::string>() : out;
        else if (key == "log") log = log.empty() ? v.get<std::string>() : log;
        else if (key == "patch_mode") patch = v.get<bool>();
        else throw ConfigError("unknown run config key '" + key + "'");
      }
    }
    if (a.depth) mc.max_depth = *a.depth;
    if (a.full_depth) mc.full_depth = *a.full_depth;
    if (a.blocks) mc.blocks = *a.blocks;
    if (a.norm) mc.norm = nn::norm_kind_from_string(*a.norm);
    if (a.channels) {
      mc.channels.clear();
      for (double c : parse_doubles(*a.channels, "--channels")) mc.channels.push_back(static_cast<int>(c));
    } else if (!channels_given && (a.depth || a.full_depth)) {
      mc.channels = ModelConfig::default_channels(mc.max_depth, mc.full_depth);
    }
    if (a.patch_mode) {
      if (*a.patch_mode != "on" && *a.patch_mode != "off") throw ConfigError("--patch-mode must be on or off");
      patch = *a.patch_mode == "on";
    }
    if (a.steps) tc.steps = *a.steps;
    if (a.batch) tc.batch = *a.batch;
    if (a.lr) tc.lr0 = *a.lr;
    if (a.seed) tc.seed = *a.seed;
    if (a.task_mix) tc.task_mix = *a.task_mix;
    if (a.checkpoint_every) tc.checkpoint_every = *a.checkpoint_every;
    if (a.no_augment) tc.augment = false;
    mc.validate();
    tc.validate();
    if (data.empty()) throw ConfigError("a dataset directory is required (--data)");
    if (out.empty()) throw ConfigError("an output checkpoint path is required (--out)");
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("invalid run config: ") + e.what());
  }
  if (log.empty()) log = out + ".log.jsonl";

  const CloudSource source(load_dataset(data));
  OUNet<float> model(mc, derive_seed(tc.seed, 1000));
  std::ofstream log_stream(log, std::ios::binary);
  if (!log_stream) throw IoError("cannot open log file '" + log + "'");
  TrainHooks hooks;
  hooks.log = &log_stream;
  hooks.header_extra = {{"patch_mode", patch}, {"data", data}};
  const nlohmann::json extra = {{"patch_mode", patch}};
  hooks.checkpoint = [&](std::int64_t) { save_checkpoint(out, model, extra); };
  if (patch) {
    const PatchOptions po;
    hooks.transform = [po](TrainSample s, std::mt19937_64& rng) { return extract_training_patch(s, rng, po); };
  }
  const auto t0 = Clock::now();
  const auto result = train_loop(model, source, tc, hooks);
  std::cout << "trained " << result.steps.size() << " steps in " << seconds_since(t0) << " s; final loss "
            << result.steps.back().loss.total << "\n"
            << "checkpoint: " << out << "\nlog: " << log << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string ckpt, in, out, task = "upsample";
  std::optional<std::size_t> target_count;
  std::size_t max_nodes = std::size_t{1} << 22;
};

int cmd_infer(const InferArgs& a) {
  try {
    task_from_string(a.task);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (a.target_count && *a.target_count < 1) throw UsageError("--target-count must be >= 1");
  const auto t0 = Clock::now();
  const CheckpointData ck = read_checkpoint(a.ckpt);
  auto model = model_from_checkpoint<float>(ck);
  const PointCloud raw = io::read_cloud(a.in);
  if (raw.empty()) throw InputError("input cloud '" + a.in + "' has no points");
  const CubeTransform frame = unit_cube_transform(raw);
  const std::vector<PointCloud> input{clamp_to_cube(frame.apply(raw))};
  InferOptions opt;
  opt.max_nodes_per_level = a.max_nodes;

  PointCloud out;
  double forward_s = 0.0;
  bool degenerate = false, truncated = false;
  if (ck.header.value("patch_mode", false)) {
    const auto tf = Clock::now();
    auto res = infer_patches(model, input[0], PatchOptions{});
    forward_s = seconds_since(tf);
    degenerate = res.degenerate;
    out = frame.invert(res.points);
  } else {
    const Octree oct = model.build_input_octree(input);
    const auto tf = Clock::now();
    auto res = model.infer_octree(oct, input, opt);
    forward_s = seconds_since(tf);
    degenerate = res.degenerate[0];
    truncated = res.truncated;
    out = frame.invert(res.points[0]);
  }
  if (degenerate) std::cerr << "warning: degenerate decode (no slot predicted non-empty at some level)\n";
  if (truncated) std::cerr << "warning: node budget reached; only the most confident splits were kept\n";
  if (out.empty()) throw NumericError("network produced no points");
  const std::size_t natural = out.count();
  if (a.target_count) {
    if (*a.target_count == natural) {
      std::cout << "count matching: none (target equals natural count " << natural << ")\n";
    } else {
      out = count_match(out, *a.target_count, 0);
      std::cout << "count matching: " << natural << " -> " << out.count() << "\n";
    }
  }
  io::write_cloud(a.out, out);
  std::cout << "task: " << a.task << "\n"
            << "input points: " << raw.count() << "\n"
            << "output points: " << out.count() << "\n"
            << "network forward: " << forward_s << " s\n"
            << "end-to-end: " << seconds_since(t0) << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred, ref, surface;
  std::string metrics;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<std::string> wanted = split(a.metrics.empty() ? (a.surface.empty() ? "cd,hd" : "cd,hd,p2f") : a.metrics, ',');
  std::optional<ShapeSpec> surface;
  if (!a.surface.empty()) {
    try {
      surface = ShapeSpec::parse(a.surface);
    } catch (const Error& e) {
      throw UsageError(std::string("bad --surface: ") + e.what());
    }
  }
  for (const auto& m : wanted) {
    if (m != "cd" && m != "hd" && m != "p2f") throw UsageError("unknown metric '" + m + "'");
    if ((m == "cd" || m == "hd") && a.ref.empty()) throw UsageError(m + " requires --ref");
    if (m == "p2f" && a.ref.empty() && !surface) throw UsageError("p2f requires --surface or a dense --ref");
  }
  const PointCloud pred = io::read_cloud(a.pred);
  const PointCloud ref = a.ref.empty() ? PointCloud{} : io::read_cloud(a.ref);
  MetricsReport r;
  r.n_pred = pred.count();
  r.n_ref = ref.count();
  for (const auto& m : wanted) {
    if (m == "cd") r.cd = chamfer(pred, ref);
    if (m == "hd") r.hd = hausdorff(pred, ref);
    if (m == "p2f") r.p2f = surface ? point_to_surface(pred, *surface) : point_to_surface(pred, ref);
  }
  std::cout << r.to_json().dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckArgs {
  std::uint64_t seed = 0;
  int toy_depth = 4;
  std::size_t coords = 8;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradCheckArgs& a) {
  if (a.toy_depth < 3 || a.toy_depth > 6) throw UsageError("--toy-depth must lie in [3, 6]");
  ad::g_inject_backward_fault = a.inject_fault;
  const auto t0 = Clock::now();
  const auto result = run_gradcheck_suite(a.seed, a.toy_depth, 1e-4, a.coords);
  ad::g_inject_backward_fault = false;
  for (const auto& c : result.cases)
    std::cerr << (c.report.passed(result.tolerance) && c.report.checked > 0 ? "PASS " : "FAIL ") << c.name
              << " max_rel_err=" << c.report.max_relative_error << " checked=" << c.report.checked
              << " excluded=" << c.report.excluded << "\n";
  // Timing goes to stderr so the report itself is reproducible.
  std::cerr << "elapsed " << seconds_since(t0) << " s\n";
  std::cout << result.to_json().dump(2) << "\n";
  return result.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Octree U-Net for point cloud upsampling and cleaning"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset of analytic shapes");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--shapes", gen.shapes, "Comma-separated shape specs, e.g. sphere,torus:R=0.6,r=0.25");
  g->add_option("--count", gen.count, "Samples per shape");
  g->add_option("--dense", gen.dense, "Points per dense cloud");
  g->add_option("--sparse", gen.sparse, "Points per sparse cloud");
  g->add_option("--noise-levels", gen.noise_levels, "Noise sigmas as fractions of the bounding radius");
  g->add_option("--seed", gen.seed, "Random seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a generated dataset");
  t->add_option("--config", tr.config, "JSON run config (model, train, data, out, log, patch_mode)");
  t->add_option("--data", tr.data, "Dataset directory with manifest.json");
  t->add_option("--out", tr.out, "Output checkpoint path");
  t->add_option("--log", tr.log, "JSONL training log (default: <out>.log.jsonl)");
  t->add_option("--depth", tr.depth, "Octree max depth");
  t->add_option("--full-depth", tr.full_depth, "Full octree depth");
  t->add_option("--channels", tr.channels, "Comma-separated widths, full depth first");
  t->add_option("--blocks", tr.blocks, "Residual blocks per level");
  t->add_option("--steps", tr.steps, "Optimisation steps");
  t->add_option("--batch", tr.batch, "Samples per step");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_option("--seed", tr.seed, "Random seed");
  t->add_option("--task-mix", tr.task_mix, "Probability of the upsampling task");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint interval in steps (0: end only)");
  t->add_option("--norm", tr.norm, "Normalisation: gn or bn");
  t->add_option("--patch-mode", tr.patch_mode, "Patch-based processing: off or on");
  t->add_flag("--no-augment", tr.no_augment, "Disable mirroring and elastic augmentation");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Upsample or clean a point cloud");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  i->add_option("--in", inf.in, "Input cloud (.xyz or .pcb)")->required();
  i->add_option("--out", inf.out, "Output cloud (.xyz or .pcb)")->required();
  i->add_option("--task", inf.task, "upsample or clean");
  i->add_option("--target-count", inf.target_count, "Resample the output to this many points");
  i->add_option("--max-nodes", inf.max_nodes, "Candidate slot budget per octree level");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Compare a predicted cloud with a reference");
  e->add_option("--pred", ev.pred, "Predicted cloud")->required();
  e->add_option("--ref", ev.ref, "Reference cloud");
  e->add_option("--surface", ev.surface, "Analytic reference surface spec");
  e->add_option("--metrics", ev.metrics, "Comma-separated subset of cd,hd,p2f");

  GradCheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every layer and the toy model");
  c->add_option("--seed", gc.seed, "Random seed");
  c->add_option("--toy-depth", gc.toy_depth, "Toy model depth");
  c->add_option("--coords", gc.coords, "Sampled coordinates per parameter");
  c->add_flag("--inject-fault", gc.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*i) return cmd_infer(inf);
    if (*e) return cmd_eval(ev);
    if (*c) return cmd_gradcheck(gc);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
