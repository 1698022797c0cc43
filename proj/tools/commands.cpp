#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ssvo/checkpoint.hpp"
#include "ssvo/dataset.hpp"
#include "ssvo/errors.hpp"
#include "ssvo/eval.hpp"
#include "ssvo/gradcheck.hpp"
#include "ssvo/image.hpp"
#include "ssvo/synth.hpp"
#include "ssvo/trainer.hpp"
#include "ssvo/trajectory.hpp"

namespace ssvo::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigHelp = "key=value file; flags given on the command line take precedence";

// ---- synth-gen ----

struct SynthOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  std::uint64_t scene_seed = 0;  // 0: same as seed
  std::size_t frames = 40;
  std::size_t height = 32;
  std::size_t width = 104;
  std::string family = "a";
  bool no_headlamp = false;
  std::size_t blobs = 0;
  std::size_t occluders = 0;
  double step_translation = 0.015;
  double max_rotation_deg = 2.0;
  double base_depth = 1.0;
};

void run_synth(const SynthOptions& o) {
  if (o.family != "a" && o.family != "b") throw ConfigError("--family must be a or b");
  if (o.frames < 3) throw ConfigError("--frames must be at least 3");
  if (o.height % kInputMultiple || o.width % kInputMultiple) {
    throw ConfigError(fmt::format("image size must be a multiple of {}", kInputMultiple));
  }
  const std::uint64_t scene_seed = o.scene_seed ? o.scene_seed : o.seed;
  SceneSpec scene = random_scene(scene_seed, o.family == "a" ? SceneFamily::a : SceneFamily::b, o.base_depth);
  scene.headlamp = !o.no_headlamp;
  scene.corruption.specular_blobs = o.blobs;
  scene.corruption.occluders = o.occluders;
  TrajectorySpec ts;
  ts.frames = o.frames;
  ts.seed = o.seed;
  ts.step_translation = o.step_translation;
  ts.max_step_rotation_deg = o.max_rotation_deg;
  const auto trajectory = random_trajectory(ts, o.base_depth);
  const SyntheticSequence seq =
      generate_dataset(scene, trajectory, default_intrinsics(o.height, o.width), o.height, o.width);
  const std::string description = fmt::format(
      "seed={}\nscene_seed={}\nfamily={}\nframes={}\nheight={}\nwidth={}\nheadlamp={}\nspecular_blobs={}\n"
      "occluders={}\nstep_translation={}\nmax_rotation_deg={}\nbase_depth={}\nsamples={}\ndropped_windows={}\n",
      o.seed, scene_seed, o.family, o.frames, o.height, o.width, scene.headlamp ? 1 : 0, o.blobs, o.occluders,
      o.step_translation, o.max_rotation_deg, o.base_depth, seq.samples.size(), seq.dropped_windows);
  write_dataset(o.out, seq, description);
  if (seq.dropped_windows > 0) spdlog::warn("dropped {} windows without view overlap", seq.dropped_windows);
  fmt::print("frames={} samples={} dropped_windows={}\n", seq.frames.size(), seq.samples.size(), seq.dropped_windows);
}

// ---- train / finetune ----

struct TrainOptions {
  std::string config;
  std::string train_dir, val_dir, out, checkpoint;
  TrainConfig cfg;
};

void add_model_flags(CLI::App* sub, TrainConfig& c) {
  sub->add_option("--height", c.model.disp.height, "Input height (multiple of 4)");
  sub->add_option("--width", c.model.disp.width, "Input width (multiple of 4)");
  sub->add_option("--scales", c.model.disp.scales, "Loss scales (1-4)");
  sub->add_option("--disp-channels", c.model.disp.base_channels, "Disparity network base width");
  sub->add_option("--pose-channels", c.model.pose.base_channels, "Pose/mask network base width");
  sub->add_option("--seq-len", c.model.pose.sequence_length, "Frames per sample (only 3)");
}

void add_train_flags(CLI::App* sub, TrainOptions& o) {
  TrainConfig& c = o.cfg;
  sub->add_option("--train-dir", o.train_dir, "Training dataset directory")->required();
  sub->add_option("--val-dir", o.val_dir, "Validation dataset directory")->required();
  sub->add_option("--out", o.out, "Output directory for logs and checkpoints")->required();
  sub->add_option("--iters", c.iterations, "Optimization iterations");
  sub->add_option("--batch", c.batch_size, "Triplets per batch");
  sub->add_option("--lr", c.learning_rate, "Adam learning rate");
  sub->add_option("--beta1", c.beta1, "Adam beta1");
  sub->add_option("--beta2", c.beta2, "Adam beta2");
  sub->add_option("--lambda-s", c.lambda_s, "Smoothness weight at the finest scale, halved per scale");
  sub->add_option("--lambda-e", c.lambda_e, "Mask regularization weight");
  sub->add_option("--seed", c.seed, "Seed for initialization and batch order");
  sub->add_option("--checkpoint-every", c.checkpoint_interval, "Checkpoint interval in iterations (0: end only)");
  sub->add_option("--val-every", c.validation_interval, "Validation interval in iterations");
  sub->add_option("--val-triplets", c.validation_triplets, "Validation subset size");
  sub->add_option("--threads", c.threads, "Worker threads; computation is single-threaded and bitwise reproducible");
  add_model_flags(sub, c);
}

void finish_model(ModelConfig& m) {
  m.pose.height = m.disp.height;
  m.pose.width = m.disp.width;
  m.pose.scales = m.disp.scales;
}

void run_train(TrainOptions& o) {
  finish_model(o.cfg.model);
  o.cfg.train_dir = o.train_dir;
  o.cfg.val_dir = o.val_dir;
  o.cfg.out_dir = o.out;
  const fs::path final_path = train(o.cfg);
  fmt::print("checkpoint={} sha256={}\n", final_path.string(), file_sha256(final_path));
}

void run_finetune(TrainOptions& o, CLI::App* sub) {
  // Architecture flags not given explicitly follow the checkpoint.
  const ModelConfig source = ModelConfig::from_text(load_checkpoint(o.checkpoint).config_text);
  ModelConfig& m = o.cfg.model;
  if (sub->count("--height") == 0) m.disp.height = source.disp.height;
  if (sub->count("--width") == 0) m.disp.width = source.disp.width;
  if (sub->count("--scales") == 0) m.disp.scales = source.disp.scales;
  if (sub->count("--disp-channels") == 0) m.disp.base_channels = source.disp.base_channels;
  if (sub->count("--pose-channels") == 0) m.pose.base_channels = source.pose.base_channels;
  if (sub->count("--seq-len") == 0) m.pose.sequence_length = source.pose.sequence_length;
  m.disp.alpha = source.disp.alpha;
  m.disp.beta = source.disp.beta;
  m.pose.translation_scale = source.pose.translation_scale;
  m.pose.rotation_scale = source.pose.rotation_scale;
  finish_model(m);
  o.cfg.train_dir = o.train_dir;
  o.cfg.val_dir = o.val_dir;
  o.cfg.out_dir = o.out;
  const fs::path final_path = finetune(o.checkpoint, o.cfg);
  fmt::print("checkpoint={} sha256={}\n", final_path.string(), file_sha256(final_path));
}

// ---- inference ----

struct LoadedModel {
  ModelConfig config;
  ParamStore params;
};

LoadedModel load_model(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  LoadedModel m{ModelConfig::from_text(ck.config_text), {}};
  m.params = init_parameters(m.config, 0);
  assign_params(m.params, ck.params);
  return m;
}

struct InferDepthOptions {
  std::string checkpoint, image, data, out;
};

void run_infer_depth(const InferDepthOptions& o) {
  if (o.image.empty() == o.data.empty()) throw ConfigError("give exactly one of --image or --data");
  LoadedModel m = load_model(o.checkpoint);
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", o.out, ec.message()));
  std::vector<std::pair<std::string, Tensor>> images;
  if (!o.image.empty()) {
    images.emplace_back(fs::path(o.image).stem().string(),
                        resize_area(image_to_tensor(read_png(o.image)), m.config.disp.height, m.config.disp.width));
  } else {
    const Dataset ds = load_dataset(o.data, m.config.disp.height, m.config.disp.width);
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
      images.emplace_back(fs::path(ds.frame_names[i]).stem().string(), ds.frames[i]);
    }
  }
  for (const auto& [stem, image] : images) {
    const DisparityExport d = export_disparity(m.params, m.config, image, fs::path(o.out) / (stem + "_disp"));
    fmt::print("{} min={:.9g} max={:.9g}\n", stem, d.min, d.max);
  }
}

struct InferPoseOptions {
  std::string checkpoint, data, out;
};

void run_infer_pose(const InferPoseOptions& o) {
  LoadedModel m = load_model(o.checkpoint);
  const Dataset ds = load_dataset(o.data, m.config.disp.height, m.config.disp.width);
  const auto motions = chain_triplet_motions(predict_motions(m.params, m.config, ds));
  Trajectory t = integrate_poses(motions, 0.0, 0.1);
  if (ds.ground_truth.size() == t.size()) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i].timestamp = ds.ground_truth[i].timestamp;
  }
  write_tum(o.out, t);
  fmt::print("poses={} path_length={:.9g}\n", t.size(), path_length(t));
}

// ---- evaluation ----

struct AteOptions {
  std::string est, gt, aligned_out;
  bool rigid = false;
};

void run_eval_ate(const AteOptions& o) {
  const Trajectory est = read_tum(o.est), gt = read_tum(o.gt);
  const AteResult r = ate(est, gt, o.rigid ? Alignment::rigid : Alignment::similarity);
  const double length = path_length(gt);
  fmt::print("ate_rmse={:.9g} scale={:.9g} gt_path_length={:.9g} ratio={:.9g}\n", r.rmse, r.alignment.scale, length,
             length > 0 ? r.rmse / length : 0.0);
  if (!o.aligned_out.empty()) write_tum(o.aligned_out, r.aligned);
}

struct CurveOptions {
  std::string est, gt, out;
  std::vector<double> lengths_cm{10, 20, 30, 40, 50};
};

void run_eval_curve(const CurveOptions& o) {
  std::vector<double> lengths;
  for (double cm : o.lengths_cm) lengths.push_back(cm / 100.0);
  const std::string csv = format_error_curve(error_vs_length(read_tum(o.est), read_tum(o.gt), lengths));
  if (o.out.empty()) {
    fmt::print("{}", csv);
    return;
  }
  std::ofstream out(o.out);
  out << csv;
  if (!out) throw IoError(fmt::format("failed writing '{}'", o.out));
}

struct DepthOptions {
  std::string checkpoint, data;
};

void run_eval_depth(const DepthOptions& o) {
  LoadedModel m = load_model(o.checkpoint);
  const Dataset ds = load_dataset(o.data, m.config.disp.height, m.config.disp.width);
  if (ds.depths.empty()) throw ConfigError(fmt::format("dataset '{}' has no ground-truth depth", o.data));
  std::vector<DepthMetrics> per_image;
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const Tensor d = predict_disparity(m.params, m.config, ds.frames[i]);
    per_image.push_back(depth_metrics(d.data(), ds.depths[i].data()));
  }
  const DepthMetrics mean = mean_depth_metrics(per_image);
  fmt::print("abs_rel={:.9g} rmse={:.9g} delta_1.25={:.9g} images={} degenerate_gt={}\n", mean.abs_rel, mean.rmse,
             mean.delta_125, per_image.size(), mean.degenerate_ground_truth ? 1 : 0);
}

struct GradOptions {
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
};

void run_gradcheck(const GradOptions& o) {
  bool ok = true;
  for (const auto& c : run_gradient_suite(o.seeds, o.seed)) {
    fmt::print("{:<26} max_rel_err={:.3e} tol={:.0e} seeds={} {}\n", c.name, c.max_error, c.tolerance, c.seeds,
               c.passed() ? "PASS" : "FAIL");
    ok = ok && c.passed();
  }
  gradient_check_failed = !ok;
}

std::string trim(std::string_view v) {
  const auto b = v.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = v.find_last_not_of(" \t\r");
  return std::string(v.substr(b, e - b + 1));
}

bool given(const std::vector<std::string>& args, std::size_t from, const std::string& flag) {
  for (std::size_t i = from; i < args.size(); ++i) {
    if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  std::size_t sub_at = args.size();
  const CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i].empty() || args[i][0] == '-') continue;
    sub = app.get_subcommand_no_throw(args[i]);
    sub_at = i;
    break;
  }
  if (sub == nullptr || sub->get_option_no_throw("--config") == nullptr) return args;

  std::string path;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config '{}'", path));
  std::vector<std::string> injected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key = value", path, line_no));
    const std::string written = trim(line.substr(0, eq));
    std::string key = written;
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    while (!key.empty() && key.front() == '-') key.erase(0, 1);
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || key == "config" || key == "help") {
      throw ConfigError(fmt::format("{}:{}: unknown key '{}' for {}", path, line_no, written, sub->get_name()));
    }
    if (given(args, sub_at + 1, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") {
        injected.push_back(flag);
      } else if (!(value == "false" || value == "0" || value == "no" || value == "off")) {
        throw ConfigError(fmt::format("{}:{}: '{}' is a switch, got '{}'", path, line_no, key, value));
      }
      continue;
    }
    injected.push_back(flag);
    injected.push_back(value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, injected.begin(), injected.end());
  return args;
}

void register_commands(CLI::App& app) {
  auto synth = std::make_shared<SynthOptions>();
  CLI::App* s = app.add_subcommand("synth-gen", "Render a synthetic sequence with ground truth");
  s->add_option("--config", synth->config, kConfigHelp);
  s->add_option("--out", synth->out, "Output directory")->required();
  s->add_option("--seed", synth->seed, "Seed for the trajectory (and the scene unless --scene-seed)");
  s->add_option("--scene-seed", synth->scene_seed, "Seed for the scene (0: use --seed)");
  s->add_option("--frames", synth->frames, "Number of frames");
  s->add_option("--height", synth->height, "Image height");
  s->add_option("--width", synth->width, "Image width");
  s->add_option("--family", synth->family, "Scene family")->check(CLI::IsMember({"a", "b"}));
  s->add_flag("--no-headlamp", synth->no_headlamp, "Shade with albedo only");
  s->add_option("--blobs", synth->blobs, "Specular blobs per frame");
  s->add_option("--occluders", synth->occluders, "Occluder discs per frame");
  s->add_option("--step-translation", synth->step_translation, "Translation per step as a fraction of the base depth");
  s->add_option("--max-rotation-deg", synth->max_rotation_deg, "Largest rotation per step, degrees");
  s->add_option("--base-depth", synth->base_depth, "Depth of the base plane");
  s->callback([synth] { run_synth(*synth); });

  auto tr = std::make_shared<TrainOptions>();
  CLI::App* t = app.add_subcommand("train", "Train both networks jointly");
  t->add_option("--config", tr->config, kConfigHelp);
  add_train_flags(t, *tr);
  t->callback([tr] { run_train(*tr); });

  auto ft = std::make_shared<TrainOptions>();
  CLI::App* f = app.add_subcommand("finetune", "Continue training from a checkpoint on a new dataset");
  f->add_option("--config", ft->config, kConfigHelp);
  f->add_option("--checkpoint", ft->checkpoint, "Checkpoint to start from")->required();
  add_train_flags(f, *ft);
  f->callback([ft, f] { run_finetune(*ft, f); });

  auto idp = std::make_shared<InferDepthOptions>();
  CLI::App* d = app.add_subcommand("infer-depth", "Export disparity maps");
  d->add_option("--checkpoint", idp->checkpoint, "Trained checkpoint")->required();
  d->add_option("--image", idp->image, "A single PNG image");
  d->add_option("--data", idp->data, "A dataset directory (every frame)");
  d->add_option("--out", idp->out, "Output directory")->required();
  d->callback([idp] { run_infer_depth(*idp); });

  auto ip = std::make_shared<InferPoseOptions>();
  CLI::App* p = app.add_subcommand("infer-pose", "Estimate the camera trajectory of a sequence");
  p->add_option("--checkpoint", ip->checkpoint, "Trained checkpoint")->required();
  p->add_option("--data", ip->data, "Dataset directory")->required();
  p->add_option("--out", ip->out, "Output trajectory (TUM format)")->required();
  p->callback([ip] { run_infer_pose(*ip); });

  auto at = std::make_shared<AteOptions>();
  CLI::App* a = app.add_subcommand("eval-ate", "Absolute trajectory error after alignment");
  a->add_option("--est", at->est, "Estimated trajectory (TUM)")->required();
  a->add_option("--gt", at->gt, "Ground-truth trajectory (TUM)")->required();
  a->add_flag("--rigid", at->rigid, "Align without scale");
  a->add_option("--aligned-out", at->aligned_out, "Write the aligned estimate here");
  a->callback([at] { run_eval_ate(*at); });

  auto cv = std::make_shared<CurveOptions>();
  CLI::App* c = app.add_subcommand("eval-curve", "Translation and rotation error against trajectory length");
  c->add_option("--est", cv->est, "Estimated trajectory (TUM)")->required();
  c->add_option("--gt", cv->gt, "Ground-truth trajectory (TUM)")->required();
  c->add_option("--lengths-cm", cv->lengths_cm, "Bucket lengths in centimetres")->delimiter(',');
  c->add_option("--out", cv->out, "CSV output (stdout if omitted)");
  c->callback([cv] { run_eval_curve(*cv); });

  auto dp = std::make_shared<DepthOptions>();
  CLI::App* e = app.add_subcommand("eval-depth", "Depth metrics against ground truth after median scaling");
  e->add_option("--checkpoint", dp->checkpoint, "Trained checkpoint")->required();
  e->add_option("--data", dp->data, "Dataset directory with depth_*.dpt")->required();
  e->callback([dp] { run_eval_depth(*dp); });

  auto gc = std::make_shared<GradOptions>();
  CLI::App* g = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  g->add_option("--seeds", gc->seeds, "Random seeds per case");
  g->add_option("--seed", gc->seed, "Base seed");
  g->callback([gc] { run_gradcheck(*gc); });
}

}  // namespace ssvo::cli
