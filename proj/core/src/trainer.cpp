#include "ssvo/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ssvo/checkpoint.hpp"
#include "ssvo/errors.hpp"
#include "ssvo/image.hpp"
#include "ssvo/ops.hpp"

namespace ssvo {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (model.pose.sequence_length != 3) throw ConfigError("only sequence length 3 is supported");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(lambda_s >= 0) || !(lambda_e >= 0)) throw ConfigError("loss weights must be non-negative");
  if (validation_interval < 1) throw ConfigError("validation interval must be at least 1");
  if (validation_triplets < 1) throw ConfigError("validation subset must hold at least one triplet");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!train_dir.empty() && !val_dir.empty() && fs::exists(train_dir) && fs::exists(val_dir) &&
      fs::equivalent(train_dir, val_dir)) {
    throw ConfigError("training and validation sets must be disjoint");
  }
}

std::string TrainConfig::to_text() const {
  return fmt::format(
      "{}train_dir={}\nval_dir={}\nbatch_size={}\nlearning_rate={:.17g}\nbeta1={:.17g}\nbeta2={:.17g}\n"
      "lambda_s={:.17g}\nlambda_e={:.17g}\niterations={}\nseed={}\ncheckpoint_interval={}\n"
      "validation_interval={}\nvalidation_triplets={}\n",
      model.to_text(), train_dir.string(), val_dir.string(), batch_size, learning_rate, beta1, beta2, lambda_s,
      lambda_e, iterations, seed, checkpoint_interval, validation_interval, validation_triplets);
}

PyramidCache::PyramidCache(const Dataset& dataset, std::size_t scales) {
  for (const auto& frame : dataset.frames) {
    std::vector<Tensor> levels{frame};
    for (std::size_t l = 1; l < scales; ++l) levels.push_back(downsample_average(levels.back()));
    levels_.push_back(std::move(levels));
  }
}

TripletBatch PyramidCache::batch(const Dataset& dataset, std::span<const std::size_t> triplet_indices) const {
  TripletBatch b;
  const std::size_t scales = levels_.empty() ? 0 : levels_[0].size();
  for (std::size_t l = 0; l < scales; ++l) {
    std::array<std::vector<Tensor>, 3> parts;
    for (std::size_t idx : triplet_indices) {
      const FrameTriplet& t = dataset.triplets.at(idx);
      for (std::size_t j = 0; j < 3; ++j) parts[j].push_back(levels_.at(t[j])[l]);
    }
    b.prev.push_back(stack_batch(parts[0]));
    b.target.push_back(stack_batch(parts[1]));
    b.next.push_back(stack_batch(parts[2]));
  }
  return b;
}

std::vector<double> smoothness_weights(const TrainConfig& config) {
  return default_smoothness_weights(config.model.disp.scales, config.lambda_s);
}

ObjectiveOutput evaluate_objective(ParamStore& params, const ModelConfig& model, const TripletBatch& batch,
                                   const CameraIntrinsics& intrinsics, std::span<const double> lambda_s,
                                   double lambda_e, Mode mode) {
  const std::size_t scales = model.disp.scales;
  if (batch.target.size() != scales) throw ShapeError("evaluate_objective: batch pyramid depth differs from model scales");
  ObjectiveOutput out;
  out.disp = disp_net_forward(params, model, batch.target[0], mode);
  const std::array<Tensor, 2> sources{batch.prev[0], batch.next[0]};
  out.pose = pose_exp_net_forward(params, model, batch.target[0], sources, mode);

  std::vector<ScaleTerms> terms;
  for (std::size_t l = 0; l < scales; ++l) {
    const Tensor& disp = out.disp.disparities[l];
    const Tensor depth = reciprocal(disp);
    const CameraIntrinsics k = intrinsics.at_level(static_cast<int>(l));
    const std::array<const Tensor*, 2> src{&batch.prev[l], &batch.next[l]};
    std::vector<WarpResult> warps;
    for (std::size_t s = 0; s < 2; ++s) {
      warps.push_back(inverse_warp(*src[s], depth, out.pose.poses[s], k));
      if (!warps.back().any_valid()) throw NoValidPixels(fmt::format("no valid warped pixel at scale {} source {}", l, s));
    }
    ScaleTerms t;
    t.vs = photometric_loss(batch.target[l], warps, out.pose.masks[l]);
    t.smooth = disp.dim(2) >= 3 && disp.dim(3) >= 3 ? smoothness_loss(disp) : Tensor::scalar(0.0);
    t.reg = mask_regularization(out.pose.mask_logits[l]);
    terms.push_back(std::move(t));
  }
  out.loss = total_loss(terms, lambda_s, lambda_e);
  return out;
}

namespace {

LossRecord record_of(std::size_t iteration, const LossBreakdown& loss) {
  return {iteration, loss.total.item(), loss.per_scale, 0.0};
}

double mean_mask(const PoseExpOutput& pose) {
  double total = 0;
  for (const auto& per_scale : pose.masks) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& m : per_scale) {
      for (double v : m.data()) s += v;
      n += m.size();
    }
    total += s / static_cast<double>(n);
  }
  return total / static_cast<double>(pose.masks.size());
}

}  // namespace

LossRecord validation_loss(ParamStore& params, const TrainConfig& config, const Dataset& validation,
                           const PyramidCache& pyramids) {
  const std::size_t count = std::min(config.validation_triplets, validation.triplets.size());
  const auto lambda_s = smoothness_weights(config);
  LossRecord rec;
  rec.per_scale.assign(config.model.disp.scales, {});
  std::size_t used = 0;
  for (std::size_t first = 0; first < count; first += config.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = first; i < std::min(count, first + config.batch_size); ++i) idx.push_back(i);
    const TripletBatch batch = pyramids.batch(validation, idx);
    ObjectiveOutput out;
    try {
      out = evaluate_objective(params, config.model, batch, validation.intrinsics, lambda_s, config.lambda_e,
                               Mode::inference);
    } catch (const NoValidPixels&) {
      continue;
    }
    const auto n = static_cast<double>(idx.size());
    rec.total += n * out.loss.total.item();
    for (std::size_t l = 0; l < rec.per_scale.size(); ++l) {
      rec.per_scale[l].vs += n * out.loss.per_scale[l].vs;
      rec.per_scale[l].smooth += n * out.loss.per_scale[l].smooth;
      rec.per_scale[l].reg += n * out.loss.per_scale[l].reg;
    }
    rec.mean_mask += n * mean_mask(out.pose);
    used += idx.size();
  }
  if (used == 0) throw NumericalError("validation: no triplet produced a valid warp");
  const auto n = static_cast<double>(used);
  rec.total /= n;
  rec.mean_mask /= n;
  for (auto& s : rec.per_scale) {
    s.vs /= n;
    s.smooth /= n;
    s.reg /= n;
  }
  return rec;
}

TrainingRun run_training(const TrainConfig& config, const Dataset& train, const Dataset& validation,
                         ParamStore initial, const CheckpointHook& on_checkpoint) {
  config.validate();
  if (train.triplets.empty()) throw ConfigError("training set has no triplets");
  if (validation.triplets.empty()) throw ConfigError("validation set has no triplets");
  if (train.height != config.model.disp.height || train.width != config.model.disp.width ||
      validation.height != config.model.disp.height || validation.width != config.model.disp.width) {
    throw ConfigError("dataset resolution differs from the model input size");
  }
  const std::size_t scales = config.model.disp.scales;
  const PyramidCache train_pyr(train, scales), val_pyr(validation, scales);
  const auto lambda_s = smoothness_weights(config);

  TrainingRun run;
  run.params = std::move(initial);
  run.adam.learning_rate = config.learning_rate;
  run.adam.beta1 = config.beta1;
  run.adam.beta2 = config.beta2;
  std::vector<Tensor> leaves = run.params.trainable();
  run.received_gradient.assign(leaves.size(), false);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.triplets.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = std::min(config.batch_size, order.size());
  std::size_t cursor = order.size();  // forces a shuffle before the first batch

  auto validate_at = [&](std::size_t iteration) {
    LossRecord rec = validation_loss(run.params, config, validation, val_pyr);
    rec.iteration = iteration;
    spdlog::info("iter {:>6}  validation total {:.6f}  mean mask {:.4f}", iteration, rec.total, rec.mean_mask);
    run.validation_log.push_back(std::move(rec));
  };

  validate_at(0);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (cursor + batch_size > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::span<const std::size_t> idx(order.data() + cursor, batch_size);
    cursor += batch_size;
    const TripletBatch batch = train_pyr.batch(train, idx);

    ObjectiveOutput out;
    try {
      out = evaluate_objective(run.params, config.model, batch, train.intrinsics, lambda_s, config.lambda_e,
                               Mode::train);
    } catch (const NoValidPixels& e) {
      ++run.skipped_batches;
      spdlog::debug("iter {}: skipped batch ({})", it, e.what());
      continue;
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("iteration {}: {}", it, e.what()));
    }
    const auto grads = gradients(out.loss.total, leaves);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (run.received_gradient[i]) continue;
      run.received_gradient[i] = std::any_of(grads[i].begin(), grads[i].end(), [](double g) { return g != 0.0; });
    }
    for (const auto& g : grads) {
      for (double v : g) {
        if (!std::isfinite(v)) throw NumericalError(fmt::format("iteration {}: non-finite gradient", it));
      }
    }
    adam_step(leaves, grads, run.adam);
    run.train_log.push_back(record_of(it, out.loss));
    spdlog::debug("iter {:>6}  loss {:.6f}", it, out.loss.total.item());
    if ((it + 1) % config.validation_interval == 0 && it + 1 < config.iterations) validate_at(it + 1);
    if (on_checkpoint && config.checkpoint_interval > 0 && (it + 1) % config.checkpoint_interval == 0 &&
        it + 1 < config.iterations) {
      on_checkpoint(it + 1, run.params, run.adam);
    }
  }
  if (config.iterations > 0) validate_at(config.iterations);
  if (run.skipped_batches > 0) spdlog::info("skipped {} batches with no valid warped pixels", run.skipped_batches);
  return run;
}

namespace {

void write_log(const fs::path& path, const std::vector<LossRecord>& rows, std::size_t scales, bool with_mask) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "iteration,total";
  for (const char* name : {"vs", "smooth", "reg"}) {
    for (std::size_t l = 0; l < scales; ++l) out << fmt::format(",{}_{}", name, l);
  }
  if (with_mask) out << ",mean_mask";
  out << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{:.17g}", r.iteration, r.total);
    for (std::size_t l = 0; l < scales; ++l) out << fmt::format(",{:.17g}", r.per_scale[l].vs);
    for (std::size_t l = 0; l < scales; ++l) out << fmt::format(",{:.17g}", r.per_scale[l].smooth);
    for (std::size_t l = 0; l < scales; ++l) out << fmt::format(",{:.17g}", r.per_scale[l].reg);
    if (with_mask) out << fmt::format(",{:.17g}", r.mean_mask);
    out << '\n';
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

fs::path train_to_disk(const TrainConfig& config, ParamStore initial, const std::string& phase,
                       const std::string& provenance) {
  config.validate();
  const std::size_t h = config.model.disp.height, w = config.model.disp.width;
  const Dataset train_set = load_dataset(config.train_dir, h, w);
  const Dataset val_set = load_dataset(config.val_dir, h, w);
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", config.out_dir.string(), ec.message()));

  const TrainingRun run = run_training(config, train_set, val_set, std::move(initial),
                                       [&](std::size_t it, const ParamStore& params, const AdamState& adam) {
                                         save_checkpoint(config.out_dir / fmt::format("{}_{:06d}.ssvo", phase, it),
                                                         {config.model.to_text(), params, adam});
                                       });
  const std::size_t scales = config.model.disp.scales;
  write_log(config.out_dir / fmt::format("{}_log.csv", phase), run.train_log, scales, false);
  write_log(config.out_dir / fmt::format("{}_val.csv", phase), run.validation_log, scales, true);

  const fs::path final_path = config.out_dir / fmt::format("{}_final.ssvo", phase);
  save_checkpoint(final_path, {config.model.to_text(), run.params, run.adam});
  std::ofstream info(config.out_dir / fmt::format("{}_run.txt", phase));
  info << "phase=" << phase << '\n' << provenance << config.to_text();
  info << fmt::format("skipped_batches={}\nfinal_checkpoint_sha256={}\n", run.skipped_batches, file_sha256(final_path));
  if (!info) throw IoError("failed writing run info");
  return final_path;
}

}  // namespace

fs::path train(const TrainConfig& config) {
  return train_to_disk(config, init_parameters(config.model, config.seed), "train", "");
}

fs::path finetune(const fs::path& checkpoint, const TrainConfig& config) {
  const Checkpoint source = load_checkpoint(checkpoint);
  if (!(ModelConfig::from_text(source.config_text) == config.model)) {
    throw ConfigError(fmt::format("architecture mismatch between '{}' and the requested model", checkpoint.string()));
  }
  ParamStore params = init_parameters(config.model, config.seed);
  assign_params(params, source.params);
  const std::string provenance =
      fmt::format("source_checkpoint={}\nsource_checkpoint_sha256={}\n", checkpoint.string(), file_sha256(checkpoint));
  spdlog::info("fine-tuning from {} (sha256 {})", checkpoint.string(), file_sha256(checkpoint));
  return train_to_disk(config, std::move(params), "finetune", provenance);
}

}  // namespace ssvo
