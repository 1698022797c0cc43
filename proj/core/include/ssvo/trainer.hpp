#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssvo/adam.hpp"
#include "ssvo/dataset.hpp"
#include "ssvo/losses.hpp"
#include "ssvo/models.hpp"
#include "ssvo/params.hpp"

namespace ssvo {

struct TrainConfig {
  ModelConfig model;
  std::filesystem::path train_dir;
  std::filesystem::path val_dir;
  std::filesystem::path out_dir;
  std::size_t batch_size = 8;
  double learning_rate = AdamState::kDefaultLearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lambda_s = 0.5;  // finest scale; halved at each coarser scale
  double lambda_e = kDefaultMaskWeight;
  std::size_t iterations = 2000;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0: only the final checkpoint
  std::size_t validation_interval = 50;
  std::size_t validation_triplets = 32;
  std::size_t threads = 1;

  void validate() const;
  /// key=value lines.
  std::string to_text() const;
};

/// Images of a set of triplets at every scale of the loss pyramid.
struct TripletBatch {
  std::vector<Tensor> target;  // per scale, [B,3,h,w]
  std::vector<Tensor> prev;
  std::vector<Tensor> next;
  std::size_t size() const { return target.empty() ? 0 : target[0].dim(0); }
};

/// Per-frame image pyramids, built once per dataset.
class PyramidCache {
 public:
  PyramidCache(const Dataset& dataset, std::size_t scales);
  TripletBatch batch(const Dataset& dataset, std::span<const std::size_t> triplet_indices) const;

 private:
  std::vector<std::vector<Tensor>> levels_;  // [frame][scale]
};

struct ObjectiveOutput {
  LossBreakdown loss;
  DispOutput disp;
  PoseExpOutput pose;
};

/// Smoothness weight per scale and the mask-regularizer weight.
std::vector<double> smoothness_weights(const TrainConfig& config);

/// Forward pass of both networks and the multi-scale objective. Throws
/// NoValidPixels when some source has no valid warped pixel at some scale.
/// Smoothness is omitted at scales smaller than 3 pixels on a side.
ObjectiveOutput evaluate_objective(ParamStore& params, const ModelConfig& model, const TripletBatch& batch,
                                   const CameraIntrinsics& intrinsics, std::span<const double> lambda_s,
                                   double lambda_e, Mode mode);

struct LossRecord {
  std::size_t iteration = 0;
  double total = 0;
  std::vector<LossBreakdown::Scale> per_scale;
  double mean_mask = 0;  // validation only
};

struct TrainingRun {
  ParamStore params;
  AdamState adam;
  std::vector<LossRecord> train_log;       // one row per optimized iteration
  std::vector<LossRecord> validation_log;  // iteration 0, every interval, and the end
  std::size_t skipped_batches = 0;
  /// Per trainable tensor (params.trainable() order): whether any entry
  /// ever received a nonzero gradient.
  std::vector<bool> received_gradient;
};

/// Called after every config.checkpoint_interval iterations.
using CheckpointHook = std::function<void(std::size_t iteration, const ParamStore&, const AdamState&)>;

/// Optimizes both networks jointly from `initial`. Writes nothing to disk.
TrainingRun run_training(const TrainConfig& config, const Dataset& train, const Dataset& validation,
                         ParamStore initial, const CheckpointHook& on_checkpoint = {});

/// Validation loss over the first config.validation_triplets triplets, in
/// inference mode.
LossRecord validation_loss(ParamStore& params, const TrainConfig& config, const Dataset& validation,
                           const PyramidCache& pyramids);

/// Loads the datasets named in `config`, trains from a seeded initialization
/// and writes logs and checkpoints under config.out_dir. Returns the path of
/// the final checkpoint.
std::filesystem::path train(const TrainConfig& config);

/// As train, starting from a checkpoint whose architecture must match
/// config.model. Logs are tagged as fine-tuning and record the checkpoint's
/// SHA-256.
std::filesystem::path finetune(const std::filesystem::path& checkpoint, const TrainConfig& config);

}  // namespace ssvo
