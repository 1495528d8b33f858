#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lcodom/adam.hpp"
#include "lcodom/checkpoint.hpp"
#include "lcodom/dataset.hpp"
#include "lcodom/models.hpp"

namespace lcodom {

enum class Stage { kPretrainLaser, kPretrainCam, kFusion };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

struct TrainConfig {
  Stage stage = Stage::kPretrainLaser;
  double lr = 1e-4;
  double beta = 1.0;
  std::size_t batch = 8;
  std::size_t epochs = default_epochs(Stage::kPretrainLaser);
  std::size_t max_steps = 0;  // 0 means no cap
  std::uint64_t seed = 1;
  AdamOptions adam;           // lr is taken from `lr`
  ModelConfig model = ModelConfig::paper();

  /// 200 for pretraining, 100 for fusion.
  static std::size_t default_epochs(Stage stage) { return stage == Stage::kFusion ? 100 : 200; }
  void validate() const;

  /// Human-readable key = value text covering every field and both grids.
  std::string to_text() const;
  /// Parses text written by to_text(). A `model = paper|compact|tiny` line
  /// selects a preset that later keys override. Without an `epochs` line the
  /// stage default applies. Unknown keys are errors.
  static TrainConfig from_text(std::string_view text);
};

/// key = value lines; '#' starts a comment. Errors name the 1-based line.
std::map<std::string, std::string> parse_key_values(std::string_view text);

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0;  // mean per-pair loss of the batch (train mode)
};

struct TrainResult {
  Checkpoint state;  // all parameters plus optimizer state; resumable
  std::vector<LossRecord> losses;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Indices of the batch taken at `step`: each epoch is a Fisher-Yates
/// permutation seeded by (seed, epoch), cut into consecutive batches.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch, std::uint64_t seed,
                                       std::size_t step);

/// Trains one sensor CNN with temporary heads. With `resume`, training
/// continues from the saved step and reproduces the uninterrupted trace.
TrainResult pretrain_single(Sensor sensor, const PairDataset& data, const TrainConfig& config,
                            const Checkpoint* resume = nullptr, const StepCallback& on_step = {});

/// Builds the fused network from two pretrained CNN checkpoints and trains it end to end.
TrainResult train_fusion(const PairDataset& data, const Checkpoint& laser, const Checkpoint& cam,
                         const TrainConfig& config, const Checkpoint* resume = nullptr,
                         const StepCallback& on_step = {});

/// Drops optimizer state and keeps only the parameters whose names start with
/// one of `prefixes` followed by '.'.
Checkpoint export_weights(const Checkpoint& state, const std::vector<std::string>& prefixes, std::string kind);

/// Metadata value for `key` in a checkpoint ("" if missing).
std::string metadata_value(const Checkpoint& ckpt, std::string_view key);

/// Model config stored in a checkpoint's metadata.
TrainConfig config_of(const Checkpoint& ckpt);

/// Mean eval-mode loss per pair over the dataset for the network a stage trains.
double dataset_loss(const OdometryNet<float>& net, ParamStore<float>& params, const PairDataset& data, Stage stage,
                    double beta);

struct Prediction {
  RelativePose pose;
  std::size_t rotation_class = 0;
  std::size_t translation_class = 0;
};

/// Eval-mode forward of both CNNs and the fusion heads, decoded through the grids.
Prediction infer(const OdometryNet<float>& net, ParamStore<float>& params, const Tensor32& scans,
                 const Tensor32& images);

/// Decodes head probabilities into classes and values.
Prediction decode_outputs(std::span<const float> rotation, std::span<const float> translation,
                          const ModelConfig& config);

}  // namespace lcodom
