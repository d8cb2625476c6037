#pragma once

#include "personmae/data_pipeline.hpp"
#include "personmae/experiment_config.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace personmae {

/// Linear warm-up 0 -> base_lr over `warmup_epochs`, then single-cycle cosine to 0 at `epochs`.
double lr_at(double epoch, const TrainConfig& config);

/// True unless `name` is a normalisation scale/offset, a bias, the class token or a mask token.
bool applies_weight_decay(const std::string& name);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  struct Moments {
    MatrixXd first;
    MatrixXd second;
  };

  void step(PretrainModel<double>& model, double lr, double weight_decay);

  std::int64_t steps = 0;
  std::map<std::string, Moments> moments;
};

struct TrainState {
  ExperimentConfig config;
  PretrainModel<double> model;
  AdamW optimizer;
  int epoch = 0;          // completed epochs
  std::int64_t step = 0;  // completed optimiser steps
  Rng shuffle_rng;

  /// Fresh state: model initialised from the config seed, momentum encoder = online encoder.
  static TrainState initialize(const ExperimentConfig& config);
};

struct StepMetrics {
  std::int64_t step = 0;
  double lr = 0.0;
  double gamma = 0.0;
  LossBreakdown loss;
};

/// `step,lr,gamma,loss_pixel,loss_feature,loss_total`, shortest round-trip decimals.
std::string format_metrics_line(const StepMetrics& metrics);

/// Backward pass, AdamW update at `lr`, then EMA update of the momentum encoder
/// with `gamma`. Throws NumericError (naming `batch_indices`) on a non-finite loss.
LossBreakdown train_step(TrainState& state, std::span<const PreparedSample> batch, double lr, double gamma,
                         std::span<const int> batch_indices = {});

/// Per-sample pipeline used by train_loop: global augmentation, region sampling, masking,
/// all driven by make_rng(seed, epoch, sample_index).
PreparedSample prepare_training_sample(const ImageRecord& record, const ExperimentConfig& config, int epoch,
                                       int sample_index);

int steps_per_epoch(std::size_t records, int batch_size);

struct TrainLoopOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // one checkpoint per epoch when set
  std::function<void(const StepMetrics&)> on_step;
  std::optional<int> stop_after_epoch;  // stop once this many epochs are complete
};

/// Runs the remaining epochs of `state` over `records`. Returns the per-step metrics.
std::vector<StepMetrics> train_loop(std::span<const ImageRecord> records, TrainState& state,
                                    const TrainLoopOptions& options = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: magic, version, metadata text block, named float64 arrays,
/// trailing FNV-1a checksum. Byte-identical for identical states.
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
/// Throws std::runtime_error on a bad version or damaged file; no partial state escapes.
TrainState load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_path(const std::filesystem::path& directory, int epoch);

}  // namespace personmae
