#include "personmae/trainer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace personmae {

double lr_at(double epoch, const TrainConfig& config) {
  const double warmup = config.warmup_epochs;
  if (epoch < warmup) {
    return config.base_lr * epoch / warmup;
  }
  const double span = config.epochs - warmup;
  if (span <= 0) {
    return config.base_lr;
  }
  const double progress = std::min((epoch - warmup) / span, 1.0);
  return config.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

bool applies_weight_decay(const std::string& name) {
  const auto leaf_start = name.rfind('.');
  const std::string leaf = leaf_start == std::string::npos ? name : name.substr(leaf_start + 1);
  if (leaf == "bias" || leaf == "cls_token" || leaf == "mask_token") {
    return false;
  }
  // LayerNorm modules are named norm, norm1, norm2.
  const std::string owner = leaf_start == std::string::npos ? std::string() : name.substr(0, leaf_start);
  const auto owner_start = owner.rfind('.');
  const std::string module = owner_start == std::string::npos ? owner : owner.substr(owner_start + 1);
  return module.rfind("norm", 0) != 0;
}

void AdamW::step(PretrainModel<double>& model, double lr, double weight_decay) {
  ++steps;
  const double correction1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps));
  const double correction2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps));
  model.visit_trainable([&](const std::string& name, nn::Parameter<double>& p) {
    auto [it, inserted] = moments.try_emplace(name);
    auto& m = it->second;
    if (inserted) {
      m.first = MatrixXd::Zero(p.value.rows(), p.value.cols());
      m.second = MatrixXd::Zero(p.value.rows(), p.value.cols());
    }
    m.first = kBeta1 * m.first + (1.0 - kBeta1) * p.grad;
    m.second = kBeta2 * m.second + (1.0 - kBeta2) * p.grad.cwiseAbs2();
    if (weight_decay > 0 && applies_weight_decay(name)) {
      p.value *= 1.0 - lr * weight_decay;
    }
    const MatrixXd denom = ((m.second / correction2).array().sqrt() + kEps).matrix();
    p.value -= lr * (m.first / correction1).cwiseQuotient(denom);
  });
}

TrainState TrainState::initialize(const ExperimentConfig& config) {
  config.validate();
  TrainState state;
  state.config = config;
  state.model = PretrainModel<double>(config.model);
  Rng init_rng = make_rng(config.train.seed, 0xC0FFEE, 0);
  state.model.init(init_rng);
  state.shuffle_rng = make_rng(config.train.seed, 0x5F1FF1E, 0);
  return state;
}

std::string format_metrics_line(const StepMetrics& metrics) {
  return fmt::format("{},{},{},{},{},{}", metrics.step, metrics.lr, metrics.gamma, metrics.loss.pixel_loss,
                     metrics.loss.feature_loss, metrics.loss.total);
}

LossBreakdown train_step(TrainState& state, std::span<const PreparedSample> batch, double lr, double gamma,
                         std::span<const int> batch_indices) {
  auto& model = state.model;
  model.zero_grad();
  const LossBreakdown loss = forward_pretrain<double>(batch, model, state.config.train.objective, true);
  if (!std::isfinite(loss.total) || !std::isfinite(loss.pixel_loss) || !std::isfinite(loss.feature_loss)) {
    std::string indices;
    for (int i : batch_indices) indices += fmt::format("{}{}", indices.empty() ? "" : " ", i);
    throw NumericError(fmt::format("non-finite loss (pixel={} feature={}) at step {}; batch indices [{}]",
                                   loss.pixel_loss, loss.feature_loss, state.step, indices));
  }
  state.optimizer.step(model, lr, state.config.train.weight_decay);
  ema_update(model.encoder, model.momentum_encoder, gamma);
  ++state.step;
  return loss;
}

PreparedSample prepare_training_sample(const ImageRecord& record, const ExperimentConfig& config, int epoch,
                                       int sample_index) {
  Rng rng = make_rng(config.train.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(sample_index));
  const ImageRecord augmented = augment_global(record, rng);
  return prepare_sample(augmented.pixels, config.model, config.train.objective, rng);
}

int steps_per_epoch(std::size_t records, int batch_size) {
  return static_cast<int>((records + batch_size - 1) / batch_size);
}

std::vector<StepMetrics> train_loop(std::span<const ImageRecord> records, TrainState& state,
                                    const TrainLoopOptions& options) {
  if (records.empty()) {
    throw std::invalid_argument("train_loop needs at least one record");
  }
  const auto& config = state.config;
  const int batch_size = config.train.batch_size;
  const int per_epoch = steps_per_epoch(records.size(), batch_size);
  const int last_epoch = std::min(config.train.epochs, options.stop_after_epoch.value_or(config.train.epochs));
  std::vector<StepMetrics> log;

  for (int epoch = state.epoch; epoch < last_epoch; ++epoch) {
    std::vector<int> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(state.shuffle_rng);
      std::swap(order[i - 1], order[j]);
    }
    for (int b = 0; b < per_epoch; ++b) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(b) * batch_size;
      const auto last = order.begin() + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(b + 1) * batch_size,
                                                                 static_cast<std::ptrdiff_t>(order.size()));
      const std::vector<int> indices(first, last);
      std::vector<PreparedSample> batch;
      batch.reserve(indices.size());
      for (int index : indices) batch.push_back(prepare_training_sample(records[index], config, epoch, index));

      const double epoch_fraction = static_cast<double>(state.step) / per_epoch;
      StepMetrics metrics;
      metrics.step = state.step;
      metrics.lr = lr_at(epoch_fraction, config.train);
      metrics.gamma = gamma_schedule(epoch_fraction, config.train.momentum_warmup_epochs);
      metrics.loss = train_step(state, batch, metrics.lr, metrics.gamma, indices);
      if (options.on_step) options.on_step(metrics);
      log.push_back(metrics);
    }
    state.epoch = epoch + 1;
    if (options.checkpoint_dir) {
      save_checkpoint(checkpoint_path(*options.checkpoint_dir, state.epoch), state);
    }
  }
  return log;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& directory, int epoch) {
  return directory / fmt::format("checkpoint_epoch_{:04d}.ckpt", epoch);
}

}  // namespace personmae
