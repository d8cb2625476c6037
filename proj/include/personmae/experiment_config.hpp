#pragma once

#include "personmae/pretrain_model.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace personmae {

struct TrainConfig {
  int epochs = 100;
  int warmup_epochs = 20;
  double momentum_warmup_epochs = 20.0;
  double base_lr = 1.2e-3;
  double weight_decay = 0.05;
  int batch_size = 64;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;

  void validate() const;
};

struct ExperimentConfig {
  PretrainConfig model;
  TrainConfig train;

  void validate() const {
    model.validate();
    train.validate();
  }
};

/// A bad configuration key or value. `key()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Every experiment key with its current value, in a fixed order. Doubles use
/// the shortest representation that round-trips exactly.
KeyValues to_key_values(const ExperimentConfig& config);

/// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

bool is_experiment_key(const std::string& key);

/// `key = value` lines; blank lines and `#` comments are ignored.
KeyValues parse_key_value_text(const std::string& text);
std::string format_key_value_text(const KeyValues& values);

}  // namespace personmae
