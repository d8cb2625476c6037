#include "personmae/experiment_config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <functional>
#include <sstream>

namespace personmae {

void TrainConfig::validate() const {
  if (epochs < 1 || warmup_epochs < 0 || warmup_epochs > epochs) {
    throw std::invalid_argument(fmt::format("need 0 <= warmup_epochs ({}) <= epochs ({}) and epochs >= 1",
                                            warmup_epochs, epochs));
  }
  if (!(base_lr > 0) || weight_decay < 0 || batch_size < 1 || momentum_warmup_epochs < 0) {
    throw std::invalid_argument("learning rate and batch size must be positive, weight decay non-negative");
  }
  if (!(objective.mask_ratio >= 0 && objective.mask_ratio <= 1)) {
    throw std::invalid_argument(fmt::format("mask_ratio must lie in [0, 1], got {}", objective.mask_ratio));
  }
  if (objective.max_shift < 0 || !(objective.beta > 0) || objective.lambda < 0) {
    throw std::invalid_argument("max_shift and lambda must be non-negative, beta positive");
  }
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(key, fmt::format("invalid value for {}: '{}'", key, text));
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, fmt::format("invalid boolean for {}: '{}'", key, text));
}

struct KeyEntry {
  const char* name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <typename T, typename Access>
KeyEntry number_key(const char* name, Access access) {
  return {name, [access](const ExperimentConfig& c) { return fmt::format("{}", access(c)); },
          [access](ExperimentConfig& c, const std::string& key, const std::string& v) { access(c) = parse_number<T>(key, v); }};
}

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = [] {
    std::vector<KeyEntry> s;
    s.push_back(number_key<int>("image_height", [](auto& c) -> auto& { return c.model.image_height; }));
    s.push_back(number_key<int>("image_width", [](auto& c) -> auto& { return c.model.image_width; }));
    s.push_back(number_key<int>("patch_size", [](auto& c) -> auto& { return c.model.encoder.patch_size; }));
    s.push_back(number_key<int>("in_channels", [](auto& c) -> auto& { return c.model.encoder.in_channels; }));
    s.push_back(number_key<int>("embed_dim", [](auto& c) -> auto& { return c.model.encoder.embed_dim; }));
    s.push_back(number_key<int>("depth", [](auto& c) -> auto& { return c.model.encoder.depth; }));
    s.push_back(number_key<int>("num_heads", [](auto& c) -> auto& { return c.model.encoder.num_heads; }));
    s.push_back(number_key<double>("mlp_ratio", [](auto& c) -> auto& { return c.model.encoder.mlp_ratio; }));
    s.push_back({"use_class_token",
                 [](const ExperimentConfig& c) { return std::string(c.model.encoder.use_class_token ? "true" : "false"); },
                 [](ExperimentConfig& c, const std::string& key, const std::string& v) {
                   c.model.encoder.use_class_token = parse_bool(key, v);
                 }});
    s.push_back(number_key<int>("decoder_embed_dim", [](auto& c) -> auto& { return c.model.decoder_embed_dim; }));
    s.push_back(number_key<int>("decoder_depth", [](auto& c) -> auto& { return c.model.decoder_depth; }));
    s.push_back(number_key<int>("decoder_num_heads", [](auto& c) -> auto& { return c.model.decoder_num_heads; }));
    s.push_back(
        number_key<double>("decoder_mlp_ratio", [](auto& c) -> auto& { return c.model.decoder_mlp_ratio; }));
    s.push_back(number_key<int>("epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    s.push_back(number_key<int>("warmup_epochs", [](auto& c) -> auto& { return c.train.warmup_epochs; }));
    s.push_back(number_key<double>("momentum_warmup_epochs",
                                   [](auto& c) -> auto& { return c.train.momentum_warmup_epochs; }));
    s.push_back(number_key<double>("base_lr", [](auto& c) -> auto& { return c.train.base_lr; }));
    s.push_back(number_key<double>("weight_decay", [](auto& c) -> auto& { return c.train.weight_decay; }));
    s.push_back(number_key<int>("batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    s.push_back(number_key<std::uint64_t>("seed", [](auto& c) -> auto& { return c.train.seed; }));
    s.push_back(number_key<double>("mask_ratio", [](auto& c) -> auto& { return c.train.objective.mask_ratio; }));
    s.push_back({"mask_strategy", [](const ExperimentConfig& c) { return to_string(c.train.objective.mask_strategy); },
                 [](ExperimentConfig& c, const std::string& key, const std::string& v) {
                   try {
                     c.train.objective.mask_strategy = parse_mask_strategy(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(key, e.what());
                   }
                 }});
    s.push_back(number_key<int>("max_shift", [](auto& c) -> auto& { return c.train.objective.max_shift; }));
    s.push_back(number_key<double>("lambda", [](auto& c) -> auto& { return c.train.objective.lambda; }));
    s.push_back(number_key<double>("beta", [](auto& c) -> auto& { return c.train.objective.beta; }));
    return s;
  }();
  return table;
}

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

}  // namespace

KeyValues to_key_values(const ExperimentConfig& config) {
  KeyValues values;
  for (const auto& entry : key_table()) values.emplace_back(entry.name, entry.get(config));
  return values;
}

bool is_experiment_key(const std::string& key) {
  for (const auto& entry : key_table()) {
    if (key == entry.name) return true;
  }
  return false;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& entry : key_table()) {
    if (key == entry.name) {
      entry.set(config, key, value);
      return;
    }
  }
  throw ConfigError(key, fmt::format("unknown configuration key '{}'", key));
}

KeyValues parse_key_value_text(const std::string& text) {
  KeyValues values;
  std::istringstream in(text);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, fmt::format("line {}: expected 'key = value', got '{}'", line_number, line));
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(key, fmt::format("line {}: empty key", line_number));
    }
    values.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return values;
}

std::string format_key_value_text(const KeyValues& values) {
  std::string text;
  for (const auto& [key, value] : values) text += fmt::format("{} = {}\n", key, value);
  return text;
}

}  // namespace personmae
