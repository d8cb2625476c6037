#pragma once

#include "personmae/experiment_config.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace personmae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Flat `key = value` run configuration: every experiment key plus dataset and output paths.
struct RunConfig {
  ExperimentConfig experiment;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "run";
};

/// Throws ConfigError naming the offending key for unknown keys or bad values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

struct SynthOptions {
  std::filesystem::path out;
  int identities = 0;
  int per_identity = 0;
  std::uint64_t seed = 0;
};

struct PretrainOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> resume;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path query;
  std::filesystem::path gallery;
  std::optional<std::filesystem::path> out;
  int max_rank = 50;
};

struct InspectOptions {
  std::filesystem::path config;
  std::filesystem::path image;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::optional<std::filesystem::path> checkpoint;
};

int cmd_synth(const SynthOptions& options);
int cmd_pretrain(const PretrainOptions& options);
int cmd_eval(const EvalOptions& options);
int cmd_inspect(const InspectOptions& options);

/// Parses argv and dispatches to one of the commands above.
int run(int argc, char** argv);

}  // namespace personmae::cli
