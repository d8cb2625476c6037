#include "personmae/cli.hpp"

#include "personmae/eval_retrieval.hpp"
#include "personmae/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace personmae::cli {
namespace fs = std::filesystem;

namespace {

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  out << text;
}

bool ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) return false;
  // Probe writability.
  const fs::path probe = dir / ".personmae_write_probe";
  {
    std::ofstream out(probe);
    if (!out) return false;
  }
  fs::remove(probe, ec);
  return true;
}

/// Drops metric lines at or beyond `step` so a resumed run continues the log cleanly.
void truncate_metrics_log(const fs::path& path, std::int64_t step) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string kept;
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoll(line.substr(0, comma)) < step) kept += line + "\n";
  }
  in.close();
  write_text_file(path, kept);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  for (const auto& [key, value] : parse_key_value_text(text)) {
    if (key == "data_dir") {
      config.data_dir = value;
    } else if (key == "out_dir") {
      config.out_dir = value;
    } else {
      set_config_value(config.experiment, key, value);
    }
  }
  try {
    config.experiment.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", fmt::format("invalid configuration: {}", e.what()));
  }
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw ConfigError("", fmt::format("config file not found: {}", path.string()));
  }
  return parse_run_config(read_text_file(path));
}

int cmd_synth(const SynthOptions& options) {
  if (options.identities < 1 || options.per_identity < 1) {
    std::cerr << "error: --identities and --per-identity must be at least 1\n";
    return kExitUsage;
  }
  if (!ensure_directory(options.out)) {
    std::cerr << "error: cannot write to " << options.out.string() << "\n";
    return kExitUsage;
  }
  for (int id = 0; id < options.identities; ++id) {
    for (int k = 0; k < options.per_identity; ++k) {
      Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(k));
      const ImageRecord record = generate_synthetic_person(rng(), id);
      const int camera = k % 6 + 1;
      write_png(options.out / format_image_filename(id, camera, k), record.pixels);
    }
  }
  std::cout << fmt::format("wrote {} images to {}\n", options.identities * options.per_identity,
                           options.out.string());
  return kExitOk;
}

int cmd_pretrain(const PretrainOptions& options) {
  RunConfig run;
  try {
    run = load_run_config(options.config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (run.data_dir.empty()) {
    std::cerr << "error: config key 'data_dir' is required for pretraining\n";
    return kExitUsage;
  }
  DatasetManifest manifest;
  try {
    manifest = load_image_folder(run.data_dir, SplitTag::pretrain);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (!ensure_directory(run.out_dir)) {
    std::cerr << "error: cannot write to " << run.out_dir.string() << "\n";
    return kExitUsage;
  }

  TrainState state;
  const fs::path log_path = run.out_dir / "metrics.csv";
  if (options.resume) {
    try {
      state = load_checkpoint(*options.resume);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    if (!(state.config.model == run.experiment.model)) {
      std::cerr << "error: checkpoint architecture does not match the configuration\n";
      return kExitUsage;
    }
    truncate_metrics_log(log_path, state.step);
  } else {
    state = TrainState::initialize(run.experiment);
    write_text_file(log_path, "");
  }

  std::ofstream log(log_path, std::ios::app);
  TrainLoopOptions loop;
  loop.checkpoint_dir = run.out_dir;
  loop.on_step = [&](const StepMetrics& metrics) {
    log << format_metrics_line(metrics) << '\n';
    log.flush();
  };
  try {
    train_loop(manifest.records, state, loop);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  std::cout << fmt::format("trained {} epochs ({} steps); checkpoints in {}\n", state.epoch, state.step,
                           run.out_dir.string());
  return kExitOk;
}

int cmd_eval(const EvalOptions& options) {
  TrainState state;
  DatasetManifest query;
  DatasetManifest gallery;
  try {
    state = load_checkpoint(options.checkpoint);
    query = load_image_folder(options.query, SplitTag::query);
    gallery = load_image_folder(options.gallery, SplitTag::gallery);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  const auto& model = state.config.model;
  const FeatureMatrix query_features =
      extract_features(state.model.encoder, query, model.image_height, model.image_width);
  const FeatureMatrix gallery_features =
      extract_features(state.model.encoder, gallery, model.image_height, model.image_width);
  RetrievalReport report;
  try {
    report = compute_cmc_map(query_features, gallery_features, options.max_rank);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (options.out) {
    if (!ensure_directory(*options.out)) {
      std::cerr << "error: cannot write to " << options.out->string() << "\n";
      return kExitUsage;
    }
    write_text_file(*options.out / "report.txt", format_report(report));
    std::ofstream qf(*options.out / "query_features.txt");
    write_feature_matrix(qf, query_features);
    std::ofstream gf(*options.out / "gallery_features.txt");
    write_feature_matrix(gf, gallery_features);
  }
  std::cout << fmt::format("mAP={:.6f} rank1={:.6f}\n", report.mAP, report.cmc.front());
  return kExitOk;
}

int cmd_inspect(const InspectOptions& options) {
  RunConfig run;
  Image image;
  std::optional<TrainState> state;
  try {
    run = load_run_config(options.config);
    image = read_image(options.image);
    if (options.checkpoint) {
      state = load_checkpoint(*options.checkpoint);
      const auto& stored = state->config.model;
      if (stored.image_height != run.experiment.model.image_height ||
          stored.image_width != run.experiment.model.image_width ||
          stored.encoder.patch_size != run.experiment.model.encoder.patch_size) {
        std::cerr << "error: checkpoint geometry does not match the configuration\n";
        return kExitUsage;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (!ensure_directory(options.out)) {
    std::cerr << "error: cannot write to " << options.out.string() << "\n";
    return kExitUsage;
  }
  const auto& model = run.experiment.model;
  const auto& objective = run.experiment.train.objective;
  Rng rng = make_rng(options.seed);
  const RegionPair pair = sample_cross_region(image, model.image_height, model.image_width, objective.max_shift, rng);
  const MaskLayout mask = make_mask(objective.mask_strategy, model.grid_h(), model.grid_w(), objective.mask_ratio, rng);
  const int patch = model.encoder.patch_size;

  write_png(options.out / "region_a.png", pair.region_a);
  write_png(options.out / "region_b.png", pair.region_b);
  write_text_file(options.out / "region.txt", fmt::format("{} {} {}\n", pair.pad, pair.shift_h, pair.shift_w));
  write_text_file(options.out / "mask.txt", mask_to_text(mask));
  const CoordsXd coords = relation_coords(pair.shift_h, pair.shift_w, patch, model.grid_h(), model.grid_w());
  std::string coord_text;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) coord_text += fmt::format("{} {}\n", coords(i, 0), coords(i, 1));
  write_text_file(options.out / "coords.txt", coord_text);

  if (state) {
    const PreparedSample sample = prepare_sample(pair, mask, patch);
    PretrainModel<double>::Outputs outputs;
    state->model.forward_backward(sample, state->config.train.objective, false, 1.0, &outputs);
    TokenSequence reconstruction = patchify(pair.region_b, patch);
    reconstruction.tokens =
        denormalize_patches<double>(outputs.pixel_predictions, sample.targets.mean, sample.targets.stddev);
    write_png(options.out / "reconstruction.png", unpatchify(reconstruction));
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Cross-region masked-autoencoder pre-training for person re-identification"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic pedestrian dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--identities", synth.identities, "Number of identities")->required();
  synth_cmd->add_option("--per-identity", synth.per_identity, "Images per identity")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  PretrainOptions pretrain;
  std::string resume;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Run pre-training from a config file");
  pretrain_cmd->add_option("--config", pretrain.config, "key = value config file")->required();
  pretrain_cmd->add_option("--resume", resume, "Checkpoint to resume from");

  EvalOptions eval;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Retrieval mAP/CMC of a checkpoint's encoder");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--query", eval.query, "Query image directory")->required();
  eval_cmd->add_option("--gallery", eval.gallery, "Gallery image directory")->required();
  eval_cmd->add_option("--out", eval_out, "Directory for report and feature files");
  eval_cmd->add_option("--max-rank", eval.max_rank, "Longest CMC rank reported");

  InspectOptions inspect;
  std::string inspect_ckpt;
  auto* inspect_cmd = app.add_subcommand("inspect", "Dump regions, mask and coordinates for one image");
  inspect_cmd->add_option("--config", inspect.config, "key = value config file")->required();
  inspect_cmd->add_option("--image", inspect.image, "Input image")->required();
  inspect_cmd->add_option("--seed", inspect.seed, "Sampling seed");
  inspect_cmd->add_option("--out", inspect.out, "Output directory")->required();
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "Checkpoint for a reconstruction dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*pretrain_cmd) {
      if (!resume.empty()) pretrain.resume = resume;
      return cmd_pretrain(pretrain);
    }
    if (*eval_cmd) {
      if (!eval_out.empty()) eval.out = eval_out;
      return cmd_eval(eval);
    }
    if (!inspect_ckpt.empty()) inspect.checkpoint = inspect_ckpt;
    return cmd_inspect(inspect);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace personmae::cli
