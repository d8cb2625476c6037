#include "oracles.hpp"

#include "personmae/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace personmae;
namespace fs = std::filesystem;

namespace {

/// 64x32 images, 8x8 patches: a few milliseconds per step.
ExperimentConfig small_config() {
  ExperimentConfig config;
  config.model.encoder = EncoderConfig{16, 1, 2, 2.0, 8, 3, true};
  config.model.decoder_embed_dim = 16;
  config.model.decoder_num_heads = 2;
  config.model.decoder_mlp_ratio = 2.0;
  config.model.image_height = 64;
  config.model.image_width = 32;
  config.train.epochs = 4;
  config.train.warmup_epochs = 1;
  config.train.momentum_warmup_epochs = 2;
  config.train.batch_size = 4;
  config.train.base_lr = 1e-3;
  config.train.seed = 3;
  config.train.objective.max_shift = 8;
  return config;
}

std::vector<ImageRecord> synthetic_records(int count) {
  std::vector<ImageRecord> records;
  for (int id = 0; id < count; ++id) records.push_back(generate_synthetic_person(11, id));
  return records;
}

std::map<std::string, MatrixXd> snapshot(const PretrainModel<double>& model) {
  std::map<std::string, MatrixXd> values;
  model.visit_trainable([&](const std::string& name, const nn::Parameter<double>& p) { values[name] = p.value; });
  model.visit_momentum([&](const std::string& name, const nn::Parameter<double>& p) { values[name] = p.value; });
  return values;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("personmae_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<double> totals(const std::vector<StepMetrics>& log) {
  std::vector<double> out;
  for (const auto& m : log) out.push_back(m.loss.total);
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig config;
  CHECK(lr_at(0, config) == 0.0);
  CHECK(std::abs(lr_at(10, config) - 0.6e-3) < 1e-12);
  CHECK(std::abs(lr_at(20, config) - 1.2e-3) < 1e-12);
  CHECK(std::abs(lr_at(60, config) - 6.0e-4) < 1e-12);
  CHECK(std::abs(lr_at(100, config)) < 1e-12);
  CHECK(lr_at(20 - 1e-9, config) == doctest::Approx(lr_at(20, config)));
  for (double e = 0; e < 20; e += 0.5) CHECK(lr_at(e + 0.5, config) > lr_at(e, config));
  for (double e = 20; e < 100; e += 0.5) CHECK(lr_at(e + 0.5, config) < lr_at(e, config));
}

TEST_CASE("weight-decay exclusions by parameter name") {
  PretrainModel<double> model(small_config().model);
  std::set<std::string> decayed;
  std::set<std::string> excluded;
  model.visit_trainable([&](const std::string& name, const nn::Parameter<double>&) {
    (applies_weight_decay(name) ? decayed : excluded).insert(name);
  });
  for (const auto& name : excluded) {
    INFO(name);
    const bool is_norm = name.find(".norm") != std::string::npos;
    const bool is_bias = name.ends_with(".bias");
    const bool is_token = name.ends_with(".cls_token") || name.ends_with(".mask_token");
    CHECK((is_norm || is_bias || is_token));
  }
  for (const auto& name : decayed) {
    INFO(name);
    CHECK(name.ends_with(".weight"));
    CHECK(name.find(".norm") == std::string::npos);
  }
  CHECK(excluded.count("encoder.cls_token") == 1);
  CHECK(excluded.count("pixel_decoder.mask_token") == 1);
  CHECK(excluded.count("encoder.blocks.0.norm1.weight") == 1);
  CHECK(excluded.count("feature_decoder.norm.weight") == 1);
  CHECK(decayed.count("encoder.blocks.0.attn.qkv.weight") == 1);
  CHECK(decayed.count("pixel_decoder.head.weight") == 1);
  CHECK(decayed.count("encoder.patch_embed.weight") == 1);
}

TEST_CASE("optimizer step") {
  const ExperimentConfig config = small_config();
  const auto records = synthetic_records(4);
  std::vector<PreparedSample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(prepare_training_sample(records[i], config, 0, i));

  SUBCASE("zero learning rate changes nothing") {
    TrainState state = TrainState::initialize(config);
    const auto before = snapshot(state.model);
    train_step(state, batch, 0.0, 1.0);
    CHECK(snapshot(state.model) == before);
    CHECK(state.step == 1);
  }
  SUBCASE("identical states and batches give identical updates") {
    TrainState a = TrainState::initialize(config);
    TrainState b = TrainState::initialize(config);
    CHECK(train_step(a, batch, 1e-3, 0.999).total == train_step(b, batch, 1e-3, 0.999).total);
    CHECK(snapshot(a.model) == snapshot(b.model));
  }
  SUBCASE("repeating a step on a fixed batch reduces its loss") {
    TrainState state = TrainState::initialize(config);
    const double first = forward_pretrain<double>(batch, state.model, config.train.objective, false).total;
    for (int i = 0; i < 50; ++i) train_step(state, batch, 1e-3, 0.999);
    const double last = forward_pretrain<double>(batch, state.model, config.train.objective, false).total;
    CHECK(last < first);
  }
  SUBCASE("non-finite losses raise a numeric error naming the batch") {
    TrainState state = TrainState::initialize(config);
    state.model.encoder.patch_embed.weight.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    const std::vector<int> indices{5, 9};
    try {
      train_step(state, batch, 1e-3, 0.999, indices);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("[5 9]") != std::string::npos);
    }
  }
}

TEST_CASE("training loop bookkeeping") {
  ExperimentConfig config = small_config();
  config.train.epochs = 2;
  const auto records = synthetic_records(8);
  TrainState state = TrainState::initialize(config);
  int callbacks = 0;
  const auto log = train_loop(records, state, {std::nullopt, [&](const StepMetrics&) { ++callbacks; }, std::nullopt});
  CHECK(log.size() == 4);
  CHECK(callbacks == 4);
  CHECK(state.step == 4);
  CHECK(state.epoch == 2);
  CHECK(log[0].lr == 0.0);
  CHECK(log[0].gamma == 0.999);
  CHECK(steps_per_epoch(9, 4) == 3);
  CHECK(format_metrics_line(log[0]).starts_with("0,0,0.999,"));
}

TEST_CASE("seeded runs are reproducible and resumable") {
  const ExperimentConfig config = small_config();
  const auto records = synthetic_records(6);

  TrainState full = TrainState::initialize(config);
  const auto full_log = train_loop(records, full);
  REQUIRE(full_log.size() == 8);

  TrainState again = TrainState::initialize(config);
  CHECK(totals(train_loop(records, again)) == totals(full_log));

  const fs::path dir = fresh_dir("resume");
  TrainState first_half = TrainState::initialize(config);
  train_loop(records, first_half, {dir, {}, 2});
  REQUIRE(fs::exists(checkpoint_path(dir, 1)));
  REQUIRE(fs::exists(checkpoint_path(dir, 2)));

  TrainState resumed = load_checkpoint(checkpoint_path(dir, 2));
  CHECK(resumed.epoch == 2);
  CHECK(resumed.step == 4);
  const auto tail = train_loop(records, resumed);
  REQUIRE(tail.size() == 4);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    CHECK(tail[i].step == full_log[4 + i].step);
    CHECK(tail[i].loss.total == full_log[4 + i].loss.total);
    CHECK(format_metrics_line(tail[i]) == format_metrics_line(full_log[4 + i]));
  }
  CHECK(snapshot(resumed.model) == snapshot(full.model));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint container") {
  const ExperimentConfig config = small_config();
  TrainState state = TrainState::initialize(config);
  const auto records = synthetic_records(4);
  train_loop(records, state, {std::nullopt, {}, 1});
  const fs::path dir = fresh_dir("ckpt");

  SUBCASE("save, load and save again is byte-identical") {
    save_checkpoint(dir / "a.ckpt", state);
    const TrainState loaded = load_checkpoint(dir / "a.ckpt");
    save_checkpoint(dir / "b.ckpt", loaded);
    CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(state));
    std::ifstream a(dir / "a.ckpt", std::ios::binary), b(dir / "b.ckpt", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
    CHECK(to_key_values(loaded.config) == to_key_values(state.config));
    CHECK(loaded.optimizer.steps == state.optimizer.steps);
    CHECK(snapshot(loaded.model) == snapshot(state.model));
  }
  SUBCASE("truncated, corrupted and foreign files are rejected") {
    const std::string bytes = serialize_checkpoint(state);
    for (std::size_t cut : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
      CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, cut)), std::runtime_error);
    }
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(deserialize_checkpoint(flipped), std::runtime_error);
    std::string versioned = bytes;
    versioned[8] = 7;
    CHECK_THROWS_AS(deserialize_checkpoint(versioned), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
  }
  SUBCASE("stored configuration wins over defaults") {
    const TrainState loaded = deserialize_checkpoint(serialize_checkpoint(state));
    CHECK(loaded.config.model.image_height == 64);
    CHECK(loaded.config.train.seed == 3);
    CHECK(loaded.model.config() == config.model);
  }
  fs::remove_all(dir);
}
