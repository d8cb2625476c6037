#include "personmae/trainer.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace personmae {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'M', 'A', 'E', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const char* data, std::size_t size) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= static_cast<unsigned char>(data[i]);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& value) {
    bytes_.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void raw(const char* data, std::size_t size) { bytes_.append(data, size); }
  void string(const std::string& text) {
    pod<std::uint64_t>(text.size());
    raw(text.data(), text.size());
  }
  void array(const std::string& name, const MatrixXd& value) {
    string(name);
    pod<std::uint64_t>(static_cast<std::uint64_t>(value.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(value.cols()));
    raw(reinterpret_cast<const char*>(value.data()), sizeof(double) * static_cast<std::size_t>(value.size()));
  }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T pod() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  std::string string() {
    const auto size = pod<std::uint64_t>();
    const char* p = take(size);
    return std::string(p, size);
  }
  MatrixXd array_body() {
    const auto rows = pod<std::uint64_t>();
    const auto cols = pod<std::uint64_t>();
    if (rows > (1ULL << 31) || cols > (1ULL << 31)) {
      throw std::runtime_error("checkpoint array has implausible shape");
    }
    MatrixXd value(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const std::size_t bytes = sizeof(double) * rows * cols;
    std::memcpy(value.data(), take(bytes), bytes);
    return value;
  }
  bool done() const { return offset_ == size_; }

 private:
  const char* take(std::size_t n) {
    if (n > size_ - offset_) {
      throw std::runtime_error("checkpoint is truncated");
    }
    const char* p = data_ + offset_;
    offset_ += n;
    return p;
  }

  const char* data_;
  std::size_t size_;
  std::size_t offset_ = 0;
};

std::string rng_to_string(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  KeyValues meta;
  meta.emplace_back("epoch", std::to_string(state.epoch));
  meta.emplace_back("step", std::to_string(state.step));
  meta.emplace_back("optimizer_steps", std::to_string(state.optimizer.steps));
  meta.emplace_back("rng_state", rng_to_string(state.shuffle_rng));
  for (const auto& [key, value] : to_key_values(state.config)) meta.emplace_back("config." + key, value);

  std::vector<std::pair<std::string, const MatrixXd*>> arrays;
  state.model.visit_trainable([&](const std::string& name, const nn::Parameter<double>& p) {
    arrays.emplace_back(name, &p.value);
  });
  state.model.visit_momentum([&](const std::string& name, const nn::Parameter<double>& p) {
    arrays.emplace_back(name, &p.value);
  });
  state.model.visit_trainable([&](const std::string& name, const nn::Parameter<double>&) {
    const auto it = state.optimizer.moments.find(name);
    if (it != state.optimizer.moments.end()) {
      arrays.emplace_back("adam.m." + name, &it->second.first);
      arrays.emplace_back("adam.v." + name, &it->second.second);
    }
  });

  Writer writer;
  writer.raw(kMagic, sizeof(kMagic));
  writer.pod<std::uint32_t>(kCheckpointVersion);
  writer.string(format_key_value_text(meta));
  writer.pod<std::uint64_t>(arrays.size());
  for (const auto& [name, value] : arrays) writer.array(name, *value);
  const std::uint64_t checksum = fnv1a(writer.bytes().data(), writer.bytes().size());
  writer.pod(checksum);
  return std::move(writer.bytes());
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  constexpr std::size_t kHeader = sizeof(kMagic) + sizeof(std::uint32_t);
  if (bytes.size() < kHeader + sizeof(std::uint64_t)) {
    throw std::runtime_error("checkpoint is truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion) {
    throw std::runtime_error(fmt::format("checkpoint format version {} is not supported (expected {})", version,
                                         kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored_checksum;
  std::memcpy(&stored_checksum, bytes.data() + body, sizeof(stored_checksum));
  if (fnv1a(bytes.data(), body) != stored_checksum) {
    throw std::runtime_error("checkpoint is corrupt or truncated (checksum mismatch)");
  }

  Reader reader(bytes.data() + kHeader, body - kHeader);
  const KeyValues meta = parse_key_value_text(reader.string());
  std::unordered_map<std::string, std::string> fields;
  ExperimentConfig config;
  for (const auto& [key, value] : meta) {
    if (key.rfind("config.", 0) == 0) {
      set_config_value(config, key.substr(7), value);
    } else {
      fields[key] = value;
    }
  }
  for (const char* required : {"epoch", "step", "optimizer_steps", "rng_state"}) {
    if (!fields.contains(required)) {
      throw std::runtime_error(fmt::format("checkpoint metadata lacks '{}'", required));
    }
  }

  std::unordered_map<std::string, MatrixXd> arrays;
  const auto count = reader.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = reader.string();
    arrays.emplace(std::move(name), reader.array_body());
  }
  if (!reader.done()) {
    throw std::runtime_error("checkpoint has trailing bytes");
  }

  config.validate();
  TrainState state;
  state.config = config;
  state.model = PretrainModel<double>(config.model);
  state.epoch = std::stoi(fields["epoch"]);
  state.step = std::stoll(fields["step"]);
  state.optimizer.steps = std::stoll(fields["optimizer_steps"]);
  std::istringstream rng_in(fields["rng_state"]);
  rng_in >> state.shuffle_rng;
  if (rng_in.fail()) {
    throw std::runtime_error("checkpoint RNG state is unreadable");
  }

  std::size_t used = 0;
  auto fill = [&](const std::string& name, MatrixXd& target, bool required) {
    const auto it = arrays.find(name);
    if (it == arrays.end()) {
      if (required) throw std::runtime_error(fmt::format("checkpoint lacks array '{}'", name));
      return false;
    }
    if (it->second.rows() != target.rows() || it->second.cols() != target.cols()) {
      throw std::runtime_error(fmt::format("checkpoint array '{}' has shape {}x{}, expected {}x{}", name,
                                           it->second.rows(), it->second.cols(), target.rows(), target.cols()));
    }
    target = it->second;
    ++used;
    return true;
  };
  state.model.visit_trainable([&](const std::string& name, nn::Parameter<double>& p) {
    fill(name, p.value, true);
    p.zero_grad();
  });
  state.model.visit_momentum([&](const std::string& name, nn::Parameter<double>& p) {
    fill(name, p.value, true);
    p.zero_grad();
  });
  state.model.visit_trainable([&](const std::string& name, nn::Parameter<double>& p) {
    AdamW::Moments moments{MatrixXd::Zero(p.value.rows(), p.value.cols()), MatrixXd::Zero(p.value.rows(), p.value.cols())};
    const bool has_first = fill("adam.m." + name, moments.first, false);
    const bool has_second = fill("adam.v." + name, moments.second, false);
    if (has_first != has_second) {
      throw std::runtime_error(fmt::format("checkpoint has only one optimiser moment for '{}'", name));
    }
    if (has_first) state.optimizer.moments.emplace(name, std::move(moments));
  });
  if (used != arrays.size()) {
    throw std::runtime_error("checkpoint contains arrays that do not belong to the configured model");
  }
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const std::string bytes = serialize_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error(fmt::format("failed writing checkpoint {}", path.string()));
  }
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return deserialize_checkpoint(buffer.str());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(fmt::format("{}: invalid stored configuration: {}", path.string(), e.what()));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace personmae
