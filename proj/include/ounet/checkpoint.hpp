#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ounet/model.hpp"
#include "ounet/pointcloud_io.hpp"

namespace ounet {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'O', 'U', 'N', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

struct CheckpointData {
  nlohmann::json header;  // {"model": ModelConfig, "step": int, ...}
  std::vector<TensorRecord> tensors;
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointData& ck) {
  std::string out(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = ck.header.dump();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& t : ck.tensors) {
    if (t.name.size() > 0xffff) throw FormatError("tensor name too long: " + t.name);
    if (t.dims.size() > 0xff) throw FormatError("tensor rank too large: " + t.name);
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) throw ShapeError("tensor '" + t.name + "' data does not match its dims");
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) detail::put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  return out;
}

inline CheckpointData decode_checkpoint(const std::string& bytes) {
  detail::Reader r(bytes);
  if (bytes.size() < 12 || std::memcmp(r.take(4), kCheckpointMagic, 4) != 0)
    throw FormatError("not an OUNT checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = r.get<std::uint32_t>();
  const auto* h = r.take(hlen);
  CheckpointData ck;
  try {
    ck.header = nlohmann::json::parse(h, h + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  while (!r.done()) {
    TensorRecord t;
    const auto nlen = r.get<std::uint16_t>();
    const auto* n = r.take(nlen);
    t.name.assign(n, nlen);
    const auto rank = r.get<std::uint8_t>();
    std::uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
      t.dims.push_back(r.get<std::uint64_t>());
      if (t.dims.back() != 0 && count > (std::uint64_t{1} << 40) / t.dims.back())
        throw FormatError("tensor '" + t.name + "' is implausibly large");
      count *= t.dims.back();
    }
    t.data.resize(count);
    std::memcpy(t.data.data(), r.take(count * sizeof(float)), count * sizeof(float));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename Real>
CheckpointData make_checkpoint(const OUNet<Real>& model, nlohmann::json extra = nlohmann::json::object()) {
  CheckpointData ck;
  ck.header = std::move(extra);
  ck.header["model"] = model.config().to_json();
  ck.header["step"] = model.params().step;
  for (const auto& p : model.params()) {
    TensorRecord t;
    t.name = p.name;
    t.dims = {static_cast<std::uint64_t>(p.value.rows()), static_cast<std::uint64_t>(p.value.cols())};
    t.data.resize(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(p.value.data()[i]);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

// Rebuilds a model from a checkpoint; every parameter must be present with its shape.
template <typename Real>
OUNet<Real> model_from_checkpoint(const CheckpointData& ck) {
  if (!ck.header.contains("model")) throw FormatError("checkpoint header lacks a model config");
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(ck.header.at("model"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint model config: ") + e.what());
  }
  OUNet<Real> model(cfg);
  auto& ps = model.params();
  if (ck.tensors.size() != ps.size()) throw FormatError("checkpoint tensor count does not match the model");
  for (const auto& t : ck.tensors) {
    if (!ps.contains(t.name)) throw FormatError("checkpoint has unknown tensor '" + t.name + "'");
    auto& p = ps[ps.index_of(t.name)];
    if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(p.value.rows()) ||
        t.dims[1] != static_cast<std::uint64_t>(p.value.cols()))
      throw FormatError("checkpoint tensor '" + t.name + "' has the wrong shape");
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Real>(t.data[static_cast<std::size_t>(i)]);
  }
  ps.step = ck.header.value("step", std::int64_t{0});
  model.set_training(false);
  return model;
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const OUNet<Real>& model,
                     nlohmann::json extra = nlohmann::json::object()) {
  io::write_file_bytes(path, encode_checkpoint(make_checkpoint(model, std::move(extra))));
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file_bytes(path));
}

}  // namespace ounet
