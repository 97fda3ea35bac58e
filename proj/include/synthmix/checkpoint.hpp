#pragma once

// Checkpoint archive:
//   8 bytes  magic "SMXCKPT\0"
//   8 bytes  manifest length (little-endian u64)
//   manifest JSON: format, iteration, model config and its hash, and per
//            tensor {name, shape, offset, count}, plus a CRC-32 of the blobs
//   blobs    little-endian float32 parameters, concatenated in manifest order
// Files are written to a temporary name and renamed into place, so a reader
// never observes a partial archive.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <string>
#include <vector>

#include "synthmix/config.hpp"
#include "synthmix/dataio.hpp"
#include "synthmix/layers.hpp"

namespace synthmix {

inline constexpr char kCheckpointMagic[8] = {'S', 'M', 'X', 'C', 'K', 'P', 'T', '\0'};
inline constexpr int kCheckpointFormat = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  long iteration = 0;
  ModelConfig model;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
};

inline std::string model_config_hash(const ModelConfig& m) {
  const std::string s = to_json(m).dump();
  return hex32(crc32_of(s.data(), s.size()));
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamList<T>& params, const ModelConfig& model,
                     long iteration, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> blob;
  for (const auto& p : params) {
    const auto& v = p.var.value();
    const Shape s = v.shape();
    tensors.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", blob.size()}, {"count", v.size()}});
    for (const T x : v.vec()) blob.push_back(static_cast<float>(x));
  }
  const nlohmann::json manifest = {{"format", kCheckpointFormat},
                                   {"iteration", iteration},
                                   {"model_config", to_json(model)},
                                   {"config_hash", model_config_hash(model)},
                                   {"tensors", tensors},
                                   {"blob_crc32", hex32(crc32_of(blob.data(), blob.size() * sizeof(float)))},
                                   {"extra", extra}};
  const std::string mtext = manifest.dump();
  const std::uint64_t mlen = mtext.size();

  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    detail::require<DataError>(static_cast<bool>(os), "cannot write checkpoint " + tmp.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    os.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
    os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    os.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
    os.flush();
    detail::require<DataError>(static_cast<bool>(os), "write failed for checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_bytes(path);
  detail::require<DataError>(bytes.size() >= 16 && std::memcmp(bytes.data(), kCheckpointMagic, 8) == 0,
                             path.string() + " is not a checkpoint archive");
  std::uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 8, sizeof mlen);
  detail::require<DataError>(16 + mlen <= bytes.size(), "truncated checkpoint manifest in " + path.string());
  Checkpoint ck;
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(mlen));
    detail::require<DataError>(m.at("format").get<int>() == kCheckpointFormat, "unsupported checkpoint format");
    ck.iteration = m.at("iteration").get<long>();
    ck.model = model_config_from_json(m.at("model_config"));
    ck.config_hash = m.at("config_hash").get<std::string>();
    ck.extra = m.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest in " + path.string() + ": " + e.what());
  }
  detail::require<CorruptionError>(ck.config_hash == model_config_hash(ck.model),
                                   "checkpoint config hash mismatch in " + path.string());
  const char* blob = bytes.data() + 16 + mlen;
  const std::size_t blob_bytes = bytes.size() - 16 - mlen;
  detail::require<CorruptionError>(hex32(crc32_of(blob, blob_bytes)) == m.at("blob_crc32").get<std::string>(),
                                   "checkpoint blob checksum mismatch in " + path.string());
  for (const auto& t : m.at("tensors")) {
    const auto sh = t.at("shape").get<std::vector<int>>();
    detail::require<DataError>(sh.size() == 4, "bad tensor shape in checkpoint");
    const Shape s{sh[0], sh[1], sh[2], sh[3]};
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = t.at("count").get<std::size_t>();
    detail::require<DataError>(count == s.size() && (offset + count) * sizeof(float) <= blob_bytes,
                               "tensor extent out of range in checkpoint");
    Tensor<float> v(s);
    std::memcpy(v.data(), blob + offset * sizeof(float), count * sizeof(float));
    ck.tensors.push_back({t.at("name").get<std::string>(), std::move(v)});
  }
  return ck;
}

/// Copies checkpoint tensors into `params`; names, order and shapes must match.
template <class T>
void restore_params(const ParamList<T>& params, const Checkpoint& ck) {
  detail::require<DataError>(params.size() == ck.tensors.size(),
                             "checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                                 std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto var = params[i].var;
    const auto& t = ck.tensors[i];
    detail::require<DataError>(params[i].name == t.name, "checkpoint tensor '" + t.name + "' where '" +
                                                             params[i].name + "' was expected");
    detail::require<DataError>(var.shape() == t.value.shape(),
                               "shape mismatch for '" + t.name + "': " + t.value.shape().str() + " vs " +
                                   var.shape().str());
    auto& dst = var.mutable_value();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(t.value[j]);
  }
}

/// Writes `<dir>/<prefix>_<iteration>.ckpt` and deletes all but the newest `keep`.
class CheckpointRotation {
 public:
  CheckpointRotation(std::filesystem::path dir, std::string prefix = "ckpt", int keep = 3)
      : dir_(std::move(dir)), prefix_(std::move(prefix)), keep_(keep) {
    detail::require<ConfigError>(keep_ >= 1, "must keep at least one checkpoint");
  }

  template <class T>
  std::filesystem::path save(const ParamList<T>& params, const ModelConfig& model, long iteration,
                             const nlohmann::json& extra = nlohmann::json::object()) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%08ld.ckpt", prefix_.c_str(), iteration);
    const auto path = dir_ / name;
    save_checkpoint(path, params, model, iteration, extra);
    prune();
    return path;
  }

  /// Rotated checkpoints currently on disk, oldest first.
  [[nodiscard]] std::vector<std::filesystem::path> list() const {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::exists(dir_)) return out;
    const std::regex re(prefix_ + "_[0-9]{8}\\.ckpt");
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      if (e.is_regular_file() && std::regex_match(e.path().filename().string(), re)) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  void prune() const {
    auto files = list();
    for (std::size_t i = 0; i + static_cast<std::size_t>(keep_) < files.size(); ++i) std::filesystem::remove(files[i]);
  }

  std::filesystem::path dir_;
  std::string prefix_;
  int keep_;
};

}  // namespace synthmix
