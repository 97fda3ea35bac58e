#pragma once

// Synthetic cross-modality benchmark. Every case is one randomized anatomy
// (a body ellipse holding two ellipse structures, warped by a smooth
// per-case deformation) rendered once per modality. The target modality
// inverts intensities, applies a gamma curve and uses a different texture,
// mimicking the appearance gap between CT and MR over shared anatomy.
//
// On-disk layout:
//   manifest.json
//   source/{train,test}/<id>.f32 .u8 .json
//   target/{train,test}/<id>.f32 .u8 .json
// Images are little-endian float32 rows, labels raw uint8, and the sidecar
// declares shape, dtype and intensity range. The manifest carries CRC-32
// checksums of every blob.

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <string>
#include <vector>

#include "synthmix/error.hpp"
#include "synthmix/mixer.hpp"
#include "synthmix/rng.hpp"
#include "synthmix/tensor.hpp"

namespace synthmix {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

struct ModalityParams {
  bool invert = false;
  double gamma = 1.0;
  double noise_sigma = 0.03;
  double texture_freq = 6.0;   // cycles across the image
  double texture_amp = 0.06;
};

struct ToyDatasetSpec {
  int n_train = 200;  // per domain
  int n_test = 40;    // per domain; test cases are shared anatomy across domains
  int image_side = 128;
  int num_classes = 3;
  ModalityParams source{false, 1.0, 0.03, 6.0, 0.06};
  ModalityParams target{true, 0.7, 0.05, 15.0, 0.10};
  std::uint64_t seed = 0;

  void validate() const {
    detail::require<ConfigError>(n_train > 0 && n_test > 0, "dataset counts must be positive");
    detail::require<ConfigError>(image_side >= 16, "image side must be at least 16");
    detail::require<ConfigError>(num_classes >= 2 && num_classes <= 3,
                                 "toy anatomy supports 2 or 3 classes (background + up to 2 structures)");
    for (const auto* m : {&source, &target}) {
      detail::require<ConfigError>(m->gamma > 0.0 && m->noise_sigma >= 0.0 && m->texture_freq >= 0.0 &&
                                       m->texture_amp >= 0.0,
                                   "invalid modality parameters");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModalityParams& m) {
  j = {{"invert", m.invert},
       {"gamma", m.gamma},
       {"noise_sigma", m.noise_sigma},
       {"texture_freq", m.texture_freq},
       {"texture_amp", m.texture_amp}};
}

namespace detail {

/// Copies known keys from `j` into fields; throws ConfigError on any other key.
class StrictReader {
 public:
  StrictReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    require<ConfigError>(j.is_object(), where_ + ": expected a JSON object");
  }

  template <class V>
  StrictReader& opt(const char* key, V& out) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<V>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  template <class V>
  StrictReader& req(const char* key, V& out) {
    require<ConfigError>(j_.contains(key), where_ + ": missing required key '" + key + "'");
    return opt(key, out);
  }

  /// Calls `f(value)` for a nested object, only when the key is present.
  template <class F>
  StrictReader& sub(const char* key, F&& f) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) f(*it);
    return *this;
  }

  void done() const {
    for (const auto& [k, v] : j_.items()) {
      require<ConfigError>(std::find(seen_.begin(), seen_.end(), k) != seen_.end(),
                           where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace detail

inline ModalityParams modality_from_json(const nlohmann::json& j, const std::string& where) {
  ModalityParams m;
  detail::StrictReader r(j, where);
  r.opt("invert", m.invert)
      .opt("gamma", m.gamma)
      .opt("noise_sigma", m.noise_sigma)
      .opt("texture_freq", m.texture_freq)
      .opt("texture_amp", m.texture_amp)
      .done();
  return m;
}

inline nlohmann::json to_json(const ToyDatasetSpec& s) {
  return {{"n_train", s.n_train},         {"n_test", s.n_test}, {"image_side", s.image_side},
          {"num_classes", s.num_classes}, {"source", s.source}, {"target", s.target},
          {"seed", s.seed}};
}

inline ToyDatasetSpec toy_spec_from_json(const nlohmann::json& j) {
  ToyDatasetSpec s;
  detail::StrictReader r(j, "dataset spec");
  r.opt("n_train", s.n_train)
      .opt("n_test", s.n_test)
      .opt("image_side", s.image_side)
      .opt("num_classes", s.num_classes)
      .sub("source", [&](const nlohmann::json& v) { s.source = modality_from_json(v, "source"); })
      .sub("target", [&](const nlohmann::json& v) { s.target = modality_from_json(v, "target"); })
      .opt("seed", s.seed)
      .done();
  s.validate();
  return s;
}

enum class Split { Train, Test };

inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

// ---------------------------------------------------------------------------
// Rendering

/// Tissue values before any modality transform, in [0,1].
struct Tissue {
  static constexpr float kAir = 0.0f;
  static constexpr float kBody = 0.45f;
  static constexpr float kStructure1 = 0.85f;
  static constexpr float kStructure2 = 0.65f;
};

struct Anatomy {
  Tensor<float> tissue;   // [1,1,side,side]
  LabelMap labels;        // [1,1,side,side]
};

namespace detail {

struct Ellipse {
  double cy, cx, ry, rx, angle;

  [[nodiscard]] bool contains(double y, double x) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = y - cy, dx = x - cx;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return u * u + v * v <= 1.0;
  }
};

inline double uniform(CounterRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); }

/// Standard normal via Box-Muller on two counter draws.
inline double normal(CounterRng& rng) {
  const double u1 = std::max(rng.uniform01(), 1e-300);
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Case anatomy; a pure function of (seed, case index). Coordinates are in
/// units of the image side so the layout is resolution independent.
inline Anatomy render_anatomy(const ToyDatasetSpec& spec, int case_index) {
  CounterRng rng = CounterRng(spec.seed, streams::kData).split(static_cast<std::uint64_t>(case_index)).split(0);
  using detail::uniform;
  const detail::Ellipse body{uniform(rng, 0.45, 0.55), uniform(rng, 0.45, 0.55), uniform(rng, 0.30, 0.40),
                             uniform(rng, 0.33, 0.43), uniform(rng, -0.3, 0.3)};
  // Structures sit on either side of the body centre.
  const double off = uniform(rng, 0.08, 0.14);
  const double tilt = uniform(rng, -0.5, 0.5);
  const detail::Ellipse s1{body.cy + off * std::sin(tilt) + uniform(rng, -0.03, 0.03),
                           body.cx - off * std::cos(tilt) - uniform(rng, 0.0, 0.04), uniform(rng, 0.09, 0.15),
                           uniform(rng, 0.07, 0.12), uniform(rng, -1.0, 1.0)};
  const detail::Ellipse s2{body.cy - off * std::sin(tilt) + uniform(rng, -0.03, 0.03),
                           body.cx + off * std::cos(tilt) + uniform(rng, 0.0, 0.04), uniform(rng, 0.06, 0.11),
                           uniform(rng, 0.05, 0.10), uniform(rng, -1.0, 1.0)};
  // Smooth sinusoidal displacement field.
  const double amp_y = uniform(rng, 0.0, 0.025), amp_x = uniform(rng, 0.0, 0.025);
  const double fy = uniform(rng, 1.0, 3.0), fx = uniform(rng, 1.0, 3.0);
  const double py = uniform(rng, 0.0, 2 * std::numbers::pi), px = uniform(rng, 0.0, 2 * std::numbers::pi);

  const int n = spec.image_side;
  Anatomy a{Tensor<float>::image(n, n), LabelMap({1, 1, n, n})};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double y0 = (i + 0.5) / n, x0 = (j + 0.5) / n;
      const double y = y0 + amp_y * std::sin(2 * std::numbers::pi * fx * x0 + px);
      const double x = x0 + amp_x * std::sin(2 * std::numbers::pi * fy * y0 + py);
      float t = Tissue::kAir;
      std::uint8_t lab = 0;
      if (body.contains(y, x)) t = Tissue::kBody;
      if (spec.num_classes >= 2 && s1.contains(y, x)) {
        t = Tissue::kStructure1;
        lab = 1;
      }
      if (spec.num_classes >= 3 && s2.contains(y, x)) {
        t = Tissue::kStructure2;
        lab = 2;
      }
      a.tissue(i, j) = t;
      a.labels(i, j) = lab;
    }
  }
  return a;
}

/// Renders an anatomy in one modality: optional inversion, gamma, texture on
/// tissue, Gaussian noise, then a per-image linear map onto [-1,1].
inline Tensor<float> render_modality(const Anatomy& a, const ModalityParams& m, CounterRng rng) {
  const int n = a.tissue.shape().h;
  const double phase_y = detail::uniform(rng, 0.0, 2 * std::numbers::pi);
  const double phase_x = detail::uniform(rng, 0.0, 2 * std::numbers::pi);
  const double theta = detail::uniform(rng, 0.0, std::numbers::pi);
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double t = a.tissue(i, j);
      if (m.invert) t = 1.0 - t;
      t = std::pow(t, m.gamma);
      if (a.tissue(i, j) != Tissue::kAir) {
        const double u = (std::cos(theta) * j + std::sin(theta) * i) / n;
        const double w = (-std::sin(theta) * j + std::cos(theta) * i) / n;
        t += m.texture_amp * std::sin(2 * std::numbers::pi * m.texture_freq * u + phase_x) *
             std::sin(2 * std::numbers::pi * m.texture_freq * w + phase_y);
      }
      t += m.noise_sigma * detail::normal(rng);
      v[static_cast<std::size_t>(i) * n + j] = t;
    }
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a0 = *lo, range = std::max(*hi - *lo, 1e-12);
  Tensor<float> img = Tensor<float>::image(n, n);
  for (std::size_t i = 0; i < v.size(); ++i) img[i] = static_cast<float>(2.0 * (v[i] - a0) / range - 1.0);
  return img;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

namespace detail {

inline void write_bytes(const std::filesystem::path& p, const void* data, std::size_t n) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  require<DataError>(static_cast<bool>(os), "cannot open " + p.string() + " for writing");
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  require<DataError>(static_cast<bool>(os), "write failed: " + p.string());
}

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  require<DataError>(static_cast<bool>(is), "cannot open " + p.string());
  return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline void write_text(const std::filesystem::path& p, const std::string& s) { write_bytes(p, s.data(), s.size()); }

}  // namespace detail

struct SampleRecord {
  std::string id;
  Domain domain = Domain::Source;
  Split split = Split::Train;
  int case_index = 0;
  std::string image_path;  // relative to the dataset root
  std::string label_path;
  std::string sidecar_path;
  std::string image_crc32;
  std::string label_crc32;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;
  int version = kVersion;
  ToyDatasetSpec spec;
  std::vector<SampleRecord> samples;
  std::filesystem::path root;  // directory the manifest was loaded from

  [[nodiscard]] const SampleRecord& find(const std::string& id) const {
    for (const auto& s : samples) {
      if (s.id == id) return s;
    }
    throw DataError("sample '" + id + "' not in manifest");
  }

  [[nodiscard]] std::vector<const SampleRecord*> select(Domain d, Split s) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : samples) {
      if (r.domain == d && r.split == s) out.push_back(&r);
    }
    return out;
  }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"id", s.id},
                       {"domain", to_string(s.domain)},
                       {"split", to_string(s.split)},
                       {"case", s.case_index},
                       {"image", s.image_path},
                       {"label", s.label_path},
                       {"sidecar", s.sidecar_path},
                       {"image_crc32", s.image_crc32},
                       {"label_crc32", s.label_crc32}});
  }
  return {{"version", m.version}, {"spec", to_json(m.spec)}, {"samples", samples}};
}

inline DatasetManifest load_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  detail::require<DataError>(std::filesystem::exists(path), "no manifest.json in " + root.string());
  nlohmann::json j;
  try {
    const auto bytes = detail::read_bytes(path);
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    m.version = j.at("version").get<int>();
    detail::require<DataError>(m.version == DatasetManifest::kVersion,
                               "unsupported manifest version " + std::to_string(m.version));
    m.spec = toy_spec_from_json(j.at("spec"));
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.id = s.at("id").get<std::string>();
      const auto dom = s.at("domain").get<std::string>();
      detail::require<DataError>(dom == "source" || dom == "target", "bad domain '" + dom + "'");
      r.domain = dom == "source" ? Domain::Source : Domain::Target;
      r.split = s.at("split").get<std::string>() == "train" ? Split::Train : Split::Test;
      r.case_index = s.at("case").get<int>();
      r.image_path = s.at("image").get<std::string>();
      r.label_path = s.at("label").get<std::string>();
      r.sidecar_path = s.at("sidecar").get<std::string>();
      r.image_crc32 = s.at("image_crc32").get<std::string>();
      r.label_crc32 = s.at("label_crc32").get<std::string>();
      m.samples.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("manifest spec: ") + e.what());
  }
  return m;
}

/// Case indices: source train [0, n), target train [n, 2n), test [2n, 2n + n_test)
/// rendered in both modalities. Disjoint train cases make training unpaired.
inline int case_index_for(const ToyDatasetSpec& spec, Domain d, Split s, int i) {
  if (s == Split::Test) return 2 * spec.n_train + i;
  return d == Domain::Source ? i : spec.n_train + i;
}

/// Writes the dataset under `out`; the result is a pure function of `spec`.
inline DatasetManifest generate_toy_dataset(const ToyDatasetSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out, ec);
  detail::require<DataError>(!ec && fs::is_directory(out), "cannot create dataset directory " + out.string());
  DatasetManifest m;
  m.spec = spec;
  m.root = out;
  const int n = spec.image_side;
  for (Domain d : {Domain::Source, Domain::Target}) {
    const ModalityParams& mod = d == Domain::Source ? spec.source : spec.target;
    for (Split s : {Split::Train, Split::Test}) {
      const fs::path rel = fs::path(to_string(d)) / to_string(s);
      fs::create_directories(out / rel, ec);
      detail::require<DataError>(!ec, "cannot create " + (out / rel).string());
      const int count = s == Split::Train ? spec.n_train : spec.n_test;
      for (int i = 0; i < count; ++i) {
        const int ci = case_index_for(spec, d, s, i);
        const Anatomy a = render_anatomy(spec, ci);
        const std::uint64_t stream = d == Domain::Source ? 1 : 2;
        const Tensor<float> img = render_modality(
            a, mod, CounterRng(spec.seed, streams::kData).split(static_cast<std::uint64_t>(ci)).split(stream));
        char name[32];
        std::snprintf(name, sizeof name, "%s_%s_%04d", d == Domain::Source ? "src" : "tgt", to_string(s), i);
        SampleRecord r;
        r.id = name;
        r.domain = d;
        r.split = s;
        r.case_index = ci;
        r.image_path = (rel / (std::string(name) + ".f32")).generic_string();
        r.label_path = (rel / (std::string(name) + ".u8")).generic_string();
        r.sidecar_path = (rel / (std::string(name) + ".json")).generic_string();
        const std::size_t img_bytes = img.size() * sizeof(float);
        detail::write_bytes(out / r.image_path, img.data(), img_bytes);
        detail::write_bytes(out / r.label_path, a.labels.data(), a.labels.size());
        r.image_crc32 = hex32(crc32_of(img.data(), img_bytes));
        r.label_crc32 = hex32(crc32_of(a.labels.data(), a.labels.size()));
        const nlohmann::json side = {{"shape", {1, 1, n, n}},
                                     {"dtype", "float32"},
                                     {"byte_order", "little"},
                                     {"intensity_range", {-1.0, 1.0}},
                                     {"label_dtype", "uint8"},
                                     {"num_classes", spec.num_classes}};
        detail::write_text(out / r.sidecar_path, side.dump(2) + "\n");
        m.samples.push_back(std::move(r));
      }
    }
  }
  detail::write_text(out / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

/// Reads one sample and verifies its checksums. Only source training samples
/// are flagged as supervised; target training samples never expose labels.
inline Sample load_sample(const DatasetManifest& m, const std::string& id) {
  const SampleRecord& r = m.find(id);
  const int n = m.spec.image_side;
  const std::size_t px = static_cast<std::size_t>(n) * n;
  const auto img_bytes = detail::read_bytes(m.root / r.image_path);
  detail::require<DataError>(img_bytes.size() == px * sizeof(float),
                             "image blob for '" + id + "' has " + std::to_string(img_bytes.size()) + " bytes");
  detail::require<CorruptionError>(hex32(crc32_of(img_bytes.data(), img_bytes.size())) == r.image_crc32,
                                   "checksum mismatch in image blob of '" + id + "'");
  Sample s;
  s.id = r.id;
  s.domain = r.domain;
  s.image = Tensor<float>::image(n, n);
  std::memcpy(s.image.data(), img_bytes.data(), img_bytes.size());
  const bool labels_visible = !(r.domain == Domain::Target && r.split == Split::Train);
  if (labels_visible) {
    const auto lab_bytes = detail::read_bytes(m.root / r.label_path);
    detail::require<DataError>(lab_bytes.size() == px, "label blob for '" + id + "' has wrong size");
    detail::require<CorruptionError>(hex32(crc32_of(lab_bytes.data(), lab_bytes.size())) == r.label_crc32,
                                     "checksum mismatch in label blob of '" + id + "'");
    LabelMap y({1, 1, n, n});
    std::memcpy(y.data(), lab_bytes.data(), px);
    for (auto v : y.vec()) {
      if (v >= m.spec.num_classes) throw CorruptionError("label value out of range in '" + id + "'");
    }
    s.seg_label = std::move(y);
  }
  s.supervised = r.domain == Domain::Source && r.split == Split::Train;
  return s;
}

/// All samples of one domain and split, in manifest order.
inline std::vector<Sample> load_split(const DatasetManifest& m, Domain d, Split s) {
  std::vector<Sample> out;
  for (const auto* r : m.select(d, s)) out.push_back(load_sample(m, r->id));
  return out;
}

}  // namespace synthmix
