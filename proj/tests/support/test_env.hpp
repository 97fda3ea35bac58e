#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "synthmix/config.hpp"
#include "synthmix/dataio.hpp"

namespace testenv {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("synthmix_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline synthmix::ToyDatasetSpec small_spec(int side = 32, int n_train = 6, int n_test = 3) {
  synthmix::ToyDatasetSpec s;
  s.image_side = side;
  s.n_train = n_train;
  s.n_test = n_test;
  return s;
}

/// Run config sized for unit tests: 32 px images, a few iterations.
inline synthmix::RunConfig small_run(const std::filesystem::path& dataset, long iterations = 3) {
  synthmix::RunConfig c;
  c.dataset = dataset;
  c.iterations = iterations;
  c.eval_interval = iterations > 0 ? iterations : 1;
  c.mask.k = 4;
  c.model_overrides = {{"inspector_depth", 3}};
  return c;
}

}  // namespace testenv
