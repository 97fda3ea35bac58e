#pragma once

#include <stdexcept>
#include <string>

namespace synthmix {

/// Invalid configuration: mask spec, network config, run config, CLI flags.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/image shapes that do not line up.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Values outside their admissible set (e.g. non-binary targets).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training-protocol violations: missing synthetic inputs, label leakage.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset and checkpoint I/O failures.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checksum mismatch on a stored blob.
class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};

/// A loss became non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class E>
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw E(msg);
}

}  // namespace detail
}  // namespace synthmix
