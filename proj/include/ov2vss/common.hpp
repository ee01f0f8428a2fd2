#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

// The library is compiled twice: a 32-bit build used for training and the
// CLI, and a 64-bit build used for finite-difference gradient checks. Each
// build lives in its own inline namespace so both can be linked into one
// binary without symbol clashes.
#if defined(OV2VSS_REAL_FLOAT)
#define OV2VSS_ABI f32
#else
#define OV2VSS_ABI f64
#endif

namespace ov::inline OV2VSS_ABI {

#if defined(OV2VSS_REAL_FLOAT)
using Real = float;
#else
using Real = double;
#endif

inline constexpr int kDefaultIgnoreIndex = 255;

// Base error for everything thrown by the library. `kind` is a short
// machine-readable tag ("shape", "io", "config", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

}  // namespace ov::inline OV2VSS_ABI
