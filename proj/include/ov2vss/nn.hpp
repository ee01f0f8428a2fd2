#pragma once

// Parameter ownership, initialisation and a few reusable layers.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ov2vss/tensor.hpp"

namespace ov::inline OV2VSS_ABI {

// Mixes several integers into one well-spread 64-bit seed (splitmix64 chain).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

enum class Init { kZeros, kOnes, kHe, kXavier, kSmall, kIdentity };

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Owns every learnable tensor of a model in registration order. The order is
// the checkpoint order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, int rows, int cols, Init init, Rng& rng);
  Tensor add_values(const std::string& name, std::vector<Real> values, int rows, int cols);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<NamedParameter>& all() const { return params_; }
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<NamedParameter> params_;
};

// y = x W + b
struct Linear {
  Tensor weight;
  Tensor bias;  // may be undefined
  Tensor operator()(const Tensor& x) const;
  static Linear create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool with_bias = true, Init init = Init::kXavier);
};

struct Conv {
  Tensor weight;
  Tensor bias;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  Tensor operator()(const Tensor& x, Grid in) const;
  Grid output_grid(Grid in) const { return conv_output_grid(in, kernel, stride, pad); }
  static Conv create(ParameterStore& store, const std::string& name, int in, int out, int kernel,
                     int stride, Rng& rng, bool with_bias = true, Init init = Init::kHe);
};

// Multi-head scaled dot-product attention, queries from `query_in`, keys and
// values from `kv_in`. The output projection has no bias, so zero values give
// a zero output.
struct MultiHeadAttention {
  Linear q;
  Linear k;
  Linear v;
  Linear out;
  int heads = 1;
  Tensor operator()(const Tensor& query_in, const Tensor& kv_in) const;
  static MultiHeadAttention create(ParameterStore& store, const std::string& name, int dim,
                                   int heads, Rng& rng);
};

}  // namespace ov::inline OV2VSS_ABI
