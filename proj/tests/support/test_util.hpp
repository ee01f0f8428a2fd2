#pragma once

// Shared helpers for the unit and acceptance tests: random tensors, a
// central-difference gradient checker and temporary directories. Compiled in
// whichever precision the including test uses.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ov2vss/tensor.hpp"

namespace testutil {
inline namespace OV2VSS_ABI {

using ov::Real;
using ov::Tensor;

inline Tensor random_tensor(int rows, int cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(std::size_t(rows) * cols);
  for (auto& x : v) x = Real(d(rng));
  return Tensor::from(std::move(v), rows, cols, requires_grad);
}

inline std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Relative error of one gradient entry; the denominator floor keeps entries
// that are zero in both computations from dividing by zero.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Largest relative error between analytic gradients (from backward()) and
// central differences with step h, over every entry of every input.
inline double gradient_check(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(t.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) analytic.back()[i] = double(g[i]);
  }
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto v = inputs[k].mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Real saved = v[i];
      v[i] = Real(double(saved) + h);
      const double up = double(loss().item());
      v[i] = Real(double(saved) - h);
      const double down = double(loss().item());
      v[i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

// 1-D linear interpolation weight of source index i for output o
// (pixel-centre alignment, edge-clamped).
inline double interp_weight(int in, int out, int o, int i) {
  double src = (o + 0.5) * double(in) / out - 0.5;
  if (src < 0) src = 0;
  const int i0 = std::min(int(std::floor(src)), in - 1);
  const int i1 = std::min(i0 + 1, in - 1);
  const double l = src - i0;
  double w = 0;
  if (i == i0) w += 1 - l;
  if (i == i1) w += l;
  return w;
}

// Weighted sum with fixed random weights: a scalar loss whose gradient
// reaches every output entry with a distinct coefficient.
inline Tensor probe_loss(const Tensor& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(y.rows(), y.cols(), rng);
  return ov::sum_all(ov::mul(y, w));
}

// Relative path -> file contents for every regular file below root.
inline std::map<std::string, std::string> read_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[std::filesystem::relative(e.path(), root).generic_string()] = ss.str();
  }
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ov2vss_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace OV2VSS_ABI
}  // namespace testutil
