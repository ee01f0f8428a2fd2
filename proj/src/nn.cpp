#include "ov2vss/nn.hpp"

#include <algorithm>
#include <cmath>

namespace ov::inline OV2VSS_ABI {

namespace {
std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = splitmix(base);
  s = splitmix(s ^ a);
  s = splitmix(s ^ b);
  return splitmix(s ^ c);
}

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(engine_);
}

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> d(mean, stddev);
  return d(engine_);
}

int Rng::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(engine_);
}

Tensor ParameterStore::add(const std::string& name, int rows, int cols, Init init, Rng& rng) {
  std::vector<Real> v(std::size_t(rows) * cols, Real(0));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(v.begin(), v.end(), Real(1));
      break;
    case Init::kHe: {
      const double sd = std::sqrt(2.0 / std::max(1, rows));
      for (auto& x : v) x = Real(rng.normal(0.0, sd));
      break;
    }
    case Init::kXavier: {
      const double sd = std::sqrt(2.0 / std::max(1, rows + cols));
      for (auto& x : v) x = Real(rng.normal(0.0, sd));
      break;
    }
    case Init::kSmall:
      for (auto& x : v) x = Real(rng.normal(0.0, 0.02));
      break;
    case Init::kIdentity:
      for (int i = 0; i < std::min(rows, cols); ++i) v[std::size_t(i) * cols + i] = Real(1);
      break;
  }
  return add_values(name, std::move(v), rows, cols);
}

Tensor ParameterStore::add_values(const std::string& name, std::vector<Real> values, int rows,
                                  int cols) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor t = Tensor::from(std::move(values), rows, cols, true);
  params_.push_back({name, t});
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("unknown parameter: " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
                      bool with_bias, Init init) {
  Linear l;
  l.weight = store.add(name + ".weight", in, out, init, rng);
  if (with_bias) l.bias = store.add(name + ".bias", 1, out, Init::kZeros, rng);
  return l;
}

Tensor Conv::operator()(const Tensor& x, Grid in) const {
  return conv2d(x, in, weight, bias, kernel, stride, pad);
}

Conv Conv::create(ParameterStore& store, const std::string& name, int in, int out, int kernel,
                  int stride, Rng& rng, bool with_bias, Init init) {
  Conv c;
  c.kernel = kernel;
  c.stride = stride;
  c.pad = kernel / 2;
  c.weight = store.add(name + ".weight", kernel * kernel * in, out, init, rng);
  if (with_bias) c.bias = store.add(name + ".bias", 1, out, Init::kZeros, rng);
  return c;
}

Tensor MultiHeadAttention::operator()(const Tensor& query_in, const Tensor& kv_in) const {
  const Tensor qa = q(query_in);
  const Tensor ka = k(kv_in);
  const Tensor va = v(kv_in);
  const int dim = qa.cols();
  if (dim % heads != 0) throw ShapeError("attention width is not divisible by the head count");
  const int hd = dim / heads;
  const Real inv = Real(1) / std::sqrt(Real(hd));
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? qa : slice_cols(qa, h * hd, (h + 1) * hd);
    Tensor kh = heads == 1 ? ka : slice_cols(ka, h * hd, (h + 1) * hd);
    Tensor vh = heads == 1 ? va : slice_cols(va, h * hd, (h + 1) * hd);
    Tensor att = softmax_rows(scale(matmul_nt(qh, kh), inv));
    parts.push_back(matmul(att, vh));
  }
  return out(heads == 1 ? parts.front() : concat_cols(parts));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name,
                                              int dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError(name + ": width " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention m;
  m.heads = heads;
  m.q = Linear::create(store, name + ".q", dim, dim, rng);
  m.k = Linear::create(store, name + ".k", dim, dim, rng);
  m.v = Linear::create(store, name + ".v", dim, dim, rng);
  m.out = Linear::create(store, name + ".out", dim, dim, rng, false);
  return m;
}

}  // namespace ov::inline OV2VSS_ABI
