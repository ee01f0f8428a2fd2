#include <doctest.h>

#include <cmath>

#include "ov2vss/rfe.hpp"
#include "test_util.hpp"

using namespace ov;
using testutil::gradient_check;
using testutil::probe_loss;
using testutil::random_tensor;
using testutil::to_double;

namespace {

Linear random_linear(int in, int out, std::mt19937_64& g, bool grad = false) {
  return {random_tensor(in, out, g, -1, 1, grad), random_tensor(1, out, g, -1, 1, grad)};
}

MultiHeadAttention random_mha(int dim, int heads, std::mt19937_64& g, bool grad = false) {
  MultiHeadAttention m;
  m.heads = heads;
  m.q = random_linear(dim, dim, g, grad);
  m.k = random_linear(dim, dim, g, grad);
  m.v = random_linear(dim, dim, g, grad);
  m.out = Linear{random_tensor(dim, dim, g, -1, 1, grad), Tensor()};
  return m;
}

std::vector<double> affine(const std::vector<double>& x, int n, const Linear& l) {
  const int in = l.weight.rows(), out = l.weight.cols();
  std::vector<double> y(std::size_t(n) * out);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out; ++o) {
      double s = l.bias.defined() ? double(l.bias.at(0, o)) : 0.0;
      for (int t = 0; t < in; ++t) s += x[std::size_t(i) * in + t] * l.weight.at(t, o);
      y[std::size_t(i) * out + o] = s;
    }
  return y;
}

// Per-head scaled dot-product attention, computed head by head in double.
std::vector<double> mha_oracle(const Tensor& qin, const Tensor& kvin, const MultiHeadAttention& m) {
  const int n = qin.rows(), r = kvin.rows(), dim = m.q.weight.cols(), hd = dim / m.heads;
  const auto q = affine(to_double(qin), n, m.q), k = affine(to_double(kvin), r, m.k), v = affine(to_double(kvin), r, m.v);
  std::vector<double> cat(std::size_t(n) * dim, 0.0);
  for (int h = 0; h < m.heads; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(r));
      double mx = -INFINITY;
      for (int j = 0; j < r; ++j) {
        double d = 0;
        for (int t = 0; t < hd; ++t) d += q[std::size_t(i) * dim + h * hd + t] * k[std::size_t(j) * dim + h * hd + t];
        s[std::size_t(j)] = d / std::sqrt(double(hd));
        mx = std::max(mx, s[std::size_t(j)]);
      }
      double z = 0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (int j = 0; j < r; ++j)
        for (int t = 0; t < hd; ++t)
          cat[std::size_t(i) * dim + h * hd + t] += s[std::size_t(j)] / z * v[std::size_t(j) * dim + h * hd + t];
    }
  return affine(cat, n, m.out);
}

FeaturePyramid random_pyramid(const std::vector<int>& channels, int size, std::mt19937_64& g) {
  FeaturePyramid p;
  for (int c : channels) {
    p.levels.push_back(random_tensor(size * size, c, g));
    p.grids.push_back(Grid{1, size, size});
    size /= 2;
  }
  return p;
}

}  // namespace

TEST_CASE("random-frame pyramid collapse") {
  std::mt19937_64 g(1);
  const FeaturePyramid p = random_pyramid({2, 3, 1}, 8, g);
  Linear proj{random_tensor(4, 5, g), random_tensor(1, 5, g)};
  Grid grid;
  const Tensor d = collapse_random_pyramid(p, 1, proj, &grid);
  CHECK(grid.h == 4);
  CHECK(d.rows() == 16);
  CHECK(d.cols() == 5);
  const Tensor cat = concat_cols({p.levels[1], resample_bilinear(p.levels[2], p.grids[2], 4, 4)});
  CHECK(testutil::max_abs_diff(to_double(d), affine(to_double(cat), 16, proj)) < 1e-12);
  CHECK_THROWS_AS(collapse_random_pyramid(p, 3, proj), ShapeError);
}

TEST_CASE("region pooling") {
  std::mt19937_64 g(2);
  const Tensor d = random_tensor(12, 4, g);
  const Linear logits = random_linear(4, 3, g);
  const RegionContext ctx = region_pool(d, logits);
  REQUIRE(ctx.regions.rows() == 3);
  REQUIRE(ctx.pixel_weights.cols() == 12);
  const auto raw = affine(to_double(d), 12, logits);
  for (int k = 0; k < 3; ++k) {
    double mx = -INFINITY, z = 0, sum = 0;
    for (int i = 0; i < 12; ++i) mx = std::max(mx, raw[std::size_t(i) * 3 + k]);
    for (int i = 0; i < 12; ++i) z += std::exp(raw[std::size_t(i) * 3 + k] - mx);
    for (int i = 0; i < 12; ++i) {
      const double w = std::exp(raw[std::size_t(i) * 3 + k] - mx) / z;
      CHECK(ctx.pixel_weights.at(k, i) == doctest::Approx(w).epsilon(1e-12));
      sum += ctx.pixel_weights.at(k, i);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (int c = 0; c < 4; ++c) {
      double m = 0;
      for (int i = 0; i < 12; ++i) m += ctx.pixel_weights.at(k, i) * d.at(i, c);
      CHECK(ctx.regions.at(k, c) == doctest::Approx(m).epsilon(1e-12));
    }
  }
  SUBCASE("regions do not depend on the pixel order") {
    std::vector<int> perm(12);
    for (int i = 0; i < 12; ++i) perm[std::size_t(i)] = (i * 5) % 12;
    const RegionContext shuffled = region_pool(gather_rows(d, perm), logits);
    CHECK(testutil::max_abs_diff(to_double(shuffled.regions), to_double(ctx.regions)) < 1e-12);
  }
}

TEST_CASE("target enhancement by multi-head cross-attention") {
  std::mt19937_64 g(3);
  const Tensor o = random_tensor(10, 8, g), regions = random_tensor(3, 8, g);
  for (int heads : {1, 2, 4}) {
    const MultiHeadAttention m = random_mha(8, heads, g);
    const auto ref = mha_oracle(o, regions, m);
    CHECK(testutil::max_abs_diff(to_double(enhance_target(o, regions, m, false)), ref) < 1e-12);
    auto with_res = ref;
    for (std::size_t i = 0; i < ref.size(); ++i) with_res[i] += o.data()[i];
    CHECK(testutil::max_abs_diff(to_double(enhance_target(o, regions, m, true)), with_res) < 1e-12);
  }
  CHECK_THROWS_AS(enhance_target(o, random_tensor(3, 6, g), random_mha(8, 2, g), true), ShapeError);
  ParameterStore store;
  Rng rng(4);
  CHECK_THROWS_AS(MultiHeadAttention::create(store, "x", 6, 4, rng), ConfigError);
}

TEST_CASE("zero regions leave the residual path untouched") {
  std::mt19937_64 g(5);
  const Tensor o = random_tensor(6, 4, g);
  MultiHeadAttention m = random_mha(4, 2, g);
  m.v.bias = Tensor();
  const Tensor out = enhance_target(o, Tensor::zeros(2, 4), m, true);
  CHECK(to_double(out) == to_double(o));
}

TEST_CASE("enhancement gradients") {
  std::mt19937_64 g(6);
  Tensor o = random_tensor(4, 4, g, -1, 1, true), d = random_tensor(6, 4, g, -1, 1, true);
  const Linear logits = random_linear(4, 2, g, true);
  const MultiHeadAttention m = random_mha(4, 2, g, true);
  auto loss = [&] { return probe_loss(enhance_target(o, region_pool(d, logits).regions, m, true)); };
  CHECK(gradient_check(loss, {o, d, logits.weight, m.q.weight, m.k.bias, m.v.weight, m.out.weight}) < 1e-4);
  // A per-region bias shifts every pixel's logit equally; the pixel softmax
  // cancels it.
  for (Real v : logits.bias.grad()) CHECK(std::abs(double(v)) < 1e-12);
}

TEST_CASE("module wiring") {
  ParameterStore store;
  Rng rng(7);
  RfeConfig cfg;
  cfg.heads = 2;
  RandomFrameEnhancement rfe(cfg, {2, 3, 4}, 6, 5, store, rng);
  CHECK(rfe.regions() == 5);
  CHECK(store.get("rfe.collapse.weight").rows() == 7);
  CHECK(store.get("rfe.regions.weight").cols() == 5);
  std::mt19937_64 g(8);
  const FeaturePyramid p = random_pyramid({2, 3, 4}, 8, g);
  const Tensor o = random_tensor(64, 6, g);
  const Tensor out = rfe(o, p);
  CHECK(out.rows() == 64);
  CHECK(out.cols() == 6);
}
