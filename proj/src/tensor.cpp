#include "ov2vss/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace ov::inline OV2VSS_ABI {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;

Tensor make_result(int rows, int cols, std::vector<Real> value,
                   std::initializer_list<const Tensor*> parents) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const Tensor* p : parents) {
      if (p->defined() && p->requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor* p : parents) {
        if (p->defined()) node->parents.push_back(p->shared());
      }
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result(int rows, int cols, std::vector<Real> value,
                   const std::vector<Tensor>& parents) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      if (p.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor& p : parents) node->parents.push_back(p.shared());
    }
  }
  return Tensor(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

struct Tap {
  int i0;
  int i1;
  Real w0;
  Real w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double ratio = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = std::min(int(std::floor(src)), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    double l = src - i0;
    taps[o] = {i0, i1, Real(1.0 - l), Real(l)};
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return from(std::vector<Real>(std::size_t(rows) * cols, Real(0)), rows, cols, requires_grad);
}

Tensor Tensor::full(int rows, int cols, Real v, bool requires_grad) {
  return from(std::vector<Real>(std::size_t(rows) * cols, v), rows, cols, requires_grad);
}

Tensor Tensor::from(std::vector<Real> values, int rows, int cols, bool requires_grad) {
  if (values.size() != std::size_t(rows) * std::size_t(cols)) {
    throw ShapeError("Tensor::from: value count does not match shape");
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Real Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a non-scalar tensor");
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(node_->value, rows(), cols(), false); }

void Tensor::backward() const {
  if (size() != 1) throw ShapeError("backward() requires a scalar");
  if (!requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------- kernels

void gemm_nn(int m, int n, int k, const Real* __restrict a, const Real* __restrict b,
             Real* __restrict c, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    Real* __restrict ci = c + std::size_t(i) * n;
    if (!accumulate) std::fill(ci, ci + n, Real(0));
    const Real* ai = a + std::size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const Real av = ai[p];
      if (av == Real(0)) continue;
      const Real* __restrict bp = b + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate) {
  std::vector<Real> bt(std::size_t(k) * n);
  for (int j = 0; j < n; ++j) {
    for (int p = 0; p < k; ++p) bt[std::size_t(p) * n + j] = b[std::size_t(j) * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(int m, int n, int k, const Real* __restrict a, const Real* __restrict b,
             Real* __restrict c, bool accumulate) {
  if (!accumulate) std::fill(c, c + std::size_t(m) * n, Real(0));
  for (int p = 0; p < k; ++p) {
    const Real* ap = a + std::size_t(p) * m;
    const Real* __restrict bp = b + std::size_t(p) * n;
    for (int i = 0; i < m; ++i) {
      const Real av = ap[i];
      if (av == Real(0)) continue;
      Real* __restrict ci = c + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<Real> out(std::size_t(m) * n);
  gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  Tensor r = make_result(m, n, std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* bn = b.node();
    o->backward = [o, an, bn, m, n, k]() {
      if (an->requires_grad) gemm_nt(m, k, n, o->grad.data(), bn->value.data(), an->grad_buffer(), true);
      if (bn->requires_grad) gemm_tn(k, n, m, an->value.data(), o->grad.data(), bn->grad_buffer(), true);
    };
  }
  return r;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<Real> out(std::size_t(m) * n);
  gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  Tensor r = make_result(m, n, std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* bn = b.node();
    o->backward = [o, an, bn, m, n, k]() {
      if (an->requires_grad) gemm_nn(m, k, n, o->grad.data(), bn->value.data(), an->grad_buffer(), true);
      if (bn->requires_grad) gemm_tn(n, k, m, o->grad.data(), an->value.data(), bn->grad_buffer(), true);
    };
  }
  return r;
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<Real> out(std::size_t(m) * n, Real(0));
  constexpr int kBlock = 32;
  auto blocked = [](const Real* src, Real* dst, int m, int n) {
    for (int i0 = 0; i0 < m; i0 += kBlock) {
      for (int j0 = 0; j0 < n; j0 += kBlock) {
        const int i1 = std::min(i0 + kBlock, m), j1 = std::min(j0 + kBlock, n);
        for (int i = i0; i < i1; ++i) {
          for (int j = j0; j < j1; ++j) dst[std::size_t(j) * m + i] += src[std::size_t(i) * n + j];
        }
      }
    }
  };
  blocked(a.data().data(), out.data(), m, n);
  Tensor r = make_result(n, m, std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, m, n, blocked]() { blocked(o->grad.data(), an->grad_buffer(), n, m); };
  }
  return r;
}

Tensor reshape(const Tensor& a, int rows, int cols) {
  if (std::size_t(rows) * cols != a.size()) throw ShapeError("reshape: element count differs");
  Tensor r = make_result(rows, cols, std::vector<Real>(a.data().begin(), a.data().end()), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an]() {
      Real* g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
    };
  }
  return r;
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* bn = b.node();
    o->backward = [o, an, bn]() {
      for (Node* p : {an, bn}) {
        if (!p->requires_grad) continue;
        Real* g = p->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
      }
    };
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* bn = b.node();
    o->backward = [o, an, bn]() {
      if (an->requires_grad) {
        Real* g = an->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        Real* g = bn->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] -= o->grad[i];
      }
    };
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* bn = b.node();
    o->backward = [o, an, bn]() {
      if (an->requires_grad) {
        Real* g = an->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        Real* g = bn->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i] * an->value[i];
      }
    };
  }
  return r;
}

Tensor scale(const Tensor& a, Real s) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, s]() {
      Real* g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i] * s;
    };
  }
  return r;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  const int m = a.rows(), n = a.cols();
  std::vector<Real> out(a.size());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[std::size_t(i) * n + j] = a.data()[std::size_t(i) * n + j] + row.data()[j];
    }
  }
  Tensor r = make_result(m, n, std::move(out), {&a, &row});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* bn = row.node();
    o->backward = [o, an, bn, m, n]() {
      if (an->requires_grad) {
        Real* g = an->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        Real* g = bn->grad_buffer();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) g[j] += o->grad[std::size_t(i) * n + j];
        }
      }
    };
  }
  return r;
}

Tensor add_tiled(const Tensor& a, const Tensor& tile) {
  if (tile.cols() != a.cols() || tile.rows() == 0 || a.rows() % tile.rows() != 0) {
    throw ShapeError("add_tiled: tile does not divide input");
  }
  const std::size_t block = tile.size();
  const std::size_t blocks = a.size() / block;
  std::vector<Real> out(a.size());
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < block; ++i) out[b * block + i] = a.data()[b * block + i] + tile.data()[i];
  }
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a, &tile});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* tn = tile.node();
    o->backward = [o, an, tn, block, blocks]() {
      if (an->requires_grad) {
        Real* g = an->grad_buffer();
        for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
      }
      if (tn->requires_grad) {
        Real* g = tn->grad_buffer();
        for (std::size_t b = 0; b < blocks; ++b) {
          for (std::size_t i = 0; i < block; ++i) g[i] += o->grad[b * block + i];
        }
      }
    };
  }
  return r;
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: column shape mismatch");
  const int m = a.rows(), n = a.cols();
  std::vector<Real> out(a.size());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[std::size_t(i) * n + j] = a.data()[std::size_t(i) * n + j] * col.data()[i];
  }
  Tensor r = make_result(m, n, std::move(out), {&a, &col});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    Node* cn = col.node();
    o->backward = [o, an, cn, m, n]() {
      if (an->requires_grad) {
        Real* g = an->grad_buffer();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) g[std::size_t(i) * n + j] += o->grad[std::size_t(i) * n + j] * cn->value[i];
        }
      }
      if (cn->requires_grad) {
        Real* g = cn->grad_buffer();
        for (int i = 0; i < m; ++i) {
          Real s = 0;
          for (int j = 0; j < n; ++j) s += o->grad[std::size_t(i) * n + j] * an->value[std::size_t(i) * n + j];
          g[i] += s;
        }
      }
    };
  }
  return r;
}

Tensor relu(const Tensor& a) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > Real(0) ? a.data()[i] : Real(0);
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an]() {
      Real* g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (an->value[i] > Real(0)) g[i] += o->grad[i];
      }
    };
  }
  return r;
}

Tensor clamp(const Tensor& a, Real lo, Real hi) {
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.data()[i], lo, hi);
  Tensor r = make_result(a.rows(), a.cols(), std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, lo, hi]() {
      Real* g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (an->value[i] >= lo && an->value[i] <= hi) g[i] += o->grad[i];
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------- normalisers

Tensor softmax_rows(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<Real> out(a.size());
  for (int i = 0; i < m; ++i) {
    const Real* x = a.data().data() + std::size_t(i) * n;
    Real* y = out.data() + std::size_t(i) * n;
    Real mx = *std::max_element(x, x + n);
    Real s = 0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const Real inv = Real(1) / s;
    for (int j = 0; j < n; ++j) y[j] *= inv;
  }
  Tensor r = make_result(m, n, std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, m, n]() {
      Real* g = an->grad_buffer();
      for (int i = 0; i < m; ++i) {
        const Real* y = o->value.data() + std::size_t(i) * n;
        const Real* gy = o->grad.data() + std::size_t(i) * n;
        Real dot = 0;
        for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
        Real* gx = g + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return r;
}

Tensor normalize_rows_sum(const Tensor& a, Real eps) {
  const int m = a.rows(), n = a.cols();
  std::vector<Real> out(a.size());
  std::vector<Real> sums(m);
  for (int i = 0; i < m; ++i) {
    const Real* x = a.data().data() + std::size_t(i) * n;
    Real s = 0;
    for (int j = 0; j < n; ++j) s += x[j];
    s += eps;
    sums[i] = s;
    for (int j = 0; j < n; ++j) out[std::size_t(i) * n + j] = x[j] / s;
  }
  Tensor r = make_result(m, n, std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, m, n, sums = std::move(sums)]() {
      Real* g = an->grad_buffer();
      for (int i = 0; i < m; ++i) {
        const Real* y = o->value.data() + std::size_t(i) * n;
        const Real* gy = o->grad.data() + std::size_t(i) * n;
        Real dot = 0;
        for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
        const Real inv = Real(1) / sums[i];
        Real* gx = g + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += (gy[j] - dot) * inv;
      }
    };
  }
  return r;
}

Tensor l2_normalize_rows(const Tensor& a, Real eps, int* zero_rows) {
  const int m = a.rows(), n = a.cols();
  std::vector<Real> out(a.size(), Real(0));
  std::vector<Real> norms(m);
  int zeros = 0;
  for (int i = 0; i < m; ++i) {
    const Real* x = a.data().data() + std::size_t(i) * n;
    Real s = 0;
    for (int j = 0; j < n; ++j) s += x[j] * x[j];
    const Real nrm = std::sqrt(s);
    norms[i] = nrm;
    if (nrm < eps) {
      ++zeros;
      continue;
    }
    for (int j = 0; j < n; ++j) out[std::size_t(i) * n + j] = x[j] / nrm;
  }
  if (zero_rows) *zero_rows = zeros;
  Tensor r = make_result(m, n, std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, m, n, eps, norms = std::move(norms)]() {
      Real* g = an->grad_buffer();
      for (int i = 0; i < m; ++i) {
        if (norms[i] < eps) continue;
        const Real* y = o->value.data() + std::size_t(i) * n;
        const Real* gy = o->grad.data() + std::size_t(i) * n;
        Real dot = 0;
        for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
        const Real inv = Real(1) / norms[i];
        Real* gx = g + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += (gy[j] - y[j] * dot) * inv;
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------- structure

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int m = parts.front().rows();
  int n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    n += p.cols();
  }
  std::vector<Real> out(std::size_t(m) * n);
  int offset = 0;
  for (const auto& p : parts) {
    const int pc = p.cols();
    for (int i = 0; i < m; ++i) {
      std::copy_n(p.data().data() + std::size_t(i) * pc, pc, out.data() + std::size_t(i) * n + offset);
    }
    offset += pc;
  }
  Tensor r = make_result(m, n, std::move(out), parts);
  if (r.requires_grad()) {
    Node* o = r.node();
    std::vector<Node*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    o->backward = [o, nodes, m, n]() {
      int offset = 0;
      for (Node* p : nodes) {
        const int pc = p->cols;
        if (p->requires_grad) {
          Real* g = p->grad_buffer();
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < pc; ++j) g[std::size_t(i) * pc + j] += o->grad[std::size_t(i) * n + offset + j];
          }
        }
        offset += pc;
      }
    };
  }
  return r;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int n = parts.front().cols();
  int m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column counts differ");
    m += p.rows();
  }
  std::vector<Real> out;
  out.reserve(std::size_t(m) * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor r = make_result(m, n, std::move(out), parts);
  if (r.requires_grad()) {
    Node* o = r.node();
    std::vector<Node*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    o->backward = [o, nodes]() {
      std::size_t offset = 0;
      for (Node* p : nodes) {
        if (p->requires_grad) {
          Real* g = p->grad_buffer();
          for (std::size_t i = 0; i < p->value.size(); ++i) g[i] += o->grad[offset + i];
        }
        offset += p->value.size();
      }
    };
  }
  return r;
}

Tensor slice_cols(const Tensor& a, int begin, int end) {
  if (begin < 0 || end > a.cols() || begin >= end) throw ShapeError("slice_cols: bad range");
  const int m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<Real> out(std::size_t(m) * w);
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + std::size_t(i) * n + begin, w, out.data() + std::size_t(i) * w);
  }
  Tensor r = make_result(m, w, std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an, m, n, w, begin]() {
      Real* g = an->grad_buffer();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) g[std::size_t(i) * n + begin + j] += o->grad[std::size_t(i) * w + j];
      }
    };
  }
  return r;
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
  if (begin < 0 || end > a.rows() || begin >= end) throw ShapeError("slice_rows: bad range");
  const int n = a.cols();
  std::vector<Real> out(a.data().begin() + std::size_t(begin) * n, a.data().begin() + std::size_t(end) * n);
  Tensor r = make_result(end - begin, n, std::move(out), {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    const std::size_t off = std::size_t(begin) * n;
    o->backward = [o, an, off]() {
      Real* g = an->grad_buffer();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[off + i] += o->grad[i];
    };
  }
  return r;
}

// ---------------------------------------------------------------- reductions

Tensor sum_all(const Tensor& a) {
  Real s = 0;
  for (Real v : a.data()) s += v;
  Tensor r = make_result(1, 1, {s}, {&a});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* an = a.node();
    o->backward = [o, an]() {
      Real* g = an->grad_buffer();
      const Real go = o->grad[0];
      for (std::size_t i = 0; i < an->value.size(); ++i) g[i] += go;
    };
  }
  return r;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), Real(1) / Real(a.size())); }

Tensor mean_of(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("mean_of: no inputs");
  if (parts.size() == 1) return parts.front();
  Tensor acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return scale(acc, Real(1) / Real(parts.size()));
}

// ---------------------------------------------------------------- spatial

Tensor resample_bilinear(const Tensor& x, Grid in, int out_h, int out_w) {
  if (x.rows() != in.rows()) throw ShapeError("resample_bilinear: grid does not match rows");
  if (out_h == in.h && out_w == in.w) return x;
  const int c = x.cols();
  auto ty = bilinear_taps(in.h, out_h);
  auto tx = bilinear_taps(in.w, out_w);
  const std::size_t out_rows = std::size_t(in.batch) * out_h * out_w;
  std::vector<Real> out(out_rows * c, Real(0));
  const Real* src = x.data().data();
  for (int b = 0; b < in.batch; ++b) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        Real* dst = out.data() + ((std::size_t(b) * out_h + oy) * out_w + ox) * c;
        const int ys[2] = {ty[oy].i0, ty[oy].i1};
        const Real wy[2] = {ty[oy].w0, ty[oy].w1};
        const int xs[2] = {tx[ox].i0, tx[ox].i1};
        const Real wx[2] = {tx[ox].w0, tx[ox].w1};
        for (int a = 0; a < 2; ++a) {
          for (int bb = 0; bb < 2; ++bb) {
            const Real w = wy[a] * wx[bb];
            if (w == Real(0)) continue;
            const Real* s = src + ((std::size_t(b) * in.h + ys[a]) * in.w + xs[bb]) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += w * s[ch];
          }
        }
      }
    }
  }
  Tensor r = make_result(int(out_rows), c, std::move(out), {&x});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* xn = x.node();
    o->backward = [o, xn, in, out_h, out_w, c, ty = std::move(ty), tx = std::move(tx)]() {
      Real* g = xn->grad_buffer();
      for (int b = 0; b < in.batch; ++b) {
        for (int oy = 0; oy < out_h; ++oy) {
          for (int ox = 0; ox < out_w; ++ox) {
            const Real* go = o->grad.data() + ((std::size_t(b) * out_h + oy) * out_w + ox) * c;
            const int ys[2] = {ty[oy].i0, ty[oy].i1};
            const Real wy[2] = {ty[oy].w0, ty[oy].w1};
            const int xs[2] = {tx[ox].i0, tx[ox].i1};
            const Real wx[2] = {tx[ox].w0, tx[ox].w1};
            for (int a = 0; a < 2; ++a) {
              for (int bb = 0; bb < 2; ++bb) {
                const Real w = wy[a] * wx[bb];
                if (w == Real(0)) continue;
                Real* d = g + ((std::size_t(b) * in.h + ys[a]) * in.w + xs[bb]) * c;
                for (int ch = 0; ch < c; ++ch) d[ch] += w * go[ch];
              }
            }
          }
        }
      }
    };
  }
  return r;
}

Tensor resample_bilinear_cols(const Tensor& x, Grid in, int out_h, int out_w) {
  if (x.cols() != in.pixels()) throw ShapeError("resample_bilinear_cols: grid does not match columns");
  if (out_h == in.h && out_w == in.w) return x;
  const auto ty = bilinear_taps(in.h, out_h);
  const auto tx = bilinear_taps(in.w, out_w);
  const int ocols = out_h * out_w;
  // Four (source column, weight) taps per output column, zero weights kept so
  // every column sums its taps in the same order.
  std::vector<int> src_col(std::size_t(ocols) * 4);
  std::vector<Real> wt(std::size_t(ocols) * 4);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const std::size_t j = (std::size_t(oy) * out_w + ox) * 4;
      const int ys[2] = {ty[oy].i0, ty[oy].i1};
      const Real wy[2] = {ty[oy].w0, ty[oy].w1};
      const int xs[2] = {tx[ox].i0, tx[ox].i1};
      const Real wx[2] = {tx[ox].w0, tx[ox].w1};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          src_col[j + a * 2 + b] = ys[a] * in.w + xs[b];
          wt[j + a * 2 + b] = wy[a] * wx[b];
        }
      }
    }
  }
  const int rows = x.rows(), icols = x.cols();
  std::vector<Real> out(std::size_t(rows) * ocols);
  const Real* src = x.data().data();
  for (int r = 0; r < rows; ++r) {
    const Real* s = src + std::size_t(r) * icols;
    Real* d = out.data() + std::size_t(r) * ocols;
    for (int j = 0; j < ocols; ++j) {
      const std::size_t t = std::size_t(j) * 4;
      d[j] = wt[t] * s[src_col[t]] + wt[t + 1] * s[src_col[t + 1]] + wt[t + 2] * s[src_col[t + 2]] +
             wt[t + 3] * s[src_col[t + 3]];
    }
  }
  Tensor r = make_result(rows, ocols, std::move(out), {&x});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* xn = x.node();
    o->backward = [o, xn, rows, icols, ocols, src_col = std::move(src_col), wt = std::move(wt)]() {
      Real* g = xn->grad_buffer();
      for (int r = 0; r < rows; ++r) {
        const Real* go = o->grad.data() + std::size_t(r) * ocols;
        Real* d = g + std::size_t(r) * icols;
        for (int j = 0; j < ocols; ++j) {
          const std::size_t t = std::size_t(j) * 4;
          for (int k = 0; k < 4; ++k) d[src_col[t + k]] += wt[t + k] * go[j];
        }
      }
    };
  }
  return r;
}

Tensor avg_pool(const Tensor& x, Grid in, int ratio) {
  if (x.rows() != in.rows()) throw ShapeError("avg_pool: grid does not match rows");
  if (ratio < 1) throw ShapeError("avg_pool: ratio must be positive");
  if (ratio == 1) return x;
  const int c = x.cols();
  const int oh = (in.h + ratio - 1) / ratio;
  const int ow = (in.w + ratio - 1) / ratio;
  std::vector<Real> out(std::size_t(in.batch) * oh * ow * c, Real(0));
  const Real* src = x.data().data();
  for (int b = 0; b < in.batch; ++b) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const int y0 = oy * ratio, y1 = std::min(y0 + ratio, in.h);
        const int x0 = ox * ratio, x1 = std::min(x0 + ratio, in.w);
        const Real inv = Real(1) / Real((y1 - y0) * (x1 - x0));
        Real* dst = out.data() + ((std::size_t(b) * oh + oy) * ow + ox) * c;
        for (int y = y0; y < y1; ++y) {
          for (int xx = x0; xx < x1; ++xx) {
            const Real* s = src + ((std::size_t(b) * in.h + y) * in.w + xx) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += s[ch];
          }
        }
        for (int ch = 0; ch < c; ++ch) dst[ch] *= inv;
      }
    }
  }
  Tensor r = make_result(in.batch * oh * ow, c, std::move(out), {&x});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* xn = x.node();
    o->backward = [o, xn, in, ratio, oh, ow, c]() {
      Real* g = xn->grad_buffer();
      for (int b = 0; b < in.batch; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const int y0 = oy * ratio, y1 = std::min(y0 + ratio, in.h);
            const int x0 = ox * ratio, x1 = std::min(x0 + ratio, in.w);
            const Real inv = Real(1) / Real((y1 - y0) * (x1 - x0));
            const Real* go = o->grad.data() + ((std::size_t(b) * oh + oy) * ow + ox) * c;
            for (int y = y0; y < y1; ++y) {
              for (int xx = x0; xx < x1; ++xx) {
                Real* d = g + ((std::size_t(b) * in.h + y) * in.w + xx) * c;
                for (int ch = 0; ch < c; ++ch) d[ch] += go[ch] * inv;
              }
            }
          }
        }
      }
    };
  }
  return r;
}

Grid conv_output_grid(Grid in, int kernel, int stride, int pad) {
  Grid out;
  out.batch = in.batch;
  out.h = (in.h + 2 * pad - kernel) / stride + 1;
  out.w = (in.w + 2 * pad - kernel) / stride + 1;
  return out;
}

Tensor conv2d(const Tensor& x, Grid in, const Tensor& weight, const Tensor& bias, int kernel,
              int stride, int pad) {
  if (x.rows() != in.rows()) throw ShapeError("conv2d: grid does not match rows");
  const int cin = x.cols();
  const int kk = kernel * kernel * cin;
  if (weight.rows() != kk) throw ShapeError("conv2d: weight rows must equal k*k*cin");
  const int cout = weight.cols();
  if (bias.defined() && (bias.rows() != 1 || bias.cols() != cout)) throw ShapeError("conv2d: bias shape");
  const Grid og = conv_output_grid(in, kernel, stride, pad);
  if (og.h <= 0 || og.w <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int opix = og.pixels();
  const std::size_t col_size = std::size_t(opix) * kk;

  const bool keep_cols = grad_enabled() && (weight.requires_grad() || x.requires_grad());
  std::vector<Real> cols(keep_cols ? col_size * in.batch : col_size);
  std::vector<Real> out(std::size_t(og.rows()) * cout);
  const Real* src = x.data().data();
  for (int b = 0; b < in.batch; ++b) {
    Real* col = cols.data() + (keep_cols ? col_size * b : 0);
    for (int oy = 0; oy < og.h; ++oy) {
      for (int ox = 0; ox < og.w; ++ox) {
        Real* row = col + (std::size_t(oy) * og.w + ox) * kk;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            Real* dst = row + (ky * kernel + kx) * cin;
            if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) {
              std::fill(dst, dst + cin, Real(0));
            } else {
              std::copy_n(src + ((std::size_t(b) * in.h + iy) * in.w + ix) * cin, cin, dst);
            }
          }
        }
      }
    }
    Real* ob = out.data() + std::size_t(b) * opix * cout;
    gemm_nn(opix, cout, kk, col, weight.data().data(), ob, false);
    if (bias.defined()) {
      for (int p = 0; p < opix; ++p) {
        for (int co = 0; co < cout; ++co) ob[std::size_t(p) * cout + co] += bias.data()[co];
      }
    }
  }
  Tensor r = make_result(og.rows(), cout, std::move(out), {&x, &weight, &bias});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* xn = x.node();
    Node* wn = weight.node();
    Node* bn = bias.defined() ? bias.node() : nullptr;
    o->backward = [o, xn, wn, bn, in, og, kernel, stride, pad, cin, cout, kk, opix, col_size,
                   cols = std::move(cols)]() {
      std::vector<Real> dcol(xn->requires_grad ? col_size : 0);
      for (int b = 0; b < in.batch; ++b) {
        const Real* gb = o->grad.data() + std::size_t(b) * opix * cout;
        const Real* col = cols.data() + col_size * b;
        if (wn->requires_grad) gemm_tn(kk, cout, opix, col, gb, wn->grad_buffer(), true);
        if (bn && bn->requires_grad) {
          Real* g = bn->grad_buffer();
          for (int p = 0; p < opix; ++p) {
            for (int co = 0; co < cout; ++co) g[co] += gb[std::size_t(p) * cout + co];
          }
        }
        if (xn->requires_grad) {
          gemm_nt(opix, kk, cout, gb, wn->value.data(), dcol.data(), false);
          Real* gx = xn->grad_buffer();
          for (int oy = 0; oy < og.h; ++oy) {
            for (int ox = 0; ox < og.w; ++ox) {
              const Real* row = dcol.data() + (std::size_t(oy) * og.w + ox) * kk;
              for (int ky = 0; ky < kernel; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= in.w) continue;
                  Real* d = gx + ((std::size_t(b) * in.h + iy) * in.w + ix) * cin;
                  const Real* s = row + (ky * kernel + kx) * cin;
                  for (int ci = 0; ci < cin; ++ci) d[ci] += s[ci];
                }
              }
            }
          }
        }
      }
    };
  }
  return r;
}

Tensor shared_depthwise_conv(const Tensor& x, Grid in, const Tensor& weight, const Tensor& bias,
                             int kernel) {
  if (x.rows() != in.rows()) throw ShapeError("shared_depthwise_conv: grid does not match rows");
  if (kernel % 2 != 1) throw ShapeError("shared_depthwise_conv: kernel must be odd");
  if (weight.size() != std::size_t(kernel) * kernel) throw ShapeError("shared_depthwise_conv: weight size");
  const int c = x.cols();
  const int half = kernel / 2;
  std::vector<Real> out(x.size(), bias.defined() ? bias.data()[0] : Real(0));
  const Real* src = x.data().data();
  const Real* w = weight.data().data();
  for (int b = 0; b < in.batch; ++b) {
    for (int y = 0; y < in.h; ++y) {
      for (int xx = 0; xx < in.w; ++xx) {
        Real* dst = out.data() + ((std::size_t(b) * in.h + y) * in.w + xx) * c;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = y + ky - half;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = xx + kx - half;
            if (ix < 0 || ix >= in.w) continue;
            const Real wt = w[ky * kernel + kx];
            if (wt == Real(0)) continue;
            const Real* s = src + ((std::size_t(b) * in.h + iy) * in.w + ix) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += wt * s[ch];
          }
        }
      }
    }
  }
  Tensor r = make_result(x.rows(), c, std::move(out), {&x, &weight, &bias});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* xn = x.node();
    Node* wn = weight.node();
    Node* bn = bias.defined() ? bias.node() : nullptr;
    o->backward = [o, xn, wn, bn, in, kernel, half, c]() {
      if (bn && bn->requires_grad) {
        Real s = 0;
        for (Real g : o->grad) s += g;
        bn->grad_buffer()[0] += s;
      }
      Real* gw = wn->requires_grad ? wn->grad_buffer() : nullptr;
      Real* gx = xn->requires_grad ? xn->grad_buffer() : nullptr;
      // Per-tap, per-channel partial sums keep the inner loops vectorisable.
      std::vector<Real> partial(gw ? std::size_t(kernel) * kernel * c : 0, Real(0));
      for (int b = 0; b < in.batch; ++b) {
        for (int y = 0; y < in.h; ++y) {
          for (int xx = 0; xx < in.w; ++xx) {
            const Real* go = o->grad.data() + ((std::size_t(b) * in.h + y) * in.w + xx) * c;
            for (int ky = 0; ky < kernel; ++ky) {
              const int iy = y + ky - half;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < kernel; ++kx) {
                const int ix = xx + kx - half;
                if (ix < 0 || ix >= in.w) continue;
                const std::size_t off = ((std::size_t(b) * in.h + iy) * in.w + ix) * c;
                const int t = ky * kernel + kx;
                if (gw) {
                  const Real* s = xn->value.data() + off;
                  Real* acc = partial.data() + std::size_t(t) * c;
                  for (int ch = 0; ch < c; ++ch) acc[ch] += go[ch] * s[ch];
                }
                if (gx) {
                  const Real wt = wn->value[t];
                  Real* d = gx + off;
                  for (int ch = 0; ch < c; ++ch) d[ch] += wt * go[ch];
                }
              }
            }
          }
        }
      }
      if (gw) {
        for (int t = 0; t < kernel * kernel; ++t) {
          const Real* acc = partial.data() + std::size_t(t) * c;
          Real sum = 0;
          for (int ch = 0; ch < c; ++ch) sum += acc[ch];
          gw[t] += sum;
        }
      }
    };
  }
  return r;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  const int n = table.cols();
  std::vector<Real> out(ids.size() * std::size_t(n));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(table.data().data() + std::size_t(ids[i]) * n, n, out.data() + i * n);
  }
  Tensor r = make_result(int(ids.size()), n, std::move(out), {&table});
  if (r.requires_grad()) {
    Node* o = r.node();
    Node* tn = table.node();
    std::vector<int> idx(ids.begin(), ids.end());
    o->backward = [o, tn, n, idx = std::move(idx)]() {
      Real* g = tn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        Real* d = g + std::size_t(idx[i]) * n;
        const Real* s = o->grad.data() + i * n;
        for (int j = 0; j < n; ++j) d[j] += s[j];
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------- loss

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const int m = logits.rows(), n = logits.cols();
  if (labels.size() != std::size_t(m)) throw ShapeError("cross_entropy: label count differs from rows");
  std::vector<Real> probs(logits.size());
  double loss = 0;
  int counted = 0;
  for (int i = 0; i < m; ++i) {
    const Real* x = logits.data().data() + std::size_t(i) * n;
    Real* p = probs.data() + std::size_t(i) * n;
    const int label = labels[i];
    if (label < 0) continue;
    if (label >= n) throw ShapeError("cross_entropy: label out of range");
    Real mx = *std::max_element(x, x + n);
    Real s = 0;
    for (int j = 0; j < n; ++j) {
      p[j] = std::exp(x[j] - mx);
      s += p[j];
    }
    for (int j = 0; j < n; ++j) p[j] /= s;
    loss += -(double(x[label]) - double(mx) - std::log(double(s)));
    ++counted;
  }
  const Real value = counted ? Real(loss / counted) : Real(0);
  Tensor r = make_result(1, 1, {value}, {&logits});
  if (r.requires_grad() && counted) {
    Node* o = r.node();
    Node* ln = logits.node();
    std::vector<int> lab(labels.begin(), labels.end());
    o->backward = [o, ln, m, n, counted, lab = std::move(lab), probs = std::move(probs)]() {
      Real* g = ln->grad_buffer();
      const Real scale = o->grad[0] / Real(counted);
      for (int i = 0; i < m; ++i) {
        if (lab[i] < 0) continue;
        const Real* p = probs.data() + std::size_t(i) * n;
        Real* gi = g + std::size_t(i) * n;
        for (int j = 0; j < n; ++j) gi[j] += scale * p[j];
        gi[lab[i]] -= scale;
      }
    };
  }
  return r;
}

}  // namespace ov::inline OV2VSS_ABI
