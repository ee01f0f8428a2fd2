#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Feature maps are stored channels-last: one row per pixel, one
// column per channel. Spatial ops take a Grid describing how the rows are
// laid out as (batch, height, width).

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ov2vss/common.hpp"

namespace ov::inline OV2VSS_ABI {

struct Grid {
  int batch = 1;
  int h = 1;
  int w = 1;
  int pixels() const { return h * w; }
  int rows() const { return batch * h * w; }
  bool operator==(const Grid&) const = default;
};

namespace detail {
struct Node {
  std::vector<Real> value;
  std::vector<Real> grad;
  int rows = 0;
  int cols = 0;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  Real* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad.data();
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, Real v, bool requires_grad = false);
  static Tensor from(std::vector<Real> values, int rows, int cols,
                     bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const Real> data() const { return node_->value; }
  std::span<Real> mutable_data() { return node_->value; }
  Real at(int r, int c) const { return node_->value[std::size_t(r) * cols() + c]; }
  Real item() const;

  // Empty span when no gradient has been accumulated yet.
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return {node_->grad_buffer(), size()}; }
  void zero_grad() { node_->grad.clear(); }

  // Seeds d(this)/d(this) = 1 for a 1x1 tensor and propagates to every
  // reachable leaf that requires grad.
  void backward() const;

  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- dense kernels (also used directly by oracles-free fast paths) ----

// C = A(MxK) * B(KxN), accumulated into C when accumulate is set. Each output
// element sums over k in ascending order regardless of its row, so identical
// rows give bitwise identical results wherever they sit in A.
void gemm_nn(int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate);
// C = A(MxK) * B(NxK)^T
void gemm_nt(int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate);
// C = A(KxM)^T * B(KxN)
void gemm_tn(int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate);

// ---- differentiable ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, int rows, int cols);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
// a (R x C) + row (1 x C) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
// a (B*P x C) + tile (P x C) broadcast over the B blocks.
Tensor add_tiled(const Tensor& a, const Tensor& tile);
// a (R x C) * col (R x 1) broadcast over columns.
Tensor mul_col(const Tensor& a, const Tensor& col);

Tensor relu(const Tensor& a);
// Clamps values into [lo, hi]; gradient flows only where the input was inside.
Tensor clamp(const Tensor& a, Real lo, Real hi);
Tensor softmax_rows(const Tensor& a);
// Divides each row by its sum (plus eps). Rows are expected nonnegative.
Tensor normalize_rows_sum(const Tensor& a, Real eps = Real(1e-12));
// Scales each row to unit L2 norm; rows with norm below eps map to zero.
Tensor l2_normalize_rows(const Tensor& a, Real eps = Real(1e-8),
                         int* zero_rows = nullptr);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int begin, int end);
Tensor slice_rows(const Tensor& a, int begin, int end);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Mean of several same-shaped tensors.
Tensor mean_of(const std::vector<Tensor>& parts);

// Bilinear resampling with pixel-centre alignment (align_corners = false).
Tensor resample_bilinear(const Tensor& x, Grid in, int out_h, int out_w);
// Same interpolation applied along the columns: every row is viewed as an
// in.h x in.w grid of scalars. Equivalent to transpose-resample-transpose.
Tensor resample_bilinear_cols(const Tensor& x, Grid in, int out_h, int out_w);
// Average pooling with window = stride = ratio; edge windows average only the
// pixels they cover.
Tensor avg_pool(const Tensor& x, Grid in, int ratio);
// Standard 2-D convolution. weight is (k*k*cin) x cout laid out as
// [(ky*k + kx)*cin + ci][co]; bias is 1 x cout or undefined. Zero padding.
Tensor conv2d(const Tensor& x, Grid in, const Tensor& weight, const Tensor& bias,
              int kernel, int stride, int pad);
Grid conv_output_grid(Grid in, int kernel, int stride, int pad);
// One k x k kernel shared by every column, applied over the pixel grid of the
// rows. weight is (k*k) x 1, bias is 1 x 1 or undefined. Zero padding keeps the
// spatial size.
Tensor shared_depthwise_conv(const Tensor& x, Grid in, const Tensor& weight,
                             const Tensor& bias, int kernel);

// Rows of `table` selected by `ids` (an embedding lookup).
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

// Mean cross-entropy of row-wise softmax(logits) against labels; label < 0
// rows are skipped. Returns 0 (no gradient flow) when no row is labelled.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace ov::inline OV2VSS_ABI
