#include "ov2vss/vte.hpp"

namespace ov::inline OV2VSS_ABI {

Tensor refine_text(const Tensor& text, const Tensor& visual, const TextRefiner& refiner) {
  if (text.cols() != visual.cols()) throw ShapeError("refine_text: text and visual widths differ");
  if (refiner.mode == "off") return text;
  Tensor refined = add(text, refiner.attn(text, visual));
  if (refiner.mode == "mhsa+ffn") {
    refined = add(refined, refiner.ffn_out(relu(refiner.ffn_in(refined))));
  }
  return refined;
}

CostVolume build_cost_volume(const Tensor& text, const Tensor& visual, Grid pixel_grid) {
  if (text.cols() != visual.cols()) throw ShapeError("build_cost_volume: widths differ");
  if (visual.rows() != pixel_grid.pixels()) throw ShapeError("build_cost_volume: grid mismatch");
  int zt = 0, zv = 0;
  Tensor tn = l2_normalize_rows(text, Real(1e-8), &zt);
  Tensor vn = l2_normalize_rows(visual, Real(1e-8), &zv);
  Tensor sim = clamp(matmul_nt(tn, vn), Real(-1), Real(1));  // N x HW
  CostVolume cv;
  cv.values = reshape(sim, text.rows() * visual.rows(), 1);
  cv.grid = {text.rows(), pixel_grid.h, pixel_grid.w};
  cv.zero_norm_vectors = zt + zv;
  return cv;
}

Tensor refine_cost_volume(const Tensor& cost, Grid grid, const Conv& conv) { return conv(cost, grid); }

Tensor fuse_position(const Tensor& refined_cost, Grid grid, const Tensor& positional,
                     const PositionFusion& fusion) {
  if (positional.rows() != grid.pixels()) throw ShapeError("fuse_position: positional grid mismatch");
  Tensor slice_part = matmul(refined_cost, fusion.slice_weight);                 // N*HW x P
  Tensor shared = add_row(matmul(positional, fusion.pos_weight), fusion.bias);  // HW x P
  return add_tiled(slice_part, shared);
}

Tensor decode(const Tensor& position_cost, Grid cost_grid, const Tensor& context, Grid context_grid,
              const DecodeHead& head) {
  const int n = cost_grid.batch;
  Tensor up = resample_bilinear(position_cost, cost_grid, context_grid.h, context_grid.w);
  const Grid slices{n, context_grid.h, context_grid.w};
  Tensor hidden;
  if (head.fusion == "concat") {
    // conv([slice, context]) splits into a per-slice and a shared term.
    Tensor own = head.slice_conv(up, slices);
    Tensor shared = head.context_conv(context, context_grid);
    hidden = relu(add_tiled(own, shared));
  } else {
    Tensor fused = add_tiled(head.slice_proj(up), context);
    hidden = relu(head.add_conv(fused, slices));
  }
  Tensor per_slice = head.out(hidden);  // N*HW x 1
  return transpose(reshape(per_slice, n, context_grid.pixels()));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(std::size_t(logits.rows()));
  const int n = logits.cols();
  for (int i = 0; i < logits.rows(); ++i) {
    const Real* row = logits.data().data() + std::size_t(i) * n;
    int best = 0;
    for (int j = 1; j < n; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[std::size_t(i)] = best;
  }
  return out;
}

VideoTextDecoder::VideoTextDecoder(const VteConfig& cfg, int text_dim, int visual_in,
                                   int pos_channels_in, ParameterStore& store, Rng& rng) {
  refiner_.mode = cfg.text_refine;
  if (cfg.text_refine != "off") {
    refiner_.attn = MultiHeadAttention::create(store, "vte.text_attn", text_dim, cfg.heads, rng);
  }
  if (cfg.text_refine == "mhsa+ffn") {
    refiner_.ffn_in = Linear::create(store, "vte.text_ffn.in", text_dim, 2 * text_dim, rng);
    refiner_.ffn_out = Linear::create(store, "vte.text_ffn.out", 2 * text_dim, text_dim, rng);
  }
  visual_proj_ = Linear::create(store, "vte.visual_proj", visual_in, text_dim, rng);

  cost_conv_.kernel = 3;
  cost_conv_.stride = 1;
  cost_conv_.pad = 1;
  std::vector<Real> k(9, Real(0));
  k[4] = Real(1);
  for (auto& x : k) x += Real(rng.normal(0.0, 0.02));
  cost_conv_.weight = store.add_values("vte.cost_conv.weight", std::move(k), 9, 1);
  cost_conv_.bias = store.add("vte.cost_conv.bias", 1, 1, Init::kZeros, rng);

  const int p = cfg.pos_channels;
  position_.slice_weight = store.add("vte.position.slice", 1, p, Init::kXavier, rng);
  position_.pos_weight = store.add("vte.position.pos", pos_channels_in, p, Init::kXavier, rng);
  position_.bias = store.add("vte.position.bias", 1, p, Init::kZeros, rng);

  head_.fusion = cfg.fusion;
  const int hid = cfg.head_hidden;
  if (cfg.fusion == "concat") {
    head_.slice_conv = Conv::create(store, "vte.head.slice", p, hid, cfg.head_kernel, 1, rng);
    head_.context_conv = Conv::create(store, "vte.head.context", text_dim, hid, cfg.head_kernel, 1, rng, false);
  } else {
    head_.slice_proj = Linear::create(store, "vte.head.slice_proj", p, text_dim, rng);
    head_.add_conv = Conv::create(store, "vte.head.fused", text_dim, hid, cfg.head_kernel, 1, rng);
  }
  head_.out = Linear::create(store, "vte.head.out", hid, 1, rng);
}

}  // namespace ov::inline OV2VSS_ABI
