#include "ov2vss/rfe.hpp"

namespace ov::inline OV2VSS_ABI {

Tensor collapse_random_pyramid(const FeaturePyramid& pyramid, int first_level, const Linear& proj,
                               Grid* grid) {
  if (pyramid.depth() == 0 || first_level < 0 || first_level >= pyramid.depth()) {
    throw ShapeError("collapse_random_pyramid: level range is empty");
  }
  const Grid target = pyramid.grids[std::size_t(first_level)];
  std::vector<Tensor> parts;
  for (int l = first_level; l < pyramid.depth(); ++l) {
    parts.push_back(resample_bilinear(pyramid.levels[std::size_t(l)], pyramid.grids[std::size_t(l)],
                                      target.h, target.w));
  }
  if (grid) *grid = target;
  return proj(parts.size() == 1 ? parts.front() : concat_cols(parts));
}

RegionContext region_pool(const Tensor& d_random, const Linear& region_logits) {
  Tensor logits = region_logits(d_random);           // HW x K
  Tensor weights = softmax_rows(transpose(logits));  // K x HW
  return {matmul(weights, d_random), weights};
}

Tensor enhance_target(const Tensor& o_t, const Tensor& regions, const MultiHeadAttention& attn,
                      bool residual) {
  if (o_t.cols() != regions.cols()) throw ShapeError("enhance_target: channel widths differ");
  Tensor ctx = attn(o_t, regions);
  return residual ? add(o_t, ctx) : ctx;
}

RandomFrameEnhancement::RandomFrameEnhancement(const RfeConfig& cfg, const std::vector<int>& channels,
                                               int dim, int regions, ParameterStore& store, Rng& rng)
    : cfg_(cfg), regions_(regions) {
  int in = 0;
  for (std::size_t l = std::size_t(cfg.first_level - 1); l < channels.size(); ++l) in += channels[l];
  collapse_ = Linear::create(store, "rfe.collapse", in, dim, rng);
  region_logits_ = Linear::create(store, "rfe.regions", dim, regions, rng);
  attn_ = MultiHeadAttention::create(store, "rfe.attn", dim, cfg.heads, rng);
}

Tensor RandomFrameEnhancement::operator()(const Tensor& o_t, const FeaturePyramid& random_enhanced) const {
  Tensor d = collapse_random_pyramid(random_enhanced, cfg_.first_level - 1, collapse_);
  RegionContext ctx = region_pool(d, region_logits_);
  return enhance_target(o_t, ctx.regions, attn_, cfg_.residual);
}

}  // namespace ov::inline OV2VSS_ABI
