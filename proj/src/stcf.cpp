#include "ov2vss/stcf.hpp"

#include <cmath>

namespace ov::inline OV2VSS_ABI {

Qkv project_qkv(const Tensor& u_target, const Tensor& d_past, const QkvProjection& proj) {
  if (u_target.rows() != d_past.rows()) {
    throw ShapeError("project_qkv: target has " + std::to_string(u_target.rows()) +
                     " positions but the past feature has " + std::to_string(d_past.rows()));
  }
  return {proj.q(u_target), proj.k(d_past), proj.v(d_past)};
}

AttentionResult pairwise_attention(const Qkv& qkv, bool raw_affinity, int scale_index) {
  if (qkv.q.cols() != qkv.k.cols()) throw ShapeError("pairwise_attention: Q and K widths differ");
  if (qkv.k.rows() != qkv.v.rows()) throw ShapeError("pairwise_attention: K and V lengths differ");
  Tensor logits = matmul_nt(qkv.q, qkv.k);
  Tensor a = raw_affinity ? logits
                          : softmax_rows(scale(logits, Real(1) / std::sqrt(Real(qkv.q.cols()))));
  Tensor n = matmul(a, qkv.v);
  return {{a, scale_index}, n};
}

Tensor upsample_affinity(const Tensor& affinity, Grid coarse, Grid fine) {
  if (affinity.rows() != coarse.pixels() || affinity.cols() != coarse.pixels()) {
    throw ShapeError("upsample_affinity: affinity is not square over the coarse grid");
  }
  const Grid q{1, coarse.h, coarse.w};
  Tensor rows_up = resample_bilinear(affinity, q, fine.h, fine.w);  // fineHW x coarseHW
  return resample_bilinear_cols(rows_up, q, fine.h, fine.w);
}

std::vector<AffinityMap> aggregate_affinities(const std::vector<AffinityMap>& maps,
                                              const std::vector<Grid>& grids,
                                              const std::vector<AffinityConv>& convs,
                                              bool raw_affinity) {
  const std::size_t depth = maps.size();
  if (depth == 0 || grids.size() != depth || convs.size() + 1 < depth) {
    throw ShapeError("aggregate_affinities: expected one grid per map and L-1 convolutions");
  }
  std::vector<AffinityMap> out(depth);
  out[depth - 1] = maps[depth - 1];
  for (int l = int(depth) - 2; l >= 0; --l) {
    const Grid g{1, grids[std::size_t(l)].h, grids[std::size_t(l)].w};
    Tensor up = upsample_affinity(out[std::size_t(l) + 1].matrix, grids[std::size_t(l) + 1], g);
    Tensor sum = add(up, maps[std::size_t(l)].matrix);
    const AffinityConv& c = convs[std::size_t(l)];
    Tensor refined = shared_depthwise_conv(sum, g, c.weight, c.bias, c.kernel);
    if (!raw_affinity) refined = normalize_rows_sum(relu(refined));
    out[std::size_t(l)] = {refined, l};
  }
  return out;
}

SpatialTemporalFusion::SpatialTemporalFusion(const StcfConfig& cfg, const std::vector<int>& channels,
                                             int out_dim, int aux_classes, ParameterStore& store,
                                             Rng& rng)
    : cfg_(cfg) {
  const int depth = int(channels.size());
  for (int l = 0; l < depth; ++l) {
    const int c = channels[std::size_t(l)];
    const int d = cfg.attn_dim > 0 ? cfg.attn_dim : c;
    const std::string name = "stcf.scale" + std::to_string(l + 1);
    QkvProjection p;
    p.q = Linear::create(store, name + ".q", c, d, rng);
    p.k = Linear::create(store, name + ".k", c, d, rng);
    p.v = Linear::create(store, name + ".v", c, c, rng);
    qkv_.push_back(p);
  }
  for (int l = 0; l + 1 < depth; ++l) {
    const std::string name = "stcf.aggregate" + std::to_string(l + 1);
    const int k = cfg.conv_kernel;
    std::vector<Real> w(std::size_t(k) * k, Real(0));
    w[std::size_t(k * k / 2)] = Real(1);
    for (auto& x : w) x += Real(rng.normal(0.0, 0.01));
    AffinityConv c;
    c.kernel = k;
    c.weight = store.add_values(name + ".weight", std::move(w), k * k, 1);
    c.bias = store.add(name + ".bias", 1, 1, Init::kZeros, rng);
    convs_.push_back(c);
  }
  for (int l = 0; l < depth; ++l) {
    collapse_.push_back(Linear::create(store, "stcf.collapse" + std::to_string(l + 1),
                                       channels[std::size_t(l)], out_dim, rng, false));
  }
  collapse_bias_ = store.add("stcf.collapse.bias", 1, out_dim, Init::kZeros, rng);
  aux_head_ = Linear::create(store, "stcf.aux_head", out_dim, aux_classes, rng);
}

FusedFrameFeature SpatialTemporalFusion::fuse_clip(const std::vector<FeaturePyramid>& raw,
                                                   const std::vector<FeaturePyramid>& enhanced) const {
  if (raw.empty() || raw.size() != enhanced.size()) throw ShapeError("fuse_clip: empty clip");
  const int depth = raw.front().depth();
  if (depth != int(qkv_.size())) throw ShapeError("fuse_clip: pyramid depth differs from the model");
  for (const auto& p : raw) {
    if (p.grids != raw.front().grids) throw ShapeError("fuse_clip: frames differ in size");
  }

  FusedFrameFeature out;
  out.grids = raw.front().grids;
  std::vector<Tensor> past = enhanced.front().levels;
  for (std::size_t f = 1; f < raw.size(); ++f) {
    std::vector<AffinityMap> maps;
    std::vector<Tensor> values;
    for (int l = 0; l < depth; ++l) {
      const Qkv qkv = project_qkv(raw[f].levels[std::size_t(l)], past[std::size_t(l)], qkv_[std::size_t(l)]);
      AttentionResult att = pairwise_attention(qkv, cfg_.raw_affinity, l);
      maps.push_back(att.affinity);
      values.push_back(qkv.v);
    }
    auto refined = aggregate_affinities(maps, out.grids, convs_, cfg_.raw_affinity);
    for (int l = 0; l < depth; ++l) {
      past[std::size_t(l)] = matmul(refined[std::size_t(l)].matrix, values[std::size_t(l)]);
    }
    out.final_affinities = std::move(refined);
    ++out.steps;
  }
  out.per_scale = past;

  const Grid fine = out.grids.front();
  Tensor acc;
  for (int l = 0; l < depth; ++l) {
    Tensor projected = collapse_[std::size_t(l)](past[std::size_t(l)]);
    Tensor up = resample_bilinear(projected, out.grids[std::size_t(l)], fine.h, fine.w);
    acc = acc.defined() ? add(acc, up) : up;
  }
  out.fused = add_row(acc, collapse_bias_);
  out.grid = fine;
  return out;
}

}  // namespace ov::inline OV2VSS_ABI
