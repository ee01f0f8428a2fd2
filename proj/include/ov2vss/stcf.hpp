#pragma once

// Spatial-temporal context fusion. Frames of a clip are fused pairwise from
// the earliest to the target: at every step each scale computes an affinity
// between the newer frame (queries) and the running past feature (keys and
// values); affinities are refined coarse-to-fine across scales and the
// refined affinity applied to the values becomes the new past feature.
//
// Cost per step and scale is O(HW * C^2 + (HW)^2 * C) for the projections and
// the affinity products.

#include <vector>

#include "ov2vss/config.hpp"
#include "ov2vss/encoders.hpp"
#include "ov2vss/nn.hpp"

namespace ov::inline OV2VSS_ABI {

struct QkvProjection {
  Linear q;
  Linear k;
  Linear v;
};

struct Qkv {
  Tensor q;  // HW x d
  Tensor k;  // HW x d
  Tensor v;  // HW x C
};

// Q from the newer frame's backbone features, K and V from the past feature.
Qkv project_qkv(const Tensor& u_target, const Tensor& d_past, const QkvProjection& proj);

// Row-stochastic (unless raw) HW x HW attention at one scale.
struct AffinityMap {
  Tensor matrix;
  int scale_index = 0;
};

struct AttentionResult {
  AffinityMap affinity;
  Tensor fused;  // affinity * V
};

// softmax(Q K^T / sqrt(d)) and its product with V. With raw_affinity the
// literal unnormalised product Q K^T is used instead.
AttentionResult pairwise_attention(const Qkv& qkv, bool raw_affinity, int scale_index = 0);

// Bilinear resize of an affinity over both its query and key grids.
Tensor upsample_affinity(const Tensor& affinity, Grid coarse, Grid fine);

struct AffinityConv {
  Tensor weight;  // k*k x 1, shared over keys
  Tensor bias;    // 1 x 1
  int kernel = 3;
};

// maps/grids ordered shallow to deep; convs[l] refines scale l (size L-1).
// B[L-1] = A[L-1]; B[l] = rownorm(relu(conv(upsample(B[l+1]) + A[l]))).
std::vector<AffinityMap> aggregate_affinities(const std::vector<AffinityMap>& maps,
                                              const std::vector<Grid>& grids,
                                              const std::vector<AffinityConv>& convs,
                                              bool raw_affinity);

struct FusedFrameFeature {
  std::vector<Tensor> per_scale;  // O_t at every scale, C_l channels
  std::vector<Grid> grids;
  Tensor fused;  // all scales summed at the finest grid, out_dim channels
  Grid grid;
  int steps = 0;
  std::vector<AffinityMap> final_affinities;
};

class SpatialTemporalFusion {
 public:
  SpatialTemporalFusion(const StcfConfig& cfg, const std::vector<int>& channels, int out_dim,
                        int aux_classes, ParameterStore& store, Rng& rng);

  // raw: backbone pyramids, enhanced: pooled pyramids, both ordered oldest to
  // target.
  FusedFrameFeature fuse_clip(const std::vector<FeaturePyramid>& raw,
                              const std::vector<FeaturePyramid>& enhanced) const;

  // 1x1 head to the seen-class logits, used for the auxiliary loss.
  Tensor auxiliary_logits(const Tensor& fused) const { return aux_head_(fused); }

  const std::vector<QkvProjection>& projections() const { return qkv_; }
  const std::vector<AffinityConv>& affinity_convs() const { return convs_; }

 private:
  StcfConfig cfg_;
  std::vector<QkvProjection> qkv_;
  std::vector<AffinityConv> convs_;
  std::vector<Linear> collapse_;
  Tensor collapse_bias_;
  Linear aux_head_;
};

}  // namespace ov::inline OV2VSS_ABI
