#pragma once

// Random frame enhancement: region context distilled from a temporally
// distant frame is injected into the fused target feature by cross-attention.
// Cost: O(HW * C^2 + HW * K * C) for K regions.

#include "ov2vss/config.hpp"
#include "ov2vss/encoders.hpp"
#include "ov2vss/nn.hpp"

namespace ov::inline OV2VSS_ABI {

// Levels [first_level, L) resampled to first_level's grid, concatenated and
// projected. Returns (HW x C) on `grid`.
Tensor collapse_random_pyramid(const FeaturePyramid& pyramid, int first_level, const Linear& proj,
                               Grid* grid = nullptr);

struct RegionContext {
  Tensor regions;        // K x C
  Tensor pixel_weights;  // K x HW, each row sums to 1
};

// Region logits per pixel, softmax over pixels per region, weighted means.
RegionContext region_pool(const Tensor& d_random, const Linear& region_logits);

// O_t + MHA(O_t, L_r, L_r) (residual optional).
Tensor enhance_target(const Tensor& o_t, const Tensor& regions, const MultiHeadAttention& attn,
                      bool residual);

class RandomFrameEnhancement {
 public:
  RandomFrameEnhancement(const RfeConfig& cfg, const std::vector<int>& channels, int dim,
                         int regions, ParameterStore& store, Rng& rng);
  Tensor operator()(const Tensor& o_t, const FeaturePyramid& random_enhanced) const;
  int regions() const { return regions_; }

 private:
  RfeConfig cfg_;
  int regions_;
  Linear collapse_;
  Linear region_logits_;
  MultiHeadAttention attn_;
};

}  // namespace ov::inline OV2VSS_ABI
