#pragma once

// Video text encoding and class-agnostic decoding. Every per-class step
// (cost slice refinement, position fusion, the decoder head) shares weights
// across classes and processes each class slice independently, so the number
// of classes can change between training and inference and permuting the
// classes permutes the logits exactly.

#include <string>

#include "ov2vss/config.hpp"
#include "ov2vss/nn.hpp"

namespace ov::inline OV2VSS_ABI {

struct TextRefiner {
  std::string mode = "mhsa+ffn";  // mhsa | mhsa+ffn | off
  MultiHeadAttention attn;
  Linear ffn_in;
  Linear ffn_out;
};

// F_T + MHA(F_T, F_V) (+ FFN residual). Each class row attends to the visual
// tokens on its own.
Tensor refine_text(const Tensor& text, const Tensor& visual, const TextRefiner& refiner);

struct CostVolume {
  Tensor values;  // (N*HW) x 1, class-major
  Grid grid;      // batch = N
  int zero_norm_vectors = 0;
};

// Cosine similarity of every class row with every pixel feature. Zero-norm
// vectors give similarity 0 and are counted.
CostVolume build_cost_volume(const Tensor& text, const Tensor& visual, Grid pixel_grid);

// Shared single-channel convolution over every class slice.
Tensor refine_cost_volume(const Tensor& cost, Grid grid, const Conv& conv);

struct PositionFusion {
  Tensor slice_weight;  // 1 x P
  Tensor pos_weight;    // C1 x P
  Tensor bias;          // 1 x P
};

// Linear map of [slice, positional features] per class slice -> (N*HW) x P.
Tensor fuse_position(const Tensor& refined_cost, Grid grid, const Tensor& positional,
                     const PositionFusion& fusion);

struct DecodeHead {
  std::string fusion = "concat";  // concat | add
  Conv slice_conv;                // concat: P -> hidden
  Conv context_conv;              // concat: C -> hidden, no bias
  Linear slice_proj;              // add: P -> C
  Conv add_conv;                  // add: C -> hidden
  Linear out;                     // hidden -> 1
};

// Upsamples each class slice to the context grid, fuses with the shared
// context feature and maps every slice to one logit. Returns HW x N.
Tensor decode(const Tensor& position_cost, Grid cost_grid, const Tensor& context, Grid context_grid,
              const DecodeHead& head);

// argmax per row, ties toward the lowest column.
std::vector<int> argmax_rows(const Tensor& logits);

class VideoTextDecoder {
 public:
  VideoTextDecoder(const VteConfig& cfg, int text_dim, int visual_in, int pos_channels_in,
                   ParameterStore& store, Rng& rng);

  const TextRefiner& refiner() const { return refiner_; }
  const Linear& visual_proj() const { return visual_proj_; }
  const Conv& cost_conv() const { return cost_conv_; }
  const PositionFusion& position() const { return position_; }
  const DecodeHead& head() const { return head_; }

 private:
  TextRefiner refiner_;
  Linear visual_proj_;
  Conv cost_conv_;
  PositionFusion position_;
  DecodeHead head_;
};

}  // namespace ov::inline OV2VSS_ABI
