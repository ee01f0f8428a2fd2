#pragma once

// The full pipeline: backbone + pooling enhancement per frame, clip fusion,
// random-frame enhancement, text refinement, cost volume and decoding. The
// model never stores the class list: names are passed to every forward call,
// so any vocabulary size works with the same parameters.

#include <memory>
#include <string>
#include <vector>

#include "ov2vss/clipio.hpp"
#include "ov2vss/config.hpp"
#include "ov2vss/encoders.hpp"
#include "ov2vss/rfe.hpp"
#include "ov2vss/stcf.hpp"
#include "ov2vss/vte.hpp"

namespace ov::inline OV2VSS_ABI {

struct ClipInput {
  std::vector<Tensor> frames;  // oldest to target, each HW x 3
  Tensor random;               // HW x 3; ignored when RFE is disabled
  Grid grid;                   // batch 1
};

// Standardises every frame with the manifest's channel statistics.
Tensor image_to_tensor(const RgbImage& img, const Manifest& m);
ClipInput make_clip_input(const VideoClipSample& s, const Manifest& m);

struct ModelOutput {
  Tensor logits;  // input HW x N
  Grid grid;
  Tensor aux_logits;  // fused HW x |aux|
  Grid aux_grid;
  CostVolume cost;  // raw cosine volume
  Tensor text;      // refined text features, N x C
  int fusion_steps = 0;
};

class Ov2VssModel {
 public:
  // aux_classes: width of the auxiliary head (seen classes at train time);
  // regions: RFE region count.
  Ov2VssModel(const Settings& settings, int aux_classes, int regions);
  Ov2VssModel(const Ov2VssModel&) = delete;
  Ov2VssModel& operator=(const Ov2VssModel&) = delete;

  ModelOutput forward(const ClipInput& clip, const std::vector<std::string>& names) const;
  // Per-pixel argmax of forward(); ties toward the lowest class.
  std::vector<int> predict(const ClipInput& clip, const std::vector<std::string>& names) const;

  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const Settings& settings() const { return settings_; }
  int aux_classes() const { return aux_classes_; }
  int regions() const { return regions_; }

  // Copies values by name; throws ShapeError when a name is missing or a shape
  // differs. With prefix, only parameters starting with it are required.
  void load_values(const std::vector<NamedParameter>& values, const std::string& prefix = "");

 private:
  Settings settings_;
  int aux_classes_;
  int regions_;
  ParameterStore store_;
  std::unique_ptr<ImageEncoder> backbone_;
  std::unique_ptr<PoolEnhancer> pool_;
  std::unique_ptr<TextEmbedder> text_;
  std::unique_ptr<SpatialTemporalFusion> stcf_;
  std::unique_ptr<RandomFrameEnhancement> rfe_;
  std::unique_ptr<VideoTextDecoder> vte_;
};

}  // namespace ov::inline OV2VSS_ABI
