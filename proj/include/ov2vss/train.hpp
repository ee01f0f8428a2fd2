#pragma once

// Composite loss, the open-vocabulary masking protocol, augmentation, AdamW
// with linear warm-up, and the training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "ov2vss/checkpoint.hpp"
#include "ov2vss/clipio.hpp"
#include "ov2vss/model.hpp"

namespace ov::inline OV2VSS_ABI {

double combine_loss(double l_main, double l_aux, double alpha, double beta);
Tensor combine_loss(const Tensor& l_main, const Tensor& l_aux, double alpha, double beta);

// Unseen labels in every mask become ignore; the target mask's unseen
// footprint is zeroed in every frame (random frame included).
VideoClipSample mask_unseen(VideoClipSample sample, const ClassVocabulary& vocab);

// Linear ramp over warmup_iters, then constant. step counts from 1.
double learning_rate_at(const TrainConfig& cfg, int step);

class AdamW {
 public:
  AdamW(const TrainConfig& cfg, const ParameterStore& store);
  // Decoupled weight decay followed by the bias-corrected Adam update.
  void step(ParameterStore& store, double lr);
  int steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct AugmentParams {
  int scaled_h = 0;
  int scaled_w = 0;
  int y0 = 0;
  int x0 = 0;
  int crop = 0;
};

// Scale drawn uniformly from [scale_min, scale_max], then a uniform crop.
AugmentParams draw_augmentation(const TrainConfig& cfg, int h, int w, Rng& rng);
// Frames resampled bilinearly, masks by nearest neighbour, then cropped.
VideoClipSample augment(const VideoClipSample& sample, const AugmentParams& p);

// Nearest-neighbour resize of a label map, used for the auxiliary target.
std::vector<int> downsample_labels(const LabelMap& mask, int out_h, int out_w);

// Loss-side class indices: position among the presented (seen) classes, or -1.
// Pixels whose class is not presented but not ignore are counted as leaks.
struct LossLabels {
  std::vector<int> labels;
  std::int64_t leaked = 0;
  std::int64_t supervised = 0;
};
LossLabels to_loss_labels(std::span<const int> mask, const ClassVocabulary& vocab);

struct LogEntry {
  int iteration = 0;
  double l_main = 0;
  double l_aux = 0;
  double loss = 0;
  double lr = 0;
};

// Counts collected while training. Both unseen counters must stay at 0 when
// masking is on.
struct TrainAudit {
  std::int64_t unseen_label_pixels = 0;  // unseen pixels reaching a loss term
  std::int64_t unseen_input_pixels = 0;  // unseen-footprint input values left non-zero
  std::int64_t supervised_pixels = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing written
  std::function<void(const LogEntry&)> on_log;
};

struct TrainResult {
  std::unique_ptr<Ov2VssModel> model;
  CheckpointMeta meta;
  std::vector<LogEntry> log;
  TrainAudit audit;
};

// Deterministic for a fixed settings.seed. Throws Error("numeric") naming the
// batch seed when a loss is not finite.
TrainResult train_loop(const Settings& settings, const Dataset& data, const TrainOptions& opts = {});

int default_regions(const Settings& s, const ClassVocabulary& vocab);

}  // namespace ov::inline OV2VSS_ABI
