#pragma once

// Open-vocabulary evaluation regimes. The model always sees the full
// vocabulary at inference; the seen/unseen filter only selects which classes
// enter the metric averages.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ov2vss/checkpoint.hpp"
#include "ov2vss/clipio.hpp"
#include "ov2vss/metrics.hpp"
#include "ov2vss/model.hpp"

namespace ov::inline OV2VSS_ABI {

// seen = first n_seen names, unseen = the rest.
ClassVocabulary split_vocabulary(std::vector<std::string> names, int n_seen);

enum class EvalFilter { kAll, kSeen, kUnseen };
EvalFilter parse_filter(const std::string& s);
std::string filter_name(EvalFilter f);
std::vector<int> filter_classes(const ClassVocabulary& vocab, EvalFilter f);

// Inference over every annotated frame of every video.
ConfusionAccumulator accumulate_dataset(const Ov2VssModel& model, const ClipConfig& clip,
                                        const Dataset& data);

// Throws ValidationError when the dataset vocabulary differs from the one
// stored in the checkpoint.
MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& data, EvalFilter filter,
                       ConfusionAccumulator* confusion = nullptr);
// Same, but with whatever vocabulary the foreign dataset carries.
MetricsReport cross_dataset_eval(const Checkpoint& ckpt, const Dataset& foreign, EvalFilter filter,
                                 ConfusionAccumulator* confusion = nullptr);

// Per-frame predictions (class indices of data.vocab()) for every frame.
std::vector<LabelMap> predict_video(const Ov2VssModel& model, const ClipConfig& clip,
                                    const Dataset& data, int video);

struct BaselineEstimate {
  double mean = 0;
  double stddev = 0;
  int trials = 0;
};

// mIoU of a predictor that labels every counted pixel uniformly at random
// among `presented` classes, simulated `trials` times for the given
// ground-truth pixel counts.
BaselineEstimate random_baseline_monte_carlo(std::span<const std::uint64_t> gt_pixels, int presented,
                                             std::span<const int> filter, int trials,
                                             std::uint64_t seed);
// First-order expectation of the same quantity:
// IoU_i ~ (t_i / N) / (t_i + T/N - t_i/N).
double random_baseline_analytic(std::span<const std::uint64_t> gt_pixels, int presented,
                                std::span<const int> filter);

// results_dir/metrics_<fingerprint>_<filter>.json
std::filesystem::path write_report(const std::filesystem::path& results_dir, const MetricsReport& r,
                                   const Settings& settings, const std::vector<std::string>& names);

}  // namespace ov::inline OV2VSS_ABI
