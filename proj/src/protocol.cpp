#include "ov2vss/protocol.hpp"

#include <cmath>
#include <random>

namespace ov::inline OV2VSS_ABI {

ClassVocabulary split_vocabulary(std::vector<std::string> names, int n_seen) {
  const int n = int(names.size());
  if (n_seen <= 0 || n_seen >= n) {
    throw ValidationError("split needs 0 < seen (" + std::to_string(n_seen) + ") < classes (" +
                          std::to_string(n) + ")");
  }
  ClassVocabulary v;
  v.names = std::move(names);
  for (int i = 0; i < n; ++i) (i < n_seen ? v.seen : v.unseen).push_back(i);
  v.validate();
  return v;
}

EvalFilter parse_filter(const std::string& s) {
  if (s == "all") return EvalFilter::kAll;
  if (s == "seen") return EvalFilter::kSeen;
  if (s == "unseen") return EvalFilter::kUnseen;
  throw ConfigError("filter must be all, seen or unseen, got '" + s + "'");
}

std::string filter_name(EvalFilter f) {
  switch (f) {
    case EvalFilter::kSeen: return "seen";
    case EvalFilter::kUnseen: return "unseen";
    default: return "all";
  }
}

std::vector<int> filter_classes(const ClassVocabulary& vocab, EvalFilter f) {
  switch (f) {
    case EvalFilter::kSeen: return vocab.seen;
    case EvalFilter::kUnseen: return vocab.unseen;
    default: {
      std::vector<int> all(std::size_t(vocab.size()));
      for (int i = 0; i < vocab.size(); ++i) all[std::size_t(i)] = i;
      return all;
    }
  }
}

namespace {

LabelMap predict_frame(const Ov2VssModel& model, const ClipConfig& clip, const Dataset& data,
                       int video, int t) {
  const VideoData& v = data.video(video);
  const int len = int(v.frames.size());
  const auto idx = build_clip_indices_padded(t, clip.past_frames, clip.spacing, len);
  VideoClipSample s;
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) s.past_frames.push_back(v.frames[std::size_t(idx[i])]);
  s.target_frame = v.frames[std::size_t(t)];
  int random_t = t;
  try {
    random_t = select_random_frame(t, idx, len, FrameMode::kInfer, 0);
  } catch (const NoCandidateError&) {
  }
  s.random_frame = v.frames[std::size_t(random_t)];
  const ClipInput in = make_clip_input(s, data.manifest());
  LabelMap out(s.target_frame.h, s.target_frame.w);
  out.labels = model.predict(in, data.vocab().names);
  return out;
}

MetricsReport finish(const ConfusionAccumulator& acc, const ClassVocabulary& vocab, EvalFilter filter,
                     ConfusionAccumulator* confusion) {
  if (confusion) *confusion = acc;
  const auto classes = filter_classes(vocab, filter);
  if (classes.empty()) throw ValidationError("class filter '" + filter_name(filter) + "' is empty");
  return finalize(acc, classes, filter_name(filter));
}

}  // namespace

ConfusionAccumulator accumulate_dataset(const Ov2VssModel& model, const ClipConfig& clip,
                                        const Dataset& data) {
  ConfusionAccumulator acc(data.vocab().size(), data.vocab().ignore_index);
  for (int v = 0; v < data.video_count(); ++v) {
    for (int t : data.video(v).annotated) {
      const LabelMap pred = predict_frame(model, clip, data, v, t);
      acc.accumulate(pred.labels, data.video(v).masks[std::size_t(t)]->labels);
    }
  }
  return acc;
}

MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& data, EvalFilter filter,
                       ConfusionAccumulator* confusion) {
  if (ckpt.meta.vocabulary != data.vocab().names) {
    throw ValidationError("vocabulary mismatch: the checkpoint was trained with " +
                          std::to_string(ckpt.meta.vocabulary.size()) + " classes that differ from the " +
                          std::to_string(data.vocab().size()) + " classes of " + data.root().string());
  }
  return cross_dataset_eval(ckpt, data, filter, confusion);
}

MetricsReport cross_dataset_eval(const Checkpoint& ckpt, const Dataset& foreign, EvalFilter filter,
                                 ConfusionAccumulator* confusion) {
  const auto model = model_from_checkpoint(ckpt);
  const auto acc = accumulate_dataset(*model, ckpt.meta.settings.clip, foreign);
  return finish(acc, foreign.vocab(), filter, confusion);
}

std::vector<LabelMap> predict_video(const Ov2VssModel& model, const ClipConfig& clip,
                                    const Dataset& data, int video) {
  std::vector<LabelMap> out;
  const int len = int(data.video(video).frames.size());
  for (int t = 0; t < len; ++t) out.push_back(predict_frame(model, clip, data, video, t));
  return out;
}

BaselineEstimate random_baseline_monte_carlo(std::span<const std::uint64_t> gt_pixels, int presented,
                                             std::span<const int> filter, int trials,
                                             std::uint64_t seed) {
  const int n = int(gt_pixels.size());
  if (presented < n) throw ValidationError("random baseline: fewer presented classes than labelled ones");
  std::mt19937_64 eng(seed);
  std::vector<double> samples;
  for (int r = 0; r < trials; ++r) {
    ConfusionAccumulator acc(presented, -1);
    // Multinomial split of each ground-truth row by sequential binomials.
    for (int g = 0; g < n; ++g) {
      std::uint64_t left = gt_pixels[std::size_t(g)];
      for (int p = 0; p < presented && left > 0; ++p) {
        std::uint64_t k = left;
        if (p + 1 < presented) {
          std::binomial_distribution<std::uint64_t> bin(left, 1.0 / double(presented - p));
          k = bin(eng);
        }
        left -= k;
        acc.add(g, p, k);
      }
    }
    samples.push_back(finalize(acc, filter).miou);
  }
  BaselineEstimate e;
  e.trials = trials;
  for (double s : samples) e.mean += s;
  e.mean /= double(trials);
  for (double s : samples) e.stddev += (s - e.mean) * (s - e.mean);
  e.stddev = trials > 1 ? std::sqrt(e.stddev / double(trials - 1)) : 0.0;
  return e;
}

double random_baseline_analytic(std::span<const std::uint64_t> gt_pixels, int presented,
                                std::span<const int> filter) {
  double total = 0;
  for (auto t : gt_pixels) total += double(t);
  if (total <= 0) throw ValidationError("random baseline: no labelled pixels");
  const double n = presented;
  double sum = 0;
  for (int c : filter) {
    const double t = c < int(gt_pixels.size()) ? double(gt_pixels[std::size_t(c)]) : 0.0;
    sum += (t / n) / (t + total / n - t / n);
  }
  return sum / double(filter.size());
}

std::filesystem::path write_report(const std::filesystem::path& results_dir, const MetricsReport& r,
                                   const Settings& settings, const std::vector<std::string>& names) {
  const auto path = results_dir / ("metrics_" + settings_fingerprint(settings) + "_" + r.filter_name + ".json");
  write_file_atomic(path, report_to_json(r, names).dump(2) + "\n");
  return path;
}

}  // namespace ov::inline OV2VSS_ABI
