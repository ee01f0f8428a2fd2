#include "ov2vss/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ov::inline OV2VSS_ABI {

double combine_loss(double l_main, double l_aux, double alpha, double beta) {
  return alpha * l_main + beta * l_aux;
}

Tensor combine_loss(const Tensor& l_main, const Tensor& l_aux, double alpha, double beta) {
  return add(scale(l_main, Real(alpha)), scale(l_aux, Real(beta)));
}

VideoClipSample mask_unseen(VideoClipSample s, const ClassVocabulary& vocab) {
  std::vector<std::size_t> footprint;
  for (std::size_t i = 0; i < s.target_mask.labels.size(); ++i) {
    int& l = s.target_mask.labels[i];
    if (l != vocab.ignore_index && vocab.is_unseen(l)) {
      l = vocab.ignore_index;
      footprint.push_back(i);
    }
  }
  for (auto& m : s.past_masks) {
    if (!m) continue;
    for (int& l : m->labels) {
      if (l != vocab.ignore_index && vocab.is_unseen(l)) l = vocab.ignore_index;
    }
  }
  if (footprint.empty()) return s;
  auto zero = [&](RgbImage& img) {
    if (img.data.empty()) return;
    for (std::size_t i : footprint) std::fill_n(img.data.begin() + std::ptrdiff_t(i * 3), 3, 0.f);
  };
  for (auto& f : s.past_frames) zero(f);
  zero(s.target_frame);
  zero(s.random_frame);
  return s;
}

double learning_rate_at(const TrainConfig& cfg, int step) {
  if (cfg.warmup_iters <= 0 || step >= cfg.warmup_iters) return cfg.lr;
  return cfg.lr * double(std::max(step, 0)) / double(cfg.warmup_iters);
}

AdamW::AdamW(const TrainConfig& cfg, const ParameterStore& store)
    : beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps), weight_decay_(cfg.weight_decay) {
  for (const auto& p : store.all()) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void AdamW::step(ParameterStore& store, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  const auto& params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : double(g[j]);
      m[j] = beta1_ * m[j] + (1 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1 - beta2_) * gj * gj;
      double x = double(w[j]);
      x -= lr * weight_decay_ * x;
      x -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      w[j] = Real(x);
    }
  }
}

AugmentParams draw_augmentation(const TrainConfig& cfg, int h, int w, Rng& rng) {
  const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
  AugmentParams p;
  p.scaled_h = std::max(int(std::lround(h * s)), 1);
  p.scaled_w = std::max(int(std::lround(w * s)), 1);
  p.crop = cfg.crop;
  if (p.crop > p.scaled_h || p.crop > p.scaled_w) {
    throw ConfigError("train.crop " + std::to_string(p.crop) + " exceeds the scaled frame " +
                      std::to_string(p.scaled_h) + "x" + std::to_string(p.scaled_w));
  }
  p.y0 = rng.uniform_int(0, p.scaled_h - p.crop);
  p.x0 = rng.uniform_int(0, p.scaled_w - p.crop);
  return p;
}

VideoClipSample augment(const VideoClipSample& s, const AugmentParams& p) {
  auto frame = [&](const RgbImage& img) {
    if (img.data.empty()) return img;
    return crop(resize_bilinear(img, p.scaled_h, p.scaled_w), p.y0, p.x0, p.crop, p.crop);
  };
  auto mask = [&](const LabelMap& m) {
    return crop(resize_nearest(m, p.scaled_h, p.scaled_w), p.y0, p.x0, p.crop, p.crop);
  };
  VideoClipSample out;
  out.video = s.video;
  out.timestamps = s.timestamps;
  for (const auto& f : s.past_frames) out.past_frames.push_back(frame(f));
  out.target_frame = frame(s.target_frame);
  out.random_frame = frame(s.random_frame);
  out.target_mask = mask(s.target_mask);
  for (const auto& m : s.past_masks) {
    out.past_masks.push_back(m ? std::optional<LabelMap>(mask(*m)) : std::nullopt);
  }
  return out;
}

std::vector<int> downsample_labels(const LabelMap& mask, int out_h, int out_w) {
  return resize_nearest(mask, out_h, out_w).labels;
}

LossLabels to_loss_labels(std::span<const int> mask, const ClassVocabulary& vocab) {
  std::vector<int> position(std::size_t(vocab.size()), -1);
  for (std::size_t i = 0; i < vocab.seen.size(); ++i) position[std::size_t(vocab.seen[i])] = int(i);
  LossLabels out;
  out.labels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int l = mask[i];
    int mapped = -1;
    if (l != vocab.ignore_index) {
      if (l < 0 || l >= vocab.size()) throw ValidationError("label " + std::to_string(l) + " outside the vocabulary");
      mapped = position[std::size_t(l)];
      if (mapped < 0) ++out.leaked;
    }
    if (mapped >= 0) ++out.supervised;
    out.labels[i] = mapped;
  }
  return out;
}

int default_regions(const Settings& s, const ClassVocabulary& vocab) {
  return s.model.rfe.regions > 0 ? s.model.rfe.regions : int(vocab.seen.size());
}

namespace {

std::string format_log(const LogEntry& e) {
  std::ostringstream o;
  o << e.iteration << ',' << std::setprecision(9) << e.l_main << ',' << e.l_aux << ',' << e.loss << ','
    << e.lr;
  return o.str();
}

std::int64_t unmasked_input_pixels(const VideoClipSample& original, const VideoClipSample& masked,
                                   const ClassVocabulary& vocab) {
  std::int64_t n = 0;
  auto check = [&](const RgbImage& img) {
    if (img.data.empty()) return;
    for (std::size_t i = 0; i < original.target_mask.labels.size(); ++i) {
      const int l = original.target_mask.labels[i];
      if (l == vocab.ignore_index || !vocab.is_unseen(l)) continue;
      for (int c = 0; c < 3; ++c) n += img.data[i * 3 + std::size_t(c)] != 0.f;
    }
  };
  for (const auto& f : masked.past_frames) check(f);
  check(masked.target_frame);
  check(masked.random_frame);
  return n;
}

}  // namespace

TrainResult train_loop(const Settings& settings, const Dataset& data, const TrainOptions& opts) {
  validate_settings(settings);
  const TrainConfig& tc = settings.train;
  const ClassVocabulary& vocab = data.vocab();
  if (data.video_count() == 0) throw ValidationError("training dataset has no videos");
  std::vector<std::pair<int, int>> targets;  // (video, frame)
  for (int v = 0; v < data.video_count(); ++v) {
    for (int t : data.video(v).annotated) targets.emplace_back(v, t);
  }
  if (targets.empty()) throw ValidationError("training dataset has no annotated frames");
  if (vocab.seen.empty()) throw ValidationError("vocabulary has no seen classes");

  TrainResult result;
  result.meta.settings = settings;
  result.meta.vocabulary = vocab.names;
  result.meta.seen = vocab.seen;
  result.meta.unseen = vocab.unseen;
  result.meta.aux_classes = int(vocab.seen.size());
  result.meta.regions = default_regions(settings, vocab);
  result.model = std::make_unique<Ov2VssModel>(settings, result.meta.aux_classes, result.meta.regions);
  Ov2VssModel& model = *result.model;
  if (!settings.model.encoders.weights.empty()) {
    model.load_values(load_checkpoint(settings.model.encoders.weights).params, "encoder.");
  }

  const std::vector<std::string> names = vocab.seen_names();
  AdamW opt(tc, model.parameters());
  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log_file.open(opts.out_dir / "train_log.csv", std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (opts.out_dir / "train_log.csv").string());
    log_file << "iteration,l_main,l_aux,loss,lr\n";
  }

  for (int it = 1; it <= tc.iterations; ++it) {
    model.parameters().zero_grad();
    LogEntry entry;
    entry.iteration = it;
    entry.lr = learning_rate_at(tc, it);
    for (int b = 0; b < tc.batch_size; ++b) {
      const std::uint64_t seed = derive_seed(settings.seed, std::uint64_t(it), std::uint64_t(b));
      Rng rng(seed);
      const auto [video, target] = targets[std::size_t(rng.uniform_int(0, int(targets.size()) - 1))];
      VideoClipSample s = data.sample(video, target, settings.clip, FrameMode::kTrain, seed);
      s = augment(s, draw_augmentation(tc, s.target_frame.h, s.target_frame.w, rng));
      if (tc.mask_unseen) {
        VideoClipSample masked = mask_unseen(s, vocab);
        result.audit.unseen_input_pixels += unmasked_input_pixels(s, masked, vocab);
        s = std::move(masked);
      }
      const ClipInput input = make_clip_input(s, data.manifest());
      ModelOutput out = model.forward(input, names);

      LossLabels main = to_loss_labels(s.target_mask.labels, vocab);
      const auto aux_mask = downsample_labels(s.target_mask, out.aux_grid.h, out.aux_grid.w);
      LossLabels aux = to_loss_labels(aux_mask, vocab);
      result.audit.unseen_label_pixels += main.leaked + aux.leaked;
      result.audit.supervised_pixels += main.supervised + aux.supervised;
      Tensor l_main = cross_entropy(out.logits, main.labels);

      if (tc.supervision == "all_frames") {
        std::vector<Tensor> terms{l_main};
        for (std::size_t f = 0; f < s.past_frames.size(); ++f) {
          if (!s.past_masks[f] || s.timestamps[f] == s.timestamps[s.past_frames.size()]) continue;
          ClipInput single;
          single.frames = {input.frames[f]};
          single.random = input.random;
          single.grid = input.grid;
          LossLabels lab = to_loss_labels(s.past_masks[f]->labels, vocab);
          result.audit.unseen_label_pixels += lab.leaked;
          result.audit.supervised_pixels += lab.supervised;
          terms.push_back(cross_entropy(model.forward(single, names).logits, lab.labels));
        }
        l_main = mean_of(terms);
      }
      Tensor l_aux = cross_entropy(out.aux_logits, aux.labels);
      Tensor loss = combine_loss(l_main, l_aux, tc.alpha, tc.beta);
      if (!std::isfinite(double(loss.item()))) {
        throw Error("numeric", "non-finite loss at iteration " + std::to_string(it) + ", batch seed " +
                                   std::to_string(seed));
      }
      entry.l_main += double(l_main.item()) / tc.batch_size;
      entry.l_aux += double(l_aux.item()) / tc.batch_size;
      entry.loss += double(loss.item()) / tc.batch_size;
      scale(loss, Real(1.0 / tc.batch_size)).backward();
    }
    opt.step(model.parameters(), entry.lr);
    result.meta.iteration = it;
    result.log.push_back(entry);
    if (log_file) log_file << format_log(entry) << '\n';
    if (opts.on_log && (it % std::max(tc.log_every, 1) == 0 || it == tc.iterations)) opts.on_log(entry);
    if (!opts.out_dir.empty() && tc.checkpoint_every > 0 && it % tc.checkpoint_every == 0) {
      save_checkpoint(opts.out_dir / ("checkpoint_" + std::to_string(it) + ".bin"), result.meta,
                      model.parameters());
    }
  }
  if (!opts.out_dir.empty()) {
    log_file.flush();
    save_checkpoint(opts.out_dir / "checkpoint.bin", result.meta, model.parameters());
  }
  return result;
}

}  // namespace ov::inline OV2VSS_ABI
