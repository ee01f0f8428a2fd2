#pragma once

// Small model and dataset configurations that keep the f32 module tests fast:
// 16x16 frames, two pyramid levels, 8-wide text features.

#include <filesystem>

#include "ov2vss/config.hpp"
#include "ov2vss/synthdata.hpp"

namespace testutil {
inline namespace OV2VSS_ABI {

inline ov::KeyValues tiny_overrides() {
  return {{"encoders.levels", "2"},     {"encoders.channels", "4,8"}, {"encoders.text_dim", "8"},
          {"encoders.text_buckets", "256"}, {"encoders.pool_ratios", "1,2"}, {"rfe.heads", "2"},
          {"rfe.first_level", "1"},     {"vte.heads", "2"},         {"vte.pos_channels", "4"},
          {"vte.head_hidden", "4"},     {"clip.past_frames", "2"},  {"clip.spacing", "1"},
          {"train.crop", "16"},         {"train.iterations", "3"},  {"train.warmup_iters", "1"},
          {"train.batch_size", "1"},    {"train.lr", "1e-3"}};
}

inline ov::Settings tiny_settings(std::uint64_t seed = 1) {
  ov::Settings s;
  ov::apply_settings(s, tiny_overrides());
  s.seed = seed;
  return s;
}

inline ov::GeneratorSpec tiny_generator(std::uint64_t seed = 3) {
  ov::GeneratorSpec g;
  g.train_videos = 3;
  g.eval_videos = 2;
  g.frames = 6;
  g.height = 16;
  g.width = 16;
  g.min_radius = 2.5;
  g.max_radius = 4.0;
  g.max_speed = 1.0;
  g.jitter = 0.2;
  g.seed = seed;
  return g;
}

}  // namespace OV2VSS_ABI
}  // namespace testutil
