#pragma once

// Procedural labelled videos: coloured shapes ("red circle", "blue diamond",
// ...) moving over banded backgrounds. Held-out colour/shape composites are
// the unseen classes, so zero-shot transfer is measurable through shared
// words in the class names.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ov2vss/clipio.hpp"
#include "ov2vss/config.hpp"

namespace ov::inline OV2VSS_ABI {

struct GeneratorSpec {
  std::vector<std::string> shapes{"circle", "square", "triangle", "diamond"};
  std::vector<std::string> colors{"red", "green", "blue", "yellow"};
  // The first half (rounded up) fill the upper band, the rest the lower band.
  std::vector<std::string> backgrounds{"sky", "wall", "ground", "water"};
  std::vector<std::string> held_out{"red square", "blue triangle"};
  int train_videos = 40;
  int eval_videos = 10;
  int frames = 24;
  int height = 64;
  int width = 64;
  int min_objects = 1;
  int max_objects = 3;
  double min_radius = 6.0;
  double max_radius = 11.0;
  double max_speed = 2.0;  // bound on centre displacement per frame, pixels
  double jitter = 0.3;     // per-frame random velocity perturbation, pixels
  int ignore_border = 0;
  bool unseen_in_train = true;
  std::uint64_t seed = 0;
};

// gen.* keys (and seed); unknown keys raise ConfigError.
GeneratorSpec generator_spec_from(const KeyValues& kv);
std::vector<std::string> generator_keys();

// Backgrounds, then seen composites ("<color> <shape>", shapes outer), then
// held-out composites in the listed order.
ClassVocabulary build_vocabulary(const GeneratorSpec& spec);

struct ObjectTrack {
  int class_index = 0;
  std::string shape;
  std::string color;
  double radius = 0;
  std::vector<double> cx, cy;  // per frame
};

struct VideoPlan {
  int top_background = 0;
  int bottom_background = 0;
  int horizon = 0;
  std::vector<ObjectTrack> objects;  // drawn in order, later on top
};

enum class Split { kTrain, kEval };

// Deterministic from (seed, split, index).
VideoPlan plan_video(const GeneratorSpec& spec, const ClassVocabulary& vocab, Split split, int index);
void render_frame(const GeneratorSpec& spec, const VideoPlan& plan, int frame, std::uint64_t noise_seed,
                  RgbImage& image, LabelMap& mask);

bool shape_contains(const std::string& shape, double dx, double dy, double r);

// Writes out_root/train and out_root/eval in the dataset layout. Throws
// IoError when out_root exists and is not empty.
void generate(const GeneratorSpec& spec, const std::filesystem::path& out_root);
std::filesystem::path make_default_benchmark(const std::filesystem::path& out_root);

}  // namespace ov::inline OV2VSS_ABI
