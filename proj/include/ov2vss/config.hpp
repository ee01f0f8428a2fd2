#pragma once

// Settings for the model, clip sampling and training, loadable from a flat
// `key = value` document or JSON. Every key is listed by valid_keys().

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ov2vss/common.hpp"

namespace ov::inline OV2VSS_ABI {

using KeyValues = std::map<std::string, std::string>;

// Accepts either a JSON object (nested objects flatten to dotted keys) or
// `key = value` lines with `#` comments.
KeyValues parse_config_text(const std::string& text);
KeyValues load_config_file(const std::filesystem::path& path);
// Parses "key=value" strings as given on a command line.
KeyValues parse_overrides(const std::vector<std::string>& items);

// Typed value parsing shared by every key/value consumer; errors name the key.
int parse_int(const std::string& key, const std::string& v);
double parse_double(const std::string& key, const std::string& v);
bool parse_bool(const std::string& key, const std::string& v);
// Items separated by '|' (or ',' when no '|' is present), trimmed.
std::vector<std::string> parse_list(const std::string& v);

struct EncoderConfig {
  std::string image_encoder = "toy-pyramid";
  std::string text_encoder = "toy-hash";
  std::string weights;  // optional checkpoint to take encoder.* parameters from
  int levels = 4;
  std::vector<int> channels{16, 32, 64, 128};
  int text_dim = 32;
  int text_buckets = 4096;
  std::vector<int> pool_ratios{1, 2, 4};
  std::vector<std::string> templates{"a photo of a {}", "a video frame of a {}",
                                     "there is a {} in the scene"};
  // Finest pyramid level feeding the dense visual feature of the cost volume.
  int visual_level = 1;
};

struct StcfConfig {
  bool raw_affinity = false;
  int conv_kernel = 3;
  int attn_dim = 0;  // 0: use the level's channel count
};

struct RfeConfig {
  bool enabled = true;
  int regions = 0;  // 0: number of seen classes
  int heads = 4;
  bool residual = true;
  int first_level = 2;
};

struct VteConfig {
  std::string fusion = "concat";         // concat | add
  std::string text_refine = "mhsa+ffn";  // mhsa | mhsa+ffn | off
  int pos_channels = 16;
  int heads = 4;
  int head_hidden = 16;
  int head_kernel = 3;
  std::string text_frames = "clip";  // clip | target
};

struct ModelConfig {
  EncoderConfig encoders;
  StcfConfig stcf;
  RfeConfig rfe;
  VteConfig vte;
};

struct ClipConfig {
  int past_frames = 3;
  int spacing = 3;
};

struct TrainConfig {
  double alpha = 1.0;
  double beta = 1.0;
  int iterations = 2000;
  int batch_size = 2;
  double lr = 3e-4;
  double weight_decay = 1e-2;
  int warmup_iters = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int crop = 64;
  double scale_min = 1.0;
  double scale_max = 1.5;
  std::string supervision = "target";  // target | all_frames
  bool mask_unseen = true;
  int log_every = 50;
  int checkpoint_every = 0;
};

struct Settings {
  ModelConfig model;
  ClipConfig clip;
  TrainConfig train;
  std::uint64_t seed = 0;
};

// Applies key/value pairs; unknown keys raise ConfigError listing valid keys.
void apply_settings(Settings& s, const KeyValues& kv);
KeyValues settings_to_key_values(const Settings& s);
std::vector<std::string> valid_keys();
// Checks cross-field invariants (alpha >= 0, lr > 0, warmup <= iterations, ...).
void validate_settings(const Settings& s);
// Short stable hex digest of the model-relevant settings.
std::string settings_fingerprint(const Settings& s);

}  // namespace ov::inline OV2VSS_ABI
