#pragma once

// Image and text encoders behind plug-in interfaces. The toy defaults are a
// strided convolutional pyramid and a hashed-token embedding table; both are
// selected by registry key (encoders.image / encoders.text).

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ov2vss/config.hpp"
#include "ov2vss/nn.hpp"

namespace ov::inline OV2VSS_ABI {

// Level 0 is the shallowest, highest-resolution map.
struct FeaturePyramid {
  std::vector<Tensor> levels;
  std::vector<Grid> grids;
  int depth() const { return int(levels.size()); }
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual FeaturePyramid encode(const Tensor& image, Grid grid) const = 0;
  virtual int levels() const = 0;
  virtual int channels(int level) const = 0;
};

// Each stage: 3x3 stride-2 conv + ReLU, then 3x3 conv + ReLU. Input height and
// width must be divisible by 2^levels.
class ToyPyramidBackbone final : public ImageEncoder {
 public:
  ToyPyramidBackbone(std::vector<int> channels, ParameterStore& store, Rng& rng);
  FeaturePyramid encode(const Tensor& image, Grid grid) const override;
  int levels() const override { return int(channels_.size()); }
  int channels(int level) const override { return channels_.at(std::size_t(level)); }

 private:
  std::vector<int> channels_;
  std::vector<Conv> down_;
  std::vector<Conv> refine_;
};

// Multi-ratio average pooling: pool at each ratio, resample back to the input
// grid, concatenate along channels and project back with `proj`.
Tensor pool_enhance(const Tensor& features, Grid grid, std::span<const int> ratios,
                    const Linear& proj);

class PoolEnhancer {
 public:
  PoolEnhancer(const std::vector<int>& channels, std::vector<int> ratios, ParameterStore& store,
               Rng& rng);
  Tensor operator()(int level, const Tensor& features, Grid grid) const;
  FeaturePyramid operator()(const FeaturePyramid& pyramid) const;

 private:
  std::vector<int> ratios_;
  std::vector<Linear> proj_;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  // One row per input string.
  virtual Tensor embed(const std::vector<std::string>& texts) const = 0;
  virtual int dim() const = 0;
};

// Lower-cased alphanumeric tokens hashed (FNV-1a) into a learnable table;
// a string's embedding is the mean of its token rows.
class HashTokenEmbedder final : public TextEmbedder {
 public:
  HashTokenEmbedder(int buckets, int dim, ParameterStore& store, Rng& rng);
  Tensor embed(const std::vector<std::string>& texts) const override;
  int dim() const override { return dim_; }
  int buckets() const { return buckets_; }

 private:
  int buckets_;
  int dim_;
  Tensor table_;
};

std::vector<std::string> tokenize(const std::string& text);
int token_bucket(const std::string& token, int buckets);

// Throws ConfigError unless the template holds exactly one "{}".
void validate_template(const std::string& tmpl);
std::string fill_template(const std::string& tmpl, const std::string& name);

// Row i is the mean over templates of the embedding of templates[k] filled
// with names[i].
Tensor encode_text(const std::vector<std::string>& names, const std::vector<std::string>& templates,
                   const TextEmbedder& embedder);

std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderConfig& cfg, ParameterStore& store,
                                                 Rng& rng);
std::unique_ptr<TextEmbedder> make_text_embedder(const EncoderConfig& cfg, ParameterStore& store,
                                                 Rng& rng);

}  // namespace ov::inline OV2VSS_ABI
