#include "ov2vss/encoders.hpp"

#include <cctype>
#include <cmath>

namespace ov::inline OV2VSS_ABI {

ToyPyramidBackbone::ToyPyramidBackbone(std::vector<int> channels, ParameterStore& store, Rng& rng)
    : channels_(std::move(channels)) {
  int in = 3;
  for (std::size_t l = 0; l < channels_.size(); ++l) {
    const std::string name = "encoder.stage" + std::to_string(l + 1);
    down_.push_back(Conv::create(store, name + ".down", in, channels_[l], 3, 2, rng));
    refine_.push_back(Conv::create(store, name + ".refine", channels_[l], channels_[l], 3, 1, rng));
    in = channels_[l];
  }
}

FeaturePyramid ToyPyramidBackbone::encode(const Tensor& image, Grid grid) const {
  const int factor = 1 << levels();
  if (grid.h % factor != 0 || grid.w % factor != 0) {
    throw ShapeError("image size " + std::to_string(grid.h) + "x" + std::to_string(grid.w) +
                     " is not divisible by " + std::to_string(factor));
  }
  if (image.cols() != 3 || image.rows() != grid.rows()) throw ShapeError("encode: expected an RGB image");
  FeaturePyramid p;
  Tensor x = image;
  Grid g = grid;
  for (int l = 0; l < levels(); ++l) {
    x = relu(down_[std::size_t(l)](x, g));
    g = down_[std::size_t(l)].output_grid(g);
    x = relu(refine_[std::size_t(l)](x, g));
    p.levels.push_back(x);
    p.grids.push_back(g);
  }
  return p;
}

Tensor pool_enhance(const Tensor& features, Grid grid, std::span<const int> ratios, const Linear& proj) {
  std::vector<Tensor> parts;
  parts.reserve(ratios.size());
  for (int r : ratios) {
    if (r == 1) {
      parts.push_back(features);
      continue;
    }
    Tensor pooled = avg_pool(features, grid, r);
    Grid pg{grid.batch, (grid.h + r - 1) / r, (grid.w + r - 1) / r};
    parts.push_back(resample_bilinear(pooled, pg, grid.h, grid.w));
  }
  Tensor cat = parts.size() == 1 ? parts.front() : concat_cols(parts);
  return proj(cat);
}

PoolEnhancer::PoolEnhancer(const std::vector<int>& channels, std::vector<int> ratios,
                           ParameterStore& store, Rng& rng)
    : ratios_(std::move(ratios)) {
  for (std::size_t l = 0; l < channels.size(); ++l) {
    const int c = channels[l];
    const int in = c * int(ratios_.size());
    // Start as the average of the pooled branches so the enhanced map begins
    // close to the input.
    std::vector<Real> w(std::size_t(in) * c, Real(0));
    for (std::size_t r = 0; r < ratios_.size(); ++r) {
      for (int i = 0; i < c; ++i) w[(r * c + i) * c + i] = Real(1) / Real(ratios_.size());
    }
    for (auto& v : w) v += Real(rng.normal(0.0, 0.02));
    Linear lin;
    const std::string name = "encoder.pool" + std::to_string(l + 1);
    lin.weight = store.add_values(name + ".weight", std::move(w), in, c);
    lin.bias = store.add(name + ".bias", 1, c, Init::kZeros, rng);
    proj_.push_back(lin);
  }
}

Tensor PoolEnhancer::operator()(int level, const Tensor& features, Grid grid) const {
  return pool_enhance(features, grid, ratios_, proj_.at(std::size_t(level)));
}

FeaturePyramid PoolEnhancer::operator()(const FeaturePyramid& pyramid) const {
  FeaturePyramid out;
  out.grids = pyramid.grids;
  for (int l = 0; l < pyramid.depth(); ++l) {
    out.levels.push_back((*this)(l, pyramid.levels[std::size_t(l)], pyramid.grids[std::size_t(l)]));
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur.push_back(char(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int token_bucket(const std::string& token, int buckets) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return int(h % std::uint64_t(buckets));
}

HashTokenEmbedder::HashTokenEmbedder(int buckets, int dim, ParameterStore& store, Rng& rng)
    : buckets_(buckets), dim_(dim) {
  if (buckets < 1 || dim < 1) throw ConfigError("text embedder needs positive buckets and dim");
  std::vector<Real> v(std::size_t(buckets) * dim);
  const double sd = 1.0 / std::sqrt(double(dim));
  for (auto& x : v) x = Real(rng.normal(0.0, sd));
  table_ = store.add_values("encoder.text.table", std::move(v), buckets, dim);
}

Tensor HashTokenEmbedder::embed(const std::vector<std::string>& texts) const {
  std::vector<int> ids;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& t : texts) {
    const auto tokens = tokenize(t);
    if (tokens.empty()) throw ConfigError("text '" + t + "' has no tokens");
    spans.emplace_back(ids.size(), tokens.size());
    for (const auto& tok : tokens) ids.push_back(token_bucket(tok, buckets_));
  }
  Tensor rows = gather_rows(table_, ids);
  std::vector<Real> avg(texts.size() * ids.size(), Real(0));
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto [begin, count] = spans[i];
    for (std::size_t k = 0; k < count; ++k) avg[i * ids.size() + begin + k] = Real(1) / Real(count);
  }
  return matmul(Tensor::from(std::move(avg), int(texts.size()), int(ids.size())), rows);
}

void validate_template(const std::string& tmpl) {
  const auto first = tmpl.find("{}");
  if (first == std::string::npos) throw ConfigError("template '" + tmpl + "' has no {} placeholder");
  if (tmpl.find("{}", first + 2) != std::string::npos) {
    throw ConfigError("template '" + tmpl + "' has more than one {} placeholder");
  }
}

std::string fill_template(const std::string& tmpl, const std::string& name) {
  validate_template(tmpl);
  std::string out = tmpl;
  out.replace(out.find("{}"), 2, name);
  return out;
}

Tensor encode_text(const std::vector<std::string>& names, const std::vector<std::string>& templates,
                   const TextEmbedder& embedder) {
  if (templates.empty()) throw ConfigError("at least one prompt template is required");
  for (const auto& t : templates) validate_template(t);
  if (names.empty()) throw ConfigError("encode_text: empty class list");
  const std::size_t k = templates.size();
  std::vector<std::string> filled;
  filled.reserve(names.size() * k);
  for (const auto& n : names) {
    for (const auto& t : templates) filled.push_back(fill_template(t, n));
  }
  Tensor all = embedder.embed(filled);
  if (k == 1) return all;
  std::vector<Real> avg(names.size() * filled.size(), Real(0));
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) avg[i * filled.size() + i * k + j] = Real(1) / Real(k);
  }
  return matmul(Tensor::from(std::move(avg), int(names.size()), int(filled.size())), all);
}

std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderConfig& cfg, ParameterStore& store, Rng& rng) {
  if (cfg.image_encoder == "toy-pyramid") {
    return std::make_unique<ToyPyramidBackbone>(cfg.channels, store, rng);
  }
  throw ConfigError("unknown image encoder '" + cfg.image_encoder + "'; registered: toy-pyramid");
}

std::unique_ptr<TextEmbedder> make_text_embedder(const EncoderConfig& cfg, ParameterStore& store, Rng& rng) {
  if (cfg.text_encoder == "toy-hash") {
    return std::make_unique<HashTokenEmbedder>(cfg.text_buckets, cfg.text_dim, store, rng);
  }
  throw ConfigError("unknown text encoder '" + cfg.text_encoder + "'; registered: toy-hash");
}

}  // namespace ov::inline OV2VSS_ABI
