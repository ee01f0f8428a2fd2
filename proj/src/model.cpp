#include "ov2vss/model.hpp"

#include <numeric>

namespace ov::inline OV2VSS_ABI {

Tensor image_to_tensor(const RgbImage& img, const Manifest& m) {
  std::vector<Real> v(img.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = i % 3;
    v[i] = Real((double(img.data[i]) - m.mean[c]) / m.stddev[c]);
  }
  return Tensor::from(std::move(v), img.h * img.w, 3);
}

ClipInput make_clip_input(const VideoClipSample& s, const Manifest& m) {
  ClipInput in;
  for (const auto& f : s.past_frames) in.frames.push_back(image_to_tensor(f, m));
  in.frames.push_back(image_to_tensor(s.target_frame, m));
  if (!s.random_frame.data.empty()) in.random = image_to_tensor(s.random_frame, m);
  in.grid = {1, s.target_frame.h, s.target_frame.w};
  return in;
}

namespace {

int visual_width(const EncoderConfig& e) {
  return std::accumulate(e.channels.begin() + (e.visual_level - 1), e.channels.end(), 0);
}

}  // namespace

Ov2VssModel::Ov2VssModel(const Settings& settings, int aux_classes, int regions)
    : settings_(settings), aux_classes_(aux_classes), regions_(regions) {
  validate_settings(settings);
  if (aux_classes < 1) throw ConfigError("the auxiliary head needs at least one class");
  if (regions < 1) throw ConfigError("rfe needs at least one region");
  const ModelConfig& m = settings.model;
  const int dim = m.encoders.text_dim;
  Rng rng(derive_seed(settings.seed, 0x6d6f64656cULL));
  backbone_ = make_image_encoder(m.encoders, store_, rng);
  pool_ = std::make_unique<PoolEnhancer>(m.encoders.channels, m.encoders.pool_ratios, store_, rng);
  text_ = make_text_embedder(m.encoders, store_, rng);
  stcf_ = std::make_unique<SpatialTemporalFusion>(m.stcf, m.encoders.channels, dim, aux_classes,
                                                  store_, rng);
  if (m.rfe.enabled) {
    rfe_ = std::make_unique<RandomFrameEnhancement>(m.rfe, m.encoders.channels, dim, regions,
                                                    store_, rng);
  }
  vte_ = std::make_unique<VideoTextDecoder>(m.vte, dim, visual_width(m.encoders),
                                            m.encoders.channels.front(), store_, rng);
}

ModelOutput Ov2VssModel::forward(const ClipInput& clip, const std::vector<std::string>& names) const {
  if (clip.frames.empty()) throw ShapeError("forward: empty clip");
  if (names.empty()) throw ShapeError("forward: empty vocabulary");
  const ModelConfig& m = settings_.model;

  std::vector<FeaturePyramid> raw, enhanced;
  for (const auto& f : clip.frames) {
    raw.push_back(backbone_->encode(f, clip.grid));
    enhanced.push_back((*pool_)(raw.back()));
  }
  FusedFrameFeature fused = stcf_->fuse_clip(raw, enhanced);

  ModelOutput out;
  out.fusion_steps = fused.steps;
  out.aux_logits = stcf_->auxiliary_logits(fused.fused);
  out.aux_grid = fused.grid;

  Tensor context = fused.fused;
  if (rfe_) {
    if (!clip.random.defined()) throw ShapeError("forward: RFE is enabled but no random frame was given");
    context = (*rfe_)(context, (*pool_)(backbone_->encode(clip.random, clip.grid)));
  }

  // Dense visual feature: levels from visual_level upward, collapsed onto
  // that level's grid and projected to the text width.
  const int vl = m.encoders.visual_level - 1;
  Grid vgrid;
  std::vector<Tensor> visual;
  for (const auto& p : enhanced) {
    visual.push_back(collapse_random_pyramid(p, vl, vte_->visual_proj(), &vgrid));
  }
  const Tensor& visual_target = visual.back();
  Tensor visual_context = m.vte.text_frames == "clip" ? mean_of(visual) : visual_target;

  Tensor text = encode_text(names, m.encoders.templates, *text_);
  out.text = refine_text(text, visual_context, vte_->refiner());
  out.cost = build_cost_volume(out.text, visual_target, vgrid);

  Tensor refined = refine_cost_volume(out.cost.values, out.cost.grid, vte_->cost_conv());
  const FeaturePyramid& target = raw.back();
  Tensor pos = resample_bilinear(target.levels.front(), target.grids.front(), vgrid.h, vgrid.w);
  Tensor xhat = fuse_position(refined, out.cost.grid, pos, vte_->position());
  Tensor small = decode(xhat, out.cost.grid, context, fused.grid, vte_->head());
  out.logits = resample_bilinear(small, fused.grid, clip.grid.h, clip.grid.w);
  out.grid = {1, clip.grid.h, clip.grid.w};
  return out;
}

std::vector<int> Ov2VssModel::predict(const ClipInput& clip, const std::vector<std::string>& names) const {
  NoGradGuard guard;
  return argmax_rows(forward(clip, names).logits);
}

void Ov2VssModel::load_values(const std::vector<NamedParameter>& values, const std::string& prefix) {
  for (const auto& p : store_.all()) {
    if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
    const NamedParameter* src = nullptr;
    for (const auto& v : values) {
      if (v.name == p.name) {
        src = &v;
        break;
      }
    }
    if (!src) throw ShapeError("parameter '" + p.name + "' is missing from the source");
    if (src->tensor.rows() != p.tensor.rows() || src->tensor.cols() != p.tensor.cols()) {
      throw ShapeError("parameter '" + p.name + "' has shape " + std::to_string(src->tensor.rows()) +
                       "x" + std::to_string(src->tensor.cols()) + ", expected " +
                       std::to_string(p.tensor.rows()) + "x" + std::to_string(p.tensor.cols()));
    }
    Tensor dst = p.tensor;
    auto d = dst.mutable_data();
    auto s = src->tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace ov::inline OV2VSS_ABI
