#include "ov2vss/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "ov2vss/nn.hpp"

namespace ov::inline OV2VSS_ABI {

namespace {

using Rgb = std::array<float, 3>;

Rgb hashed_color(const std::string& name) {
  // FNV-1a keeps the colour stable across standard libraries.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
  h = derive_seed(0, h);
  Rgb c;
  for (auto& x : c) {
    x = float(0.2 + 0.6 * double(h & 0xffu) / 255.0);
    h >>= 8;
  }
  return c;
}

Rgb object_color(const std::string& name) {
  static const std::map<std::string, Rgb> table{{"red", {0.85f, 0.15f, 0.12f}},
                                                {"green", {0.15f, 0.72f, 0.2f}},
                                                {"blue", {0.15f, 0.3f, 0.92f}},
                                                {"yellow", {0.92f, 0.85f, 0.12f}}};
  const auto it = table.find(name);
  return it != table.end() ? it->second : hashed_color(name);
}

Rgb background_color(const std::string& name) {
  static const std::map<std::string, Rgb> table{{"sky", {0.6f, 0.78f, 0.95f}},
                                                {"wall", {0.58f, 0.52f, 0.48f}},
                                                {"ground", {0.42f, 0.33f, 0.2f}},
                                                {"water", {0.1f, 0.28f, 0.42f}}};
  const auto it = table.find(name);
  return it != table.end() ? it->second : hashed_color(name);
}

// Multiplicative texture per background kind.
float texture(const std::string& name, int x, int y, int frame, int horizon, Rng& rng) {
  if (name == "sky") return float(1.0 + 0.12 * (1.0 - double(y) / std::max(horizon, 1)));
  if (name == "wall") {
    const bool mortar = y % 6 == 0 || (x + (y / 6 % 2) * 4) % 8 == 0;
    return mortar ? 0.78f : 1.0f;
  }
  if (name == "ground") return float(0.85 + 0.3 * rng.uniform());
  if (name == "water") return float(1.0 + 0.18 * std::sin(0.6 * x + 0.9 * frame + 0.8 * y));
  return float(0.9 + 0.2 * rng.uniform());
}

std::string composite(const std::string& color, const std::string& shape) { return color + " " + shape; }

std::filesystem::path video_dir(const std::filesystem::path& root, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%03d", i);
  return root / buf;
}

float quantize(float v) { return std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f; }

}  // namespace

std::vector<std::string> generator_keys() {
  return {"gen.shapes",      "gen.colors",      "gen.backgrounds", "gen.held_out",   "gen.train_videos",
          "gen.eval_videos", "gen.frames",      "gen.height",      "gen.width",      "gen.min_objects",
          "gen.max_objects", "gen.min_radius",  "gen.max_radius",  "gen.max_speed",  "gen.jitter",
          "gen.ignore_border", "gen.unseen_in_train", "gen.seed",  "seed"};
}

GeneratorSpec generator_spec_from(const KeyValues& kv) {
  GeneratorSpec s;
  for (const auto& [k, v] : kv) {
    if (k == "gen.shapes") s.shapes = parse_list(v);
    else if (k == "gen.colors") s.colors = parse_list(v);
    else if (k == "gen.backgrounds") s.backgrounds = parse_list(v);
    else if (k == "gen.held_out") s.held_out = parse_list(v);
    else if (k == "gen.train_videos") s.train_videos = parse_int(k, v);
    else if (k == "gen.eval_videos") s.eval_videos = parse_int(k, v);
    else if (k == "gen.frames") s.frames = parse_int(k, v);
    else if (k == "gen.height") s.height = parse_int(k, v);
    else if (k == "gen.width") s.width = parse_int(k, v);
    else if (k == "gen.min_objects") s.min_objects = parse_int(k, v);
    else if (k == "gen.max_objects") s.max_objects = parse_int(k, v);
    else if (k == "gen.min_radius") s.min_radius = parse_double(k, v);
    else if (k == "gen.max_radius") s.max_radius = parse_double(k, v);
    else if (k == "gen.max_speed") s.max_speed = parse_double(k, v);
    else if (k == "gen.jitter") s.jitter = parse_double(k, v);
    else if (k == "gen.ignore_border") s.ignore_border = parse_int(k, v);
    else if (k == "gen.unseen_in_train") s.unseen_in_train = parse_bool(k, v);
    else if (k == "gen.seed" || k == "seed") s.seed = std::uint64_t(std::stoull(v));
    else {
      std::string valid;
      for (const auto& key : generator_keys()) valid += (valid.empty() ? "" : ", ") + key;
      throw ConfigError("unknown generator key '" + k + "'; valid keys: " + valid);
    }
  }
  if (s.shapes.empty() || s.colors.empty() || s.backgrounds.empty()) {
    throw ConfigError("generator needs at least one shape, colour and background");
  }
  if (s.frames < 1 || s.height < 8 || s.width < 8) throw ConfigError("generator frame size or count too small");
  if (s.min_objects < 0 || s.max_objects < s.min_objects) throw ConfigError("gen.min_objects/max_objects inconsistent");
  if (s.min_radius <= 0 || s.max_radius < s.min_radius) throw ConfigError("gen.min_radius/max_radius inconsistent");
  if (2 * s.max_radius >= std::min(s.height, s.width)) throw ConfigError("gen.max_radius too large for the frame");
  if (s.max_speed < 0 || s.jitter < 0) throw ConfigError("gen.max_speed and gen.jitter must be non-negative");
  return s;
}

ClassVocabulary build_vocabulary(const GeneratorSpec& spec) {
  ClassVocabulary v;
  v.names = spec.backgrounds;
  std::vector<std::string> held;
  for (const auto& h : spec.held_out) {
    bool found = false;
    for (const auto& sh : spec.shapes) {
      for (const auto& c : spec.colors) found = found || composite(c, sh) == h;
    }
    if (!found) throw ConfigError("held-out class '" + h + "' is not a colour/shape composite");
    held.push_back(h);
  }
  for (const auto& sh : spec.shapes) {
    for (const auto& c : spec.colors) {
      const std::string name = composite(c, sh);
      if (std::find(held.begin(), held.end(), name) == held.end()) v.names.push_back(name);
    }
  }
  const int n_seen = int(v.names.size());
  v.names.insert(v.names.end(), held.begin(), held.end());
  for (int i = 0; i < int(v.names.size()); ++i) (i < n_seen ? v.seen : v.unseen).push_back(i);
  v.validate();
  return v;
}

bool shape_contains(const std::string& shape, double dx, double dy, double r) {
  if (shape == "circle") return dx * dx + dy * dy <= r * r;
  if (shape == "square") return std::max(std::abs(dx), std::abs(dy)) <= 0.85 * r;
  if (shape == "diamond") return std::abs(dx) + std::abs(dy) <= r;
  if (shape == "triangle") {
    // Apex up at (0, -r), base at y = 0.7 r with half-width 0.95 r.
    if (dy > 0.7 * r || dy < -r) return false;
    return std::abs(dx) <= 0.95 * r * (dy + r) / (1.7 * r);
  }
  // Unknown shapes: a regular polygon keyed on the name length.
  const int sides = 5 + int(shape.size() % 3);
  const double a = std::atan2(dy, dx);
  const double sector = 2 * std::numbers::pi / sides;
  const double rel = std::fmod(a + 2 * std::numbers::pi, sector) - sector / 2;
  return std::hypot(dx, dy) * std::cos(rel) <= r * std::cos(sector / 2);
}

VideoPlan plan_video(const GeneratorSpec& spec, const ClassVocabulary& vocab, Split split, int index) {
  Rng rng(derive_seed(spec.seed, split == Split::kTrain ? 1 : 2, std::uint64_t(index)));
  const int nb = int(spec.backgrounds.size());
  const int top_n = (nb + 1) / 2;
  VideoPlan p;
  p.top_background = rng.uniform_int(0, top_n - 1);
  p.bottom_background = nb > top_n ? top_n + rng.uniform_int(0, nb - top_n - 1) : p.top_background;
  p.horizon = nb > 1 ? rng.uniform_int(int(0.35 * spec.height), int(0.65 * spec.height)) : spec.height;

  std::vector<int> seen_objects, unseen_objects;
  for (int c : vocab.seen) {
    if (c >= nb) seen_objects.push_back(c);
  }
  for (int c : vocab.unseen) unseen_objects.push_back(c);
  std::vector<int> pool = seen_objects;
  if (split == Split::kEval || spec.unseen_in_train) pool.insert(pool.end(), unseen_objects.begin(), unseen_objects.end());
  std::sort(pool.begin(), pool.end());
  if (pool.empty()) return p;

  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  const double step_max = std::max(spec.max_speed - spec.jitter * std::numbers::sqrt2, 0.0);
  for (int o = 0; o < count; ++o) {
    ObjectTrack t;
    const bool force_unseen = split == Split::kEval && o == 0 && !unseen_objects.empty();
    t.class_index = force_unseen ? unseen_objects[std::size_t(rng.uniform_int(0, int(unseen_objects.size()) - 1))]
                                 : pool[std::size_t(rng.uniform_int(0, int(pool.size()) - 1))];
    const std::string& name = vocab.names[std::size_t(t.class_index)];
    const auto space = name.find(' ');
    t.color = name.substr(0, space);
    t.shape = name.substr(space + 1);
    t.radius = rng.uniform(spec.min_radius, spec.max_radius);
    double x = rng.uniform(t.radius, spec.width - t.radius);
    double y = rng.uniform(t.radius, spec.height - t.radius);
    const double angle = rng.uniform(0.0, 2 * std::numbers::pi);
    const double speed = rng.uniform(0.25 * step_max, step_max);
    double vx = speed * std::cos(angle), vy = speed * std::sin(angle);
    for (int f = 0; f < spec.frames; ++f) {
      if (f > 0) {
        x += vx + rng.uniform(-spec.jitter, spec.jitter);
        y += vy + rng.uniform(-spec.jitter, spec.jitter);
        // Reflect at the borders so objects stay fully visible.
        const double lo_x = t.radius, hi_x = spec.width - t.radius;
        const double lo_y = t.radius, hi_y = spec.height - t.radius;
        if (x < lo_x) { x = 2 * lo_x - x; vx = -vx; }
        if (x > hi_x) { x = 2 * hi_x - x; vx = -vx; }
        if (y < lo_y) { y = 2 * lo_y - y; vy = -vy; }
        if (y > hi_y) { y = 2 * hi_y - y; vy = -vy; }
      }
      t.cx.push_back(x);
      t.cy.push_back(y);
    }
    p.objects.push_back(std::move(t));
  }
  return p;
}

void render_frame(const GeneratorSpec& spec, const VideoPlan& plan, int frame, std::uint64_t noise_seed,
                  RgbImage& image, LabelMap& mask) {
  Rng rng(derive_seed(noise_seed, std::uint64_t(frame)));
  image = RgbImage(spec.height, spec.width);
  mask = LabelMap(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int bg = y < plan.horizon ? plan.top_background : plan.bottom_background;
      const std::string& name = spec.backgrounds[std::size_t(bg)];
      const Rgb base = background_color(name);
      const float t = texture(name, x, y, frame, plan.horizon, rng);
      int label = bg;
      Rgb c{base[0] * t, base[1] * t, base[2] * t};
      for (const auto& o : plan.objects) {
        const double dx = x + 0.5 - o.cx[std::size_t(frame)];
        const double dy = y + 0.5 - o.cy[std::size_t(frame)];
        if (shape_contains(o.shape, dx, dy, o.radius)) {
          label = o.class_index;
          c = object_color(o.color);
        }
      }
      float* px = image.px(y, x);
      for (int k = 0; k < 3; ++k) px[k] = quantize(c[std::size_t(k)] + float(rng.uniform(-0.03, 0.03)));
      const bool border = x < spec.ignore_border || y < spec.ignore_border ||
                          x >= spec.width - spec.ignore_border || y >= spec.height - spec.ignore_border;
      mask.at(y, x) = border ? kDefaultIgnoreIndex : label;
    }
  }
}

void generate(const GeneratorSpec& spec, const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  if (fs::exists(out_root) && !fs::is_empty(out_root)) {
    throw IoError("output directory " + out_root.string() + " exists and is not empty");
  }
  const ClassVocabulary vocab = build_vocabulary(spec);

  struct SplitInfo {
    Split split;
    std::string name;
    int videos;
  };
  const SplitInfo splits[] = {{Split::kTrain, "train", spec.train_videos}, {Split::kEval, "eval", spec.eval_videos}};

  // Channel statistics come from the training split (eval if there is none).
  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (const auto& s : splits) {
    if (s.videos == 0) continue;
    const fs::path root = out_root / s.name;
    for (int v = 0; v < s.videos; ++v) {
      const VideoPlan plan = plan_video(spec, vocab, s.split, v);
      const std::uint64_t noise = derive_seed(spec.seed, s.split == Split::kTrain ? 3 : 4, std::uint64_t(v));
      const fs::path dir = video_dir(root, v);
      fs::create_directories(dir / "frames");
      fs::create_directories(dir / "masks");
      for (int f = 0; f < spec.frames; ++f) {
        RgbImage img;
        LabelMap mask;
        render_frame(spec, plan, f, noise, img, mask);
        write_png_rgb(dir / "frames" / frame_file_name(f), img);
        write_png_labels(dir / "masks" / frame_file_name(f), mask);
        if (s.split == Split::kTrain || spec.train_videos == 0) {
          for (std::size_t i = 0; i < img.data.size(); ++i) {
            sum[i % 3] += img.data[i];
            sq[i % 3] += double(img.data[i]) * img.data[i];
          }
          count += double(img.h) * img.w;
        }
      }
    }
    write_vocabulary(root, vocab);
  }
  for (const auto& s : splits) {
    if (s.videos == 0) continue;
    Manifest m;
    m.height = spec.height;
    m.width = spec.width;
    for (int v = 0; v < s.videos; ++v) m.videos.push_back(video_dir(out_root / s.name, v).filename().string());
    for (int c = 0; c < 3; ++c) {
      m.mean[std::size_t(c)] = sum[std::size_t(c)] / count;
      m.stddev[std::size_t(c)] =
          std::sqrt(std::max(sq[std::size_t(c)] / count - m.mean[std::size_t(c)] * m.mean[std::size_t(c)], 1e-12));
    }
    write_manifest(out_root / s.name, m);
  }
}

std::filesystem::path make_default_benchmark(const std::filesystem::path& out_root) {
  generate(GeneratorSpec{}, out_root);
  return out_root;
}

}  // namespace ov::inline OV2VSS_ABI
