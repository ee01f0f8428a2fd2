#include <doctest.h>

#include <fstream>
#include <numeric>

#include "ov2vss/train.hpp"
#include "test_util.hpp"
#include "tiny_setup.hpp"

using namespace ov;
using testutil::tiny_settings;

namespace {

ClassVocabulary four_classes() {
  ClassVocabulary v;
  v.names = {"sky", "ground", "red square", "blue circle"};
  v.seen = {0, 1};
  v.unseen = {2, 3};
  return v;
}

RgbImage ramp(int h, int w, float offset) {
  RgbImage img(h, w);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = offset + float(i % 97) / 200.f;
  return img;
}

VideoClipSample make_sample(const LabelMap& mask) {
  VideoClipSample s;
  for (int i = 0; i < 2; ++i) {
    s.past_frames.push_back(ramp(mask.h, mask.w, 0.1f * float(i + 1)));
    s.past_masks.push_back(mask);
  }
  s.target_frame = ramp(mask.h, mask.w, 0.3f);
  s.random_frame = ramp(mask.h, mask.w, 0.4f);
  s.target_mask = mask;
  s.timestamps = {0, 1, 2, 5};
  return s;
}

// Loaded once: three short 16x16 videos with unseen objects present.
const Dataset& tiny_data() {
  static testutil::TempDir dir("train_data");
  static const Dataset d = [] {
    generate(testutil::tiny_generator(), dir.path());
    return Dataset::load(dir.path() / "train");
  }();
  return d;
}

std::vector<double> flatten(const ParameterStore& s) {
  std::vector<double> out;
  for (const auto& p : s.all())
    for (Real v : p.tensor.data()) out.push_back(double(v));
  return out;
}

}  // namespace

TEST_CASE("combined loss") {
  CHECK(combine_loss(0.5, 0.3, 1, 1) == doctest::Approx(0.8));
  CHECK(combine_loss(1.7, 0.0, 2, 5) == doctest::Approx(3.4));
  Settings s;
  CHECK(s.train.alpha == 1.0);
  CHECK(s.train.beta == 1.0);
  const Tensor t = combine_loss(Tensor::from({2}, 1, 1), Tensor::from({3}, 1, 1), 0.5, 2);
  CHECK(double(t.item()) == doctest::Approx(7.0));
}

TEST_CASE("linear warm-up") {
  TrainConfig c;
  c.lr = 2e-4;
  c.warmup_iters = 1500;
  c.iterations = 4000;
  CHECK(learning_rate_at(c, 750) == doctest::Approx(0.5 * 2e-4));
  CHECK(learning_rate_at(c, 1) == doctest::Approx(2e-4 / 1500));
  CHECK(learning_rate_at(c, 1500) == 2e-4);
  CHECK(learning_rate_at(c, 3999) == 2e-4);
  c.warmup_iters = 0;
  CHECK(learning_rate_at(c, 1) == 2e-4);
}

TEST_CASE("masking unseen classes") {
  const ClassVocabulary v = four_classes();
  SUBCASE("no unseen pixels: unchanged") {
    LabelMap m(4, 4, 1);
    const VideoClipSample s = make_sample(m);
    const VideoClipSample out = mask_unseen(s, v);
    CHECK(out.target_frame.data == s.target_frame.data);
    CHECK(out.random_frame.data == s.random_frame.data);
    CHECK(out.target_mask == s.target_mask);
  }
  SUBCASE("all unseen: ignored labels, black frames") {
    const VideoClipSample out = mask_unseen(make_sample(LabelMap(4, 4, 3)), v);
    for (int l : out.target_mask.labels) CHECK(l == v.ignore_index);
    for (const auto& f : out.past_frames)
      for (float x : f.data) CHECK(x == 0.f);
    for (float x : out.random_frame.data) CHECK(x == 0.f);
  }
  SUBCASE("half unseen: exactly the footprint changes") {
    LabelMap m(6, 8, 0);
    int unseen = 0;
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x)
        if (x >= 4) {
          m.at(y, x) = y % 2 ? 2 : 3;
          ++unseen;
        } else if (y >= 3) {
          m.at(y, x) = 1;
        }
    const VideoClipSample s = make_sample(m);
    const VideoClipSample out = mask_unseen(s, v);
    int ignored = 0, zeroed = 0, changed_seen = 0;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      const bool foot = v.is_unseen(m.labels[i]);
      ignored += out.target_mask.labels[i] == v.ignore_index;
      for (int c = 0; c < 3; ++c) {
        const std::size_t k = i * 3 + std::size_t(c);
        zeroed += out.target_frame.data[k] == 0.f;
        if (!foot) {
          changed_seen += out.target_frame.data[k] != s.target_frame.data[k];
          changed_seen += out.past_frames[0].data[k] != s.past_frames[0].data[k];
          changed_seen += out.random_frame.data[k] != s.random_frame.data[k];
        }
      }
      if (!foot) changed_seen += out.target_mask.labels[i] != m.labels[i];
      if (!foot) changed_seen += out.past_masks[1]->labels[i] != m.labels[i];
    }
    CHECK(unseen == 24);
    CHECK(ignored == 24);
    CHECK(zeroed == 24 * 3);
    CHECK(changed_seen == 0);
  }
}

TEST_CASE("loss labels map onto the presented classes") {
  const ClassVocabulary v = four_classes();
  const std::vector<int> mask{0, 1, 2, 3, kDefaultIgnoreIndex, 1};
  const LossLabels l = to_loss_labels(mask, v);
  CHECK(l.labels == std::vector<int>{0, 1, -1, -1, -1, 1});
  CHECK(l.leaked == 2);
  CHECK(l.supervised == 3);
  CHECK_THROWS_AS(to_loss_labels(std::vector<int>{9}, v), ValidationError);
}

TEST_CASE("augmentation keeps masks aligned with frames") {
  TrainConfig c;
  c.crop = 20;
  c.scale_min = 1.0;
  c.scale_max = 1.5;
  LabelMap m(24, 24);
  RgbImage img(24, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      m.at(y, x) = y * 24 + x < 255 ? (y * 7 + x * 3) % 11 : 4;
      img.px(y, x)[0] = float(y) / 24;
    }
  VideoClipSample s = make_sample(m);
  s.target_frame = img;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const AugmentParams p = draw_augmentation(c, 24, 24, rng);
    CHECK(p.scaled_h >= 24);
    CHECK(p.scaled_h <= 36);
    CHECK(p.y0 + p.crop <= p.scaled_h);
    const VideoClipSample a = augment(s, p);
    REQUIRE(a.target_mask.h == 20);
    REQUIRE(a.target_frame.w == 20);
    int wrong = 0;
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j) {
        const int sy = std::min(int((p.y0 + i + 0.5) * 24 / p.scaled_h), 23);
        const int sx = std::min(int((p.x0 + j + 0.5) * 24 / p.scaled_w), 23);
        wrong += a.target_mask.at(i, j) != m.at(sy, sx);
        wrong += a.past_masks[0]->at(i, j) != m.at(sy, sx);
      }
    CHECK(wrong == 0);
  }
  c.crop = 40;
  Rng rng(1);
  CHECK_THROWS_AS(draw_augmentation(c, 24, 24, rng), ConfigError);
}

TEST_CASE("auxiliary labels are nearest-downsampled") {
  LabelMap m(4, 4);
  for (int i = 0; i < 16; ++i) m.labels[std::size_t(i)] = i;
  CHECK(downsample_labels(m, 2, 2) == std::vector<int>{5, 7, 13, 15});
}

TEST_CASE("AdamW update") {
  TrainConfig c;
  c.weight_decay = 0.1;
  ParameterStore store;
  Rng rng(1);
  Tensor p = store.add_values("p", {1.0f, -2.0f}, 1, 2);
  AdamW opt(c, store);
  for (int step = 1; step <= 2; ++step) {
    store.zero_grad();
    sum_all(mul(p, Tensor::from({0.5f, -3.0f}, 1, 2))).backward();
    opt.step(store, 0.01);
  }
  // Double-precision replay of two decoupled-decay Adam steps.
  const double g[2] = {0.5, -3.0};
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 2; ++t)
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      w[i] -= 0.01 * 0.1 * w[i];
      w[i] -= 0.01 * (m[i] / (1 - std::pow(0.9, t))) / (std::sqrt(v[i] / (1 - std::pow(0.999, t))) + 1e-8);
    }
  CHECK(p.at(0, 0) == doctest::Approx(w[0]).epsilon(1e-6));
  CHECK(p.at(0, 1) == doctest::Approx(w[1]).epsilon(1e-6));
  CHECK(opt.steps() == 2);
}

TEST_CASE("zero iterations return the initialisation") {
  Settings s = tiny_settings(5);
  s.train.iterations = 0;
  s.train.warmup_iters = 0;
  const TrainResult r = train_loop(s, tiny_data());
  Ov2VssModel fresh(s, r.meta.aux_classes, r.meta.regions);
  CHECK(flatten(r.model->parameters()) == flatten(fresh.parameters()));
  CHECK(r.log.empty());
}

TEST_CASE("training is reproducible and writes logs and checkpoints") {
  testutil::TempDir out("train_out");
  const Settings s = tiny_settings(9);
  int callbacks = 0;
  const TrainResult a = train_loop(s, tiny_data(), {out.path(), [&](const LogEntry&) { ++callbacks; }});
  const TrainResult b = train_loop(s, tiny_data());
  CHECK(flatten(a.model->parameters()) == flatten(b.model->parameters()));
  REQUIRE(a.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(std::isfinite(a.log[i].loss));
    CHECK(a.log[i].loss == doctest::Approx(a.log[i].l_main + a.log[i].l_aux).epsilon(1e-6));
  }
  CHECK(a.log[0].lr == doctest::Approx(1e-3));
  CHECK(callbacks == 1);

  std::ifstream log(out.path() / "train_log.csv");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 4);
  const Checkpoint ck = load_checkpoint(out.path() / "checkpoint.bin");
  CHECK(ck.meta.iteration == 3);
  CHECK(ck.meta.vocabulary == tiny_data().vocab().names);
  const auto restored = model_from_checkpoint(ck);
  CHECK(flatten(restored->parameters()) == flatten(a.model->parameters()));
}

TEST_CASE("unseen classes never reach the loss or the input") {
  const Dataset& d = tiny_data();
  Settings s = tiny_settings(2);
  s.train.iterations = 6;
  s.train.batch_size = 2;
  const TrainResult masked = train_loop(s, d);
  CHECK(masked.audit.unseen_label_pixels == 0);
  CHECK(masked.audit.unseen_input_pixels == 0);
  CHECK(masked.audit.supervised_pixels > 0);
  s.train.mask_unseen = false;
  CHECK(train_loop(s, d).audit.unseen_label_pixels > 0);
}

TEST_CASE("all-frame supervision") {
  Settings s = tiny_settings(4);
  s.train.supervision = "all_frames";
  const TrainResult r = train_loop(s, tiny_data());
  CHECK(r.log.size() == 3);
  CHECK(std::isfinite(r.log.back().loss));
  CHECK(r.audit.unseen_label_pixels == 0);
}

TEST_CASE("a short run lowers the training loss") {
  Settings s = tiny_settings(6);
  s.train.iterations = 60;
  s.train.warmup_iters = 5;
  s.train.lr = 3e-3;
  const TrainResult r = train_loop(s, tiny_data());
  auto mean = [&](std::size_t from, std::size_t to) {
    double m = 0;
    for (std::size_t i = from; i < to; ++i) m += r.log[i].loss;
    return m / double(to - from);
  };
  CHECK(mean(50, 60) < mean(0, 10));
}

TEST_CASE("a non-finite loss aborts with the batch seed") {
  Settings s = tiny_settings(3);
  s.train.alpha = 1e39;  // overflows to infinity in single precision
  try {
    train_loop(s, tiny_data());
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == "numeric");
    CHECK(std::string(e.what()).find("batch seed " + std::to_string(derive_seed(3, 1, 0))) != std::string::npos);
  }
}
