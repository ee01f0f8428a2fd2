#include <doctest.h>

#include "ov2vss/encoders.hpp"
#include "test_util.hpp"

using namespace ov;
using testutil::gradient_check;
using testutil::probe_loss;
using testutil::random_tensor;

TEST_CASE("toy pyramid shapes") {
  ParameterStore store;
  Rng rng(1);
  ToyPyramidBackbone enc({4, 6, 8}, store, rng);
  std::mt19937_64 g(2);
  const Tensor img = random_tensor(2 * 16 * 16, 3, g);
  const auto p = enc.encode(img, Grid{2, 16, 16});
  REQUIRE(p.depth() == 3);
  const int sizes[] = {8, 4, 2}, chans[] = {4, 6, 8};
  for (int l = 0; l < 3; ++l) {
    CHECK(p.grids[std::size_t(l)].h == sizes[l]);
    CHECK(p.grids[std::size_t(l)].batch == 2);
    CHECK(p.levels[std::size_t(l)].rows() == 2 * sizes[l] * sizes[l]);
    CHECK(p.levels[std::size_t(l)].cols() == chans[l]);
    for (Real v : p.levels[std::size_t(l)].data()) CHECK(v >= 0);
  }
  CHECK_THROWS_AS(enc.encode(random_tensor(12 * 12, 3, g), Grid{1, 12, 12}), ShapeError);
}

TEST_CASE("encoding a batch equals encoding its images one by one") {
  ParameterStore store;
  Rng rng(3);
  ToyPyramidBackbone enc({4, 4}, store, rng);
  std::mt19937_64 g(4);
  const Tensor a = random_tensor(8 * 8, 3, g), b = random_tensor(8 * 8, 3, g);
  const auto both = enc.encode(concat_rows({a, b}), Grid{2, 8, 8});
  const auto pb = enc.encode(b, Grid{1, 8, 8});
  const Tensor tail = slice_rows(both.levels[1], 4, 8);
  CHECK(testutil::max_abs_diff(testutil::to_double(tail), testutil::to_double(pb.levels[1])) < 1e-12);
}

TEST_CASE("tokenizer and hash buckets") {
  CHECK(tokenize("A photo of a Red-Square!") ==
        std::vector<std::string>{"a", "photo", "of", "a", "red", "square"});
  CHECK(tokenize("  ").empty());
  // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
  CHECK(token_bucket("a", 1000003) == int(0xaf63dc4c8601ec8cull % 1000003ull));
  CHECK(token_bucket("sky", 4096) == token_bucket("sky", 4096));
}

TEST_CASE("hashed embeddings average their token rows") {
  ParameterStore store;
  Rng rng(5);
  HashTokenEmbedder emb(64, 5, store, rng);
  const Tensor table = store.get("encoder.text.table");
  const Tensor e = emb.embed({"red circle", "sky"});
  const int r = token_bucket("red", 64), c = token_bucket("circle", 64), s = token_bucket("sky", 64);
  for (int j = 0; j < 5; ++j) {
    CHECK(e.at(0, j) == doctest::Approx((table.at(r, j) + table.at(c, j)) / 2).epsilon(1e-12));
    CHECK(e.at(1, j) == doctest::Approx(table.at(s, j)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(emb.embed({"!!"}), ConfigError);
}

TEST_CASE("prompt templates") {
  CHECK(fill_template("a photo of a {}", "cat") == "a photo of a cat");
  CHECK_THROWS_AS(validate_template("no placeholder"), ConfigError);
  CHECK_THROWS_AS(validate_template("{} and {}"), ConfigError);

  ParameterStore store;
  Rng rng(6);
  HashTokenEmbedder emb(128, 4, store, rng);
  const std::vector<std::string> tmpl{"a {}", "the {} here"};
  const Tensor t = encode_text({"wall", "blue square"}, tmpl, emb);
  const Tensor ref = emb.embed({"a wall", "the wall here", "a blue square", "the blue square here"});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(t.at(i, j) == doctest::Approx((ref.at(2 * i, j) + ref.at(2 * i + 1, j)) / 2).epsilon(1e-12));
  // Each name is encoded independently of the others in the list.
  const Tensor single = encode_text({"blue square"}, tmpl, emb);
  for (int j = 0; j < 4; ++j) CHECK(single.at(0, j) == t.at(1, j));
}

TEST_CASE("multi-ratio pooling") {
  std::mt19937_64 g(7);
  const Grid grid{1, 4, 4};
  const Tensor x = random_tensor(16, 2, g);
  SUBCASE("identity branch with identity projection returns the input") {
    Linear id;
    id.weight = Tensor::from({1, 0, 0, 1}, 2, 2);
    const int ratios[] = {1};
    CHECK(testutil::max_abs_diff(testutil::to_double(pool_enhance(x, grid, ratios, id)), testutil::to_double(x)) ==
          0.0);
  }
  SUBCASE("a 4x pool of a 4x4 map is its mean everywhere") {
    Linear id;
    id.weight = Tensor::from({1, 0, 0, 1}, 2, 2);
    const int ratios[] = {4};
    const Tensor y = pool_enhance(x, grid, ratios, id);
    for (int c = 0; c < 2; ++c) {
      double m = 0;
      for (int i = 0; i < 16; ++i) m += x.at(i, c) / 16;
      for (int i = 0; i < 16; ++i) CHECK(y.at(i, c) == doctest::Approx(m).epsilon(1e-12));
    }
  }
  SUBCASE("gradients") {
    Tensor xi = random_tensor(16, 2, g, -1, 1, true);
    Linear proj{random_tensor(6, 3, g, -1, 1, true), random_tensor(1, 3, g, -1, 1, true)};
    const int ratios[] = {1, 2, 3};
    CHECK(gradient_check([&] { return probe_loss(pool_enhance(xi, grid, ratios, proj)); },
                         {xi, proj.weight, proj.bias}) < 1e-4);
  }
}

TEST_CASE("encoder registry rejects unknown keys") {
  ParameterStore store;
  Rng rng(8);
  EncoderConfig cfg;
  cfg.image_encoder = "resnet";
  CHECK_THROWS_AS(make_image_encoder(cfg, store, rng), ConfigError);
  cfg.text_encoder = "clip";
  CHECK_THROWS_AS(make_text_embedder(cfg, store, rng), ConfigError);
}
