#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "test_util.hpp"
#include "vord/corruption.hpp"
#include "vord/vision.hpp"

using namespace vord;

namespace {

VisualEmbedding random_embedding(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.normal();
  return VisualEmbedding(n, d, std::move(v));
}

}  // namespace

TEST_SUITE("vision") {

TEST_CASE("mean_pool examples") {
  CHECK(mean_pool(VisualEmbedding({{1.5, -2.0, 3.0}})) == std::vector<double>{1.5, -2.0, 3.0});
  CHECK(mean_pool(VisualEmbedding({{1.0, 0.0}, {0.0, 1.0}})) == std::vector<double>{0.5, 0.5});

  Rng rng(1);
  const auto e = random_embedding(rng, 100, 16);
  const auto pooled = mean_pool(e);
  for (std::size_t j = 0; j < 16; ++j) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < 100; ++i) acc += e.values()[i * 16 + j];
    CHECK(std::abs(pooled[j] - static_cast<double>(acc / 100.0L)) <= 1e-12);
  }
}

TEST_CASE("adaptive_margin closed-form cases") {
  const VisualEmbedding a({{1.0, 0.0}});
  CHECK(adaptive_margin(a, a) == 0.0);
  CHECK(adaptive_margin(a, VisualEmbedding({{-3.0, 0.0}})) == doctest::Approx(1.0));
  CHECK(adaptive_margin(a, VisualEmbedding({{0.0, 2.0}})) == doctest::Approx(0.5));
  CHECK_VORD_CODE(adaptive_margin(a, VisualEmbedding({{0.0, 0.0}})), "degenerate-embedding");
}

TEST_CASE("adaptive_margin matches arccos of the cosine") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_embedding(rng, 5, 8), b = random_embedding(rng, 5, 8);
    const auto pa = mean_pool(a), pb = mean_pool(b);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      dot += pa[j] * pb[j];
      na += pa[j] * pa[j];
      nb += pb[j] * pb[j];
    }
    const double cosine = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    CHECK(std::abs(adaptive_margin(a, b) - std::acos(cosine) / std::numbers::pi) <= 1e-9);
  }
}

TEST_CASE("margin range, identity, symmetry and scale invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_embedding(rng, 1 + rng.below(6), 12);
    const auto b = random_embedding(rng, a.num_tokens(), 12);
    const double m = adaptive_margin(a, b);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    CHECK(adaptive_margin(a, a) <= 1e-9);
    CHECK(std::abs(m - adaptive_margin(b, a)) <= 1e-9);
    const double s = std::exp(4.0 * rng.normal());
    CHECK(std::abs(m - adaptive_margin(a.scaled(s), b)) <= 1e-9);
    CHECK(std::abs(m - adaptive_margin(a, b.scaled(s))) <= 1e-9);
  }
}

TEST_CASE("toy encoder is deterministic and linear in the patch") {
  const ToyPatchEncoder enc(2, 1, 4, 5);
  const ToyPatchEncoder same(2, 1, 4, 5);
  CHECK(enc.projection() == same.projection());

  std::vector<float> px{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f};
  const ImageTensor img(2, 4, 1, px);
  const auto e = enc.encode(img);
  REQUIRE(e.num_tokens() == 2);
  REQUIRE(e.dim() == 4);
  // Patch 0 covers (y,x) in {0,1}x{0,1}: pixels 0.1, 0.2, 0.5, 0.6.
  const double patch0[4] = {0.1f, 0.2f, 0.5f, 0.6f};
  for (int r = 0; r < 4; ++r) {
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) acc += enc.projection()[r * 4 + k] * patch0[k];
    CHECK(e.token(0)[r] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK_VORD_CODE(enc.encode(ImageTensor(3, 4, 1)), "shape-mismatch");
}

TEST_CASE("mixup moves embeddings further than slight brightening") {
  const ToyPatchEncoder enc(4, 3, 16, 11);
  Rng rng(12);
  std::vector<ImageTensor> images;
  for (int i = 0; i < 100; ++i) {
    std::vector<float> data(16 * 16 * 3);
    for (float& v : data) v = static_cast<float>(rng.uniform());
    images.emplace_back(16, 16, 3, std::move(data));
  }
  double mix = 0.0, bright = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& v = images[i];
    const auto& partner = images[(i + 1) % images.size()];
    const auto clean = enc.encode(v);
    mix += adaptive_margin(clean, enc.encode(mixup(v, partner, 0.5)));
    bright += adaptive_margin(clean, enc.encode(common_corruption(
                                         v, CorruptionKind::kBrightness, 0.05, rng)));
  }
  CHECK(mix > bright);
}

}  // TEST_SUITE
