#include <cmath>
#include <limits>
#include <numeric>

#include "test_util.hpp"
#include "vord/core_types.hpp"
#include "vord/rng.hpp"

using namespace vord;

namespace {

// Direct evaluation of exp(x/T) / sum exp(x/T) in long double, no shift.
std::vector<long double> softmax_oracle(const std::vector<double>& x, long double t) {
  std::vector<long double> e(x.size());
  long double z = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(x[i]) / t);
    z += e[i];
  }
  for (auto& v : e) v /= z;
  return e;
}

}  // namespace

TEST_SUITE("core_types") {

TEST_CASE("softmax of equal logits is uniform") {
  const auto p = softmax({{0.0, 0.0, 0.0}}, 1.0);
  for (double v : p.probs) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]") {
  const auto p = softmax({{std::log(2.0), 0.0}}, 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax with temperature matches long double evaluation") {
  const std::vector<double> logits{5.0, 1.0, -3.0};
  const auto p = softmax({logits}, 2.0);
  const auto ref = softmax_oracle(logits, 2.0L);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(p[i] - static_cast<double>(ref[i])) <= 1e-15);
  }
  // Logits over T=2 are [2.5, 0.5, -1.5].
  const double a = std::exp(2.5), b = std::exp(0.5), c = std::exp(-1.5);
  CHECK(p[0] == doctest::Approx(a / (a + b + c)).epsilon(1e-14));
}

TEST_CASE("softmax sums to one over a wide temperature range") {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> logits(n);
    for (double& v : logits) v = 50.0 * (2.0 * rng.uniform() - 1.0);
    const double t = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    const auto p = softmax({logits}, t);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    for (double v : p.probs) CHECK(v >= 0.0);
  }
}

TEST_CASE("softmax is shift invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> logits(8), shifted(8);
    const double c = 100.0 * (rng.uniform() - 0.5);
    for (std::size_t i = 0; i < 8; ++i) {
      logits[i] = 10.0 * rng.normal();
      shifted[i] = logits[i] + c;
    }
    const auto a = softmax({logits}, 1.5);
    const auto b = softmax({shifted}, 1.5);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("softmax rejects bad input") {
  CHECK_VORD_CODE(softmax({{0.0, std::numeric_limits<double>::quiet_NaN()}}, 1.0),
                  "invalid-logits");
  CHECK_VORD_CODE(softmax({{0.0, std::numeric_limits<double>::infinity()}}, 1.0),
                  "invalid-logits");
  CHECK_VORD_CODE(softmax({{0.0, 1.0}}, 0.0), "invalid-temperature");
  CHECK_VORD_CODE(softmax({{0.0, 1.0}}, -1.0), "invalid-temperature");
}

TEST_CASE("normalize examples and idempotence") {
  const auto a = normalize({{0.2, 0.2, 0.0}, true});
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.5));
  CHECK(a[2] == 0.0);
  CHECK_FALSE(a.masked);
  const auto b = normalize({{1.0, 0.0, 0.0}});
  CHECK(b.probs == std::vector<double>{1.0, 0.0, 0.0});
  CHECK_VORD_CODE(normalize({{0.0, 0.0, 0.0}}), "empty-support");

  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    TokenDistribution d;
    for (int i = 0; i < 12; ++i) d.probs.push_back(rng.uniform() < 0.3 ? 0.0 : rng.uniform());
    d.probs[0] = 0.1;
    const auto once = normalize(d);
    const auto twice = normalize(once);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(once[i] - twice[i]) <= 1e-15);
  }
}

TEST_CASE("image tensor clamps and validates") {
  const ImageTensor img(1, 2, 2, std::vector<float>{-0.5f, 0.25f, 1.5f, 1.0f});
  CHECK(img.at(0, 0, 0) == 0.0f);
  CHECK(img.at(0, 0, 1) == 0.25f);
  CHECK(img.at(0, 1, 0) == 1.0f);
  CHECK(img.index(0, 1, 1) == 3);
  CHECK_VORD_CODE(ImageTensor(0, 2, 1), "invalid-shape");
  CHECK_VORD_CODE(ImageTensor(2, 2, 1, std::vector<float>(3, 0.0f)), "invalid-shape");
  CHECK_VORD_CODE(ImageTensor(1, 1, 1, std::vector<float>{std::nanf("")}), "invalid-pixel");
}

TEST_CASE("vocabulary invariants") {
  Vocabulary v{4, 0, 1, {}};
  CHECK_NOTHROW(v.validate());
  v.eos_id = 0;
  CHECK_VORD_CODE(v.validate(), "invalid-vocabulary");
  v.eos_id = 4;
  CHECK_VORD_CODE(v.validate(), "invalid-vocabulary");
}

TEST_CASE("VTEN round trip and header") {
  std::vector<float> data(2 * 3 * 2);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i) / 16.0f;
  const ImageTensor img(2, 3, 2, data);
  const std::string bytes = encode_vten(img);
  CHECK(bytes.rfind("VTEN v1 2 3 2\n", 0) == 0);
  CHECK(bytes.size() == std::string("VTEN v1 2 3 2\n").size() + 4 * data.size());
  // 1/16 as little-endian f32 is 00 00 80 3d.
  const std::size_t first = std::string("VTEN v1 2 3 2\n").size() + 4;
  CHECK(static_cast<unsigned char>(bytes[first + 3]) == 0x3d);
  CHECK(static_cast<unsigned char>(bytes[first + 2]) == 0x80);
  CHECK(decode_vten(bytes) == img);

  CHECK_VORD_CODE(decode_vten("VTEN v1 2 3 2\n"), "bad-vten");
  CHECK_VORD_CODE(decode_vten("VTEX v1 1 1 1\n\0\0\0\0"), "bad-vten");
  CHECK_VORD_CODE(decode_vten("VTEN v1 0 1 1\n"), "bad-vten");
  CHECK_VORD_CODE(decode_vten("no newline"), "bad-vten");
}

}  // TEST_SUITE
