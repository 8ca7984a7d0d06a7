#include <algorithm>
#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vord/corruption.hpp"
#include "vord/rng.hpp"

using namespace vord;

TEST_SUITE("rng") {

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(43);
  Rng d(42);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += c.next_u64() == d.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("split depends only on the seed") {
  Rng parent(7);
  const Rng early = parent.split(3);
  for (int i = 0; i < 57; ++i) parent.uniform();
  Rng late = parent.split(3);
  Rng early_copy = early;
  for (int i = 0; i < 100; ++i) CHECK(early_copy.next_u64() == late.next_u64());

  Rng s0 = Rng(7).split(0), s1 = Rng(7).split(1);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += s0.next_u64() == s1.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("uniform and below stay in range") {
  Rng rng(11);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
  }
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("Beta(1,1) draws pass a KS test against the uniform CDF") {
  Rng rng(2024);
  std::vector<double> xs(100000);
  for (double& x : xs) {
    x = sample_lambda(1.0, rng);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
  }
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, std::abs((i + 1) / n - xs[i]));
    d = std::max(d, std::abs(xs[i] - i / n));
  }
  CHECK(d < 0.01);
}

TEST_CASE("Beta(a,a) moments") {
  // Beta(a,a) has mean 1/2 and variance 1/(4(2a+1)).
  for (double a : {0.5, 2.0, 5.0}) {
    Rng rng(static_cast<std::uint64_t>(a * 100));
    double s = 0.0, s2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double x = sample_lambda(a, rng);
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
    CHECK(var == doctest::Approx(1.0 / (4.0 * (2.0 * a + 1.0))).epsilon(0.05));
  }
}

TEST_CASE("sample_lambda is deterministic per seed") {
  Rng a(9), b(9);
  CHECK(sample_lambda(1.0, a) == sample_lambda(1.0, b));
}

}  // TEST_SUITE
