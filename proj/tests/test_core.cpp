#include <doctest.h>

#include <cmath>

#include "ewmark/base64.hpp"
#include "ewmark/rng.hpp"
#include "ewmark/tokenize.hpp"
#include "ewmark/types.hpp"
#include "ewmark/vecmath.hpp"

using namespace ewmark;

TEST_CASE("normalize: 3-4-5 triangle") {
  const std::vector<double> v{3.0, 4.0};
  const std::vector<double> u = normalize(v);
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("normalize: unit vectors unchanged, idempotent") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(16);
    for (double& x : v) x = rng.normal();
    const std::vector<double> once = normalize(v);
    const std::vector<double> twice = normalize(once);
    CHECK(std::abs(norm2(once) - 1.0) < 1e-9);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(std::abs(once[i] - twice[i]) < 1e-12);
    }
  }
}

TEST_CASE("normalize: zero vector errors") {
  CHECK_THROWS_AS(normalize(std::vector<double>{0.0, 0.0}), ZeroVectorError);
  CHECK_THROWS_AS(normalize(std::vector<double>{1e-13, -1e-13}), ZeroVectorError);
}

TEST_CASE("cosine basics") {
  const std::vector<double> u = normalize(std::vector<double>{1.0, 2.0, -0.5});
  std::vector<double> neg = u;
  for (double& x : neg) x = -x;
  CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine(u, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  const std::vector<double> e1{1.0, 0.0, 0.0};
  const std::vector<double> e2{0.0, 1.0, 0.0};
  CHECK(cosine(e1, e2) == 0.0);
  CHECK_THROWS_AS(cosine(e1, std::vector<double>{1.0, 0.0}), DimMismatchError);
}

TEST_CASE("cosine symmetric and clamped on stored unit vectors") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(8), b(8);
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    a = normalize(a);
    b = normalize(b);
    const double ab = cosine(a, b);
    CHECK(ab == cosine(b, a));
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("EmbeddingSet enforces dim and id uniqueness") {
  EmbeddingSet set;
  set.add({"a", {1.0, 0.0}});
  CHECK_THROWS_AS(set.add({"b", {1.0, 0.0, 0.0}}), DimMismatchError);
  CHECK_THROWS_AS(set.add({"a", {0.0, 1.0}}), MalformedError);
  CHECK(set.size() == 1);
  CHECK(set.find("a") != nullptr);
  CHECK(set.find("missing") == nullptr);
}

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  const auto tokens = tokenize("Hello, World! x2 a-b_c");
  const std::vector<std::string> expected{"hello", "world", "x2", "a", "b", "c"};
  CHECK(tokens == expected);
  CHECK(tokenize("  ...  ").empty());
}

TEST_CASE("base64 round trip") {
  Rng rng(5);
  for (std::size_t len : {std::size_t{0}, std::size_t{1}, std::size_t{2},
                          std::size_t{3}, std::size_t{17}, std::size_t{256}}) {
    std::vector<std::uint8_t> data(len);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng.uniform_int(256));
    const std::string enc = base64_encode(data.data(), data.size());
    CHECK(base64_decode(enc) == data);
  }
  CHECK_THROWS_AS(base64_decode("abc"), MalformedError);
  CHECK_THROWS_AS(base64_decode("a==="), MalformedError);
}

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    all_equal &= (x == b.uniform());
    any_diff |= (x != c.uniform());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng normal moments") {
  Rng rng(99);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}
