// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "qroute/rng.hpp"

using qroute::RngStream;

TEST_CASE("rng: same seed and label reproduce exactly") {
  RngStream a(42, "init"), b(42, "init");
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: distinct labels give distinct streams") {
  RngStream a(42, "init"), b(42, "routing"), c(43, "init");
  bool differ_label = false, differ_seed = false;
  RngStream a2(42, "init");
  for (int i = 0; i < 16; ++i) {
    auto va = a.next_u64();
    differ_label = differ_label || (va != b.next_u64());
    differ_seed = differ_seed || (a2.next_u64() != c.next_u64());
    (void)va;
  }
  CHECK(differ_label);
  CHECK(differ_seed);
}

TEST_CASE("rng: uniform_open01 stays strictly inside (0,1)") {
  RngStream r(7, "u01");
  double mn = 1.0, mx = 0.0, acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform_open01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    acc += u;
  }
  CHECK(acc / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(mn < 0.001);
  CHECK(mx > 0.999);
}

TEST_CASE("rng: normal has unit moments") {
  RngStream r(11, "gauss");
  const int n = 1000000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n;
  double var = s2 / n - mean * mean;
  CHECK(std::fabs(mean) < 0.005);
  CHECK(var == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("rng: uniform_int is in range and roughly uniform") {
  RngStream r(3, "ints");
  const std::uint64_t k = 7;
  std::vector<int> counts(k, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    auto v = r.uniform_int(k);
    REQUIRE(v < k);
    counts[static_cast<std::size_t>(v)]++;
  }
  for (int c : counts) CHECK(std::fabs(c - n / 7.0) < 400);
}

TEST_CASE("rng: shuffle is a deterministic permutation") {
  std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto v2 = v1;
  RngStream a(5, "shuffle"), b(5, "shuffle");
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
  CHECK(std::set<int>(v1.begin(), v1.end()).size() == 10);
}
