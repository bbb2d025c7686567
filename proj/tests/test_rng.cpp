#include <cmath>
#include <vector>

#include "doctest.h"
#include "gmethods/rng.hpp"

using gmethods::SplitRng;

TEST_CASE("rng streams are reproducible and keyed") {
  SplitRng a(42), b(42), c(43);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 64; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
  }
  CHECK(va == vb);
  CHECK(va != vc);

  SplitRng s1(7, 1), s2(7, 2);
  CHECK(s1.next_u64() != s2.next_u64());

  SplitRng parent(99);
  SplitRng c1 = parent.child(5), c2 = parent.child(5), c3 = parent.child(6);
  CHECK(c1.next_u64() == c2.next_u64());
  CHECK(c1.next_u64() != c3.next_u64());
}

TEST_CASE("uniform stays in [0,1) and has the right mean") {
  SplitRng r(123);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.005);
}

TEST_CASE("categorical draws match the probability vector") {
  SplitRng r(7);
  std::vector<double> p{0.1, 0.25, 0.05, 0.6};
  std::vector<int> counts(4, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(r.categorical(p))];
  for (int k = 0; k < 4; ++k) {
    double freq = static_cast<double>(counts[static_cast<std::size_t>(k)]) / n;
    // 5 sigma band for a binomial proportion
    double se = std::sqrt(p[static_cast<std::size_t>(k)] * (1 - p[static_cast<std::size_t>(k)]) / n);
    CHECK(std::fabs(freq - p[static_cast<std::size_t>(k)]) < 5 * se + 1e-9);
  }
}

TEST_CASE("normal moments are close") {
  SplitRng r(11);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal(1.5, 2.0);
    sum += z;
    sq += z * z;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean - 1.5) < 0.03);
  CHECK(std::fabs(var - 4.0) < 0.1);
}
