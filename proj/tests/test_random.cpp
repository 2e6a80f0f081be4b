#include <doctest.h>

#include <cmath>
#include <vector>

#include "clustloc/random.hpp"

using namespace clustloc;

TEST_CASE("philox known answers") {
  // Random123 reference vectors for philox4x32-10
  auto zero = RandomStream::philox({0, 0, 0, 0}, {0, 0});
  CHECK(zero[0] == 0x6627e8d5u);
  CHECK(zero[1] == 0xe169c58du);
  CHECK(zero[2] == 0xbc57ac4cu);
  CHECK(zero[3] == 0x9b00dbd8u);
  auto ones = RandomStream::philox({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                   {0xffffffffu, 0xffffffffu});
  CHECK(ones[0] == 0x408f276du);
  CHECK(ones[1] == 0x41c83b0eu);
  CHECK(ones[2] == 0xa20bc7c6u);
  CHECK(ones[3] == 0x6d5451fdu);
  auto pi = RandomStream::philox({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                 {0xa4093822u, 0x299f31d0u});
  CHECK(pi[0] == 0xd16cfe09u);
  CHECK(pi[1] == 0x94fdccebu);
  CHECK(pi[2] == 0x5001e420u);
  CHECK(pi[3] == 0x24126ea1u);
}

TEST_CASE("equal seeds and stream ids reproduce") {
  RandomStream a(42, 7), b(42, 7), c(42, 8);
  std::size_t same_as_c = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto x = a();
    REQUIRE(x == b());
    same_as_c += x == c();
  }
  CHECK(same_as_c == 0);
  RandomStream d(42, 7), e(42, 7);
  for (int i = 0; i < 10000; ++i) REQUIRE(d.normal() == e.normal());
}

TEST_CASE("substreams are uncorrelated") {
  RandomStream a(1, 0), b(1, 1);
  const int n = 100000;
  double sab = 0.0;
  for (int i = 0; i < n; ++i) sab += a.normal() * b.normal();
  CHECK(std::abs(sab / n) < 4.0 / std::sqrt(double(n)));
}

TEST_CASE("distribution moments") {
  RandomStream rs(3, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sc = 0;
  std::vector<int> counts(5, 0);
  for (int i = 0; i < n; ++i) {
    const double u = rs.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rs.normal();
    sn += z;
    sn2 += z * z;
    sc += rs.chi_squared(3.0);
    counts[rs.below(5)]++;
  }
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
  CHECK(std::abs(sc / n - 3.0) < 4 * std::sqrt(6.0 / n));
  for (int c : counts) CHECK(std::abs(c - n / 5.0) < 4 * std::sqrt(n * 0.2 * 0.8));
}
