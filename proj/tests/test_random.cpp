#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "knudsen/random.hpp"

using namespace knudsen;

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::generate({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and separated by id and purpose") {
  auto draw = [](Stream s) {
    std::vector<std::uint32_t> v;
    for (int i = 0; i < 16; ++i) v.push_back(s());
    return v;
  };
  CHECK(draw(Stream(7, 3, Purpose::Chain)) == draw(Stream(7, 3, Purpose::Chain)));
  CHECK(draw(Stream(7, 3, Purpose::Chain)) != draw(Stream(7, 4, Purpose::Chain)));
  CHECK(draw(Stream(7, 3, Purpose::Chain)) != draw(Stream(7, 3, Purpose::Start)));
  CHECK(draw(Stream(7, 3, Purpose::Chain)) != draw(Stream(8, 3, Purpose::Chain)));
}

TEST_CASE("uniform is open and has the right moments") {
  Stream s(1, 0, Purpose::Test);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double u = s.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("normal has unit variance and zero mean") {
  Stream s(2, 0, Purpose::Test);
  const int n = 200000;
  double sum = 0, sum2 = 0, sum4 = 0;
  for (int i = 0; i < n; ++i) {
    double z = s.normal();
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.015));
  CHECK(sum4 / n == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("raw words rarely repeat") {
  Stream s(3, 0, Purpose::Test);
  std::set<std::uint32_t> seen;
  int dup = 0;
  for (int i = 0; i < 100000; ++i)
    if (!seen.insert(s()).second) ++dup;
  // Birthday bound for 1e5 draws from 2^32 is about 1.2.
  CHECK(dup < 10);
}
