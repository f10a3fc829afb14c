#include <algorithm>
#include <atomic>
#include <set>

#include "doctest.h"
#include "embench/common.hpp"

using namespace embench;

TEST_SUITE("common") {
  TEST_CASE("counter rng is reproducible and key-sensitive") {
    CounterRng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
      auto x = a.next_u64();
      CHECK(x == b.next_u64());
      CHECK(x != c.next_u64());
    }
    CHECK(a.position() == 100);
  }

  TEST_CASE("uniform, below and normal stay in range") {
    CounterRng rng(7);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      double u = rng.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(rng.below(5) < 5);
      double z = rng.normal();
      sum += z;
      sq += z * z;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05).scale(1.0));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("derive_key separates streams") {
    CHECK(derive_key(1, 2) != derive_key(1, 3));
    CHECK(derive_key(1, "a", "b") != derive_key(1, "ab", ""));
    CHECK(derive_key(1, "a", "b") == derive_key(1, "a", "b"));
  }

  TEST_CASE("random_permutation is a permutation") {
    CounterRng rng(3);
    auto p = random_permutation(50, rng);
    std::set<std::size_t> s(p.begin(), p.end());
    CHECK(s.size() == 50);
    CHECK(*s.rbegin() == 49);
  }

  TEST_CASE("sha256 and base64 known answers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string text = "hello";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    CHECK(base64_encode(bytes) == "aGVsbG8=");
    CHECK(base64_decode("aGVsbG8=") == bytes);
    CHECK(base64_decode("").empty());
  }

  TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                   if (i == 5) throw Error(ErrorCode::kInvalidArgument, "boom");
                                 }),
                    Error);
  }

  TEST_CASE("error message carries the code name") {
    Error e(ErrorCode::kTruncated, "short");
    CHECK(std::string(e.what()).find("short") != std::string::npos);
    CHECK(e.code() == ErrorCode::kTruncated);
  }
}
