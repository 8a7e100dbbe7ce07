#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace assoc {

// mt19937_64 keyed by (seed, stream...) through seed_seq. Doubles and
// exponentials are derived by hand so that streams are bit-identical across
// standard library implementations (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : Rng{seed, {}} {}

  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::seed_seq seq = make_seq(seed, stream);
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

 private:
  static std::seed_seq make_seq(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::vector<std::uint32_t> words;
    auto push = [&](std::uint64_t v) {
      words.push_back(static_cast<std::uint32_t>(v));
      words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto s : stream) push(s);
    return std::seed_seq(words.begin(), words.end());
  }

  std::mt19937_64 engine_;
};

}  // namespace assoc
