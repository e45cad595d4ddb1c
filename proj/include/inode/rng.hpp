#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace inode {

// Named sub-stream tags. Derived streams keep the draw sequences of different
// pipeline stages independent: skipping one stage never shifts another.
enum class Stream : std::uint64_t {
  kData = 1,
  kInit = 2,
  kShuffle = 3,
  kEps = 4,
  kPairs = 5,
  kVal = 6,
  kEval = 7,
};

std::uint64_t splitmix64(std::uint64_t& state);

// Hash-combines a base seed with a path of ids into a stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

// Deterministic scalar RNG. Uniform/normal transforms are spelled out here so
// draws do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller with a cached spare.
  double gauss();

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Rng stream_rng(std::uint64_t base, Stream tag, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
  return Rng(derive_seed(base, {static_cast<std::uint64_t>(tag), a, b, c}));
}

}  // namespace inode
