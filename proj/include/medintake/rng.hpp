#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <utility>
#include <vector>

namespace medintake {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer. Fully portable: the same input maps to the same
// output on every platform and compiler.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based generator: the state walks the golden-gamma sequence and
// each draw is the mix of the current counter (splitmix64).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n); rejection sampling keeps the draw exact.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be >= 1");
    const std::uint64_t threshold = (0ULL - static_cast<std::uint64_t>(n)) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return static_cast<std::size_t>(r % n);
    }
  }

  Rng fork() { return Rng(next_u64()); }

 private:
  std::uint64_t state_;
};

// Named sub-streams of the master seed.
enum class SeedStream : std::uint64_t {
  kFoldPlan = 1,
  kSearch = 2,
  kTraining = 3,
  kAblation = 4,
};

// Deterministic sub-seed derivation: chain-mix the master seed with the
// coordinates of the unit being seeded (stream tag, ensemble index, fold
// index, ...). Any component of a run can thus be re-run in isolation.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = mix64(base + kGoldenGamma);
  for (std::uint64_t p : parts) s = mix64((s ^ p) + kGoldenGamma);
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream,
                                 std::initializer_list<std::uint64_t> parts = {}) {
  std::uint64_t s = derive_seed(base, {static_cast<std::uint64_t>(stream)});
  for (std::uint64_t p : parts) s = mix64((s ^ p) + kGoldenGamma);
  return s;
}

// Fisher-Yates with the portable generator above.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
  }
}

}  // namespace medintake
