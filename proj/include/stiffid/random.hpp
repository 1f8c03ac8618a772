#pragma once

#include <cstdint>
#include <limits>

namespace stiffid {

/// Named substreams of the root seed.
enum class Stream : std::uint64_t {
  kSimulate = 1,
  kFilterInit = 2,
  kFilterParticle = 3,
  kFilterResample = 4,
  kSweep = 5,
  kTest = 6,
};

/// Counter-based random bit generator (SplitMix64 over a keyed counter).
///
/// A stream is addressed by (seed, stream, step, index), so every particle in
/// every step owns an independent sequence and results do not depend on how
/// the particles are split across worker threads. Satisfies
/// UniformRandomBitGenerator, so it plugs into the <random> distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) : state_(mix(key)) {}
  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t step, std::uint64_t index)
      : state_(derive(seed, stream, step, index)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += kGolden;
    return mix(state_);
  }

  static std::uint64_t derive(std::uint64_t seed, Stream stream, std::uint64_t step,
                              std::uint64_t index) {
    std::uint64_t h = mix(seed ^ kGolden);
    h = mix(h ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ull));
    h = mix(h ^ (step * 0xAEF17502108EF2D9ull));
    h = mix(h ^ (index * 0x94D049BB133111EBull + 0x2545F4914F6CDD1Dull));
    return h;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace stiffid
