#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gmethods {

// Counter-based generator built on the splitmix64 finalizer. Every draw is a
// pure function of (key, counter), so the stream for record i of a simulated
// dataset is reproducible in isolation and independent of thread scheduling.
// Streams are derived by rehashing the key with a stream id rather than by
// jumping, so (seed, record_index) -> stream is cheap and collision-resistant.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_key(seed, stream)) {}

  // Child generator for a substream (replication index, record index, ...).
  SplitRng child(std::uint64_t substream) const {
    SplitRng r(0);
    r.key_ = mix(key_ ^ mix(substream ^ 0xD1B54A32D192ED03ull));
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Index into a probability vector (assumed to sum to 1; the final index
  // absorbs any floating-point remainder).
  int categorical(const std::vector<double>& probs) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Categorical draw from a row of a flat table.
  int categorical(const double* probs, int k) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i + 1 < k; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return k - 1;
  }

  // Box-Muller; consumes two uniforms per call, no cached spare.
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = uniform();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    return mean + sd * z;
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed + kGolden) ^ mix(stream ^ 0xBDD89AA982704029ull));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gmethods
