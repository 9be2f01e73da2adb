#ifndef ROUTELAB_RNG_HPP
#define ROUTELAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

// Keyed (counter-based) random draws. Every sampled quantity is a pure
// function of (seed, tag, indices), so results do not depend on the order
// in which call sites happen to run, and reruns are bit-identical.

namespace routelab::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9E3779B97F4A7C15ull + b + (a << 6) + (a >> 2)));
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t tag) { return mix(seed, tag); }
inline std::uint64_t key(std::uint64_t seed, std::uint64_t tag, std::uint64_t i) {
  return mix(mix(seed, tag), i);
}
inline std::uint64_t key(std::uint64_t seed, std::uint64_t tag, std::uint64_t i, std::uint64_t j) {
  return mix(mix(mix(seed, tag), i), j);
}

// uniform in [0, 1)
inline double u01(std::uint64_t k) {
  return static_cast<double>(splitmix64(k) >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t k, double lo, double hi) {
  return lo + (hi - lo) * u01(k);
}

// exponential with the given mean; log1p keeps the argument in (0, 1]
inline double exponential(std::uint64_t k, double mean) {
  return -mean * std::log1p(-u01(k));
}

// standard normal via Box-Muller on two derived sub-keys
inline double normal(std::uint64_t k) {
  const double u1 = 1.0 - u01(mix(k, 1));
  const double u2 = u01(mix(k, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double lognormal(std::uint64_t k, double mu, double sigma) {
  return std::exp(mu + sigma * normal(k));
}

// Sequential stream for shuffles and arrival processes (splitmix64 counter).
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_++); }
  double next_u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // uniform integer in [0, n); n must be > 0 (modulo bias is negligible at desk scale)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates; std::shuffle is implementation-defined and would break
// the bit-identical reproducibility contract.
template <typename T>
void shuffle(std::vector<T>& v, Stream& s) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(s.next_below(i))]);
  }
}

// Draw namespaces. Arbitrary distinct constants; changing one changes every
// artifact downstream of it.
namespace tag {
inline constexpr std::uint64_t kNodeFeature = 0xA1;
inline constexpr std::uint64_t kEdgeFeature = 0xA2;
inline constexpr std::uint64_t kLayerAssign = 0xA3;
inline constexpr std::uint64_t kEdgePick = 0xA4;
inline constexpr std::uint64_t kEdgeFix = 0xA5;
inline constexpr std::uint64_t kArrival = 0xB1;
inline constexpr std::uint64_t kEntryReplica = 0xB2;
inline constexpr std::uint64_t kService = 0xB3;
inline constexpr std::uint64_t kLink = 0xB4;
inline constexpr std::uint64_t kPath = 0xB5;
inline constexpr std::uint64_t kServiceMean = 0xB6;
inline constexpr std::uint64_t kParamInit = 0xC1;
inline constexpr std::uint64_t kSplit = 0xC2;
inline constexpr std::uint64_t kEpochShuffle = 0xC3;
inline constexpr std::uint64_t kPolicyRandom = 0xC4;
}  // namespace tag

}  // namespace routelab::rng

#endif  // ROUTELAB_RNG_HPP
