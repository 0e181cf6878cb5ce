#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "cdc/types.hpp"

namespace cdc {

/// SplitMix64 finalizer. Used both as the stream generator and to derive
/// stream keys from (iteration, particle, role) tuples.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// What a stream is used for. Part of the stream key, so two roles at the
/// same (iteration, particle) never share draws.
enum class Role : std::uint64_t {
  States = 1,
  YNoise = 2,
  ZNoise = 3,
  Init = 4,
  EstimatorInit = 5,
  Test = 6,
};

constexpr std::uint64_t stream_id(std::uint64_t iteration, std::uint64_t particle, Role role) {
  std::uint64_t h = mix64(iteration);
  h = mix64(h ^ (particle + 0x632BE59BD9B4E019ULL));
  h = mix64(h ^ (static_cast<std::uint64_t>(role) * 0x8CB92BA72F3D8DD7ULL));
  return h;
}

/// Counter-based random stream keyed by (seed, stream_id).
///
/// The sequence depends only on the key, never on which thread created the
/// stream or on how many other streams were consumed before it.
class RngStream {
public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t id) : counter_(mix64(seed ^ mix64(id))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double normal() { return normal_(*this); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(*this); }

private:
  std::uint64_t counter_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// The family of streams used by one iteration of a run.
struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;

  RngStream stream(std::uint64_t particle, Role role) const {
    return RngStream(seed, stream_id(iteration, particle, role));
  }
};

/// Fills `out` with CN(0,1) entries: independent real and imaginary parts
/// with variance 1/2 each.
inline void fill_standard_complex_gaussian(RngStream& rng, MutCSpan out) {
  constexpr double s = 0.70710678118654752440;
  for (cplx& c : out) {
    const double re = rng.normal();
    const double im = rng.normal();
    c = cplx(s * re, s * im);
  }
}

inline CVec sample_standard_complex_gaussian(RngStream& rng, std::size_t n) {
  if (n == 0) throw Error("sample_standard_complex_gaussian: n must be >= 1");
  CVec v(n);
  fill_standard_complex_gaussian(rng, v);
  return v;
}

}  // namespace cdc
