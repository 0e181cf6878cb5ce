#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdc {

using cplx = std::complex<double>;

/// Complex vector stored as interleaved (re, im) pairs.
///
/// Gradients of real-valued functions with respect to a complex vector v use
/// the same container: entry k holds (df/dRe v_k) + j (df/dIm v_k), i.e. the
/// ordinary real gradient over the R^2 encoding of each scalar.
using CVec = std::vector<cplx>;

using CSpan = std::span<const cplx>;
using MutCSpan = std::span<cplx>;

/// Channel state. Both built-in channels carry a scalar state (the ISAC
/// angle of arrival in radians, a constant for the AWGN baseline).
using State = double;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kLogPi = 1.1447298858494002;  // log(pi)
inline constexpr double kLn2 = std::numbers::ln2;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// |c|^2 without the overflow-safe hypot path std::norm takes for double.
inline double abs2(cplx c) { return c.real() * c.real() + c.imag() * c.imag(); }

inline double squared_norm(CSpan v) {
  double acc = 0.0;
  for (const cplx& c : v) acc += abs2(c);
  return acc;
}

inline double squared_distance(CSpan a, CSpan b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += abs2(a[k] - b[k]);
  return acc;
}

inline bool all_finite(CSpan v) {
  for (const cplx& c : v)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  return true;
}

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty range.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = v[0];
  for (double e : v) m = std::max(m, e);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double e : v) acc += std::exp(e - m);
  return m + std::log(acc);
}

}  // namespace cdc
