#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "cdc/rng.hpp"
#include "cdc/types.hpp"

namespace cdc {

/// A set of states together with per-state features precomputed by the
/// channel (the steering vector for ISAC). Features let the hot loops avoid
/// recomputing trigonometry for every likelihood evaluation.
struct StateSet {
  std::vector<State> values;
  CVec features;
  std::size_t width = 0;

  std::size_t size() const { return values.size(); }
  CSpan feature(std::size_t j) const { return CSpan(features).subspan(j * width, width); }
};

/// Contract for a memoryless state-dependent channel p_{YZ|XS} with state
/// prior p_S.
///
/// Samplers are reparameterized: y = g(x, s, noise) with the noise drawn
/// separately, so a sample can be re-evaluated at a moved input with the
/// same noise. `pullback_*` applies the transposed Jacobian of the sampler
/// with respect to x to a cotangent on the output (reverse mode).
///
/// Gradient outputs use the R^2 encoding documented on CVec. An empty output
/// span means "not requested".
template <class C>
concept ChannelModel = requires(const C& ch, RngStream& rng, CSpan v, MutCSpan out, State s) {
  { ch.input_dim() } -> std::convertible_to<std::size_t>;
  { ch.y_dim() } -> std::convertible_to<std::size_t>;
  { ch.z_dim() } -> std::convertible_to<std::size_t>;
  { ch.feature_width() } -> std::convertible_to<std::size_t>;
  { ch.y_depends_on_state() } -> std::convertible_to<bool>;
  { ch.real_input() } -> std::convertible_to<bool>;
  { ch.sample_state(rng) } -> std::convertible_to<State>;
  ch.state_features(s, out);
  ch.draw_y_noise(rng, out);
  ch.draw_z_noise(rng, out);
  ch.sample_y(v, s, v, v, out);
  ch.sample_z(v, s, v, v, out);
  ch.pullback_y(v, s, v, v, out);
  ch.pullback_z(v, s, v, v, out);
  { ch.log_p_y(v, v, s, v) } -> std::convertible_to<double>;
  { ch.log_p_z(v, v, s, v) } -> std::convertible_to<double>;
  { ch.grad_log_p_y(v, v, s, v, out, out) } -> std::convertible_to<double>;
  { ch.grad_log_p_z(v, v, s, v, out, out) } -> std::convertible_to<double>;
};

template <ChannelModel C>
StateSet make_state_set(const C& ch, std::vector<State> values) {
  StateSet st;
  st.width = ch.feature_width();
  st.features.assign(values.size() * st.width, cplx{});
  for (std::size_t j = 0; j < values.size(); ++j)
    ch.state_features(values[j], MutCSpan(st.features).subspan(j * st.width, st.width));
  st.values = std::move(values);
  return st;
}

// ---------------------------------------------------------------------------
// Monostatic-downlink ISAC: y = x + n1, z = a(phi) x + n2, phi ~ U[-pi/2, pi/2]

/// Uniform linear array response, entry k = exp(j k pi sin(phi)).
inline void steering_vector_into(double phi, MutCSpan out) {
  const double w = kPi * std::sin(phi);
  if (out.empty()) return;
  out[0] = cplx(1.0, 0.0);
  for (std::size_t k = 1; k < out.size(); ++k) out[k] = std::polar(1.0, static_cast<double>(k) * w);
}

inline CVec steering_vector(double phi, std::size_t n_rx) {
  if (n_rx == 0) throw Error("steering_vector: n_rx must be >= 1");
  CVec a(n_rx);
  steering_vector_into(phi, a);
  return a;
}

class IsacMonostatic {
public:
  explicit IsacMonostatic(std::size_t n_rx) : n_rx_(n_rx) {
    if (n_rx == 0) throw Error("IsacMonostatic: n_rx must be >= 1");
  }

  std::size_t n_rx() const { return n_rx_; }
  std::size_t input_dim() const { return 1; }
  std::size_t y_dim() const { return 1; }
  std::size_t z_dim() const { return n_rx_; }
  std::size_t feature_width() const { return n_rx_; }
  bool y_depends_on_state() const { return false; }
  bool real_input() const { return false; }

  State sample_state(RngStream& rng) const { return rng.uniform(-kPi / 2.0, kPi / 2.0); }
  void state_features(State phi, MutCSpan out) const { steering_vector_into(phi, out); }

  void draw_y_noise(RngStream& rng, MutCSpan out) const { fill_standard_complex_gaussian(rng, out); }
  void draw_z_noise(RngStream& rng, MutCSpan out) const { fill_standard_complex_gaussian(rng, out); }

  void sample_y(CSpan x, State, CSpan, CSpan noise, MutCSpan y) const { y[0] = x[0] + noise[0]; }

  void sample_z(CSpan x, State, CSpan a, CSpan noise, MutCSpan z) const {
    for (std::size_t k = 0; k < n_rx_; ++k) z[k] = a[k] * x[0] + noise[k];
  }

  void pullback_y(CSpan, State, CSpan, CSpan cot, MutCSpan gx) const { gx[0] = cot[0]; }

  // z = a x is C-linear, so the real transpose Jacobian is multiplication by conj(a).
  void pullback_z(CSpan, State, CSpan a, CSpan cot, MutCSpan gx) const {
    cplx acc{};
    for (std::size_t k = 0; k < n_rx_; ++k) acc += std::conj(a[k]) * cot[k];
    gx[0] = acc;
  }

  double log_p_y(CSpan y, CSpan x, State, CSpan) const { return -kLogPi - abs2(y[0] - x[0]); }

  double grad_log_p_y(CSpan y, CSpan x, State, CSpan, MutCSpan gx, MutCSpan gy) const {
    const cplx r = y[0] - x[0];
    if (!gx.empty()) gx[0] = 2.0 * r;
    if (!gy.empty()) gy[0] = -2.0 * r;
    return -kLogPi - abs2(r);
  }

  double log_p_z(CSpan z, CSpan x, State, CSpan a) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < n_rx_; ++k) acc += abs2(z[k] - a[k] * x[0]);
    return -static_cast<double>(n_rx_) * kLogPi - acc;
  }

  double grad_log_p_z(CSpan z, CSpan x, State, CSpan a, MutCSpan gx, MutCSpan gz) const {
    double acc = 0.0;
    cplx ahr{};
    for (std::size_t k = 0; k < n_rx_; ++k) {
      const cplx r = z[k] - a[k] * x[0];
      acc += abs2(r);
      ahr += std::conj(a[k]) * r;
      if (!gz.empty()) gz[k] = -2.0 * r;
    }
    if (!gx.empty()) gx[0] = 2.0 * ahr;
    return -static_cast<double>(n_rx_) * kLogPi - acc;
  }

private:
  std::size_t n_rx_;
};

/// log p(z | x, phi) for the ISAC echo branch with CN(0, I) noise.
inline double isac_log_p_z(CSpan z, CSpan x, double phi, std::size_t n_rx) {
  const CVec a = steering_vector(phi, n_rx);
  return IsacMonostatic(n_rx).log_p_z(z, x, phi, a);
}

inline CVec isac_sample_z(CSpan x, double phi, CSpan noise) {
  const CVec a = steering_vector(phi, noise.size());
  CVec z(noise.size());
  IsacMonostatic(noise.size()).sample_z(x, phi, a, noise, z);
  return z;
}

// ---------------------------------------------------------------------------
// Real scalar AWGN baseline: y = Re(x) + n, n ~ N(0, 1); the state is the
// constant 0, so the sensing branch carries no information.

class RealAwgn {
public:
  std::size_t input_dim() const { return 1; }
  std::size_t y_dim() const { return 1; }
  std::size_t z_dim() const { return 1; }
  std::size_t feature_width() const { return 0; }
  bool y_depends_on_state() const { return false; }
  bool real_input() const { return true; }

  State sample_state(RngStream&) const { return 0.0; }
  void state_features(State, MutCSpan) const {}

  void draw_y_noise(RngStream& rng, MutCSpan out) const {
    for (cplx& c : out) c = cplx(rng.normal(), 0.0);
  }
  void draw_z_noise(RngStream& rng, MutCSpan out) const { draw_y_noise(rng, out); }

  void sample_y(CSpan x, State, CSpan, CSpan noise, MutCSpan y) const { y[0] = cplx(x[0].real() + noise[0].real(), 0.0); }
  void sample_z(CSpan x, State s, CSpan f, CSpan noise, MutCSpan z) const { sample_y(x, s, f, noise, z); }

  void pullback_y(CSpan, State, CSpan, CSpan cot, MutCSpan gx) const { gx[0] = cplx(cot[0].real(), 0.0); }
  void pullback_z(CSpan x, State s, CSpan f, CSpan cot, MutCSpan gx) const { pullback_y(x, s, f, cot, gx); }

  double log_p_y(CSpan y, CSpan x, State, CSpan) const {
    const double r = y[0].real() - x[0].real();
    return -kHalfLog2Pi - 0.5 * r * r;
  }

  double grad_log_p_y(CSpan y, CSpan x, State, CSpan, MutCSpan gx, MutCSpan gy) const {
    const double r = y[0].real() - x[0].real();
    if (!gx.empty()) gx[0] = cplx(r, 0.0);
    if (!gy.empty()) gy[0] = cplx(-r, 0.0);
    return -kHalfLog2Pi - 0.5 * r * r;
  }

  double log_p_z(CSpan z, CSpan x, State s, CSpan f) const { return log_p_y(z, x, s, f); }
  double grad_log_p_z(CSpan z, CSpan x, State s, CSpan f, MutCSpan gx, MutCSpan gz) const {
    return grad_log_p_y(z, x, s, f, gx, gz);
  }

private:
  static constexpr double kHalfLog2Pi = 0.91893853320467274178;
};

static_assert(ChannelModel<IsacMonostatic>);
static_assert(ChannelModel<RealAwgn>);

// Point-wise wrappers that compute the state features on the fly.

template <ChannelModel C>
CVec features_of(const C& ch, State s) {
  CVec f(ch.feature_width());
  ch.state_features(s, f);
  return f;
}

template <ChannelModel C>
double log_p_y(const C& ch, CSpan y, CSpan x, State s) {
  return ch.log_p_y(y, x, s, features_of(ch, s));
}

template <ChannelModel C>
double log_p_z(const C& ch, CSpan z, CSpan x, State s) {
  return ch.log_p_z(z, x, s, features_of(ch, s));
}

/// Gradient of log p_{Y|XS}(y | x, s) in x, holding y fixed.
template <ChannelModel C>
CVec grad_x_log_p_y(const C& ch, CSpan y, CSpan x, State s) {
  CVec g(x.size());
  ch.grad_log_p_y(y, x, s, features_of(ch, s), g, {});
  return g;
}

template <ChannelModel C>
CVec grad_x_log_p_z(const C& ch, CSpan z, CSpan x, State s) {
  CVec g(x.size());
  ch.grad_log_p_z(z, x, s, features_of(ch, s), g, {});
  return g;
}

}  // namespace cdc
