#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cdc/cdc.hpp"

namespace testing_support {

using namespace cdc;

/// Channel whose densities are set by hand: p(y | x, s) = Re(x) + s and
/// log p(z | x, s) = s. Only meaningful for evaluating the density
/// estimators on hand-built batches.
struct TableChannel {
  std::size_t input_dim() const { return 1; }
  std::size_t y_dim() const { return 1; }
  std::size_t z_dim() const { return 1; }
  std::size_t feature_width() const { return 0; }
  bool y_depends_on_state() const { return true; }
  bool real_input() const { return true; }
  State sample_state(RngStream& rng) const { return rng.uniform(0.0, 1.0); }
  void state_features(State, MutCSpan) const {}
  void draw_y_noise(RngStream& rng, MutCSpan out) const { fill_standard_complex_gaussian(rng, out); }
  void draw_z_noise(RngStream& rng, MutCSpan out) const { fill_standard_complex_gaussian(rng, out); }
  void sample_y(CSpan x, State, CSpan, CSpan n, MutCSpan y) const { y[0] = x[0] + n[0]; }
  void sample_z(CSpan x, State, CSpan, CSpan n, MutCSpan z) const { z[0] = x[0] + n[0]; }
  void pullback_y(CSpan, State, CSpan, CSpan c, MutCSpan g) const { g[0] = c[0]; }
  void pullback_z(CSpan, State, CSpan, CSpan c, MutCSpan g) const { g[0] = c[0]; }
  double log_p_y(CSpan, CSpan x, State s, CSpan) const { return std::log(x[0].real() + s); }
  double log_p_z(CSpan, CSpan, State s, CSpan) const { return s; }
  double grad_log_p_y(CSpan y, CSpan x, State s, CSpan f, MutCSpan, MutCSpan) const { return log_p_y(y, x, s, f); }
  double grad_log_p_z(CSpan z, CSpan x, State s, CSpan f, MutCSpan, MutCSpan) const { return log_p_z(z, x, s, f); }
};
static_assert(ChannelModel<TableChannel>);

/// A batch with the given states and no samples, for density evaluation.
template <ChannelModel C>
SampleBatch batch_with_states(const C& ch, std::vector<State> s) {
  SampleBatch b;
  b.states = make_state_set(ch, std::move(s));
  b.y_state_free = !ch.y_depends_on_state();
  b.y_dim = ch.y_dim();
  b.z_dim = ch.z_dim();
  return b;
}

/// Returns a constant, ignoring its inputs.
struct ConstantEstimator {
  double c = 0.0;
  double estimate(CSpan, CSpan, const StateSet&) const { return c; }
  double estimate_grad(CSpan, CSpan, const StateSet&, MutCSpan gx, MutCSpan gz) const {
    std::fill(gx.begin(), gx.end(), cplx{});
    std::fill(gz.begin(), gz.end(), cplx{});
    return c;
  }
  void estimate_many(CSpan, CSpan, std::size_t count, const StateSet&, std::span<double> out, MutCSpan gx,
                     MutCSpan gz) const {
    for (std::size_t k = 0; k < count; ++k) out[k] = c;
    std::fill(gx.begin(), gx.end(), cplx{});
    std::fill(gz.begin(), gz.end(), cplx{});
  }
  void update(const ParticleSet&, const SampleBatch&, double) {}
};
static_assert(StateEstimator<ConstantEstimator>);

/// Knows the batch it is evaluated on: looks the echo sample up bit-exactly
/// and returns the state it was generated from.
struct OracleEstimator {
  const SampleBatch* batch = nullptr;

  double lookup(CSpan z) const {
    const std::size_t dz = batch->z_dim;
    for (std::size_t i = 0; i < batch->n_particles; ++i)
      for (std::size_t j = 0; j < batch->n_s(); ++j)
        for (std::size_t l = 0; l < batch->n_z; ++l) {
          const CSpan c = batch->z_sample(i, j, l);
          if (std::equal(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(dz), z.begin())) return batch->states.values[j];
        }
    return std::numeric_limits<double>::quiet_NaN();
  }
  double estimate(CSpan, CSpan z, const StateSet&) const { return lookup(z); }
  double estimate_grad(CSpan x, CSpan z, const StateSet& st, MutCSpan gx, MutCSpan gz) const {
    std::fill(gx.begin(), gx.end(), cplx{});
    std::fill(gz.begin(), gz.end(), cplx{});
    return estimate(x, z, st);
  }
  void estimate_many(CSpan, CSpan zs, std::size_t count, const StateSet&, std::span<double> out, MutCSpan gx,
                     MutCSpan gz) const {
    for (std::size_t k = 0; k < count; ++k) out[k] = lookup(zs.subspan(k * batch->z_dim, batch->z_dim));
    std::fill(gx.begin(), gx.end(), cplx{});
    std::fill(gz.begin(), gz.end(), cplx{});
  }
  void update(const ParticleSet&, const SampleBatch&, double) {}
};
static_assert(StateEstimator<OracleEstimator>);

inline CVec random_cvec(RngStream& rng, std::size_t n, double scale = 1.0) {
  CVec v(n);
  for (cplx& c : v) c = cplx(scale * rng.normal(), scale * rng.normal());
  return v;
}

}  // namespace testing_support
