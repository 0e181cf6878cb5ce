#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <vector>

#include "cdc/channel.hpp"
#include "cdc/particles.hpp"
#include "cdc/rng.hpp"
#include "cdc/types.hpp"

namespace cdc {

struct SamplingConfig {
  std::size_t n_s = 128;
  std::size_t n_y = 64;
  std::size_t n_z = 8;
  /// When the Y branch does not depend on the state, draw N_y samples per
  /// particle instead of N_s * N_y. The N_s groups would be i.i.d. draws of
  /// the same law, so this only changes the Monte-Carlo sample count.
  bool collapse_state_free_y = true;

  void validate() const {
    if (n_s == 0 || n_y == 0 || n_z == 0) throw Error("SamplingConfig: all sample counts must be >= 1");
  }
};

/// Frozen draws for one iteration: the shared states {s_j}, the noise for
/// every (particle, state, sample) slot, and the reparameterized samples
/// evaluated at the particle positions the batch was drawn for.
///
/// Y samples are grouped by state; with a collapsed Y branch there is a
/// single group evaluated at state 0.
struct SampleBatch {
  StateSet states;
  std::size_t n_particles = 0;
  std::size_t y_groups = 0;
  std::size_t n_y = 0;
  std::size_t n_z = 0;
  std::size_t y_dim = 0;
  std::size_t z_dim = 0;
  bool y_state_free = false;

  CVec y_noise;
  CVec z_noise;
  CVec y_samples;
  CVec z_samples;

  std::size_t n_s() const { return states.size(); }
  std::size_t y_per_particle() const { return y_groups * n_y; }
  std::size_t z_per_particle() const { return n_s() * n_z; }

  /// Number of states that enter the Y-likelihood averages.
  std::size_t y_state_count() const { return y_state_free ? 1 : n_s(); }

  std::size_t y_index(std::size_t i, std::size_t g, std::size_t k) const { return ((i * y_groups + g) * n_y + k) * y_dim; }
  std::size_t z_index(std::size_t i, std::size_t j, std::size_t l) const { return ((i * n_s() + j) * n_z + l) * z_dim; }

  CSpan y_noise_at(std::size_t i, std::size_t g, std::size_t k) const { return CSpan(y_noise).subspan(y_index(i, g, k), y_dim); }
  CSpan z_noise_at(std::size_t i, std::size_t j, std::size_t l) const { return CSpan(z_noise).subspan(z_index(i, j, l), z_dim); }
  CSpan y_sample(std::size_t i, std::size_t g, std::size_t k) const { return CSpan(y_samples).subspan(y_index(i, g, k), y_dim); }
  CSpan z_sample(std::size_t i, std::size_t j, std::size_t l) const { return CSpan(z_samples).subspan(z_index(i, j, l), z_dim); }

  /// All N_s * N_z echo samples of particle i, ordered (j, l).
  CSpan z_block(std::size_t i) const { return CSpan(z_samples).subspan(z_index(i, 0, 0), z_per_particle() * z_dim); }
  CSpan z_noise_block(std::size_t i) const { return CSpan(z_noise).subspan(z_index(i, 0, 0), z_per_particle() * z_dim); }
};

/// Re-evaluates the reparameterized samples at new particle positions,
/// keeping states and noise frozen.
template <ChannelModel C>
void resample_at(SampleBatch& b, const ParticleSet& ps, const C& ch) {
  for (std::size_t i = 0; i < b.n_particles; ++i) {
    const CSpan x = ps[i];
    for (std::size_t g = 0; g < b.y_groups; ++g) {
      const State s = b.states.values[g];
      for (std::size_t k = 0; k < b.n_y; ++k)
        ch.sample_y(x, s, b.states.feature(g), b.y_noise_at(i, g, k),
                    MutCSpan(b.y_samples).subspan(b.y_index(i, g, k), b.y_dim));
    }
    for (std::size_t j = 0; j < b.n_s(); ++j) {
      const State s = b.states.values[j];
      for (std::size_t l = 0; l < b.n_z; ++l)
        ch.sample_z(x, s, b.states.feature(j), b.z_noise_at(i, j, l),
                    MutCSpan(b.z_samples).subspan(b.z_index(i, j, l), b.z_dim));
    }
  }
}

template <ChannelModel C>
SampleBatch draw_batch(const ParticleSet& ps, const C& ch, const SamplingConfig& cfg, RngKey key) {
  cfg.validate();
  if (ps.dim() != ch.input_dim()) throw Error("draw_batch: particle dimension does not match the channel input");

  SampleBatch b;
  {
    RngStream rng = key.stream(0, Role::States);
    std::vector<State> s(cfg.n_s);
    for (State& v : s) v = ch.sample_state(rng);
    b.states = make_state_set(ch, std::move(s));
  }
  b.n_particles = ps.size();
  b.y_state_free = !ch.y_depends_on_state();
  b.y_groups = (b.y_state_free && cfg.collapse_state_free_y) ? 1 : cfg.n_s;
  b.n_y = cfg.n_y;
  b.n_z = cfg.n_z;
  b.y_dim = ch.y_dim();
  b.z_dim = ch.z_dim();

  const std::size_t ny = b.n_particles * b.y_per_particle() * b.y_dim;
  const std::size_t nz = b.n_particles * b.z_per_particle() * b.z_dim;
  b.y_noise.resize(ny);
  b.z_noise.resize(nz);
  b.y_samples.resize(ny);
  b.z_samples.resize(nz);

  for (std::size_t i = 0; i < b.n_particles; ++i) {
    RngStream ry = key.stream(i, Role::YNoise);
    RngStream rz = key.stream(i, Role::ZNoise);
    const std::size_t yo = b.y_index(i, 0, 0);
    const std::size_t zo = b.z_index(i, 0, 0);
    ch.draw_y_noise(ry, MutCSpan(b.y_noise).subspan(yo, b.y_per_particle() * b.y_dim));
    ch.draw_z_noise(rz, MutCSpan(b.z_noise).subspan(zo, b.z_per_particle() * b.z_dim));
  }
  resample_at(b, ps, ch);
  return b;
}

/// log of (1/N_s) sum_j p_{Y|XS}(y | x, s_j). For a state-free Y branch all
/// summands coincide and the first state is used directly.
template <ChannelModel C>
double log_est_p_y_given_x(CSpan y, CSpan x, const SampleBatch& b, const C& ch) {
  const std::size_t S = b.y_state_count();
  if (S == 1) return ch.log_p_y(y, x, b.states.values[0], b.states.feature(0));
  std::vector<double> ell(S);
  for (std::size_t j = 0; j < S; ++j) ell[j] = ch.log_p_y(y, x, b.states.values[j], b.states.feature(j));
  return log_sum_exp(ell) - std::log(static_cast<double>(S));
}

template <ChannelModel C>
double est_p_y_given_x(CSpan y, CSpan x, const SampleBatch& b, const C& ch) {
  return std::exp(log_est_p_y_given_x(y, x, b, ch));
}

/// log of the particle mixture (1/(N N_s)) sum_{i', j'} p_{Y|XS}(y | x_i', s_j').
template <ChannelModel C>
double log_est_p_y(CSpan y, const ParticleSet& ps, const SampleBatch& b, const C& ch) {
  const std::size_t S = b.y_state_count();
  std::vector<double> ell(ps.size() * S);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < S; ++j)
      ell[i * S + j] = ch.log_p_y(y, ps[i], b.states.values[j], b.states.feature(j));
  return log_sum_exp(ell) - std::log(static_cast<double>(ell.size()));
}

template <ChannelModel C>
double est_p_y(CSpan y, const ParticleSet& ps, const SampleBatch& b, const C& ch) {
  return std::exp(log_est_p_y(y, ps, b, ch));
}

/// Scratch buffer for log-weights. Eigen's vectorized loops peel a scalar
/// head whose length depends on the address alignment, which changes the
/// rounding; keeping every buffer aligned the same way keeps results
/// bit-reproducible across threads and processes.
using AlignedVec = std::vector<double, Eigen::aligned_allocator<double>>;

/// log(sum(exp(ell))) split as max + log_sum, so that differences of two
/// such sums can cancel the max exactly.
struct LogSum {
  double max = 0.0;
  double log_sum = 0.0;
  double value() const { return max + log_sum; }
};

/// Replaces log-weights by their softmax and returns log(sum(exp(ell))).
inline LogSum normalize_log_weights(AlignedVec& ell) {
  Eigen::Map<Eigen::ArrayXd, Eigen::AlignedMax> a(ell.data(), static_cast<Eigen::Index>(ell.size()));
  const double m = a.maxCoeff();
  a = (a - m).exp();
  const double acc = a.sum();
  a *= 1.0 / acc;
  return {m, std::log(acc)};
}

inline void softmax_inplace(AlignedVec& ell) { normalize_log_weights(ell); }

/// Self-normalized importance weights of the batch states under p(z | x, s),
/// with p_S as the proposal.
template <ChannelModel C>
std::vector<double> posterior_weights(CSpan z, CSpan x, const SampleBatch& b, const C& ch) {
  AlignedVec w(b.n_s());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = ch.log_p_z(z, x, b.states.values[j], b.states.feature(j));
  softmax_inplace(w);
  return {w.begin(), w.end()};
}

}  // namespace cdc
