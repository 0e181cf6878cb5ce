#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cdc/channel.hpp"
#include "cdc/estimators.hpp"
#include "cdc/parallel.hpp"
#include "cdc/particles.hpp"
#include "cdc/sampling.hpp"
#include "cdc/types.hpp"

namespace cdc {

struct DualPair {
  double lambda = 0.0;  // cost multiplier
  double beta = 0.0;    // distortion multiplier

  friend bool operator==(const DualPair&, const DualPair&) = default;
};

struct ObjectiveOptions {
  bool mi_enabled = true;
};

/// Per-iteration diagnostics. Rates are in nats.
struct IterationRecord {
  std::size_t t = 0;
  double L_hat = 0.0;
  double R_hat = 0.0;
  double B_hat = 0.0;
  double D_hat = 0.0;
  double mi = 0.0;  // plain particle average of the MI term
  double lambda = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  double epsilon = 0.0;
  double grad_norm = 0.0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

/// The pieces of the potential V(x) at one particle and, optionally, its
/// gradient in x.
struct ParticleTerms {
  double cost = 0.0;
  double distortion = 0.0;
  double mi = 0.0;
  double value = 0.0;
  CVec grad;
};

inline double eval_cost(const ParticleSet& ps) {
  return empirical_mean_of(ps, [](CSpan x) { return squared_norm(x); });
}

namespace detail {

/// Importance-sampled distortion of particle slot i evaluated at input x:
/// mean over (j, l) of (s_j - h(x, z_{i,j,l}(x)))^2 with the slot's frozen
/// echo noise. Adds its x-gradient times `scale` into `grad` when non-empty.
template <ChannelModel C, StateEstimator E>
double particle_distortion(CSpan x, std::size_t i, const SampleBatch& b, const C& ch, const E& est, double scale,
                           MutCSpan grad) {
  const std::size_t ns = b.n_s();
  const std::size_t M = b.z_per_particle();
  const std::size_t dz = b.z_dim;
  const std::size_t dx = x.size();
  const bool want = !grad.empty();

  CVec zs(M * dz);
  for (std::size_t j = 0; j < ns; ++j)
    for (std::size_t l = 0; l < b.n_z; ++l) {
      const std::size_t c = j * b.n_z + l;
      ch.sample_z(x, b.states.values[j], b.states.feature(j), b.z_noise_at(i, j, l), MutCSpan(zs).subspan(c * dz, dz));
    }

  std::vector<double> h(M);
  CVec gx(want ? M * dx : 0);
  CVec gz(want ? M * dz : 0);
  est.estimate_many(x, zs, M, b.states, h, gx, gz);

  double acc = 0.0;
  CVec pulled(dx);
  for (std::size_t j = 0; j < ns; ++j) {
    const State s = b.states.values[j];
    for (std::size_t l = 0; l < b.n_z; ++l) {
      const std::size_t c = j * b.n_z + l;
      const double e = h[c] - s;
      acc += e * e;
      if (!want) continue;
      const double w = scale * 2.0 * e / static_cast<double>(M);
      ch.pullback_z(x, s, b.states.feature(j), CSpan(gz).subspan(c * dz, dz), pulled);
      for (std::size_t k = 0; k < dx; ++k) grad[k] += w * (gx[c * dx + k] + pulled[k]);
    }
  }
  return acc / static_cast<double>(M);
}

/// Importance-sampled MI integrand at x for particle slot i:
/// mean over the slot's Y samples of log p_{Y|X}(y|x) - log p_Y(y), with
/// p_Y the mixture over the frozen particle set `ps`. Adds its x-gradient
/// times `scale` into `grad` when non-empty.
template <ChannelModel C>
double particle_mi(CSpan x, std::size_t i, const ParticleSet& ps, const SampleBatch& b, const C& ch, double scale,
                   MutCSpan grad) {
  const std::size_t S = b.y_state_count();
  const std::size_t N = ps.size();
  const std::size_t dy = b.y_dim;
  const std::size_t dx = x.size();
  const std::size_t K = b.y_per_particle();
  const bool want = !grad.empty();
  const double log_s = std::log(static_cast<double>(S));
  const double log_ns = std::log(static_cast<double>(N * S));

  CVec y(dy);
  AlignedVec la(S), lb(N * S);
  CVec gxa(want ? S * dx : 0), gya(want ? S * dy : 0), gyb(want ? N * S * dy : 0);
  CVec cot(dy), pulled(dx);

  double acc = 0.0;
  for (std::size_t g = 0; g < b.y_groups; ++g) {
    const State sg = b.states.values[g];
    for (std::size_t k = 0; k < b.n_y; ++k) {
      ch.sample_y(x, sg, b.states.feature(g), b.y_noise_at(i, g, k), y);
      for (std::size_t j = 0; j < S; ++j) {
        const State s = b.states.values[j];
        la[j] = want ? ch.grad_log_p_y(y, x, s, b.states.feature(j), MutCSpan(gxa).subspan(j * dx, dx),
                                       MutCSpan(gya).subspan(j * dy, dy))
                     : ch.log_p_y(y, x, s, b.states.feature(j));
      }
      for (std::size_t ip = 0; ip < N; ++ip)
        for (std::size_t j = 0; j < S; ++j) {
          const std::size_t c = ip * S + j;
          const State s = b.states.values[j];
          lb[c] = want ? ch.grad_log_p_y(y, ps[ip], s, b.states.feature(j), {}, MutCSpan(gyb).subspan(c * dy, dy))
                       : ch.log_p_y(y, ps[ip], s, b.states.feature(j));
        }
      // la and lb become normalized weights.
      const LogSum sa = normalize_log_weights(la);
      const LogSum sb = normalize_log_weights(lb);
      acc += ((sa.log_sum - log_s) - (sb.log_sum - log_ns)) + (sa.max - sb.max);
      if (!want) continue;

      const double w = scale / static_cast<double>(K);
      std::fill(cot.begin(), cot.end(), cplx{});
      for (std::size_t j = 0; j < S; ++j) {
        for (std::size_t d = 0; d < dx; ++d) grad[d] += w * la[j] * gxa[j * dx + d];
        for (std::size_t d = 0; d < dy; ++d) cot[d] += la[j] * gya[j * dy + d];
      }
      for (std::size_t c = 0; c < N * S; ++c)
        for (std::size_t d = 0; d < dy; ++d) cot[d] -= lb[c] * gyb[c * dy + d];
      ch.pullback_y(x, sg, b.states.feature(g), cot, pulled);
      for (std::size_t d = 0; d < dx; ++d) grad[d] += w * pulled[d];
    }
  }
  return acc / static_cast<double>(K);
}

}  // namespace detail

/// Evaluates V(x) = lambda |x|^2 + beta d_i(x) - m_i(x) for particle slot i
/// at input x (x need not equal ps[i]). The Y mixture is built from `ps`
/// and held fixed; the batch noise of slot i is held fixed.
template <ChannelModel C, StateEstimator E>
ParticleTerms evaluate_particle(CSpan x, std::size_t i, const ParticleSet& ps, const SampleBatch& b, const C& ch,
                                const E& est, DualPair duals, bool want_grad, const ObjectiveOptions& opt = {}) {
  ParticleTerms t;
  if (want_grad) t.grad.assign(x.size(), cplx{});
  t.cost = squared_norm(x);
  const bool grad_d = want_grad && duals.beta != 0.0;
  t.distortion = detail::particle_distortion(x, i, b, ch, est, duals.beta, grad_d ? MutCSpan(t.grad) : MutCSpan{});
  if (opt.mi_enabled) t.mi = detail::particle_mi(x, i, ps, b, ch, -1.0, want_grad ? MutCSpan(t.grad) : MutCSpan{});
  t.value = duals.lambda * t.cost + duals.beta * t.distortion - t.mi;
  if (want_grad)
    for (std::size_t k = 0; k < x.size(); ++k) t.grad[k] += 2.0 * duals.lambda * x[k];
  return t;
}

template <ChannelModel C>
double eval_mi_term(CSpan x, std::size_t i, const ParticleSet& ps, const SampleBatch& b, const C& ch) {
  return detail::particle_mi(x, i, ps, b, ch, 0.0, {});
}

template <ChannelModel C, StateEstimator E>
double eval_V(CSpan x, std::size_t i, const ParticleSet& ps, const SampleBatch& b, const C& ch, const E& est,
              DualPair duals, const ObjectiveOptions& opt = {}) {
  return evaluate_particle(x, i, ps, b, ch, est, duals, false, opt).value;
}

template <ChannelModel C, StateEstimator E>
CVec grad_V(CSpan x, std::size_t i, const ParticleSet& ps, const SampleBatch& b, const C& ch, const E& est,
            DualPair duals, const ObjectiveOptions& opt = {}) {
  return evaluate_particle(x, i, ps, b, ch, est, duals, true, opt).grad;
}

/// Mean over all (i, j, l) of (s_j - h(x_i, z_{i,j,l}))^2.
template <ChannelModel C, StateEstimator E>
double eval_distortion(const ParticleSet& ps, const SampleBatch& b, const C& ch, const E& est) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) acc += detail::particle_distortion(ps[i], i, b, ch, est, 0.0, {});
  return acc / static_cast<double>(ps.size());
}

template <ChannelModel C, StateEstimator E>
std::vector<ParticleTerms> evaluate_all(const ParticleSet& ps, const SampleBatch& b, const C& ch, const E& est,
                                        DualPair duals, bool want_grad, const ObjectiveOptions& opt = {},
                                        std::size_t threads = 0) {
  std::vector<ParticleTerms> out(ps.size());
  parallel_for(ps.size(), threads,
               [&](std::size_t i) { out[i] = evaluate_particle(ps[i], i, ps, b, ch, est, duals, want_grad, opt); });
  return out;
}

/// Assembles L, B, D and R = lambda B + beta D - L from per-particle terms
/// (index-ordered sums).
inline IterationRecord summarize(const std::vector<ParticleTerms>& terms, DualPair duals) {
  IterationRecord r;
  const double n = static_cast<double>(terms.size());
  for (const ParticleTerms& t : terms) {
    r.L_hat += t.value;
    r.B_hat += t.cost;
    r.D_hat += t.distortion;
    r.mi += t.mi;
    if (!t.grad.empty()) r.grad_norm += std::sqrt(squared_norm(t.grad));
  }
  r.L_hat /= n;
  r.B_hat /= n;
  r.D_hat /= n;
  r.mi /= n;
  r.grad_norm /= n;
  r.R_hat = duals.lambda * r.B_hat + duals.beta * r.D_hat - r.L_hat;
  r.lambda = duals.lambda;
  r.beta = duals.beta;
  return r;
}

}  // namespace cdc
