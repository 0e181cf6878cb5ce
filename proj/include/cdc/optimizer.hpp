#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cdc/channel.hpp"
#include "cdc/estimators.hpp"
#include "cdc/objective.hpp"
#include "cdc/particles.hpp"
#include "cdc/sampling.hpp"

namespace cdc {

class DivergenceError : public Error {
public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
public:
  NonFiniteGradient(std::size_t particle)
      : Error("non-finite gradient at particle " + std::to_string(particle)), particle_(particle) {}
  std::size_t particle() const { return particle_; }

private:
  std::size_t particle_;
};

/// Step-size schedule: constant c, or c / sqrt(t) for t >= 1.
struct Schedule {
  enum class Kind { Constant, InvSqrt };
  Kind kind = Kind::Constant;
  double c = 1.0;

  double at(std::size_t t) const {
    if (kind == Kind::Constant) return c;
    return c / std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1)));
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct Schedules {
  Schedule tau{Schedule::Kind::Constant, 5e-3};
  Schedule epsilon{Schedule::Kind::Constant, 1e-3};
  // A slow lambda step lets the average cost swing around its target in a
  // lightly damped cycle. 0.5 keeps it within about 1%.
  Schedule alpha{Schedule::Kind::Constant, 0.5};
  Schedule gamma{Schedule::Kind::Constant, 0.05};
};

/// How the dual variables move.
///   Fixed:       lambda and beta stay at their initial values.
///   Sweep:       beta fixed, lambda ascends to hold the cost at the target.
///   Constrained: both ascend towards the cost and distortion targets.
enum class Mode { Fixed, Sweep, Constrained };

struct RunConfig {
  Mode mode = Mode::Sweep;
  std::size_t max_iters = 500;
  std::size_t window = 50;
  double tol = 1e-3;
  std::uint64_t seed = 1;
  std::size_t n_particles = 128;
  SamplingConfig sampling{};
  SamplingConfig test_sampling{128, 1024, 1024, true};
  DualPair duals0{0.1, 0.0};
  double cost_target = 10.0;
  double distortion_target = 0.5;
  Schedules schedules{};
  InitKind init = InitKind::Gaussian;
  std::size_t sgd_steps = 1;
  bool train_estimator = true;
  bool freeze_noise = false;
  bool final_eval = true;
  ObjectiveOptions objective{};
  std::size_t threads = 0;
  double divergence_limit = 1e6;

  void validate() const {
    if (max_iters == 0) throw Error("max_iters must be >= 1");
    if (!(tol > 0.0)) throw Error("tol must be > 0");
    if (window == 0) throw Error("window must be >= 1");
    if (n_particles == 0) throw Error("n_particles must be >= 1");
    sampling.validate();
    test_sampling.validate();
    for (const Schedule* s : {&schedules.tau, &schedules.epsilon, &schedules.alpha, &schedules.gamma})
      if (!(s->c > 0.0)) throw Error("schedule values must be > 0");
    if (duals0.lambda < 0.0 || duals0.beta < 0.0) throw Error("initial duals must be >= 0");
  }
};

struct RunResult {
  ParticleSet particles;
  std::vector<IterationRecord> history;
  IterationRecord final;
  DualPair duals;
  bool converged = false;
};

/// Stream index reserved for the closing test-time evaluation.
inline constexpr std::uint64_t kFinalEvalIteration = 0xF1A1'0000'0000'0000ULL;

inline ParticleSet apply_particle_step(const ParticleSet& ps, const std::vector<ParticleTerms>& terms, double tau) {
  ParticleSet out = ps;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!all_finite(terms[i].grad)) throw NonFiniteGradient(i);
    MutCSpan x = out[i];
    for (std::size_t k = 0; k < x.size(); ++k) x[k] -= tau * terms[i].grad[k];
  }
  return out;
}

/// x_i <- x_i - tau grad V(x_i) for every particle.
template <ChannelModel C, StateEstimator E>
ParticleSet particle_step(const ParticleSet& ps, const SampleBatch& b, const C& ch, const E& est, DualPair duals,
                          double tau, const ObjectiveOptions& opt = {}, std::size_t threads = 0) {
  if (!(tau > 0.0)) throw Error("particle_step: tau must be > 0");
  return apply_particle_step(ps, evaluate_all(ps, b, ch, est, duals, true, opt, threads), tau);
}

/// Projected dual ascent on the constraint residuals.
inline DualPair dual_step(DualPair d, double B_hat, double D_hat, double B_target, double D_target, double alpha,
                          double gamma) {
  return {std::max(0.0, d.lambda + alpha * (B_hat - B_target)), std::max(0.0, d.beta + gamma * (D_hat - D_target))};
}

/// True when the means of R and D over the last `window` iterations moved by
/// at most tol * max(1, |mean|) relative to the window before.
inline bool window_converged(const std::vector<IterationRecord>& h, std::size_t window, double tol) {
  if (h.size() < 2 * window) return false;
  auto mean = [&](std::size_t from, auto field) {
    double acc = 0.0;
    for (std::size_t t = from; t < from + window; ++t) acc += h[t].*field;
    return acc / static_cast<double>(window);
  };
  const std::size_t cur = h.size() - window;
  const std::size_t prev = h.size() - 2 * window;
  for (auto field : {&IterationRecord::R_hat, &IterationRecord::D_hat}) {
    const double a = mean(cur, field);
    const double b = mean(prev, field);
    if (std::abs(a - b) > tol * std::max(1.0, std::abs(a))) return false;
  }
  return true;
}

/// Evaluates L, R, B, D on a fresh batch with the test-time sample sizes.
template <ChannelModel C, StateEstimator E>
IterationRecord evaluate_final(const ParticleSet& ps, const C& ch, const E& est, DualPair duals, const RunConfig& cfg) {
  SamplingConfig sc = cfg.test_sampling;
  const SampleBatch b = draw_batch(ps, ch, sc, RngKey{cfg.seed, kFinalEvalIteration});
  IterationRecord r = summarize(evaluate_all(ps, b, ch, est, duals, false, cfg.objective, cfg.threads), duals);
  return r;
}

using IterationSink = std::function<void(const IterationRecord&)>;

/// The alternating loop. Per iteration, in order: draw the batch, evaluate
/// V and its gradient at every particle, record L/B/D/R, move the
/// particles, step the estimator on the same batch, then move the duals.
template <ChannelModel C, StateEstimator E>
RunResult run(const RunConfig& cfg, const C& ch, E& est, ParticleSet initial, const IterationSink& sink = {}) {
  cfg.validate();
  if (initial.dim() != ch.input_dim()) throw Error("run: initial particles do not match the channel input dimension");

  RunResult res;
  res.particles = std::move(initial);
  res.duals = cfg.duals0;
  res.history.reserve(cfg.max_iters);

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const RngKey key{cfg.seed, cfg.freeze_noise ? 0 : t};
    const SampleBatch batch = draw_batch(res.particles, ch, cfg.sampling, key);
    const std::vector<ParticleTerms> terms =
        evaluate_all(res.particles, batch, ch, est, res.duals, true, cfg.objective, cfg.threads);

    IterationRecord rec = summarize(terms, res.duals);
    rec.t = t;
    rec.tau = cfg.schedules.tau.at(t + 1);
    rec.epsilon = cfg.schedules.epsilon.at(t + 1);
    if (!(rec.B_hat <= cfg.divergence_limit))
      throw DivergenceError("average input cost " + std::to_string(rec.B_hat) + " exceeded " +
                            std::to_string(cfg.divergence_limit) + " at iteration " + std::to_string(t) +
                            "; try a smaller tau");

    ParticleSet moved = apply_particle_step(res.particles, terms, rec.tau);
    if (cfg.train_estimator)
      for (std::size_t s = 0; s < cfg.sgd_steps; ++s) est.update(res.particles, batch, rec.epsilon);

    if (cfg.mode != Mode::Fixed) {
      const double alpha = cfg.schedules.alpha.at(t + 1);
      const double gamma = cfg.mode == Mode::Constrained ? cfg.schedules.gamma.at(t + 1) : 0.0;
      res.duals = dual_step(res.duals, rec.B_hat, rec.D_hat, cfg.cost_target, cfg.distortion_target, alpha, gamma);
    }
    res.particles = std::move(moved);
    res.history.push_back(rec);
    if (sink) sink(rec);
    if (window_converged(res.history, cfg.window, cfg.tol)) {
      res.converged = true;
      break;
    }
  }

  if (cfg.final_eval) {
    res.final = evaluate_final(res.particles, ch, est, res.duals, cfg);
    res.final.t = res.history.size();
  } else if (!res.history.empty()) {
    res.final = res.history.back();
  }
  return res;
}

template <ChannelModel C, StateEstimator E>
RunResult run(const RunConfig& cfg, const C& ch, E& est, const IterationSink& sink = {}) {
  cfg.validate();
  ParticleSet init = initial_particles(cfg.n_particles, ch.input_dim(), cfg.cost_target, cfg.init, ch.real_input(),
                                       RngKey{cfg.seed, 0});
  return run(cfg, ch, est, std::move(init), sink);
}

struct CurvePoint {
  double beta = 0.0;
  double lambda = 0.0;
  double rate = 0.0;  // nats
  double distortion = 0.0;
  double cost = 0.0;
};

struct SweepResult {
  std::vector<CurvePoint> curve;
  std::vector<RunResult> runs;
};

/// One converged run per beta (ascending), each warm-started from the
/// previous point's particles, estimator and lambda. Lambda ascends to hold
/// the cost at the target.
template <ChannelModel C, StateEstimator E>
SweepResult sweep(const RunConfig& cfg, const C& ch, E& est, std::vector<double> beta_grid,
                  const std::function<void(double beta, const IterationRecord&)>& sink = {}) {
  if (beta_grid.empty()) throw Error("sweep: empty beta grid");
  for (double b : beta_grid)
    if (!(b >= 0.0)) throw Error("sweep: beta values must be >= 0");
  std::sort(beta_grid.begin(), beta_grid.end());

  SweepResult out;
  std::optional<ParticleSet> warm;
  double lambda = cfg.duals0.lambda;
  for (double beta : beta_grid) {
    RunConfig c = cfg;
    c.mode = Mode::Sweep;
    c.duals0 = {lambda, beta};
    IterationSink s;
    if (sink) s = [&](const IterationRecord& r) { sink(beta, r); };
    RunResult r = warm ? run(c, ch, est, *warm, s) : run(c, ch, est, s);
    out.curve.push_back({beta, r.duals.lambda, r.final.mi, r.final.D_hat, r.final.B_hat});
    warm = r.particles;
    lambda = r.duals.lambda;
    out.runs.push_back(std::move(r));
  }
  return out;
}

}  // namespace cdc
