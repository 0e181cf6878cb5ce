#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cdc/channel.hpp"
#include "cdc/estimators.hpp"
#include "cdc/objective.hpp"
#include "cdc/particles.hpp"
#include "cdc/rng.hpp"
#include "cdc/sampling.hpp"

namespace cdc {

/// Central-difference gradient of f over the R^2 encoding of v.
inline CVec central_difference(const std::function<double(CSpan)>& f, CSpan v, double h) {
  CVec w(v.begin(), v.end());
  CVec g(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const cplx orig = w[k];
    for (int part = 0; part < 2; ++part) {
      const cplx step = part == 0 ? cplx(h, 0.0) : cplx(0.0, h);
      w[k] = orig + step;
      const double fp = f(w);
      w[k] = orig - step;
      const double fm = f(w);
      w[k] = orig;
      const double d = (fp - fm) / (2.0 * h);
      g[k] += part == 0 ? cplx(d, 0.0) : cplx(0.0, d);
    }
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), or 0 when both vanish.
inline double relative_error(CSpan a, CSpan b) {
  const double den = std::sqrt(std::max(squared_norm(a), squared_norm(b)));
  return den == 0.0 ? 0.0 : std::sqrt(squared_distance(a, b)) / den;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? 0.0 : std::sqrt(num) / den;
}

/// Outcome of one self-check: the worst error (relative gradient error, or
/// size of an invariant violation) over all instances.
struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error <= tolerance; }
};

namespace detail {

inline CVec random_cvec(RngStream& rng, std::size_t n, double scale) {
  CVec v(n);
  for (cplx& c : v) c = cplx(scale * rng.normal(), scale * rng.normal());
  return v;
}

/// True when every hidden pre-activation is more than `margin` from zero.
inline bool clear_of_kinks(const MlpEstimator& m, const Eigen::MatrixXd& inputs, double margin) {
  return m.kink_margin(inputs) > margin;
}

}  // namespace detail

/// Finite-difference checks of every analytic gradient in the library on
/// random instances. Used by the `check` subcommand.
inline std::vector<CheckResult> run_gradient_checks(std::size_t instances = 50, std::uint64_t seed = 7,
                                                        double tol = 1e-4) {
  using detail::random_cvec;
  std::vector<CheckResult> out;
  const double h = 1e-5;
  RngStream rng(seed, stream_id(0, 0, Role::Test));
  const IsacMonostatic isac(2);
  const RealAwgn awgn;

  auto record = [&](std::string name, auto&& one) {
    CheckResult r{std::move(name), 0, 0.0, tol};
    for (std::size_t n = 0; n < instances; ++n) {
      r.max_error = std::max(r.max_error, one());
      ++r.instances;
    }
    out.push_back(r);
  };

  record("isac log_p_y (x, y)", [&] {
    const CVec x = random_cvec(rng, 1, 2.0), y = random_cvec(rng, 1, 2.0);
    CVec gx(1), gy(1);
    isac.grad_log_p_y(y, x, 0.0, {}, gx, gy);
    const CVec fx = central_difference([&](CSpan v) { return isac.log_p_y(y, v, 0.0, {}); }, x, h);
    const CVec fy = central_difference([&](CSpan v) { return isac.log_p_y(v, x, 0.0, {}); }, y, h);
    return std::max(relative_error(gx, fx), relative_error(gy, fy));
  });

  record("isac log_p_z (x, z)", [&] {
    const double phi = rng.uniform(-kPi / 2, kPi / 2);
    const CVec a = steering_vector(phi, 2);
    const CVec x = random_cvec(rng, 1, 2.0), z = random_cvec(rng, 2, 2.0);
    CVec gx(1), gz(2);
    isac.grad_log_p_z(z, x, phi, a, gx, gz);
    const CVec fx = central_difference([&](CSpan v) { return isac.log_p_z(z, v, phi, a); }, x, h);
    const CVec fz = central_difference([&](CSpan v) { return isac.log_p_z(v, x, phi, a); }, z, h);
    return std::max(relative_error(gx, fx), relative_error(gz, fz));
  });

  record("awgn log_p_y (x, y)", [&] {
    const CVec x{cplx(2.0 * rng.normal(), 0.0)}, y{cplx(2.0 * rng.normal(), 0.0)};
    CVec gx(1), gy(1);
    awgn.grad_log_p_y(y, x, 0.0, {}, gx, gy);
    const CVec fx = central_difference([&](CSpan v) { return awgn.log_p_y(y, v, 0.0, {}); }, x, h);
    const CVec fy = central_difference([&](CSpan v) { return awgn.log_p_y(v, x, 0.0, {}); }, y, h);
    return std::max(relative_error(gx, fx), relative_error(gy, fy));
  });

  record("isac sampler pullbacks", [&] {
    const double phi = rng.uniform(-kPi / 2, kPi / 2);
    const CVec a = steering_vector(phi, 2);
    const CVec x = random_cvec(rng, 1, 2.0), n = random_cvec(rng, 2, 1.0), cot = random_cvec(rng, 2, 1.0);
    auto inner = [&](CSpan v) {
      CVec z(2);
      isac.sample_z(v, phi, a, n, z);
      double s = 0.0;
      for (std::size_t k = 0; k < 2; ++k) s += z[k].real() * cot[k].real() + z[k].imag() * cot[k].imag();
      return s;
    };
    CVec g(1);
    isac.pullback_z(x, phi, a, cot, g);
    const double ez = relative_error(g, central_difference(inner, x, h));
    auto inner_y = [&](CSpan v) {
      CVec y(1);
      isac.sample_y(v, phi, a, n, y);
      return y[0].real() * cot[0].real() + y[0].imag() * cot[0].imag();
    };
    isac.pullback_y(x, phi, a, CSpan(cot).subspan(0, 1), g);
    return std::max(ez, relative_error(g, central_difference(inner_y, x, h)));
  });

  record("pm estimator (x, z)", [&] {
    std::vector<State> s(16);
    for (State& v : s) v = rng.uniform(-kPi / 2, kPi / 2);
    const StateSet st = make_state_set(isac, s);
    const CVec x = random_cvec(rng, 1, 1.0);
    CVec z(2);
    isac.sample_z(x, s[0], st.feature(0), random_cvec(rng, 2, std::sqrt(0.5)), z);
    const PosteriorMeanEstimator<IsacMonostatic> pm(isac);
    CVec gx(1), gz(2);
    pm.estimate_grad(x, z, st, gx, gz);
    const CVec fx = central_difference([&](CSpan v) { return pm.estimate(v, z, st); }, x, h);
    const CVec fz = central_difference([&](CSpan v) { return pm.estimate(x, v, st); }, z, h);
    return std::max(relative_error(gx, fx), relative_error(gz, fz));
  });

  std::uint64_t mlp_seed = seed;
  record("mlp input gradient", [&] {
    for (;;) {
      const MlpEstimator m(1, 2, {8, 8}, ++mlp_seed);
      const CVec x = random_cvec(rng, 1, 1.0), z = random_cvec(rng, 2, 1.0);
      if (!detail::clear_of_kinks(m, m.encode_input(x, z), 1e-3)) continue;
      CVec gx(1), gz(2);
      m.estimate_grad(x, z, {}, gx, gz);
      const CVec fx = central_difference([&](CSpan v) { return m.forward(v, z); }, x, h);
      const CVec fz = central_difference([&](CSpan v) { return m.forward(x, v); }, z, h);
      return std::max(relative_error(gx, fx), relative_error(gz, fz));
    }
  });

  record("mlp parameter gradient", [&] {
    for (;;) {
      MlpEstimator m(1, 2, {6, 5}, ++mlp_seed);
      Eigen::MatrixXd U(6, 4);
      for (Eigen::Index k = 0; k < U.size(); ++k) U.data()[k] = rng.normal();
      if (!detail::clear_of_kinks(m, U, 1e-3)) continue;
      const std::vector<double> t{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
      MlpEstimator::Gradient g = m.zero_gradient();
      m.accumulate_squared_error(U, t, 1.0, g);
      const std::vector<double> analytic = MlpEstimator::flatten(g);
      std::vector<double> p = m.parameters(), fd(p.size());
      auto loss = [&](const std::vector<double>& q) {
        m.set_parameters(q);
        MlpEstimator::Gradient dummy = m.zero_gradient();
        return m.accumulate_squared_error(U, t, 1.0, dummy);
      };
      for (std::size_t k = 0; k < p.size(); ++k) {
        std::vector<double> q = p;
        q[k] = p[k] + h;
        const double fp = loss(q);
        q[k] = p[k] - h;
        fd[k] = (fp - loss(q)) / (2.0 * h);
      }
      return relative_error(analytic, fd);
    }
  });

  record("grad_V (isac, pm, frozen batch)", [&] {
    const ParticleSet ps = initial_particles(5, 1, 4.0, InitKind::Gaussian, false, RngKey{rng(), 0});
    const SampleBatch b = draw_batch(ps, isac, SamplingConfig{8, 4, 2, true}, RngKey{rng(), 1});
    const PosteriorMeanEstimator<IsacMonostatic> pm(isac);
    const DualPair d{rng.uniform(0.0, 1.0), rng.uniform(0.5, 5.0)};
    const std::size_t i = static_cast<std::size_t>(rng() % ps.size());
    const CVec g = grad_V(ps[i], i, ps, b, isac, pm, d);
    const CVec fd = central_difference([&](CSpan v) { return eval_V(v, i, ps, b, isac, pm, d); }, ps[i], h);
    return relative_error(g, fd);
  });

  return out;
}

/// Invariant checks on small random problems: posterior weights normalize,
/// the MI term vanishes for one particle and stays below ln N, duals stay
/// non-negative, pushforward keeps the count, and runs replay bit-exactly.
inline std::vector<CheckResult> run_invariant_checks(std::size_t instances = 20, std::uint64_t seed = 11) {
  using detail::random_cvec;
  std::vector<CheckResult> out;
  RngStream rng(seed, stream_id(0, 1, Role::Test));
  const IsacMonostatic isac(2);

  auto record = [&](std::string name, double tol, auto&& one) {
    CheckResult r{std::move(name), 0, 0.0, tol};
    for (std::size_t n = 0; n < instances; ++n) {
      r.max_error = std::max(r.max_error, one());
      ++r.instances;
    }
    out.push_back(r);
  };

  record("posterior weights sum to 1", 1e-12, [&] {
    const ParticleSet ps = initial_particles(3, 1, rng.uniform(0.1, 30.0), InitKind::Gaussian, false, RngKey{rng(), 0});
    const SampleBatch b = draw_batch(ps, isac, SamplingConfig{64, 1, 2, true}, RngKey{rng(), 1});
    double s = 0.0;
    for (double w : posterior_weights(b.z_sample(1, 0, 1), ps[1], b, isac)) s += w;
    return std::abs(s - 1.0);
  });

  record("MI term of one particle is 0", 0.0, [&] {
    const ParticleSet one(1, random_cvec(rng, 1, 3.0));
    const SampleBatch b = draw_batch(one, isac, SamplingConfig{8, 16, 1, true}, RngKey{rng(), 1});
    return std::abs(eval_mi_term(one[0], 0, one, b, isac));
  });

  record("pushforward keeps the count", 0.0, [&] {
    const std::size_t n = 1 + rng() % 40;
    const ParticleSet ps = initial_particles(n, 1, 4.0, InitKind::Disk, false, RngKey{rng(), 0});
    const ParticleSet moved = pushforward(ps, [](CSpan x) { return CVec{-x[0]}; });
    return static_cast<double>(moved.size() != n);
  });

  RunConfig c;
  c.n_particles = 8;
  c.sampling = {8, 8, 2, true};
  c.test_sampling = {8, 32, 4, true};
  c.max_iters = 40;
  c.window = 1000;
  c.cost_target = 10.0;
  c.mode = Mode::Constrained;
  c.duals0 = {0.5, 1.0};
  c.distortion_target = 0.4;
  c.schedules.gamma.c = 2.0;
  c.threads = 1;
  std::vector<std::uint64_t> seeds;
  record("MI below ln N + 0.05, duals >= 0", 0.0, [&] {
    c.seed = rng();
    seeds.push_back(c.seed);
    PosteriorMeanEstimator<IsacMonostatic> est(isac);
    const RunResult r = run(c, isac, est);
    const double bound = std::log(static_cast<double>(c.n_particles)) + 0.05;
    double worst = 0.0;
    for (const IterationRecord& rec : r.history) worst = std::max({worst, rec.mi - bound, -rec.lambda, -rec.beta});
    return worst;
  });

  std::size_t k = 0;
  record("replay is bit-exact across threads", 0.0, [&] {
    RunConfig a = c;
    a.seed = seeds[k++ % seeds.size()];
    a.max_iters = 10;
    PosteriorMeanEstimator<IsacMonostatic> e1(isac), e2(isac);
    const RunResult r1 = run(a, isac, e1);
    a.threads = 3;
    const RunResult r2 = run(a, isac, e2);
    return static_cast<double>(r1.history != r2.history || r1.particles != r2.particles);
  });

  return out;
}

}  // namespace cdc
