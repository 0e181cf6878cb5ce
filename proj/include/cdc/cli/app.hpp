#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cdc/channel.hpp"
#include "cdc/cli/config.hpp"
#include "cdc/cli/csv.hpp"
#include "cdc/cli/svg.hpp"
#include "cdc/estimators.hpp"
#include "cdc/optimizer.hpp"

namespace cdc::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class Command { Run, Sweep };

inline const char* to_string(Command c) { return c == Command::Run ? "run" : "sweep"; }

/// Everything a command produces, before it is written to disk.
struct Bundle {
  Table iterations = iterations_table();
  Table curve = curve_table();
  Table particles = particles_table();
  std::vector<Series> curves;  // rate in bits against distortion, one per power
  ParticleSet last_particles;
  double last_power_db = 0.0;
  double last_beta = 0.0;
  std::vector<std::pair<std::string, MlpEstimator>> networks;  // file name, trained network
};

namespace detail {

template <class F>
void with_channel(const AppConfig& cfg, F&& f) {
  if (cfg.channel == "isac") f(IsacMonostatic(cfg.n_rx));
  else f(RealAwgn{});
}

inline std::string power_label(double db) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "P = %g dB", db);
  return buf;
}

inline std::string weights_name(const AppConfig& cfg, double db) {
  if (cfg.power_db.size() == 1) return "mlp_weights.bin";
  char buf[64];
  std::snprintf(buf, sizeof buf, "mlp_weights_%gdB.bin", db);
  return buf;
}

template <ChannelModel C, StateEstimator E>
void execute_power(const AppConfig& cfg, Command cmd, double db, const C& ch, E& est, Bundle& out, std::ostream* log) {
  const double P = AppConfig::power_from_db(db);
  RunConfig rc = cfg.run;
  rc.cost_target = P;
  rc.duals0.lambda = cfg.initial_lambda(P);

  auto progress = [&](double beta, const IterationRecord& r) {
    add_iteration(out.iterations, db, r);
    if (log && r.t % 50 == 0)
      *log << power_label(db) << " beta=" << beta << " t=" << r.t << " mi=" << r.mi << " D=" << r.D_hat
           << " B=" << r.B_hat << " lambda=" << r.lambda << '\n';
  };

  const double scale = cfg.rate_units == "bits" ? 1.0 / kLn2 : 1.0;
  Series s{power_label(db), {}, {}};
  auto take = [&](const RunResult& r, const CurvePoint& p) {
    add_curve_point(out.curve, db, p, scale);
    add_particles(out.particles, db, p.beta, r.particles);
    s.x.push_back(p.distortion);
    s.y.push_back(p.rate / kLn2);
    out.last_particles = r.particles;
    out.last_power_db = db;
    out.last_beta = p.beta;
    if (log)
      *log << power_label(db) << " beta=" << p.beta << " done after " << r.history.size()
           << (r.converged ? " iterations (converged)" : " iterations (max_iters)") << ": rate=" << p.rate
           << " nats, distortion=" << p.distortion << ", cost=" << p.cost << '\n';
  };

  if (cmd == Command::Run) {
    const double beta = rc.duals0.beta;
    const RunResult r = run(rc, ch, est, [&](const IterationRecord& rec) { progress(beta, rec); });
    take(r, {beta, r.duals.lambda, r.final.mi, r.final.D_hat, r.final.B_hat});
  } else {
    const SweepResult sw = sweep(rc, ch, est, cfg.beta_grid, progress);
    for (std::size_t k = 0; k < sw.curve.size(); ++k) take(sw.runs[k], sw.curve[k]);
  }
  out.curves.push_back(std::move(s));
}

}  // namespace detail

/// Runs `cmd` for every configured power.
inline Bundle execute(const AppConfig& cfg, Command cmd, std::ostream* log = nullptr) {
  if (cfg.power_db.empty()) throw ConfigError("targets.power_db", "at least one power is required");
  if (cmd == Command::Sweep && cfg.beta_grid.empty()) throw ConfigError("sweep.beta_grid", "empty grid");
  cfg.run.validate();

  Bundle out;
  detail::with_channel(cfg, [&](const auto& ch) {
    using C = std::decay_t<decltype(ch)>;
    for (double db : cfg.power_db) {
      if (cfg.estimator == "pm") {
        PosteriorMeanEstimator<C> est(ch);
        detail::execute_power(cfg, cmd, db, ch, est, out, log);
      } else {
        MlpEstimator est(ch.input_dim(), ch.z_dim(), cfg.hidden, cfg.run.seed);
        detail::execute_power(cfg, cmd, db, ch, est, out, log);
        out.networks.emplace_back(detail::weights_name(cfg, db), std::move(est));
      }
    }
  });
  return out;
}

/// The configuration echo written next to the outputs. Loading it with
/// --config and running the recorded command reproduces every CSV.
inline std::string manifest_text(const AppConfig& cfg, Command cmd) {
  std::string s = "; cdc " + std::string(kVersion) + "\n";
  s += "; command = " + std::string(to_string(cmd)) + "\n";
  s += "; seed = " + std::to_string(cfg.run.seed) + "\n";
  s += "; rate units: curve.csv in " + cfg.rate_units + ", iterations.csv in nats, curve.svg in bits\n\n";
  return s + to_ini(cfg);
}

inline void write_bundle(const Bundle& b, const AppConfig& cfg, Command cmd, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "iterations.csv", to_csv(b.iterations));
  write_text(dir / "curve.csv", to_csv(b.curve));
  write_text(dir / "particles.csv", to_csv(b.particles));
  write_text(dir / "curve.svg", line_plot_svg(b.curves, "Rate against distortion", "distortion", "rate [bits]"));
  char title[96];
  std::snprintf(title, sizeof title, "Final particles, %s, beta = %g", detail::power_label(b.last_power_db).c_str(),
                b.last_beta);
  write_text(dir / "constellation.svg", constellation_svg(b.last_particles, title));
  for (const auto& [name, net] : b.networks) net.save(dir / name);
  write_text(dir / "manifest.ini", manifest_text(cfg, cmd));
}

/// Settings of the three reproduction presets. All run as sweeps.
inline AppConfig preset(const std::string& name) {
  AppConfig c;
  c.channel = "isac";
  c.n_rx = 2;
  c.run.n_particles = 128;
  c.run.sampling = {128, 64, 8, true};
  c.run.test_sampling = {128, 1024, 1024, true};
  c.out_dir = "out/" + name;
  if (name == "fig1") {
    c.power_db = {8.0, 10.0, 12.0};
    c.estimator = "pm";
  } else if (name == "fig2" || name == "fig3") {
    c.power_db = {10.0};
    c.beta_grid = {50.0};
    c.estimator = name == "fig2" ? "pm" : "mlp";
  } else {
    throw ConfigError("preset", "expected fig1, fig2 or fig3, got '" + name + "'");
  }
  return c;
}

}  // namespace cdc::cli
