#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdc/optimizer.hpp"

namespace cdc::cli {

/// Everything a run needs, resolved from an INI file.
///
/// File syntax: INI sections name the first part of each key, so
///
///   [sampling]
///   n_s = 128
///
/// sets `sampling.n_s`. Lists are comma separated, optionally in brackets.
/// Schedules are either a constant `c` or `c/sqrt(t)`.
struct AppConfig {
  std::string channel = "isac";  // isac | awgn
  std::size_t n_rx = 2;

  RunConfig run{};
  std::vector<double> power_db{10.0};
  std::optional<double> lambda0;  // unset: 1 / (1 + P) per power

  std::string estimator = "pm";  // pm | mlp
  std::vector<std::size_t> hidden{64, 64};

  std::vector<double> beta_grid{0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0};

  std::string out_dir = "out";
  std::string rate_units = "nats";  // nats | bits

  static double power_from_db(double db) { return std::pow(10.0, db / 10.0); }

  double initial_lambda(double power) const { return lambda0 ? *lambda0 : 1.0 / (1.0 + power); }
};

class ConfigError : public Error {
public:
  ConfigError(const std::string& key, const std::string& what) : Error(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

private:
  std::string key_;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key, "expected a finite number, got '" + raw + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty())
    throw ConfigError(key, "expected a non-negative integer, got '" + raw + "'");
  return out;
}

inline std::vector<std::string> split_list(const std::string& key, std::string v) {
  v = trim(v);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError(key, "unbalanced brackets");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.empty() || (out.size() == 1 && out[0].empty())) throw ConfigError(key, "empty list");
  return out;
}

inline Schedule parse_schedule(const std::string& key, const std::string& raw) {
  std::string v;
  for (char c : raw)
    if (c != ' ' && c != '\t') v += c;
  Schedule s;
  const std::string tail = "/sqrt(t)";
  if (v.size() > tail.size() && v.compare(v.size() - tail.size(), tail.size(), tail) == 0) {
    s.kind = Schedule::Kind::InvSqrt;
    v.resize(v.size() - tail.size());
  }
  s.c = parse_double(key, v);
  if (!(s.c > 0.0)) throw ConfigError(key, "schedule constant must be > 0");
  return s;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_schedule(const Schedule& s) {
  return fmt(s.c) + (s.kind == Schedule::Kind::InvSqrt ? "/sqrt(t)" : "");
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
  return out;
}

inline std::size_t positive(const std::string& key, std::uint64_t v) {
  if (v == 0) throw ConfigError(key, "must be >= 1");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Applies one `section.key = value` assignment. Unknown keys throw.
inline void set_key(AppConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string v = trim(value);
  RunConfig& r = c.run;

  if (key == "channel.kind") {
    if (v != "isac" && v != "awgn") throw ConfigError(key, "expected isac or awgn");
    c.channel = v;
  } else if (key == "channel.n_rx") {
    c.n_rx = positive(key, parse_uint(key, v));
  } else if (key == "run.mode") {
    if (v == "fixed") r.mode = Mode::Fixed;
    else if (v == "sweep") r.mode = Mode::Sweep;
    else if (v == "constrained") r.mode = Mode::Constrained;
    else throw ConfigError(key, "expected fixed, sweep or constrained");
  } else if (key == "run.seed") {
    r.seed = parse_uint(key, v);
  } else if (key == "run.max_iters") {
    r.max_iters = positive(key, parse_uint(key, v));
  } else if (key == "run.tol") {
    r.tol = parse_double(key, v);
    if (!(r.tol > 0.0)) throw ConfigError(key, "must be > 0");
  } else if (key == "run.window") {
    r.window = positive(key, parse_uint(key, v));
  } else if (key == "run.threads") {
    r.threads = static_cast<std::size_t>(parse_uint(key, v));
  } else if (key == "sampling.n_particles") {
    r.n_particles = positive(key, parse_uint(key, v));
  } else if (key == "sampling.n_s") {
    r.sampling.n_s = positive(key, parse_uint(key, v));
    r.test_sampling.n_s = r.sampling.n_s;
  } else if (key == "sampling.n_y") {
    r.sampling.n_y = positive(key, parse_uint(key, v));
  } else if (key == "sampling.n_z") {
    r.sampling.n_z = positive(key, parse_uint(key, v));
  } else if (key == "sampling.test_n_y") {
    r.test_sampling.n_y = positive(key, parse_uint(key, v));
  } else if (key == "sampling.test_n_z") {
    r.test_sampling.n_z = positive(key, parse_uint(key, v));
  } else if (key == "duals.lambda0") {
    if (v == "auto") {
      c.lambda0.reset();
    } else {
      c.lambda0 = parse_double(key, v);
      if (*c.lambda0 < 0.0) throw ConfigError(key, "must be >= 0");
    }
  } else if (key == "duals.beta0") {
    r.duals0.beta = parse_double(key, v);
    if (r.duals0.beta < 0.0) throw ConfigError(key, "must be >= 0");
  } else if (key == "targets.power_db") {
    c.power_db.clear();
    for (const std::string& s : split_list(key, v)) c.power_db.push_back(parse_double(key, s));
  } else if (key == "targets.distortion") {
    r.distortion_target = parse_double(key, v);
  } else if (key == "schedules.tau") {
    r.schedules.tau = parse_schedule(key, v);
  } else if (key == "schedules.epsilon") {
    r.schedules.epsilon = parse_schedule(key, v);
  } else if (key == "schedules.alpha") {
    r.schedules.alpha = parse_schedule(key, v);
  } else if (key == "schedules.gamma") {
    r.schedules.gamma = parse_schedule(key, v);
  } else if (key == "estimator.kind") {
    if (v != "pm" && v != "mlp") throw ConfigError(key, "expected pm or mlp");
    c.estimator = v;
  } else if (key == "estimator.hidden_widths") {
    c.hidden.clear();
    for (const std::string& s : split_list(key, v)) c.hidden.push_back(positive(key, parse_uint(key, s)));
  } else if (key == "estimator.sgd_steps") {
    r.sgd_steps = static_cast<std::size_t>(parse_uint(key, v));
  } else if (key == "sweep.beta_grid") {
    c.beta_grid.clear();
    for (const std::string& s : split_list(key, v)) {
      c.beta_grid.push_back(parse_double(key, s));
      if (c.beta_grid.back() < 0.0) throw ConfigError(key, "beta values must be >= 0");
    }
  } else if (key == "init.kind") {
    if (v == "gaussian") r.init = InitKind::Gaussian;
    else if (v == "disk") r.init = InitKind::Disk;
    else throw ConfigError(key, "expected gaussian or disk");
  } else if (key == "output.dir") {
    if (v.empty()) throw ConfigError(key, "must not be empty");
    c.out_dir = v;
  } else if (key == "output.rate_units") {
    if (v != "nats" && v != "bits") throw ConfigError(key, "expected nats or bits");
    c.rate_units = v;
  } else {
    throw ConfigError(key, "unknown configuration key");
  }
}

/// Overlays the assignments of an INI document onto `c`.
inline void apply_ini(AppConfig& c, std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "unknown configuration key (keys must sit inside a [section])");
    for (const auto& [name, leaf] : body) set_key(c, section + "." + name, leaf.data());
  }
}

inline void apply_ini_file(AppConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  apply_ini(c, in);
}

inline AppConfig load_config(const std::filesystem::path& path) {
  AppConfig c;
  apply_ini_file(c, path);
  return c;
}

/// Serializes `c` as an INI document that `apply_ini` reads back to the
/// same configuration.
inline std::string to_ini(const AppConfig& c) {
  using namespace detail;
  const RunConfig& r = c.run;
  auto u = [](std::size_t v) { return std::to_string(v); };
  const char* mode = r.mode == Mode::Fixed ? "fixed" : r.mode == Mode::Sweep ? "sweep" : "constrained";
  std::ostringstream o;
  o << "[channel]\nkind = " << c.channel << "\nn_rx = " << c.n_rx << "\n\n";
  o << "[run]\nmode = " << mode << "\nseed = " << r.seed << "\nmax_iters = " << r.max_iters << "\ntol = " << fmt(r.tol)
    << "\nwindow = " << r.window << "\nthreads = " << r.threads << "\n\n";
  o << "[sampling]\nn_particles = " << r.n_particles << "\nn_s = " << r.sampling.n_s << "\nn_y = " << r.sampling.n_y
    << "\nn_z = " << r.sampling.n_z << "\ntest_n_y = " << r.test_sampling.n_y << "\ntest_n_z = " << r.test_sampling.n_z
    << "\n\n";
  o << "[duals]\nlambda0 = " << (c.lambda0 ? fmt(*c.lambda0) : "auto") << "\nbeta0 = " << fmt(r.duals0.beta) << "\n\n";
  o << "[targets]\npower_db = " << join(c.power_db, fmt) << "\ndistortion = " << fmt(r.distortion_target) << "\n\n";
  o << "[schedules]\ntau = " << fmt_schedule(r.schedules.tau) << "\nepsilon = " << fmt_schedule(r.schedules.epsilon)
    << "\nalpha = " << fmt_schedule(r.schedules.alpha) << "\ngamma = " << fmt_schedule(r.schedules.gamma) << "\n\n";
  o << "[estimator]\nkind = " << c.estimator << "\nhidden_widths = " << join(c.hidden, u)
    << "\nsgd_steps = " << r.sgd_steps << "\n\n";
  o << "[sweep]\nbeta_grid = " << join(c.beta_grid, fmt) << "\n\n";
  o << "[init]\nkind = " << to_string(r.init) << "\n\n";
  o << "[output]\ndir = " << c.out_dir << "\nrate_units = " << c.rate_units << "\n";
  return o.str();
}

}  // namespace cdc::cli
