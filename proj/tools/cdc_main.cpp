#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "cdc/cli/app.hpp"
#include "cdc/gradcheck.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* sub, Options& o, bool config_required) {
  auto* c = sub->add_option("--config", o.config, "INI configuration file");
  if (config_required) c->required();
  c->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (overrides output.dir)");
  sub->add_option("--seed", o.seed, "random seed (overrides run.seed)");
  sub->add_flag("--quiet", o.quiet, "suppress progress output");
}

int execute(cdc::cli::AppConfig cfg, cdc::cli::Command cmd, const Options& o) {
  if (o.seed) cfg.run.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  const cdc::cli::Bundle b = cdc::cli::execute(cfg, cmd, o.quiet ? nullptr : &std::cerr);
  cdc::cli::write_bundle(b, cfg, cmd, cfg.out_dir);
  if (!o.quiet) std::cerr << "wrote " << cfg.out_dir << '\n';
  return 0;
}

int check(bool quiet) {
  bool ok = true;
  std::vector<cdc::CheckResult> all = cdc::run_gradient_checks();
  for (cdc::CheckResult& r : cdc::run_invariant_checks()) all.push_back(std::move(r));
  for (const cdc::CheckResult& r : all) {
    ok = ok && r.passed();
    if (!quiet || !r.passed())
      std::printf("%-34s %s  max error %.3e over %zu instances (tol %.0e)\n", r.name.c_str(),
                  r.passed() ? "ok  " : "FAIL", r.max_error, r.instances, r.tolerance);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capacity-distortion-cost curves by particle gradient descent"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cdc::cli::kVersion);

  Options o;
  auto* run = app.add_subcommand("run", "single optimization run per configured power");
  add_common(run, o, true);
  auto* sweep = app.add_subcommand("sweep", "trace the rate-distortion curve over sweep.beta_grid");
  add_common(sweep, o, true);
  auto* preset = app.add_subcommand("paper-preset", "reproduction presets: fig1, fig2, fig3");
  std::string preset_name;
  preset->add_option("name", preset_name, "preset name")->required()->check(CLI::IsMember({"fig1", "fig2", "fig3"}));
  add_common(preset, o, false);
  auto* chk = app.add_subcommand("check", "gradient and invariant self-checks");
  chk->add_flag("--quiet", o.quiet, "print failures only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return execute(cdc::cli::load_config(o.config), cdc::cli::Command::Run, o);
    if (*sweep) return execute(cdc::cli::load_config(o.config), cdc::cli::Command::Sweep, o);
    if (*preset) {
      cdc::cli::AppConfig cfg = cdc::cli::preset(preset_name);
      if (!o.config.empty()) cdc::cli::apply_ini_file(cfg, o.config);
      return execute(cfg, cdc::cli::Command::Sweep, o);
    }
    return check(o.quiet);
  } catch (const cdc::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cdc::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
