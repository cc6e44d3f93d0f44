// mss: multiple shooting shadowing experiments.
//
//   mss run      --config lorenz.ini [--set solver.gamma=1] [--T 500]
//   mss sweep    --config lorenz.ini --axis T --values 200,300,500
//   mss fd-ref   --config ks.ini
//   mss spectrum --config lorenz.ini
//   mss picard   --config ks.ini
//
// Exit status: 0 ok, 2 config error, 3 divergence, 4 CG did not converge, 1 anything else.
// MSS_WORKERS overrides run.workers.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>

#include "mss/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<double> T, N, gamma, l, c, rho;
  std::string output;
};

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--config", o.config, "INI experiment file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override, section.key=value (repeatable)");
  cmd->add_option("--T", o.T, "MSS window T");
  cmd->add_option("--N", o.N, "KS interior nodes");
  cmd->add_option("--gamma", o.gamma, "regularization gamma");
  cmd->add_option("--l", o.l, "retained singular triplets per segment");
  cmd->add_option("--c", o.c, "KS parameter c");
  cmd->add_option("--rho", o.rho, "Lorenz parameter rho");
  cmd->add_option("--output", o.output, "output directory");
}

mss::ExperimentConfig load(const Common& o) {
  std::map<std::string, std::string> overrides;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw mss::ConfigError("--set expects section.key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (!o.output.empty()) overrides["run.output"] = o.output;
  mss::ExperimentConfig config = mss::load_config(o.config, overrides);
  const std::pair<const char*, const std::optional<double>*> axes[] = {
      {"T", &o.T}, {"N", &o.N}, {"gamma", &o.gamma}, {"l", &o.l}, {"c", &o.c}, {"rho", &o.rho}};
  for (const auto& [axis, value] : axes) {
    if (*value) mss::set_axis(config, axis, **value);
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple shooting shadowing sensitivity experiments"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, fd_opts, spectrum_opts, picard_opts;
  std::string axis;
  std::vector<double> values;
  bool values_given = false;

  auto* run = app.add_subcommand("run", "solve one MSS problem and report dJ/ds");
  add_common(run, run_opts);
  auto* sweep = app.add_subcommand("sweep", "repeat run over the values of one axis");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "T, N, gamma, l, c or rho");
  sweep->add_option("--values", values, "comma separated axis values")->delimiter(',');
  sweep->add_flag("--empty", values_given, "run with an explicitly empty value list");
  auto* fd = app.add_subcommand("fd-ref", "finite-difference reference for dJ/ds");
  add_common(fd, fd_opts);
  auto* spectrum_cmd = app.add_subcommand("spectrum", "eigenvalues of S and of the preconditioned system");
  add_common(spectrum_cmd, spectrum_opts);
  auto* picard = app.add_subcommand("picard", "discrete Picard table and truncated-SVD sensitivities");
  add_common(picard, picard_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mss::exit_code::config;
  }

  try {
    if (run->parsed()) {
      const auto config = load(run_opts);
      const auto result = mss::run_experiment(config);
      std::cout << mss::summary_text(result.summary);
      return result.summary.converged ? mss::exit_code::ok : mss::exit_code::not_converged;
    }
    if (sweep->parsed()) {
      const auto config = load(sweep_opts);
      const std::string a = axis.empty() ? config.sweep_axis : axis;
      if (a.empty()) throw mss::ConfigError("sweep needs --axis or sweep.axis");
      const std::vector<double> v = (!values.empty() || values_given) ? values : config.sweep_values;
      const auto rows = mss::sweep(config, a, v);
      int failed = 0;
      for (const auto& r : rows) {
        if (r.summary) std::cout << a << " = " << r.value << "\n" << mss::summary_text(*r.summary);
        if (!r.error.empty()) {
          std::cerr << a << " = " << r.value << " failed: " << r.error << "\n";
          ++failed;
        }
      }
      std::cout << rows.size() << " sweep points, " << failed << " failed\n";
      return failed ? mss::exit_code::failure : mss::exit_code::ok;
    }
    if (fd->parsed()) {
      const auto config = load(fd_opts);
      const auto est = mss::finite_difference_reference(config);
      std::cout << "dJ/ds = " << est.mean << " +- " << est.standard_error << " (" << est.samples.size()
                << " samples, " << est.failures.size() << " diverged)\n";
      for (const auto& f : est.failures) std::cerr << f << "\n";
      return mss::exit_code::ok;
    }
    if (spectrum_cmd->parsed()) {
      const auto config = load(spectrum_opts);
      for (const auto& r : mss::run_spectrum(config)) {
        std::cout << r.label << ": mu_min " << r.min() << ", mu_max " << r.max() << ", kappa " << r.kappa
                  << (r.converged ? "" : " (extremes not converged)") << "\n";
      }
      return mss::exit_code::ok;
    }
    if (picard->parsed()) {
      const auto config = load(picard_opts);
      const auto res = mss::run_picard(config);
      std::cout << res.table.rows.size() << " singular triplets; full-rank sensitivity "
                << res.sensitivity_by_rank.back() << "\n";
      return mss::exit_code::ok;
    }
  } catch (const mss::StageError& e) {
    std::cerr << "error in " << e.what() << "\n";
    return e.exit_code();
  } catch (const mss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mss::exit_code::config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mss::exit_code::failure;
  }
  return mss::exit_code::failure;
}
