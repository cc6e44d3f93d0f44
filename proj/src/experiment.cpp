#include "mss/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "mss/parallel.hpp"

namespace mss {

namespace pt = boost::property_tree;

// ---------------------------------------------------------------------------
// Configuration

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model", {"name", "sigma", "rho", "beta", "nodes", "length", "c", "objective"}},
      {"time", {"spinup", "T", "dT", "h"}},
      {"solver", {"gamma", "mode", "tol", "max_iter"}},
      {"preconditioner", {"enabled", "l", "q"}},
      {"analysis", {"spectrum", "picard", "truncated", "dense_cap"}},
      {"run", {"name", "seed", "output", "workers"}},
      {"fd", {"delta", "samples", "horizon"}},
      {"sweep", {"axis", "values"}},
  };
  return keys;
}

void check_key(const std::string& section, const std::string& key) {
  const auto& keys = known_keys();
  const auto it = keys.find(section);
  if (it == keys.end()) throw ConfigError("unknown config section [" + section + "]");
  if (!it->second.count(key)) throw ConfigError("unknown config key " + section + "." + key);
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
}

long long to_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t");
    out.push_back(to_double(key, item.substr(first, last - first + 1)));
  }
  return out;
}

void apply_key(ExperimentConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  check_key(section, key);
  const std::string k = section + "." + key;
  if (section == "model") {
    if (key == "name") c.model = value;
    else if (key == "sigma") c.lorenz.sigma = to_double(k, value);
    else if (key == "rho") c.lorenz.rho = to_double(k, value);
    else if (key == "beta") c.lorenz.beta = to_double(k, value);
    else if (key == "nodes") c.ks.nodes = to_integer(k, value);
    else if (key == "length") c.ks.length = to_double(k, value);
    else if (key == "c") c.ks.c = to_double(k, value);
    else if (key == "objective") c.objective = value;
  } else if (section == "time") {
    if (key == "spinup") c.spinup = to_double(k, value);
    else if (key == "T") c.window = to_double(k, value);
    else if (key == "dT") c.segment = to_double(k, value);
    else if (key == "h") c.step = to_double(k, value);
  } else if (section == "solver") {
    if (key == "gamma") c.gamma = to_double(k, value);
    else if (key == "mode") c.solver.mode = parse_regularization(value);
    else if (key == "tol") c.solver.tolerance = to_double(k, value);
    else if (key == "max_iter") c.solver.max_iterations = static_cast<int>(to_integer(k, value));
  } else if (section == "preconditioner") {
    if (key == "enabled") c.precondition = to_bool(k, value);
    else if (key == "l") c.rank = to_integer(k, value);
    else if (key == "q") c.cycles = static_cast<int>(to_integer(k, value));
  } else if (section == "analysis") {
    if (key == "spectrum") c.spectrum = value;
    else if (key == "picard") c.picard = to_bool(k, value);
    else if (key == "truncated") c.truncated = to_bool(k, value);
    else if (key == "dense_cap") c.dense_cap = to_integer(k, value);
  } else if (section == "run") {
    if (key == "name") c.name = value;
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(k, value));
    else if (key == "output") c.output = value;
    else if (key == "workers") c.workers = static_cast<int>(to_integer(k, value));
  } else if (section == "fd") {
    if (key == "delta") c.fd_delta = to_double(k, value);
    else if (key == "samples") c.fd_samples = static_cast<int>(to_integer(k, value));
    else if (key == "horizon") c.fd_horizon = to_double(k, value);
  } else if (section == "sweep") {
    if (key == "axis") c.sweep_axis = value;
    else if (key == "values") c.sweep_values = to_list(k, value);
  }
}

std::pair<std::string, std::string> split_key(const std::string& dotted) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) throw ConfigError("override key '" + dotted + "' must be section.key");
  return {dotted.substr(0, dot), dotted.substr(dot + 1)};
}

bool integer_ratio(double span, double h) {
  const double ratio = span / h;
  return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio);
}

ExperimentConfig from_tree(const pt::ptree& tree, const std::map<std::string, std::string>& overrides) {
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_key(c, section, key, value.data());
  }
  for (const auto& [dotted, value] : overrides) {
    const auto [section, key] = split_key(dotted);
    apply_key(c, section, key, value);
  }
  c.validate();
  return c;
}

}  // namespace

Index ExperimentConfig::segments() const { return static_cast<Index>(std::llround(window / segment)); }

double ExperimentConfig::step_size() const {
  if (step) return *step;
  if (model == "ks") {
    // Largest 1-2-5 value within an eighth of the RK4 stability limit.
    const double dx = ks.length / static_cast<double>(ks.nodes + 1);
    const double target = 2.785 * std::pow(dx, 4) / 16.0 / 8.0;
    const double decade = std::pow(10.0, std::floor(std::log10(target)));
    for (double m : {5.0, 2.0, 1.0}) {
      if (m * decade <= target * (1.0 + 1e-12)) return m * decade;
    }
    return decade;
  }
  return 0.002;
}

double ExperimentConfig::spinup_span() const { return spinup ? *spinup : (model == "ks" ? 1000.0 : 100.0); }
double ExperimentConfig::regularization() const { return gamma ? *gamma : (model == "ks" ? 0.09 : 0.1); }
Index ExperimentConfig::retained_modes() const { return rank ? *rank : (model == "ks" ? 15 : 1); }
double ExperimentConfig::fd_step() const { return fd_delta > 0.0 ? fd_delta : (model == "ks" ? 0.05 : 1.0); }

void ExperimentConfig::validate() const {
  if (model != "lorenz" && model != "ks") throw ConfigError("model.name must be lorenz or ks, got '" + model + "'");
  if (model == "ks") {
    if (ks.nodes < 3) throw ConfigError("model.nodes must be at least 3");
    if (!(ks.length > 0.0)) throw ConfigError("model.length must be positive");
    if (objective != "mean" && objective != "mean_square") {
      throw ConfigError("model.objective must be mean or mean_square");
    }
  }
  if (!(window > 0.0) || !(segment > 0.0)) throw ConfigError("time.T and time.dT must be positive");
  if (spinup && *spinup < 0.0) throw ConfigError("time.spinup must be non-negative");
  if (!integer_ratio(window, segment)) throw ConfigError("time.T must be an integer multiple of time.dT");
  const double h = step_size();
  if (!(h > 0.0)) throw ConfigError("time.h must be positive");
  if (!integer_ratio(segment, h)) throw ConfigError("time.dT must be an integer multiple of time.h");
  if (spinup_span() > 0.0 && !integer_ratio(spinup_span(), h)) {
    throw ConfigError("time.spinup must be an integer multiple of time.h");
  }
  if (model == "ks") {
    const double dx = ks.length / static_cast<double>(ks.nodes + 1);
    const double limit = 2.785 * std::pow(dx, 4) / 16.0;
    if (h > limit) {
      throw ConfigError("time.h = " + std::to_string(h) + " exceeds the explicit stability limit " +
                        std::to_string(limit));
    }
  }
  if (!(solver.tolerance > 0.0)) throw ConfigError("solver.tol must be positive");
  if (solver.max_iterations < 1) throw ConfigError("solver.max_iter must be at least 1");
  if (!(regularization() >= 0.0)) throw ConfigError("solver.gamma must be non-negative");
  if (precondition) {
    if (retained_modes() < 1 || retained_modes() > dimension()) {
      throw ConfigError("preconditioner.l must lie in [1, N]");
    }
    if (cycles < 1) throw ConfigError("preconditioner.q must be at least 1");
  }
  if (spectrum != "none" && spectrum != "dense" && spectrum != "lanczos" && spectrum != "auto") {
    throw ConfigError("analysis.spectrum must be none, dense, lanczos or auto");
  }
  if (dense_cap < 1) throw ConfigError("analysis.dense_cap must be positive");
  if (workers < 1) throw ConfigError("run.workers must be at least 1");
  if (name.empty()) throw ConfigError("run.name must not be empty");
  if (fd_samples < 1) throw ConfigError("fd.samples must be at least 1");
  if (!(fd_horizon > 0.0) || !integer_ratio(fd_horizon, h)) {
    throw ConfigError("fd.horizon must be a positive multiple of time.h");
  }
}

ExperimentConfig config_from_text(const std::string& ini, const std::map<std::string, std::string>& overrides) {
  pt::ptree tree;
  std::istringstream is(ini);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_tree(tree, overrides);
}

ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_tree(tree, overrides);
}

std::string axis_key(const std::string& axis) {
  static const std::map<std::string, std::string> keys = {{"T", "time.T"},           {"N", "model.nodes"},
                                                          {"gamma", "solver.gamma"}, {"l", "preconditioner.l"},
                                                          {"c", "model.c"},          {"rho", "model.rho"}};
  const auto it = keys.find(axis);
  if (it == keys.end()) throw ConfigError("unknown sweep axis '" + axis + "' (expected T, N, gamma, l, c or rho)");
  return it->second;
}

void set_axis(ExperimentConfig& config, const std::string& axis, double value) {
  const auto [section, key] = split_key(axis_key(axis));
  if ((axis == "N" || axis == "c") && config.model != "ks") throw ConfigError("axis " + axis + " needs model ks");
  if (axis == "rho" && config.model != "lorenz") throw ConfigError("axis rho needs model lorenz");
  std::ostringstream os;
  if (axis == "N" || axis == "l")
    os << std::llround(value);
  else
    os << std::setprecision(17) << value;
  apply_key(config, section, key, os.str());
  config.validate();
}

int effective_workers(int configured) {
  if (const char* env = std::getenv("MSS_WORKERS")) {
    const long long n = to_integer("MSS_WORKERS", env);
    if (n < 1) throw ConfigError("MSS_WORKERS must be at least 1");
    return static_cast<int>(n);
  }
  return configured;
}

std::shared_ptr<const DynamicalSystem> make_system(const ExperimentConfig& config, double parameter) {
  if (config.model == "ks") {
    KsParameters p = config.ks;
    p.c = parameter;
    return std::make_shared<KuramotoSivashinsky>(p);
  }
  LorenzParameters p = config.lorenz;
  p.rho = parameter;
  return std::make_shared<Lorenz>(p);
}

std::shared_ptr<const DynamicalSystem> make_system(const ExperimentConfig& config) {
  return make_system(config, config.parameter());
}

std::unique_ptr<Objective> make_objective(const ExperimentConfig& config) {
  if (config.model == "ks") return make_ks_objective(config.ks.nodes, config.objective);
  return make_lorenz_objective();
}

Vector initial_condition(const ExperimentConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (config.model == "ks") {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector u(config.ks.nodes);
    for (Index i = 0; i < u.size(); ++i) u(i) = unit(rng);
    return u;
  }
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  Vector u = Vector::Ones(3);
  for (Index i = 0; i < 3; ++i) u(i) += jitter(rng);
  return u;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(name, e.what(), exit_code::config);
  } catch (const DivergenceError& e) {
    throw StageError(name, e.what(), exit_code::divergence);
  } catch (const BreakdownError& e) {
    throw StageError(name, e.what(), exit_code::not_converged);
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), exit_code::failure);
  }
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

std::string file_in(const ExperimentConfig& c, const std::string& artifact, const std::string& ext) {
  return (std::filesystem::path(c.output) / (c.name + "_" + artifact + ext)).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << text;
}

std::string gnuplot_header(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                           bool logy) {
  std::ostringstream os;
  os << "set datafile separator ','\n"
     << "set key top right\n"
     << "set title '" << title << "'\n"
     << "set xlabel '" << xlabel << "'\n"
     << "set ylabel '" << ylabel << "'\n";
  if (logy) os << "set logscale y\nset format y '10^{%L}'\n";
  return os.str();
}

std::string basename_of(const std::string& path) { return std::filesystem::path(path).filename().string(); }

std::vector<SpectrumReport> compute_spectra(Pipeline& p) {
  const ExperimentConfig& c = p.config;
  const Trajectory& traj = *p.trajectory;
  const Index size = traj.dimension() * traj.segments();
  const bool dense = c.spectrum == "dense" || (c.spectrum == "auto" && size <= c.dense_cap);
  const double gamma = c.regularization();
  const bool shifted = gamma > 0.0 && c.solver.mode == Regularization::post && p.preconditioner;
  const int workers = effective_workers(c.workers);
  CostLedger analysis_ledger;
  std::vector<SpectrumReport> out;
  if (dense) {
    const Matrix a = dense_assemble(traj, analysis_ledger, c.dense_cap, workers);
    const Matrix s = dense_schur(a);
    out.push_back(dense_spectrum(s, "S"));
    if (p.preconditioner) {
      const Matrix ms = dense_preconditioned_schur(s, p.preconditioner->dense(-1.0));
      out.push_back(dense_spectrum(ms, "MS"));
      if (shifted) {
        SpectrumReport r = out.back();
        r.label = "gammaI+MS";
        r.eigenvalues.array() += gamma;
        r.kappa = r.max() / r.min();
        out.push_back(r);
      }
    }
  } else {
    out.push_back(spectrum(preconditioned_schur_map(traj, analysis_ledger, nullptr, 0.0, workers), size,
                           SpectrumMode::lanczos_extremes, "S", c.dense_cap, 300, 1e-8, c.seed));
    if (p.preconditioner) {
      out.push_back(spectrum(preconditioned_schur_map(traj, analysis_ledger, p.preconditioner.get(), 0.0, workers),
                             size, SpectrumMode::lanczos_extremes, "MS", c.dense_cap, 300, 1e-8, c.seed));
      if (shifted) {
        out.push_back(spectrum(preconditioned_schur_map(traj, analysis_ledger, p.preconditioner.get(), gamma, workers),
                               size, SpectrumMode::lanczos_extremes, "gammaI+MS", c.dense_cap, 300, 1e-8, c.seed));
      }
    }
  }
  return out;
}

void write_spectra(const ExperimentConfig& c, const std::vector<SpectrumReport>& reports) {
  std::vector<Triple> rows;
  for (const auto& r : reports) {
    const auto t = spectrum_triples(r);
    rows.insert(rows.end(), t.begin(), t.end());
  }
  const std::string csv = file_in(c, "spectrum", ".csv");
  write_triples_csv(rows, csv);
  std::ostringstream gp;
  gp << gnuplot_header("Eigenvalues", "index", "eigenvalue", true) << "plot ";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    gp << (i ? ", \\\n     " : "") << "'" << basename_of(csv) << "' skip 1 using 2:(strcol(1) eq '"
       << reports[i].label << "' ? $3 : NaN) with points title '" << reports[i].label << "'";
  }
  gp << "\n";
  write_text(file_in(c, "spectrum", ".gp"), gp.str());
}

}  // namespace

std::unique_ptr<Pipeline> prepare_pipeline(const ExperimentConfig& config) {
  stage("config", [&] {
    config.validate();
    return 0;
  });
  auto p = std::make_unique<Pipeline>();
  p->config = config;
  const int workers = effective_workers(config.workers);
  const double h = config.step_size();
  p->system = make_system(config);
  p->objective = make_objective(config);

  const Vector start = stage("spin-up", [&] {
    const Vector u0 = initial_condition(config, config.seed);
    return config.spinup_span() > 0.0 ? advance(*p->system, u0, config.spinup_span(), h) : u0;
  });
  p->trajectory = stage("trajectory", [&] {
    const Index per_segment = steps_for_span(config.segment, h, "segment");
    return std::make_unique<Trajectory>(
        integrate_nonlinear(p->system, start, 0.0, config.window, h, per_segment));
  });
  p->b = stage("rhs", [&] { return assemble_rhs(*p->trajectory, p->ledger, workers); });
  if (config.precondition) {
    const LedgerSnapshot before = p->ledger.snapshot();
    p->preconditioner = stage("preconditioner", [&] {
      return std::make_unique<BlockDiagPreconditioner>(build_block_diag_preconditioner(
          *p->trajectory, p->ledger, config.retained_modes(), config.cycles, config.seed, workers));
    });
    p->preconditioner_cost = p->ledger.snapshot() - before;
    p->preconditioner_cost.forcing_sweeps = 0;
  }
  return p;
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files) {
  const auto t0 = std::chrono::steady_clock::now();
  auto p = prepare_pipeline(config);
  const int workers = effective_workers(config.workers);
  const Trajectory& traj = *p->trajectory;

  SolveConfig solve = config.solver;
  solve.gamma = config.regularization();
  Preconditioner<SegmentStack> pc;
  if (p->preconditioner) pc = p->preconditioner->as_preconditioner();

  ExperimentResult result;
  auto [w, report] = stage("solve", [&] {
    return solve_schur(traj, p->ledger, p->b, solve, p->preconditioner ? &pc : nullptr, workers);
  });
  result.report = std::move(report);

  const LedgerSnapshot before_recover = p->ledger.snapshot();
  result.v = stage("recover", [&] { return recover_v(traj, p->ledger, w, workers); });
  const std::int64_t recover_cost = (p->ledger.snapshot() - before_recover).total();

  ExperimentSummary& s = result.summary;
  s.sensitivity = stage("sensitivity", [&] { return evaluate_sensitivity(traj, *p->objective, result.v, workers); });
  s.time_average = time_average(traj, *p->objective);
  s.name = config.name;
  s.model = config.model;
  s.parameter = config.parameter();
  s.window = config.window;
  s.segment = config.segment;
  s.segments = traj.segments();
  s.dimension = traj.dimension();
  s.step = traj.step();
  s.gamma = solve.mode == Regularization::none ? 0.0 : solve.gamma;
  s.mode = to_string(solve.mode);
  s.rank = p->preconditioner ? config.retained_modes() : 0;
  s.cycles = p->preconditioner ? config.cycles : 0;
  s.iterations = result.report.iterations;
  s.converged = result.report.converged;
  s.final_residual = result.report.final_residual();
  s.final_true_residual =
      result.report.true_residual_history.empty() ? 1.0 : result.report.true_residual_history.back();
  s.preconditioner_cost = p->preconditioner_cost;
  s.solve_cost = result.report.cost;
  s.recover_cost = recover_cost;
  s.predicted = predict_costs(s.segments, s.cycles, s.rank, s.iterations);
  if (!s.converged) {
    s.status = "not converged after " + std::to_string(s.iterations) + " iterations (residual " +
               std::to_string(s.final_residual) + ")";
  }

  std::vector<SpectrumReport> spectra;
  if (config.spectrum != "none") {
    spectra = stage("analysis", [&] { return compute_spectra(*p); });
    for (const auto& r : spectra) {
      if (r.label == "S") {
        s.kappa_schur = r.kappa;
        s.mu_max_schur = r.max();
      } else if (r.label == "MS") {
        s.kappa_preconditioned = r.kappa;
        s.mu_max_preconditioned = r.max();
      }
    }
  }

  if (write_files) {
    stage("output", [&] {
      ensure_dir(config.output);
      write_summary_csv({s}, file_in(config, "summary", ".csv"));
      const std::string res = file_in(config, "residual", ".csv");
      const std::string tres = file_in(config, "true_residual", ".csv");
      write_residual_csv(result.report, res);
      write_true_residual_csv(result.report, tres);
      write_text(file_in(config, "residual", ".gp"),
                 gnuplot_header("Residuals", "iteration", "relative residual", true) + "plot '" + basename_of(res) +
                     "' skip 1 using 1:2 with linespoints title 'preconditioned', \\\n     '" + basename_of(tres) +
                     "' skip 1 using 1:2 with lines title 'true'\n");
      if (!spectra.empty()) write_spectra(config, spectra);
      return 0;
    });
  }
  // The dense analyses rebuild their own pipeline without the preconditioner.
  if (write_files && (config.picard || config.truncated)) run_picard(config, true);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<SpectrumReport> run_spectrum(const ExperimentConfig& config, bool write_files) {
  ExperimentConfig c = config;
  if (c.spectrum == "none") c.spectrum = "auto";
  auto p = prepare_pipeline(c);
  auto reports = stage("analysis", [&] { return compute_spectra(*p); });
  if (write_files) {
    stage("output", [&] {
      ensure_dir(c.output);
      write_spectra(c, reports);
      return 0;
    });
  }
  return reports;
}

PicardResult run_picard(const ExperimentConfig& config, bool write_files) {
  ExperimentConfig c = config;
  c.precondition = false;
  auto p = prepare_pipeline(c);
  const int workers = effective_workers(c.workers);
  const Trajectory& traj = *p->trajectory;
  PicardResult out;
  stage("analysis", [&] {
    CostLedger analysis_ledger;
    const Matrix a = dense_assemble(traj, analysis_ledger, c.dense_cap, workers);
    const DenseSvd svd = dense_svd(a);
    out.table = picard_data(svd, p->b);
    const CheckpointStack g = sensitivity_gradient(traj, *p->objective, workers);
    const double base =
        evaluate_sensitivity(traj, *p->objective, CheckpointStack::Zero(traj.dimension(), traj.segments() + 1), workers);
    out.sensitivity_by_rank = truncated_sensitivity_curve(svd, p->b, base, g);
    return 0;
  });
  if (write_files) {
    stage("output", [&] {
      ensure_dir(c.output);
      const std::string picard = file_in(c, "picard", ".csv");
      write_triples_csv(picard_triples(out.table), picard);
      std::vector<Triple> curve;
      for (std::size_t l = 0; l < out.sensitivity_by_rank.size(); ++l) {
        curve.emplace_back("sensitivity", static_cast<Index>(l), out.sensitivity_by_rank[l]);
      }
      const std::string truncated = file_in(c, "truncated", ".csv");
      write_triples_csv(curve, truncated);
      std::ostringstream gp;
      gp << gnuplot_header("Discrete Picard plot", "i", "", true) << "plot ";
      const char* labels[] = {"sigma", "projection", "coefficient"};
      for (int i = 0; i < 3; ++i) {
        gp << (i ? ", \\\n     " : "") << "'" << basename_of(picard) << "' skip 1 using 2:(strcol(1) eq '"
           << labels[i] << "' ? $3 : NaN) with points title '" << labels[i] << "'";
      }
      gp << "\n";
      write_text(file_in(c, "picard", ".gp"), gp.str());
      write_text(file_in(c, "truncated", ".gp"),
                 gnuplot_header("Truncated SVD sensitivity", "retained modes l", "dJ/ds", false) + "plot '" +
                     basename_of(truncated) + "' skip 1 using 2:3 with lines title 'sensitivity'\n");
      return 0;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences

FdEstimate finite_difference_reference(const SystemFactory& factory, const Objective& objective, double parameter,
                                       double delta, int samples, double spinup, double horizon, double step,
                                       const InitialStates& initial, int workers) {
  require(delta > 0.0, "finite_difference_reference: delta must be positive");
  require(samples >= 1, "finite_difference_reference: need at least one sample");
  std::vector<double> values(static_cast<std::size_t>(samples), 0.0);
  std::vector<std::string> errors(static_cast<std::size_t>(samples));
  parallel_for(samples, workers, [&](Index j) {
    try {
      const Vector u0 = initial(static_cast<int>(j));
      double averages[2];
      for (int side = 0; side < 2; ++side) {
        const auto system = factory(parameter + (side == 0 ? delta : -delta));
        const Vector u = spinup > 0.0 ? advance(*system, u0, spinup, step) : u0;
        averages[side] = advance_with_average(*system, objective, u, horizon, step).time_average;
      }
      values[static_cast<std::size_t>(j)] = (averages[0] - averages[1]) / (2.0 * delta);
    } catch (const DivergenceError& e) {
      errors[static_cast<std::size_t>(j)] = "sample " + std::to_string(j) + ": " + e.what();
    }
  });
  FdEstimate out;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (errors[j].empty())
      out.samples.push_back(values[j]);
    else
      out.failures.push_back(errors[j]);
  }
  if (out.samples.empty()) throw DivergenceError("finite_difference_reference: every sample diverged", 0);
  const double n = static_cast<double>(out.samples.size());
  double sum = 0.0;
  for (double v : out.samples) sum += v;
  out.mean = sum / n;
  if (out.samples.size() > 1) {
    double ss = 0.0;
    for (double v : out.samples) ss += (v - out.mean) * (v - out.mean);
    out.standard_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

FdEstimate finite_difference_reference(const ExperimentConfig& config, bool write_files) {
  stage("config", [&] {
    config.validate();
    return 0;
  });
  const auto objective = make_objective(config);
  const SystemFactory factory = [&config](double s) { return make_system(config, s); };
  const InitialStates initial = [&config](int sample) {
    return initial_condition(config, config.seed * 1000003ULL + static_cast<std::uint64_t>(sample) + 1ULL);
  };
  FdEstimate est = stage("fd-ref", [&] {
    return finite_difference_reference(factory, *objective, config.parameter(), config.fd_step(), config.fd_samples,
                                       config.spinup_span(), config.fd_horizon, config.step_size(), initial,
                                       effective_workers(config.workers));
  });
  if (write_files) {
    stage("output", [&] {
      ensure_dir(config.output);
      std::vector<Triple> rows;
      for (std::size_t j = 0; j < est.samples.size(); ++j) {
        rows.emplace_back("sample", static_cast<Index>(j), est.samples[j]);
      }
      rows.emplace_back("mean", 0, est.mean);
      rows.emplace_back("standard_error", 0, est.standard_error);
      rows.emplace_back("failures", 0, static_cast<double>(est.failures.size()));
      write_triples_csv(rows, file_in(config, "fd", ".csv"));
      return 0;
    });
  }
  return est;
}

// ---------------------------------------------------------------------------
// Sweeps and summaries

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                            bool write_files) {
  std::vector<SweepRow> rows(values.size());
  const int workers = effective_workers(config.workers);
  const int outer = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(values.size(), 1)));
  stage("config", [&] { return axis_key(axis); });
  parallel_for(static_cast<Index>(values.size()), outer, [&](Index i) {
    SweepRow& row = rows[static_cast<std::size_t>(i)];
    row.value = values[static_cast<std::size_t>(i)];
    try {
      ExperimentConfig c = config;
      set_axis(c, axis, row.value);
      std::ostringstream name;
      name << config.name << "_" << axis << row.value;
      c.name = name.str();
      if (outer > 1) c.workers = 1;
      ExperimentResult r = run_experiment(c, write_files);
      row.summary = r.summary;
      if (!r.summary.converged) row.error = r.summary.status;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  if (write_files) {
    stage("output", [&] {
      ensure_dir(config.output);
      write_sweep_csv(axis, rows, file_in(config, "sweep", ".csv"));
      return 0;
    });
  }
  return rows;
}

namespace {

const char* summary_header =
    "name,model,parameter,T,dT,K,N,h,gamma,mode,l,q,sensitivity,time_average,iterations,converged,"
    "final_residual,final_true_residual,cost_preconditioner,cost_solve,cost_total,predicted_preconditioner,"
    "predicted_solve,predicted_total,recover_cost,forcing_sweeps,kappa_S,kappa_MS,mu_max_S,mu_max_MS,status";

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void write_optional(std::ostream& os, const std::optional<double>& v) {
  if (v) os << *v;
}

void write_summary_row(std::ostream& os, const ExperimentSummary& s) {
  os << csv_field(s.name) << ',' << s.model << ',' << s.parameter << ',' << s.window << ',' << s.segment << ','
     << s.segments << ',' << s.dimension << ',' << s.step << ',' << s.gamma << ',' << s.mode << ',' << s.rank << ','
     << s.cycles << ',' << s.sensitivity << ',' << s.time_average << ',' << s.iterations << ','
     << (s.converged ? 1 : 0) << ',' << s.final_residual << ',' << s.final_true_residual << ','
     << s.preconditioner_cost.total() << ',' << s.solve_cost.total() << ',' << s.measured_total() << ','
     << s.predicted.preconditioner << ',' << s.predicted.solve << ',' << s.predicted.total() << ','
     << s.recover_cost << ',' << s.solve_cost.forcing_sweeps + s.preconditioner_cost.forcing_sweeps << ',';
  write_optional(os, s.kappa_schur);
  os << ',';
  write_optional(os, s.kappa_preconditioned);
  os << ',';
  write_optional(os, s.mu_max_schur);
  os << ',';
  write_optional(os, s.mu_max_preconditioned);
  os << ',' << csv_field(s.status);
}

}  // namespace

void write_summary_csv(const std::vector<ExperimentSummary>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << summary_header << '\n' << std::setprecision(17);
  for (const auto& s : rows) {
    write_summary_row(os, s);
    os << '\n';
  }
}

void write_sweep_csv(const std::string& axis, const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << axis << ',' << summary_header << ",error\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.value << ',';
    if (r.summary) {
      write_summary_row(os, *r.summary);
    } else {
      // Keep the column count: one empty field per summary column.
      const std::string header = summary_header;
      os << std::string(static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')), ',');
    }
    os << ',' << csv_field(r.error) << '\n';
  }
}

std::string summary_text(const ExperimentSummary& s) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << s.name << " [" << s.model << ", s=" << s.parameter << ", T=" << s.window << ", dT=" << s.segment
     << ", K=" << s.segments << ", N=" << s.dimension << "]\n"
     << "  sensitivity      " << std::setprecision(10) << s.sensitivity << std::setprecision(6) << "\n"
     << "  time average     " << s.time_average << "\n"
     << "  solver           " << s.mode << ", gamma=" << s.gamma << ", l=" << s.rank << ", q=" << s.cycles << "\n"
     << "  iterations       " << s.iterations << (s.converged ? " (converged)" : " (NOT converged)")
     << ", residual " << s.final_residual << "\n"
     << "  cost             preconditioner " << s.preconditioner_cost.total() << " + solve " << s.solve_cost.total()
     << " = " << s.measured_total() << " (predicted " << s.predicted.total() << "), recovery "
     << s.recover_cost << "\n";
  if (s.kappa_schur) os << "  kappa(S)         " << *s.kappa_schur << "\n";
  if (s.kappa_preconditioned) os << "  kappa(MS)        " << *s.kappa_preconditioned << "\n";
  if (s.mu_max_schur) os << "  mu_max(S)        " << *s.mu_max_schur << "\n";
  if (s.mu_max_preconditioned) os << "  mu_max(MS)       " << *s.mu_max_preconditioned << "\n";
  os << "  wall time        " << s.seconds << " s\n";
  return os.str();
}

}  // namespace mss
