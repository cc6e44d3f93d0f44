// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "mss/experiment.hpp"
#include "support.hpp"

using namespace mss;
using mss::test::random_vector;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const int workers = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

// Every summary produced here, for the cost identity.
std::vector<ExperimentSummary> all_runs;

ExperimentSummary run(const ExperimentConfig& c) {
  ExperimentSummary s = run_experiment(c, false).summary;
  all_runs.push_back(s);
  return s;
}

const char* lorenz_ini =
    "[model]\nname = lorenz\nsigma = 10\nrho = 40\nbeta = 2.6666666666666665\n"
    "[time]\nT = 200\ndT = 1\n"
    "[solver]\ngamma = 0.1\nmode = post\ntol = 1e-5\n"
    "[preconditioner]\nenabled = true\nl = 1\nq = 2\n";

const char* ks_ini =
    "[model]\nname = ks\nnodes = 127\nlength = 128\nc = 0.8\n"
    "[time]\nspinup = 1000\nT = 100\ndT = 10\n"
    "[solver]\ngamma = 0.09\nmode = post\ntol = 1e-5\nmax_iter = 5000\n"
    "[preconditioner]\nenabled = true\nl = 15\nq = 2\n"
    "[fd]\ndelta = 0.05\nsamples = 100\nhorizon = 5000\n";

ExperimentConfig config(const char* ini, const std::map<std::string, std::string>& overrides = {}) {
  ExperimentConfig c = config_from_text(ini, overrides);
  c.workers = workers;
  return c;
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << x;
  return os.str();
}

Matrix sqrt_spd(const Matrix& m) { return Eigen::SelfAdjointEigenSolver<Matrix>(m).operatorSqrt(); }

LinearMap<Vector> dense_map(const Matrix& m) {
  return [&m](const Vector& x) -> Vector { return m * x; };
}

// ---------------------------------------------------------------------------

Outcome lorenz_sensitivity() {
  const ExperimentConfig c = config(lorenz_ini);
  const ExperimentSummary base = run(c);
  bool ok = base.converged && base.sensitivity >= 0.94 && base.sensitivity <= 1.04 && base.seconds < 120.0;
  std::ostringstream d;
  d << "T=200: " << fmt(base.sensitivity, 6) << " (" << base.iterations << " it, " << fmt(base.seconds, 3) << " s)";
  int lo = base.iterations, hi = base.iterations;
  for (const SweepRow& row : sweep(c, "T", {300.0, 500.0, 1000.0}, false)) {
    if (!row.summary) {
      d << "; T=" << row.value << " failed: " << row.error;
      ok = false;
      continue;
    }
    all_runs.push_back(*row.summary);
    const ExperimentSummary& s = *row.summary;
    ok = ok && s.converged && s.sensitivity >= 0.94 && s.sensitivity <= 1.04;
    lo = std::min(lo, s.iterations);
    hi = std::max(hi, s.iterations);
    d << "; T=" << row.value << ": " << fmt(s.sensitivity, 6) << " (" << s.iterations << " it)";
  }
  ok = ok && hi <= 2 * lo;
  d << "; iterations " << lo << ".." << hi;
  return {ok, d.str()};
}

Outcome lorenz_conditioning() {
  ExperimentConfig c = config(lorenz_ini);
  c.spectrum = "dense";
  const auto reports = run_spectrum(c, false);
  double ks = 0.0, kms = 0.0;
  for (const auto& r : reports) {
    if (r.label == "S") ks = r.kappa;
    if (r.label == "MS") kms = r.kappa;
  }
  const bool ok = ks >= 1e6 && kms <= 1e5 && ks / kms >= 1e3;
  return {ok, "kappa(S) = " + fmt(ks, 3) + " (need >= 1e6), kappa(M S) = " + fmt(kms, 3) +
                  " (need <= 1e5), reduction " + fmt(ks / kms, 3) + " (need >= 1e3)"};
}

Outcome lorenz_regularized() {
  const ExperimentSummary s = run(config(lorenz_ini, {{"solver.gamma", "1"}}));
  const bool ok = s.converged && s.final_residual <= 1e-5 && s.iterations <= 25;
  return {ok, std::to_string(s.iterations) + " iterations to " + fmt(s.final_residual, 3) + " (need <= 25)"};
}

Outcome exact_deflation() {
  ExperimentConfig c = config(lorenz_ini, {{"model.rho", "80"}, {"time.T", "50"}, {"time.dT", "0.5"}});
  c.precondition = false;
  const auto p = prepare_pipeline(c);
  CostLedger ledger;
  const Matrix a = dense_assemble(*p->trajectory, ledger, c.dense_cap, workers);
  const Matrix s = dense_schur(a);
  const Index nk = a.rows(), l = 100;
  const Vector mu = dense_spectrum(s, "S").eigenvalues;

  const Matrix m = exact_preconditioner_build(a, l);
  const Matrix half = sqrt_spd(m);
  const Vector ev = dense_spectrum(half * s * half, "MS").eigenvalues;

  // Expected multiset: l ones and the nk - l smallest mu(S), tagged so each group is checked on its own tolerance.
  std::vector<std::pair<double, bool>> expected;
  for (Index i = 0; i < nk - l; ++i) expected.emplace_back(mu(i), false);
  for (Index i = 0; i < l; ++i) expected.emplace_back(1.0, true);
  std::sort(expected.begin(), expected.end());
  double ones = 0.0, rest = 0.0;
  for (Index i = 0; i < nk; ++i) {
    const auto [value, is_one] = expected[static_cast<std::size_t>(i)];
    if (is_one)
      ones = std::max(ones, std::abs(ev(i) - 1.0));
    else
      rest = std::max(rest, std::abs(ev(i) - value) / value);
  }

  const Matrix full = exact_preconditioner_build(a, nk);
  const Preconditioner<Vector> pc{dense_map(full), {}};
  SolveConfig solve;
  solve.mode = Regularization::none;
  const Vector b = p->b.flat();
  const auto [w, report] = cg_solve<Vector>(dense_map(s), b, solve, &pc);

  const bool ok = ones <= 1e-6 && rest <= 1e-8 && report.converged && report.iterations == 1;
  return {ok, "NK = " + std::to_string(nk) + ", l = 100: max |mu - 1| on the deflated set " + fmt(ones, 3) +
                  ", max relative deviation of the rest " + fmt(rest, 3) + "; l = NK: " +
                  std::to_string(report.iterations) + " CG iteration(s)"};
}

// Shared between the KS criteria.
struct KsRuns {
  ExperimentSummary regularized;
  ExperimentSummary unregularized;
  FdEstimate fd;
};

KsRuns ks_runs() {
  KsRuns r;
  ExperimentConfig c = config(ks_ini);
  c.spectrum = "dense";
  r.regularized = run(c);
  r.unregularized = run(config(ks_ini, {{"solver.gamma", "0"}}));
  r.fd = finite_difference_reference(config(ks_ini), false);
  return r;
}

Outcome ks_pipeline(const KsRuns& r, double seconds) {
  const ExperimentSummary& s = r.regularized;
  const double lo = r.fd.mean - 3.0 * r.fd.standard_error, hi = r.fd.mean + 3.0 * r.fd.standard_error;
  const double reduction = s.mu_max_schur.value_or(0.0) / s.mu_max_preconditioned.value_or(1e300);
  const double bias = (r.unregularized.sensitivity - r.fd.mean) / std::abs(r.fd.mean);
  // Under-prediction: the gamma = 0 value lies below the band.
  const bool ok = s.converged && s.final_residual <= 1e-5 && reduction >= 100.0 && s.sensitivity >= lo &&
                  s.sensitivity <= hi && r.unregularized.converged && r.unregularized.sensitivity < lo &&
                  seconds < 1200.0;
  std::ostringstream d;
  d << "gamma=0.09: " << fmt(s.sensitivity, 5) << " in " << s.iterations << " it (residual "
    << fmt(s.final_residual, 3) << "); FD band " << fmt(r.fd.mean, 5) << " +- 3x" << fmt(r.fd.standard_error, 3)
    << " from " << r.fd.samples.size() << " samples; gamma=0: " << fmt(r.unregularized.sensitivity, 5) << " ("
    << fmt(100.0 * bias, 3) << "% vs FD mean); mu_max " << fmt(s.mu_max_schur.value_or(0.0)) << " -> "
    << fmt(s.mu_max_preconditioned.value_or(0.0)) << " (x" << fmt(reduction, 3) << "); " << fmt(seconds, 3) << " s";
  return {ok, d.str()};
}

Outcome truncated_curve() {
  const PicardResult p = run_picard(config(ks_ini), false);
  const auto& rows = p.table.rows;
  const auto& curve = p.sensitivity_by_rank;
  // Mode l (1-based) has sigma rows[l - 1].sigma, sorted descending.
  Index last_unit = 0;
  while (last_unit < static_cast<Index>(rows.size()) && rows[static_cast<std::size_t>(last_unit)].sigma >= 1.0)
    ++last_unit;
  const double plateau = curve[static_cast<std::size_t>(last_unit)];
  double spread = 0.0;
  Index first_window = last_unit;
  for (Index l = last_unit; l >= 1 && rows[static_cast<std::size_t>(l - 1)].sigma <= 1.1; --l) {
    spread = std::max(spread, std::abs(curve[static_cast<std::size_t>(l)] - plateau) / std::abs(plateau));
    first_window = l;
  }
  Index small = 0;
  while (small < static_cast<Index>(rows.size()) && rows[static_cast<std::size_t>(small)].sigma >= 0.1) ++small;
  const double full = std::abs(curve.back() - plateau) / std::abs(plateau);
  const bool ok = last_unit > first_window && spread <= 0.01 && full > 0.01;
  std::ostringstream d;
  d << "plateau " << fmt(plateau, 5) << " at l = " << last_unit << " (last sigma >= 1); modes " << first_window
    << ".." << last_unit << " with sigma in [1, 1.1] stay within " << fmt(100.0 * spread, 3) << "%; "
    << "sigma < 0.1 from l = " << small + 1 << ", full rank " << fmt(curve.back(), 5) << " deviates "
    << fmt(100.0 * full, 3) << "%";
  return {ok, d.str()};
}

Outcome cost_model(const KsRuns& r) {
  ExperimentConfig c = config(ks_ini, {{"solver.gamma", "0"}, {"solver.mode", "none"}, {"solver.max_iter", "20000"}});
  c.precondition = false;
  const ExperimentSummary plain = run(c);
  int mismatched = 0;
  for (const auto& s : all_runs) {
    if (s.preconditioner_cost.total() != s.predicted.preconditioner || s.solve_cost.total() != s.predicted.solve)
      ++mismatched;
  }
  const double factor = static_cast<double>(plain.measured_total()) / r.regularized.measured_total();
  const bool ok = mismatched == 0 && factor >= 5.0;
  return {ok, std::to_string(all_runs.size() - mismatched) + "/" + std::to_string(all_runs.size()) +
                  " runs match 2Kq(l+2) + 2Km; KS preconditioned " + std::to_string(r.regularized.measured_total()) +
                  " vs unpreconditioned gamma=0 " + std::to_string(plain.measured_total()) + " (" +
                  std::to_string(plain.iterations) + " it" + (plain.converged ? "" : ", not converged") +
                  "), factor " + fmt(factor, 3)};
}

// ---------------------------------------------------------------------------
// Property criteria on both models.

struct Instance {
  std::string label;
  std::unique_ptr<Pipeline> p;
};

std::vector<Instance> instances() {
  std::vector<Instance> out;
  out.push_back({"lorenz", prepare_pipeline(config(lorenz_ini, {{"time.T", "10"}}))});
  out.push_back({"ks", prepare_pipeline(config(ks_ini))});
  return out;
}

// |<x1, y1> - <x2, y2>| relative to the larger norm product.
template <typename A, typename B>
double pair_gap(const A& x1, const A& y1, const B& x2, const B& y2) {
  return test::rel_gap(inner(x1, y1), inner(x2, y2), std::max(x1.norm() * y1.norm(), x2.norm() * y2.norm()));
}

Outcome duality(const std::vector<Instance>& cases) {
  std::mt19937_64 rng(11);
  double worst_a = 0.0, worst_s = 0.0, worst_m = 0.0;
  for (const auto& c : cases) {
    const Trajectory& t = *c.p->trajectory;
    const BlockDiagPreconditioner& m = *c.p->preconditioner;
    const Index n = t.dimension(), k = t.segments();
    CostLedger ledger;
    for (int trial = 0; trial < 100; ++trial) {
      const auto v = test::random_stack<CheckpointStack>(rng, n, k + 1);
      const auto w = test::random_stack<SegmentStack>(rng, n, k);
      const auto w2 = test::random_stack<SegmentStack>(rng, n, k);
      const SegmentStack av = a_apply(t, ledger, v, workers);
      const CheckpointStack atw = a_transpose_apply(t, ledger, w, workers);
      worst_a = std::max(worst_a, pair_gap(av, w, v, atw));
      const SegmentStack sw = s_apply(t, ledger, w, workers), sw2 = s_apply(t, ledger, w2, workers);
      worst_s = std::max(worst_s, pair_gap(sw, w2, w, sw2));
      const SegmentStack mw = m.apply(w), mw2 = m.apply(w2);
      worst_m = std::max(worst_m, pair_gap(mw, w2, w, mw2));
    }
  }
  const bool ok = worst_a <= 1e-11 && worst_s <= 1e-11 && worst_m <= 1e-11;
  return {ok, "worst relative gaps over 100 trials per model: A " + fmt(worst_a, 3) + ", S " + fmt(worst_s, 3) +
                  ", M " + fmt(worst_m, 3)};
}

Outcome oracle_equivalence() {
  double worst_v = 0.0, worst_mu = 0.0;
  int cases = 0;
  for (const char* dt : {"0.5", "1"}) {
    for (const char* seed : {"1", "2", "3"}) {
      const std::string window = std::string(dt) == "1" ? "10" : "5";
      ExperimentConfig c = config(lorenz_ini, {{"time.T", window}, {"time.dT", dt}, {"run.seed", seed}});
      c.precondition = false;
      const auto p = prepare_pipeline(c);
      const Trajectory& t = *p->trajectory;
      CostLedger ledger;
      SolveConfig solve;
      solve.mode = Regularization::none;
      solve.tolerance = 1e-12;
      const auto [w, report] = solve_schur(t, ledger, p->b, solve, nullptr, workers);
      const CheckpointStack v = recover_v(t, ledger, w, workers);
      const Matrix a = dense_assemble(t, ledger, c.dense_cap, workers);
      const DenseSvd svd = dense_svd(a);
      const CheckpointStack pinv = truncated_svd_solution(svd, p->b, svd.sigma.size());
      worst_v = std::max(worst_v, (v.flat() - pinv.flat()).norm() / pinv.flat().norm());
      Vector sigma2 = svd.sigma.array().square();
      std::sort(sigma2.data(), sigma2.data() + sigma2.size());
      const Vector mu = dense_spectrum(dense_schur(a), "S").eigenvalues;
      worst_mu = std::max(worst_mu, (sigma2 - mu).cwiseAbs().maxCoeff() / mu.maxCoeff());
      ++cases;
    }
  }
  const bool ok = worst_v <= 1e-6 && worst_mu <= 1e-8;
  return {ok, std::to_string(cases) + " Lorenz instances with K = 10: CG + recover_v vs pseudoinverse " +
                  fmt(worst_v, 3) + ", sigma^2 vs mu " + fmt(worst_mu, 3) + " of mu_max"};
}

Outcome projector_algebra(const std::vector<Instance>& cases) {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  int count = 0;
  auto check = [&](const Vector& f) {
    const Index n = f.size();
    Matrix p(n, n);
    for (Index j = 0; j < n; ++j) p.col(j) = projector_apply(f, Vector::Unit(n, j));
    const double eps = std::numeric_limits<double>::epsilon() * static_cast<double>(n);
    worst = std::max(worst, (p * p - p).norm() / eps);
    worst = std::max(worst, projector_apply(f, f).norm() / f.norm() / eps);
    worst = std::max(worst, (p - p.transpose()).norm() / eps);
    ++count;
  };
  for (const auto& c : cases) {
    const Trajectory& t = *c.p->trajectory;
    for (Index i = 0; i <= t.segments(); ++i) check(t.rhs_value(t.checkpoint_step(i)));
    for (int r = 0; r < 20; ++r) check(random_vector(rng, t.dimension()));
  }
  return {worst <= 10.0, std::to_string(count) + " projectors: max of |P^2 - P|, |P f|/|f|, |P - P^T| is " +
                             fmt(worst, 3) + " x N eps (need <= 10)"};
}

Outcome gradient_checks(const std::vector<Instance>& cases) {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  std::string where;
  auto record = [&](double err, const std::string& what) {
    if (err > worst) {
      worst = err;
      where = what;
    }
  };
  for (const auto& c : cases) {
    const ExperimentConfig& cfg = c.p->config;
    const Trajectory& t = *c.p->trajectory;
    const DynamicalSystem& f = *c.p->system;
    const Objective& obj = *c.p->objective;
    const Index n = t.dimension();
    const double s = cfg.parameter();
    for (Index step : {Index(0), t.steps() / 3, t.steps()}) {
      const Vector u = t.state(step);
      const double eps = 1e-6 * std::max(1.0, u.norm());
      // Jacobian action and its transpose, column by column.
      Matrix jfd(n, n);
      for (Index j = 0; j < n; ++j) {
        const Vector e = Vector::Unit(n, j);
        jfd.col(j) = (rhs(f, u + eps * e) - rhs(f, u - eps * e)) / (2.0 * eps);
      }
      const Vector v = random_vector(rng, n), w = random_vector(rng, n);
      record((jac_vec(f, u, v) - jfd * v).norm() / (jfd * v).norm(), c.label + " J v");
      record((jac_transpose_vec(f, u, w) - jfd.transpose() * w).norm() / (jfd.transpose() * w).norm(),
             c.label + " J^T w");
      // Parameter derivative.
      const double ds = 1e-4 * std::max(1.0, std::abs(s));
      const Vector dfd = (rhs(*make_system(cfg, s + ds), u) - rhs(*make_system(cfg, s - ds), u)) / (2.0 * ds);
      record((dfds(f, u) - dfd).norm() / dfd.norm(), c.label + " df/ds");
      // Objective gradient.
      Vector gfd(n);
      for (Index j = 0; j < n; ++j) {
        const Vector e = Vector::Unit(n, j);
        gfd(j) = (obj.value(u + eps * e) - obj.value(u - eps * e)) / (2.0 * eps);
      }
      record((objective_gradient(obj, f, u) - gfd).norm() / gfd.norm(), c.label + " dJ/du");
    }
    // Discrete tangent and forced tangent against differences of the discrete flow over a short span.
    const Index span = std::min<Index>(t.steps_per_segment(), 50);
    const double h = t.step();
    const Vector u0 = t.state(t.checkpoint_step(1));
    const Vector v = random_vector(rng, n).normalized();
    const double eps = 1e-6 * std::max(1.0, u0.norm());
    const double len = static_cast<double>(span) * h;
    const Vector flow_fd = (advance(f, u0 + eps * v, len, h) - advance(f, u0 - eps * v, len, h)) / (2.0 * eps);
    Vector tangent;
    tangent_sweep(t, 1, v, false, [&](Index step, const Vector& x) {
      if (step == t.checkpoint_step(1) + span) tangent = x;
    });
    record((tangent - flow_fd).norm() / flow_fd.norm(), c.label + " discrete tangent");
    const double ds = 1e-4 * std::max(1.0, std::abs(s));
    const Vector param_fd =
        (advance(*make_system(cfg, s + ds), u0, len, h) - advance(*make_system(cfg, s - ds), u0, len, h)) / (2.0 * ds);
    Vector forced;
    tangent_sweep(t, 1, Vector::Zero(n), true, [&](Index step, const Vector& x) {
      if (step == t.checkpoint_step(1) + span) forced = x;
    });
    record((forced - param_fd).norm() / param_fd.norm(), c.label + " forced tangent");
    // Sensitivity gradient: the functional is affine in v, so a central difference is exact up to rounding.
    const CheckpointStack g = sensitivity_gradient(t, obj, workers);
    const auto dv = test::random_stack<CheckpointStack>(rng, n, t.segments() + 1);
    const CheckpointStack zero = CheckpointStack::Zero(n, t.segments() + 1);
    const CheckpointStack plus = zero + dv, minus = zero - dv;
    const double fd =
        (evaluate_sensitivity(t, obj, plus, workers) - evaluate_sensitivity(t, obj, minus, workers)) / 2.0;
    record(std::abs(inner(g, dv) - fd) / std::abs(fd), c.label + " d sens / dv");
  }
  return {worst <= 1e-5, "worst relative error " + fmt(worst, 3) + " (" + where + "), need <= 1e-5"};
}

Outcome cg_bound() {
  std::mt19937_64 rng(14);
  double worst_residual = 0.0, worst_energy = 0.0;
  int cases = 0;
  std::vector<std::string> violations;
  auto check = [&](const std::string& label, const Matrix& a, const Vector& b) {
    const SpectrumReport eig = dense_spectrum(a, "a");
    const Vector exact = a.ldlt().solve(b);
    const double e0 = std::sqrt(exact.dot(a * exact));
    SolveConfig solve;
    solve.mode = Regularization::none;
    solve.tolerance = 1e-10;
    solve.max_iterations = 5000;
    std::vector<double> energy{1.0};
    const auto [x, report] = cg_solve<Vector>(dense_map(a), b, solve, nullptr, [&](int, const Vector& xi) {
      const Vector e = xi - exact;
      energy.push_back(std::sqrt(std::max(0.0, e.dot(a * e))) / e0);
    });
    double here = 0.0;
    for (std::size_t m = 0; m < report.residual_history.size(); ++m) {
      const double bound = error_bound(eig.kappa, static_cast<int>(m));
      const double r = std::max(report.residual_history[m], report.true_residual_history[m]);
      if (bound > 0.0) here = std::max(here, r / bound);
      if (m < energy.size() && bound > 0.0) worst_energy = std::max(worst_energy, energy[m] / bound);
    }
    worst_residual = std::max(worst_residual, here);
    if (here > 1.0 + 1e-8) violations.push_back(label + " (kappa " + fmt(eig.kappa, 3) + ", x" + fmt(here, 3) + ")");
    ++cases;
  };
  for (const char* dt : {"0.5", "1"}) {
    for (const char* seed : {"1", "2", "3"}) {
      const std::string window = std::string(dt) == "1" ? "10" : "5";
      ExperimentConfig c = config(lorenz_ini, {{"time.T", window}, {"time.dT", dt}, {"run.seed", seed}});
      c.precondition = false;
      const auto p = prepare_pipeline(c);
      CostLedger ledger;
      check(std::string("lorenz dT=") + dt + " seed " + seed,
            dense_schur(dense_assemble(*p->trajectory, ledger, c.dense_cap, workers)), p->b.flat());
    }
  }
  {
    ExperimentConfig c = config(ks_ini, {{"model.nodes", "31"}, {"model.length", "32"}, {"time.T", "20"},
                                         {"time.dT", "4"}, {"preconditioner.l", "5"}});
    c.precondition = false;
    const auto p = prepare_pipeline(c);
    CostLedger ledger;
    check("ks N=31", dense_schur(dense_assemble(*p->trajectory, ledger, c.dense_cap, workers)), p->b.flat());
  }
  for (double kappa : {10.0, 1e3, 1e5}) {
    const Index n = 60;
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j) g.col(j) = random_vector(rng, n);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = std::pow(kappa, static_cast<double>(i) / static_cast<double>(n - 1));
    check("random spd kappa " + fmt(kappa, 2), q * d.asDiagonal() * q.transpose(), random_vector(rng, n));
  }
  std::string over;
  for (const auto& v : violations) over += (over.empty() ? "" : ", ") + v;
  return {violations.empty(), std::to_string(cases) + " dense instances: max ||r_m||/||r_0|| / bound = " +
                                  fmt(worst_residual, 3) + (over.empty() ? "" : " [over: " + over + "]") +
                                  "; energy-norm error / bound = " + fmt(worst_energy, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments pick a subset of criteria by number.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](std::initializer_list<int> ids) {
    if (only.empty()) return true;
    for (int id : ids)
      if (only.count(id)) return true;
    return false;
  };
  int failed = 0, ran = 0;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& body) {
    if (!wanted({id})) return;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), seconds);
    std::fflush(stdout);
  };

  report(1, "Lorenz sensitivity and T sweep", lorenz_sensitivity);
  report(2, "Lorenz conditioning", lorenz_conditioning);
  report(3, "Lorenz regularized convergence", lorenz_regularized);
  report(4, "exact-preconditioner deflation", exact_deflation);

  KsRuns ks;
  double ks_seconds = 0.0;
  bool ks_ready = false;
  std::string ks_error;
  if (wanted({5, 7})) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ks = ks_runs();
      ks_ready = true;
    } catch (const std::exception& e) {
      ks_error = e.what();
    }
    ks_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  report(5, "KS pipeline", [&]() -> Outcome {
    if (!ks_ready) return {false, "exception: " + ks_error};
    return ks_pipeline(ks, ks_seconds);
  });
  report(6, "truncated-SVD accuracy curve", truncated_curve);
  report(7, "cost model", [&]() -> Outcome {
    if (!ks_ready) return {false, "exception: " + ks_error};
    return cost_model(ks);
  });

  std::vector<Instance> cases;
  if (wanted({8, 10, 11})) {
    try {
      cases = instances();
    } catch (const std::exception& e) {
      std::cerr << "property instances: " << e.what() << "\n";
    }
  }
  report(8, "duality", [&] { return duality(cases); });
  report(9, "oracle equivalence", oracle_equivalence);
  report(10, "projector algebra", [&] { return projector_algebra(cases); });
  report(11, "gradient checks", [&] { return gradient_checks(cases); });
  report(12, "CG bound", cg_bound);

  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
