#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mss/shadow.hpp"

namespace mss {

template <typename Vec>
using LinearMap = std::function<Vec(const Vec&)>;

/// Symmetric positive definite preconditioner M together with M^{-1}.
/// The inverse is only needed for the post-regularized mode.
template <typename Vec>
struct Preconditioner {
  LinearMap<Vec> apply;
  LinearMap<Vec> apply_inverse;
};

/// How Tikhonov regularization enters a (possibly preconditioned) Schur system.
///   none: M S w = M b
///   pre:  M (gamma I + S) w = M b
///   post: (gamma I + M S) w = M b
enum class Regularization { none, pre, post };

std::string to_string(Regularization mode);
Regularization parse_regularization(const std::string& text);

struct SolveConfig {
  double tolerance = 1e-5;
  int max_iterations = 500;
  double gamma = 0.0;
  Regularization mode = Regularization::post;
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  /// ||M r_m|| / ||M r_0||, the residual of the preconditioned system; first entry 1.
  std::vector<double> residual_history;
  /// ||r_m|| / ||r_0|| of the symmetric form the iteration actually works on.
  std::vector<double> true_residual_history;
  /// Filled by the MSS-level wrapper; zero for generic operators.
  LedgerSnapshot cost;

  double final_residual() const { return residual_history.empty() ? 1.0 : residual_history.back(); }
};

/// A zero vector shaped like v.
template <typename Vec>
Vec zeros_like(const Vec& v) {
  Vec z = v;
  z *= 0.0;
  return z;
}

template <typename Vec>
using IterateObserver = std::function<void(int iteration, const Vec& iterate)>;

/// Preconditioned conjugate gradients for the regularized Schur system.
///
/// The iteration runs on the symmetric form
///   none: S,   pre: gamma I + S,   post: S + gamma M^{-1},
/// with M as an SPD preconditioner. For post mode the preconditioned residual
/// M r equals M b - (gamma I + M S) w, so the convergence test is on the
/// residual of the post-regularized system itself.
template <typename Vec>
std::pair<Vec, SolveReport> cg_solve(const LinearMap<Vec>& op, const Vec& rhs, const SolveConfig& config,
                                     const Preconditioner<Vec>* pc = nullptr,
                                     const IterateObserver<Vec>& observer = {}) {
  require(config.tolerance > 0.0, "cg_solve: tolerance must be positive");
  require(config.gamma >= 0.0, "cg_solve: gamma must be non-negative");
  const double gamma = config.mode == Regularization::none ? 0.0 : config.gamma;
  const bool post_with_pc = pc && config.mode == Regularization::post && gamma != 0.0;
  require(!post_with_pc || static_cast<bool>(pc->apply_inverse), "cg_solve: post mode needs the preconditioner inverse");

  auto apply_op = [&](const Vec& p) {
    Vec q = op(p);
    if (gamma != 0.0) {
      if (post_with_pc)
        q += gamma * pc->apply_inverse(p);
      else
        q += gamma * p;
    }
    return q;
  };
  auto precondition = [&](const Vec& r) { return pc ? pc->apply(r) : r; };

  SolveReport report;
  Vec x = zeros_like(rhs);
  Vec r = rhs;
  Vec z = precondition(r);
  const double r0 = std::sqrt(inner(r, r));
  const double z0 = std::sqrt(inner(z, z));
  report.residual_history.push_back(1.0);
  report.true_residual_history.push_back(1.0);
  if (z0 == 0.0 || r0 == 0.0) {
    report.converged = true;
    return {x, report};
  }
  if (!std::isfinite(z0) || !std::isfinite(r0)) throw BreakdownError("cg_solve: non-finite right-hand side", 0);

  Vec p = z;
  double rz = inner(r, z);
  for (int it = 1; it <= config.max_iterations; ++it) {
    Vec q = apply_op(p);
    const double pq = inner(p, q);
    if (!std::isfinite(pq) || !(pq > 0.0)) {
      throw BreakdownError("cg_solve: non-positive curvature <p, Op p> = " + std::to_string(pq) + " at iteration " +
                               std::to_string(it),
                           it);
    }
    const double alpha = rz / pq;
    x += alpha * p;
    r -= alpha * q;
    z = precondition(r);
    const double rz_new = inner(r, z);
    const double zn = std::sqrt(inner(z, z)) / z0;
    const double rn = std::sqrt(inner(r, r)) / r0;
    if (!std::isfinite(zn) || !std::isfinite(rn) || !std::isfinite(rz_new)) {
      throw BreakdownError("cg_solve: non-finite iterate at iteration " + std::to_string(it), it);
    }
    report.residual_history.push_back(zn);
    report.true_residual_history.push_back(rn);
    report.iterations = it;
    if (observer) observer(it, x);
    if (zn <= config.tolerance) {
      report.converged = true;
      break;
    }
    const double beta = rz_new / rz;
    p = z + beta * p;
    rz = rz_new;
  }
  return {x, report};
}

/// 2 ((sqrt(kappa) - 1) / (sqrt(kappa) + 1))^m, the CG energy-norm error bound.
double error_bound(double kappa, int m);

/// Solves the MSS Schur system matrix-free and records the ledger delta in the report.
std::pair<SegmentStack, SolveReport> solve_schur(const Trajectory& traj, CostLedger& ledger, const SegmentStack& b,
                                                 const SolveConfig& config,
                                                 const Preconditioner<SegmentStack>* pc = nullptr, int workers = 1,
                                                 const IterateObserver<SegmentStack>& observer = {});

/// Writes "iteration,relative_residual" rows (preconditioned residual history).
void write_residual_csv(const SolveReport& report, const std::string& path);
/// Same layout for the true residual history.
void write_true_residual_csv(const SolveReport& report, const std::string& path);

}  // namespace mss
