#include "mss/solver.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace mss {

std::string to_string(Regularization mode) {
  switch (mode) {
    case Regularization::none: return "none";
    case Regularization::pre: return "pre";
    case Regularization::post: return "post";
  }
  return "unknown";
}

Regularization parse_regularization(const std::string& text) {
  if (text == "none") return Regularization::none;
  if (text == "pre") return Regularization::pre;
  if (text == "post") return Regularization::post;
  throw ConfigError("unknown regularization mode '" + text + "' (expected none, pre or post)");
}

double error_bound(double kappa, int m) {
  if (!(kappa >= 1.0)) throw ContractViolation("error_bound: condition number must be >= 1");
  require(m >= 0, "error_bound: iteration count must be non-negative");
  if (m == 0) return 2.0;
  const double root = std::sqrt(kappa);
  return 2.0 * std::pow((root - 1.0) / (root + 1.0), m);
}

std::pair<SegmentStack, SolveReport> solve_schur(const Trajectory& traj, CostLedger& ledger, const SegmentStack& b,
                                                 const SolveConfig& config, const Preconditioner<SegmentStack>* pc,
                                                 int workers, const IterateObserver<SegmentStack>& observer) {
  const LedgerSnapshot before = ledger.snapshot();
  const LinearMap<SegmentStack> op = [&](const SegmentStack& w) { return s_apply(traj, ledger, w, workers); };
  auto result = cg_solve(op, b, config, pc, observer);
  result.second.cost = ledger.snapshot() - before;
  return result;
}

namespace {

void write_history(const std::vector<double>& history, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "iteration,relative_residual\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i) os << i << ',' << history[i] << '\n';
}

}  // namespace

void write_residual_csv(const SolveReport& report, const std::string& path) {
  write_history(report.residual_history, path);
}

void write_true_residual_csv(const SolveReport& report, const std::string& path) {
  write_history(report.true_residual_history, path);
}

}  // namespace mss
