#include "mss/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>

#include "mss/parallel.hpp"

namespace mss {

DenseSvd dense_svd(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Matrix dense_segment_propagator(const Trajectory& traj, CostLedger& ledger, Index segment) {
  const Index n = traj.dimension();
  Matrix phi(n, n);
  for (Index c = 0; c < n; ++c) phi.col(c) = phi_apply(traj, ledger, segment, Vector::Unit(n, c));
  return phi;
}

Matrix dense_assemble(const Trajectory& traj, CostLedger& ledger, Index cap, int workers) {
  const Index n = traj.dimension();
  const Index k = traj.segments();
  if (n * k > cap) {
    throw ContractViolation("dense_assemble: NK = " + std::to_string(n * k) + " exceeds the dense cap " +
                            std::to_string(cap));
  }
  Matrix a = Matrix::Zero(n * k, n * (k + 1));
  parallel_for(k, workers, [&](Index i) {
    a.block(i * n, i * n, n, n) = -dense_segment_propagator(traj, ledger, i);
    a.block(i * n, (i + 1) * n, n, n).setIdentity();
  });
  return a;
}

CheckpointStack truncated_svd_solution(const DenseSvd& svd, const SegmentStack& b, Index l) {
  const Index rows = svd.u.rows();
  require(b.size() == rows, "truncated_svd_solution: rhs length does not match the matrix");
  if (l < 0 || l > svd.sigma.size()) {
    throw ContractViolation("truncated_svd_solution: l = " + std::to_string(l) + " outside [0, " +
                            std::to_string(svd.sigma.size()) + "]");
  }
  const Index n = b.dimension();
  if (l == 0) return CheckpointStack::Zero(n, svd.v.rows() / n);
  const Vector coeffs = (svd.u.leftCols(l).transpose() * b.flat()).cwiseQuotient(svd.sigma.head(l));
  const Vector flat = svd.v.leftCols(l) * coeffs;
  return CheckpointStack::FromFlat(flat, n);
}

CheckpointStack truncated_svd_solution(const Matrix& a, const SegmentStack& b, Index l) {
  return truncated_svd_solution(dense_svd(a), b, l);
}

PicardTable picard_data(const DenseSvd& svd, const SegmentStack& b) {
  require(b.size() == svd.u.rows(), "picard_data: rhs length does not match the matrix");
  const Vector proj = svd.u.transpose() * b.flat();
  PicardTable table;
  table.rows.reserve(static_cast<std::size_t>(proj.size()));
  for (Index i = 0; i < proj.size(); ++i) {
    const double p = std::abs(proj(i));
    table.rows.push_back({i + 1, svd.sigma(i), p, p / svd.sigma(i)});
  }
  return table;
}

PicardTable picard_data(const Matrix& a, const SegmentStack& b, Index cap) {
  if (a.rows() > cap) throw ContractViolation("picard_data: matrix exceeds the dense cap");
  return picard_data(dense_svd(a), b);
}

std::vector<double> truncated_sensitivity_curve(const DenseSvd& svd, const SegmentStack& b, double base,
                                                const CheckpointStack& gradient) {
  require(gradient.size() == svd.v.rows(), "truncated_sensitivity_curve: gradient length does not match");
  const Vector coeffs = (svd.u.transpose() * b.flat()).cwiseQuotient(svd.sigma);
  const Vector gv = svd.v.transpose() * gradient.flat();
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(coeffs.size() + 1));
  double value = base;
  curve.push_back(value);
  for (Index i = 0; i < coeffs.size(); ++i) {
    value += coeffs(i) * gv(i);
    curve.push_back(value);
  }
  return curve;
}

namespace {

double condition(const Vector& ascending) {
  const double lo = ascending(0);
  const double hi = ascending(ascending.size() - 1);
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

SpectrumReport lanczos_extremes(const LinearMap<Vector>& op, Index size, const std::string& label, Index max_steps,
                                double tolerance, std::uint64_t seed) {
  const Index steps = std::min(size, max_steps);
  Matrix q(size, steps + 1);
  std::vector<double> alpha, beta;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = normal(rng);
  q.col(0) = v.normalized();

  SpectrumReport report;
  report.label = label;
  Eigen::SelfAdjointEigenSolver<Matrix> tri;
  Index m = 0;
  for (Index j = 0; j < steps; ++j) {
    Vector w = op(q.col(j));
    alpha.push_back(q.col(j).dot(w));
    for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(j + 1) * (q.leftCols(j + 1).transpose() * w);
    const double b = w.norm();
    m = j + 1;

    Matrix t = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    tri.compute(t);
    const Vector& theta = tri.eigenvalues();
    const double scale = std::max(std::abs(theta(0)), std::abs(theta(m - 1)));
    const double res_lo = std::abs(b * tri.eigenvectors()(m - 1, 0));
    const double res_hi = std::abs(b * tri.eigenvectors()(m - 1, m - 1));
    const bool done = res_lo <= tolerance * scale && res_hi <= tolerance * scale;
    if (done || b <= 1e-14 * scale || m == steps) {
      report.converged = done || b <= 1e-14 * scale;
      break;
    }
    beta.push_back(b);
    q.col(j + 1) = w / b;
  }
  const Vector& theta = tri.eigenvalues();
  report.eigenvalues = Vector(2);
  report.eigenvalues << theta(0), theta(m - 1);
  report.kappa = condition(report.eigenvalues);
  return report;
}

}  // namespace

SpectrumReport dense_spectrum(const Matrix& b, const std::string& label) {
  require(b.rows() == b.cols() && b.rows() > 0, "dense_spectrum: matrix must be square and non-empty");
  const Matrix sym = 0.5 * (b + b.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  SpectrumReport report;
  report.label = label;
  report.eigenvalues = eig.eigenvalues();
  report.kappa = condition(report.eigenvalues);
  report.converged = eig.info() == Eigen::Success;
  return report;
}

SpectrumReport spectrum(const LinearMap<Vector>& op, Index size, SpectrumMode mode, const std::string& label,
                        Index cap, Index max_steps, double tolerance, std::uint64_t seed) {
  require(size > 0, "spectrum: empty operator");
  if (mode == SpectrumMode::lanczos_extremes) return lanczos_extremes(op, size, label, max_steps, tolerance, seed);
  if (size > cap) {
    throw ContractViolation("spectrum: size " + std::to_string(size) + " exceeds the dense cap " +
                            std::to_string(cap));
  }
  Matrix b(size, size);
  for (Index c = 0; c < size; ++c) b.col(c) = op(Vector::Unit(size, c));
  return dense_spectrum(b, label);
}

Matrix dense_schur(const Matrix& a) { return a * a.transpose(); }

Matrix dense_preconditioned_schur(const Matrix& s, const Matrix& m_sqrt, double gamma) {
  Matrix out = m_sqrt * s * m_sqrt;
  out.diagonal().array() += gamma;
  return out;
}

LinearMap<Vector> preconditioned_schur_map(const Trajectory& traj, CostLedger& ledger,
                                           const BlockDiagPreconditioner* pc, double gamma, int workers) {
  const Index n = traj.dimension();
  return [&traj, &ledger, pc, gamma, workers, n](const Vector& x) -> Vector {
    SegmentStack w = SegmentStack::FromFlat(x, n);
    if (pc) w = pc->apply_sqrt(w);
    SegmentStack y = s_apply(traj, ledger, w, workers);
    if (pc) y = pc->apply_sqrt(y);
    Vector out = y.flat();
    if (gamma != 0.0) out += gamma * x;
    return out;
  };
}

void write_triples_csv(const std::vector<Triple>& rows, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "label,index,value\n" << std::setprecision(17);
  for (const auto& [label, index, value] : rows) os << label << ',' << index << ',' << value << '\n';
  if (!os) throw Error("write failed: " + path);
}

std::vector<Triple> spectrum_triples(const SpectrumReport& report) {
  std::vector<Triple> rows;
  for (Index i = 0; i < report.eigenvalues.size(); ++i) rows.emplace_back(report.label, i + 1, report.eigenvalues(i));
  rows.emplace_back(report.label + "_kappa", 0, report.kappa);
  return rows;
}

std::vector<Triple> picard_triples(const PicardTable& table) {
  std::vector<Triple> rows;
  for (const auto& r : table.rows) {
    rows.emplace_back("sigma", r.index, r.sigma);
    rows.emplace_back("projection", r.index, r.projection);
    rows.emplace_back("coefficient", r.index, r.coefficient);
  }
  return rows;
}

std::string artifact_path(const std::string& dir, const std::string& experiment, const std::string& artifact) {
  return (std::filesystem::path(dir) / (experiment + "_" + artifact + ".csv")).string();
}

}  // namespace mss
