#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "mss/precond.hpp"

namespace mss {

/// Thin SVD of a dense matrix, singular values descending.
struct DenseSvd {
  Matrix u;
  Vector sigma;
  Matrix v;
};

DenseSvd dense_svd(const Matrix& a);

/// Dense NK x N(K+1) constraint matrix in block-major ordering.
/// Each Phi_i is assembled column by column, N products per segment, and the
/// identity blocks are written directly. Throws when NK exceeds `cap`.
Matrix dense_assemble(const Trajectory& traj, CostLedger& ledger, Index cap = 2000, int workers = 1);

/// Dense Phi_i of one segment (projector included).
Matrix dense_segment_propagator(const Trajectory& traj, CostLedger& ledger, Index segment);

/// sum_{i<l} (u_i^T b / sigma_i) v_i. l = 0 gives zero.
CheckpointStack truncated_svd_solution(const DenseSvd& svd, const SegmentStack& b, Index l);
CheckpointStack truncated_svd_solution(const Matrix& a, const SegmentStack& b, Index l);

struct PicardRow {
  Index index = 0;  // 1-based
  double sigma = 0.0;
  double projection = 0.0;   // |u_i^T b|
  double coefficient = 0.0;  // |u_i^T b| / sigma_i
};

struct PicardTable {
  std::vector<PicardRow> rows;
};

PicardTable picard_data(const DenseSvd& svd, const SegmentStack& b);
PicardTable picard_data(const Matrix& a, const SegmentStack& b, Index cap = 2000);

/// Sensitivity of the truncated solutions v_l for l = 0 .. NK, using the affine form
/// sens(v) = sens(0) + <g, v> with g from sensitivity_gradient.
std::vector<double> truncated_sensitivity_curve(const DenseSvd& svd, const SegmentStack& b, double base,
                                                const CheckpointStack& gradient);

enum class SpectrumMode { dense, lanczos_extremes };

struct SpectrumReport {
  std::string label;
  Vector eigenvalues;  // ascending; only (min, max) in lanczos mode
  double kappa = 0.0;
  bool converged = true;

  double min() const { return eigenvalues(0); }
  double max() const { return eigenvalues(eigenvalues.size() - 1); }
};

/// Eigenvalues of a symmetric operator given as a flat-vector action.
/// Dense mode assembles the operator (size <= cap), symmetrizes it and solves
/// the full problem. Lanczos mode runs Lanczos with full reorthogonalization and
/// reports the extreme Ritz values; `converged` is false if either extreme has a
/// residual above `tolerance` relative to the largest Ritz value.
SpectrumReport spectrum(const LinearMap<Vector>& op, Index size, SpectrumMode mode, const std::string& label,
                        Index cap = 2000, Index max_steps = 300, double tolerance = 1e-8, std::uint64_t seed = 1);

/// Full spectrum of a dense matrix after (B + B^T)/2.
SpectrumReport dense_spectrum(const Matrix& b, const std::string& label);

/// S = A A^T from a dense A.
Matrix dense_schur(const Matrix& a);

/// M^{1/2} S M^{1/2} + gamma I, similar to gamma I + M S. Pass the dense M^{1/2}.
Matrix dense_preconditioned_schur(const Matrix& s, const Matrix& m_sqrt, double gamma = 0.0);

/// Matrix-free version on flat vectors: x -> M^{1/2} S M^{1/2} x + gamma x (or S x + gamma x without pc).
LinearMap<Vector> preconditioned_schur_map(const Trajectory& traj, CostLedger& ledger,
                                           const BlockDiagPreconditioner* pc, double gamma, int workers = 1);

using Triple = std::tuple<std::string, Index, double>;

/// Writes "label,index,value" rows.
void write_triples_csv(const std::vector<Triple>& rows, const std::string& path);
std::vector<Triple> spectrum_triples(const SpectrumReport& report);
/// Labels sigma, projection and coefficient.
std::vector<Triple> picard_triples(const PicardTable& table);

/// <dir>/<experiment>_<artifact>.csv
std::string artifact_path(const std::string& dir, const std::string& experiment, const std::string& artifact);

}  // namespace mss
