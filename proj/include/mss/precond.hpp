#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mss/solver.hpp"

namespace mss {

/// Top singular triplets of one operator, as found by partial_svd.
struct SegmentSvd {
  Index segment = 0;
  Matrix left;             // N x r, orthonormal columns
  Matrix right;            // N x r, orthonormal columns
  Vector singular_values;  // r values, positive and non-increasing
  int cycles = 0;

  Index rank() const { return singular_values.size(); }
};

/// Partial SVD by restarted Lanczos bidiagonalization with full reorthogonalization.
///
/// Each cycle performs exactly rank+2 products with `op` and rank+2 with `op_t`
/// (fewer only when rank+2 exceeds the dimension). The first cycle starts from a
/// seeded random vector. Later cycles keep the top Ritz triplets (a thick restart,
/// trimmed so the basis never exceeds the dimension) and extend the basis by
/// another rank+2 vectors. Ritz values below `clamp * sigma_1` are dropped.
SegmentSvd partial_svd(const LinearMap<Vector>& op, const LinearMap<Vector>& op_t, Index dimension, Index rank,
                       int cycles, std::uint64_t seed, double clamp = 1e-10);

/// partial_svd on the pair (Phi_i, Phi_i^T) of one segment; charges the ledger.
SegmentSvd partial_svd_segment(const Trajectory& traj, CostLedger& ledger, Index segment, Index rank, int cycles,
                               std::uint64_t seed);

/// diag(M_1, ..., M_K) with M_i = U_i S_i^{-2} U_i^T + (I - U_i U_i^T).
class BlockDiagPreconditioner {
 public:
  BlockDiagPreconditioner(std::vector<SegmentSvd> blocks, Index rank, int cycles);

  Index segments() const { return static_cast<Index>(blocks_.size()); }
  Index dimension() const { return blocks_.empty() ? 0 : blocks_.front().left.rows(); }
  Index rank() const { return rank_; }
  int cycles() const { return cycles_; }
  const std::vector<SegmentSvd>& blocks() const { return blocks_; }

  /// M z
  SegmentStack apply(const SegmentStack& z) const { return apply_power(z, -2.0); }
  /// M^{-1} z
  SegmentStack apply_inverse(const SegmentStack& z) const { return apply_power(z, 2.0); }
  /// M^{1/2} z, for symmetric similarity transforms of M S.
  SegmentStack apply_sqrt(const SegmentStack& z) const { return apply_power(z, -1.0); }

  Preconditioner<SegmentStack> as_preconditioner() const;

  /// Dense block-diagonal matrix of M^{(-exponent/2)}, i.e. exponent -2 gives M.
  Matrix dense(double exponent = -2.0) const;

 private:
  SegmentStack apply_power(const SegmentStack& z, double exponent) const;

  std::vector<SegmentSvd> blocks_;
  Index rank_;
  int cycles_;
};

/// Builds one SegmentSvd per segment, segments processed concurrently.
/// Segment i uses seed + i so the result does not depend on the worker count.
BlockDiagPreconditioner build_block_diag_preconditioner(const Trajectory& traj, CostLedger& ledger, Index rank,
                                                        int cycles, std::uint64_t seed, int workers = 1);

SegmentStack bdp_apply(const BlockDiagPreconditioner& pc, const SegmentStack& z);

/// Dense M_(l) = U_1 S_1^{-2} U_1^T + (I - U_1 U_1^T) from the top-l SVD of a dense constraint matrix.
Matrix exact_preconditioner_build(const Matrix& a, Index rank);

struct CostPrediction {
  std::int64_t preconditioner = 0;  // 2 K q (l+2)
  std::int64_t solve = 0;           // 2 K m
  std::int64_t total() const { return preconditioner + solve; }
};

CostPrediction predict_costs(Index segments, int cycles, Index rank, int iterations);

/// u64 N, u64 K, u64 l, u64 q, then per segment u64 r, r f64 singular values, N*r f64 left vectors (column by column).
void save_preconditioner(const BlockDiagPreconditioner& pc, const std::string& path);
BlockDiagPreconditioner load_preconditioner(const std::string& path);

}  // namespace mss
