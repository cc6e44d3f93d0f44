#pragma once

#include <atomic>
#include <cstdint>

#include "mss/timestep.hpp"

namespace mss {

struct LedgerSnapshot {
  std::int64_t phi = 0;
  std::int64_t phi_transpose = 0;
  std::int64_t forcing_sweeps = 0;

  /// Cost in the currency of Phi and Phi^T products; forcing sweeps are not included.
  std::int64_t total() const { return phi + phi_transpose; }

  friend LedgerSnapshot operator-(const LedgerSnapshot& a, const LedgerSnapshot& b) {
    return {a.phi - b.phi, a.phi_transpose - b.phi_transpose, a.forcing_sweeps - b.forcing_sweeps};
  }
  friend bool operator==(const LedgerSnapshot&, const LedgerSnapshot&) = default;
};

/// Counts propagator applications. Safe under concurrent increments.
class CostLedger {
 public:
  void add_phi(std::int64_t n = 1) { phi_ += n; }
  void add_phi_transpose(std::int64_t n = 1) { phi_transpose_ += n; }
  void add_forcing_sweep(std::int64_t n = 1) { forcing_ += n; }

  LedgerSnapshot snapshot() const { return {phi_.load(), phi_transpose_.load(), forcing_.load()}; }

 private:
  std::atomic<std::int64_t> phi_{0};
  std::atomic<std::int64_t> phi_transpose_{0};
  std::atomic<std::int64_t> forcing_{0};
};

/// x - f <f, x> / <f, f>. Throws DegenerateProjectorError when f vanishes.
Vector projector_apply(const Vector& f, const Vector& x);

// Segment propagators. `segment` is 0-based: segment i maps checkpoint i to checkpoint i+1,
// so it is the Phi_{i+1} block of the constraint matrix.

/// Phi z: homogeneous tangent across the segment, then the projector at its end.
Vector phi_apply(const Trajectory& traj, CostLedger& ledger, Index segment, const Vector& z);
/// Phi^T z: projector at the segment end, then the adjoint sweep back to its start.
Vector phi_transpose_apply(const Trajectory& traj, CostLedger& ledger, Index segment, const Vector& z);

/// b_i = P (forced tangent from zero across segment i). One forcing sweep per segment.
SegmentStack assemble_rhs(const Trajectory& traj, CostLedger& ledger, int workers = 1);

/// (A v)_i = v_{i+1} - Phi_i v_i for the K segments.
SegmentStack a_apply(const Trajectory& traj, CostLedger& ledger, const CheckpointStack& v, int workers = 1);
/// A^T w, a stack of K+1 checkpoint blocks.
CheckpointStack a_transpose_apply(const Trajectory& traj, CostLedger& ledger, const SegmentStack& w,
                                  int workers = 1);
/// S w = A A^T w.
SegmentStack s_apply(const Trajectory& traj, CostLedger& ledger, const SegmentStack& w, int workers = 1);
/// v = A^T w, the first row of the optimality system.
CheckpointStack recover_v(const Trajectory& traj, CostLedger& ledger, const SegmentStack& w, int workers = 1);

/// Trapezoidal time average of the objective over the stored window.
double time_average(const Trajectory& traj, const Objective& objective);

/// dJbar/ds from the checkpoint tangents v:
///   (1/T) sum_i [ int <dJ/du, v'> dt + <f_{i+1}, v'(t_{i+1})> / |f_{i+1}|^2 (Jbar - J_{i+1}) ] + dJbar/ds,
/// where v' is the forced, unprojected tangent started from v_i on segment i.
double evaluate_sensitivity(const Trajectory& traj, const Objective& objective, const CheckpointStack& v,
                            int workers = 1);

/// Linear part of evaluate_sensitivity, by one adjoint sweep per segment:
/// evaluate_sensitivity(v) = evaluate_sensitivity(0) + <g, v>. The last block is zero.
CheckpointStack sensitivity_gradient(const Trajectory& traj, const Objective& objective, int workers = 1);

}  // namespace mss
