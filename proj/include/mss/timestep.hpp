#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mss/dynsys.hpp"

namespace mss {

/// Stored RK4 solution on a uniform grid t_n = t_start + n h, n = 0 .. steps.
///
/// Besides the states it caches f(u_n) and the three inner RK4 stage states of
/// every step, so tangent and adjoint sweeps linearize the discrete scheme at
/// exactly the points the nonlinear integration visited. The grid is split into
/// segments of `steps_per_segment` steps; checkpoint i sits at step i * steps_per_segment.
class Trajectory {
 public:
  /// Rebuilds the caches from stored states (used by integrate_nonlinear and load).
  Trajectory(std::shared_ptr<const DynamicalSystem> system, double t_start, double step, Matrix states,
             Index steps_per_segment);

  const DynamicalSystem& system() const { return *system_; }
  std::shared_ptr<const DynamicalSystem> system_ptr() const { return system_; }

  Index dimension() const { return states_.rows(); }
  double step() const { return h_; }
  double t_start() const { return t_start_; }
  double t_end() const { return t_start_ + h_ * static_cast<double>(steps()); }
  double span() const { return h_ * static_cast<double>(steps()); }
  Index steps() const { return states_.cols() - 1; }
  Index segments() const { return steps() / steps_per_segment_; }
  Index steps_per_segment() const { return steps_per_segment_; }
  double segment_length() const { return h_ * static_cast<double>(steps_per_segment_); }

  auto state(Index n) const { return states_.col(n); }
  auto rhs_value(Index n) const { return rhs_.col(n); }
  /// Stage state k (0..3) of step n; stage 0 is the state itself.
  auto stage(Index n, int k) const { return k == 0 ? states_.col(n) : stages_.col(3 * n + k - 1); }

  Index checkpoint_step(Index checkpoint) const { return checkpoint * steps_per_segment_; }
  auto checkpoint_state(Index checkpoint) const { return state(checkpoint_step(checkpoint)); }
  auto checkpoint_rhs(Index checkpoint) const { return rhs_value(checkpoint_step(checkpoint)); }

  const Matrix& states() const { return states_; }

 private:
  std::shared_ptr<const DynamicalSystem> system_;
  double t_start_;
  double h_;
  Index steps_per_segment_;
  Matrix states_;
  Matrix rhs_;
  Matrix stages_;
};

/// Classical RK4 from t_start to t_end with fixed step h, storing every state.
/// steps_per_segment = 0 means a single segment spanning the whole grid.
/// Throws DivergenceError naming the first step with a non-finite state.
Trajectory integrate_nonlinear(std::shared_ptr<const DynamicalSystem> system, const Vector& u0, double t_start,
                               double t_end, double h, Index steps_per_segment = 0);

/// Integrates without storage and returns the final state (spin-up).
Vector advance(const DynamicalSystem& system, const Vector& u0, double span, double h);

/// Same as advance, also returning the trapezoidal time average of `objective` over the span.
struct AdvanceResult {
  Vector state;
  double time_average;
};
AdvanceResult advance_with_average(const DynamicalSystem& system, const Objective& objective, const Vector& u0,
                                   double span, double h);

/// Number of grid steps for a span, throwing unless span / h is an integer.
Index steps_for_span(double span, double h, const std::string& what);

using StepObserver = std::function<void(Index step, const Vector& v)>;

/// Discrete RK4 tangent across `segment`, from v_init at its first checkpoint.
/// with_forcing adds df/ds; the observer, if given, sees v at every grid point
/// of the segment (both ends included).
Vector tangent_sweep(const Trajectory& traj, Index segment, const Vector& v_init, bool with_forcing,
                     const StepObserver& observer = {});

/// Adds a source term into the adjoint state at a grid point.
using StepSource = std::function<void(Index step, Vector& adjoint)>;

/// Exact transpose of the homogeneous tangent_sweep map on `segment`.
/// With a source, the sweep returns the transpose of the map v_init -> (v at every
/// grid point) contracted against the injected terms; the source is called at every
/// grid point, from the segment end back to its start.
Vector adjoint_sweep(const Trajectory& traj, Index segment, const Vector& w_term, const StepSource& source = {});

/// Binary dump, little-endian: u64 N, u64 steps, f64 h, f64 s, then (steps+1) states of N f64 each.
void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path, std::shared_ptr<const DynamicalSystem> system,
                           Index steps_per_segment = 0, double t_start = 0.0);

}  // namespace mss
