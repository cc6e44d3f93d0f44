#include "mss/shadow.hpp"

#include <limits>
#include <vector>

#include "mss/parallel.hpp"

namespace mss {

Vector projector_apply(const Vector& f, const Vector& x) {
  require(f.size() == x.size(), "projector_apply: length mismatch");
  const double ff = f.squaredNorm();
  if (!(ff > std::numeric_limits<double>::min())) {
    throw DegenerateProjectorError("projector_apply: vector field vanishes (trajectory at a fixed point)");
  }
  return x - f * (f.dot(x) / ff);
}

Vector phi_apply(const Trajectory& traj, CostLedger& ledger, Index segment, const Vector& z) {
  Vector v = tangent_sweep(traj, segment, z, false);
  ledger.add_phi();
  return projector_apply(traj.checkpoint_rhs(segment + 1), v);
}

Vector phi_transpose_apply(const Trajectory& traj, CostLedger& ledger, Index segment, const Vector& z) {
  require(segment >= 0 && segment < traj.segments(), "phi_transpose_apply: segment out of range");
  Vector y = projector_apply(traj.checkpoint_rhs(segment + 1), z);
  ledger.add_phi_transpose();
  return adjoint_sweep(traj, segment, y);
}

SegmentStack assemble_rhs(const Trajectory& traj, CostLedger& ledger, int workers) {
  const Index k = traj.segments();
  SegmentStack b(traj.dimension(), k);
  const Vector zero = Vector::Zero(traj.dimension());
  parallel_for(k, workers, [&](Index i) {
    Vector v = tangent_sweep(traj, i, zero, true);
    ledger.add_forcing_sweep();
    b.block(i) = projector_apply(traj.checkpoint_rhs(i + 1), v);
  });
  return b;
}

SegmentStack a_apply(const Trajectory& traj, CostLedger& ledger, const CheckpointStack& v, int workers) {
  const Index k = traj.segments();
  require(v.dimension() == traj.dimension() && v.blocks() == k + 1, "a_apply: expected K+1 checkpoint blocks");
  SegmentStack out(traj.dimension(), k);
  parallel_for(k, workers, [&](Index i) {
    out.block(i) = v.block(i + 1) - phi_apply(traj, ledger, i, v.block(i));
  });
  return out;
}

CheckpointStack a_transpose_apply(const Trajectory& traj, CostLedger& ledger, const SegmentStack& w, int workers) {
  const Index k = traj.segments();
  require(w.dimension() == traj.dimension() && w.blocks() == k, "a_transpose_apply: expected K segment blocks");
  CheckpointStack out(traj.dimension(), k + 1);
  parallel_for(k, workers, [&](Index i) { out.block(i) = -phi_transpose_apply(traj, ledger, i, w.block(i)); });
  for (Index i = 1; i <= k; ++i) out.block(i) += w.block(i - 1);
  return out;
}

SegmentStack s_apply(const Trajectory& traj, CostLedger& ledger, const SegmentStack& w, int workers) {
  return a_apply(traj, ledger, a_transpose_apply(traj, ledger, w, workers), workers);
}

CheckpointStack recover_v(const Trajectory& traj, CostLedger& ledger, const SegmentStack& w, int workers) {
  return a_transpose_apply(traj, ledger, w, workers);
}

double time_average(const Trajectory& traj, const Objective& objective) {
  const Index m = traj.steps();
  double sum = 0.5 * (objective.value(traj.state(0)) + objective.value(traj.state(m)));
  for (Index n = 1; n < m; ++n) sum += objective.value(traj.state(n));
  return sum / static_cast<double>(m);
}

double evaluate_sensitivity(const Trajectory& traj, const Objective& objective, const CheckpointStack& v,
                            int workers) {
  const Index k = traj.segments();
  require(v.dimension() == traj.dimension() && v.blocks() == k + 1,
          "evaluate_sensitivity: expected K+1 checkpoint blocks");
  const double h = traj.step();
  const double j_bar = time_average(traj, objective);

  std::vector<double> contribution(static_cast<std::size_t>(k), 0.0);
  parallel_for(k, workers, [&](Index i) {
    const Index first = traj.checkpoint_step(i);
    const Index last = traj.checkpoint_step(i + 1);
    Vector grad(traj.dimension());
    double integral = 0.0;
    const StepObserver accumulate = [&](Index step, const Vector& vp) {
      objective.gradient_into(traj.state(step), grad);
      const double weight = (step == first || step == last) ? 0.5 * h : h;
      integral += weight * grad.dot(vp);
    };
    Vector end = tangent_sweep(traj, i, v.block(i), true, accumulate);
    const auto f_end = traj.checkpoint_rhs(i + 1);
    const double ff = f_end.squaredNorm();
    if (!(ff > std::numeric_limits<double>::min())) {
      throw DegenerateProjectorError("evaluate_sensitivity: vector field vanishes at checkpoint " +
                                     std::to_string(i + 1));
    }
    const double j_end = objective.value(traj.checkpoint_state(i + 1));
    contribution[static_cast<std::size_t>(i)] = integral + f_end.dot(end) / ff * (j_bar - j_end);
  });

  double direct = 0.0;
  {
    const Index m = traj.steps();
    direct = 0.5 * (objective.parameter_derivative(traj.state(0)) + objective.parameter_derivative(traj.state(m)));
    for (Index n = 1; n < m; ++n) direct += objective.parameter_derivative(traj.state(n));
    direct /= static_cast<double>(m);
  }
  double total = 0.0;
  for (double c : contribution) total += c;
  return total / traj.span() + direct;
}

CheckpointStack sensitivity_gradient(const Trajectory& traj, const Objective& objective, int workers) {
  const Index k = traj.segments();
  const double h = traj.step();
  const double inv_t = 1.0 / traj.span();
  const double j_bar = time_average(traj, objective);
  CheckpointStack g(traj.dimension(), k + 1);
  parallel_for(k, workers, [&](Index i) {
    const Index first = traj.checkpoint_step(i);
    const Index last = traj.checkpoint_step(i + 1);
    const auto f_end = traj.checkpoint_rhs(i + 1);
    const double ff = f_end.squaredNorm();
    if (!(ff > std::numeric_limits<double>::min())) {
      throw DegenerateProjectorError("sensitivity_gradient: vector field vanishes at checkpoint " +
                                     std::to_string(i + 1));
    }
    const double j_end = objective.value(traj.checkpoint_state(i + 1));
    const Vector terminal = f_end * ((j_bar - j_end) / ff * inv_t);
    Vector grad(traj.dimension());
    const StepSource inject = [&](Index step, Vector& adjoint) {
      objective.gradient_into(traj.state(step), grad);
      const double weight = (step == first || step == last) ? 0.5 * h : h;
      adjoint += (weight * inv_t) * grad;
    };
    g.block(i) = adjoint_sweep(traj, i, terminal, inject);
  });
  return g;
}

}  // namespace mss
