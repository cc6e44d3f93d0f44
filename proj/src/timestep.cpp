#include "mss/timestep.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mss {

namespace {

// One RK4 step. Writes the three inner stage states and k1 = f(u) when requested.
struct Rk4Workspace {
  Vector k1, k2, k3, k4, stage;
  explicit Rk4Workspace(Index n) : k1(n), k2(n), k3(n), k4(n), stage(n) {}
};

void rk4_step(const DynamicalSystem& sys, double h, ConstVectorRef u, VectorRef next, Rk4Workspace& ws,
              Matrix* stages = nullptr, Index stage_col = 0) {
  sys.rhs_into(u, ws.k1);
  ws.stage = u + (0.5 * h) * ws.k1;
  if (stages) stages->col(stage_col) = ws.stage;
  sys.rhs_into(ws.stage, ws.k2);
  ws.stage = u + (0.5 * h) * ws.k2;
  if (stages) stages->col(stage_col + 1) = ws.stage;
  sys.rhs_into(ws.stage, ws.k3);
  ws.stage = u + h * ws.k3;
  if (stages) stages->col(stage_col + 2) = ws.stage;
  sys.rhs_into(ws.stage, ws.k4);
  next = u + (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

void check_segment(const Trajectory& traj, Index segment, const char* what) {
  if (segment < 0 || segment >= traj.segments()) {
    throw ContractViolation(std::string(what) + ": segment " + std::to_string(segment) + " out of range [0, " +
                            std::to_string(traj.segments()) + ")");
  }
}

}  // namespace

Index steps_for_span(double span, double h, const std::string& what) {
  if (!(h > 0.0)) throw ContractViolation(what + ": step size must be positive");
  if (!(span > 0.0)) throw ContractViolation(what + ": span must be positive");
  const double ratio = span / h;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw ContractViolation(what + ": span " + std::to_string(span) + " is not an integer multiple of step " +
                            std::to_string(h));
  }
  return static_cast<Index>(rounded);
}

Trajectory::Trajectory(std::shared_ptr<const DynamicalSystem> system, double t_start, double step, Matrix states,
                       Index steps_per_segment)
    : system_(std::move(system)), t_start_(t_start), h_(step), states_(std::move(states)) {
  require(system_ != nullptr, "Trajectory: null system");
  require(states_.rows() == system_->dimension(), "Trajectory: state length does not match system dimension");
  require(states_.cols() >= 2, "Trajectory: need at least one step");
  require(h_ > 0.0, "Trajectory: step must be positive");
  const Index m = states_.cols() - 1;
  steps_per_segment_ = steps_per_segment == 0 ? m : steps_per_segment;
  if (steps_per_segment_ <= 0 || m % steps_per_segment_ != 0) {
    throw ContractViolation("Trajectory: " + std::to_string(steps_per_segment_) + " steps per segment does not divide " +
                            std::to_string(m) + " steps");
  }
  const Index n = states_.rows();
  rhs_.resize(n, m + 1);
  stages_.resize(n, 3 * m);
  Rk4Workspace ws(n);
  Vector next(n);
  for (Index k = 0; k < m; ++k) {
    rk4_step(*system_, h_, states_.col(k), next, ws, &stages_, 3 * k);
    rhs_.col(k) = ws.k1;
  }
  system_->rhs_into(states_.col(m), ws.k1);
  rhs_.col(m) = ws.k1;
}

Trajectory integrate_nonlinear(std::shared_ptr<const DynamicalSystem> system, const Vector& u0, double t_start,
                               double t_end, double h, Index steps_per_segment) {
  require(system != nullptr, "integrate_nonlinear: null system");
  require(u0.size() == system->dimension(), "integrate_nonlinear: initial state has wrong length");
  const Index m = steps_for_span(t_end - t_start, h, "integrate_nonlinear");
  Matrix states(u0.size(), m + 1);
  states.col(0) = u0;
  Rk4Workspace ws(u0.size());
  for (Index k = 0; k < m; ++k) {
    rk4_step(*system, h, states.col(k), states.col(k + 1), ws);
    if (!states.col(k + 1).allFinite()) {
      throw DivergenceError("integrate_nonlinear: non-finite state at step " + std::to_string(k + 1), k + 1);
    }
  }
  return Trajectory(std::move(system), t_start, h, std::move(states), steps_per_segment);
}

AdvanceResult advance_with_average(const DynamicalSystem& system, const Objective& objective, const Vector& u0,
                                   double span, double h) {
  require(u0.size() == system.dimension(), "advance: initial state has wrong length");
  const Index m = steps_for_span(span, h, "advance");
  Vector u = u0, next(u0.size());
  Rk4Workspace ws(u0.size());
  double sum = 0.5 * objective.value(u);
  for (Index k = 0; k < m; ++k) {
    rk4_step(system, h, u, next, ws);
    if (!next.allFinite()) throw DivergenceError("advance: non-finite state at step " + std::to_string(k + 1), k + 1);
    u.swap(next);
    sum += (k + 1 == m ? 0.5 : 1.0) * objective.value(u);
  }
  return {u, sum / static_cast<double>(m)};
}

Vector advance(const DynamicalSystem& system, const Vector& u0, double span, double h) {
  require(u0.size() == system.dimension(), "advance: initial state has wrong length");
  const Index m = steps_for_span(span, h, "advance");
  Vector u = u0, next(u0.size());
  Rk4Workspace ws(u0.size());
  for (Index k = 0; k < m; ++k) {
    rk4_step(system, h, u, next, ws);
    if (!next.allFinite()) throw DivergenceError("advance: non-finite state at step " + std::to_string(k + 1), k + 1);
    u.swap(next);
  }
  return u;
}

Vector tangent_sweep(const Trajectory& traj, Index segment, const Vector& v_init, bool with_forcing,
                     const StepObserver& observer) {
  check_segment(traj, segment, "tangent_sweep");
  require(v_init.size() == traj.dimension(), "tangent_sweep: initial vector has wrong length");
  const DynamicalSystem& sys = traj.system();
  const double h = traj.step();
  const Index n = traj.dimension();
  const Index first = traj.checkpoint_step(segment);
  const Index last = first + traj.steps_per_segment();

  Vector v = v_init;
  Vector x(n), k1(n), k2(n), k3(n), k4(n), force(n);
  auto stage_derivative = [&](Index step, int k, const Vector& arg, Vector& out) {
    sys.jac_vec_into(traj.stage(step, k), arg, out);
    if (with_forcing) {
      sys.dfds_into(traj.stage(step, k), force);
      out += force;
    }
  };
  for (Index step = first; step < last; ++step) {
    if (observer) observer(step, v);
    stage_derivative(step, 0, v, k1);
    x = v + (0.5 * h) * k1;
    stage_derivative(step, 1, x, k2);
    x = v + (0.5 * h) * k2;
    stage_derivative(step, 2, x, k3);
    x = v + h * k3;
    stage_derivative(step, 3, x, k4);
    v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (observer) observer(last, v);
  return v;
}

// Reverse-mode of the homogeneous tangent step above, step by step in reverse order.
Vector adjoint_sweep(const Trajectory& traj, Index segment, const Vector& w_term, const StepSource& source) {
  check_segment(traj, segment, "adjoint_sweep");
  require(w_term.size() == traj.dimension(), "adjoint_sweep: terminal vector has wrong length");
  const DynamicalSystem& sys = traj.system();
  const double h = traj.step();
  const Index n = traj.dimension();
  const Index first = traj.checkpoint_step(segment);
  const Index last = first + traj.steps_per_segment();

  Vector a = w_term;
  Vector kb1(n), kb2(n), kb3(n), kb4(n), xb(n);
  if (source) source(last, a);
  for (Index step = last - 1; step >= first; --step) {
    kb4 = (h / 6.0) * a;
    kb3 = (h / 3.0) * a;
    kb2 = (h / 3.0) * a;
    kb1 = (h / 6.0) * a;
    sys.jac_transpose_vec_into(traj.stage(step, 3), kb4, xb);
    a += xb;
    kb3 += h * xb;
    sys.jac_transpose_vec_into(traj.stage(step, 2), kb3, xb);
    a += xb;
    kb2 += (0.5 * h) * xb;
    sys.jac_transpose_vec_into(traj.stage(step, 1), kb2, xb);
    a += xb;
    kb1 += (0.5 * h) * xb;
    sys.jac_transpose_vec_into(traj.stage(step, 0), kb1, xb);
    a += xb;
    if (source) source(step, a);
  }
  return a;
}

// Binary layout

namespace {

static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error("truncated binary file: " + path);
  return value;
}

}  // namespace

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.dimension()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.steps()));
  put<double>(os, traj.step());
  put<double>(os, traj.system().parameter());
  os.write(reinterpret_cast<const char*>(traj.states().data()),
           static_cast<std::streamsize>(sizeof(double) * traj.states().size()));
  if (!os) throw Error("write failed: " + path);
}

Trajectory load_trajectory(const std::string& path, std::shared_ptr<const DynamicalSystem> system,
                           Index steps_per_segment, double t_start) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open for reading: " + path);
  const auto n = static_cast<Index>(get<std::uint64_t>(is, path));
  const auto m = static_cast<Index>(get<std::uint64_t>(is, path));
  const double h = get<double>(is, path);
  const double s = get<double>(is, path);
  if (n != system->dimension()) throw ContractViolation("load_trajectory: dimension mismatch in " + path);
  if (s != system->parameter()) throw ContractViolation("load_trajectory: parameter mismatch in " + path);
  Matrix states(n, m + 1);
  is.read(reinterpret_cast<char*>(states.data()), static_cast<std::streamsize>(sizeof(double) * states.size()));
  if (!is) throw Error("truncated binary file: " + path);
  return Trajectory(std::move(system), t_start, h, std::move(states), steps_per_segment);
}

}  // namespace mss
