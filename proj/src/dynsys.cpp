#include "mss/dynsys.hpp"

#include <vector>

namespace mss {

namespace {

void check_dim(const DynamicalSystem& system, Index n, const char* what) {
  if (n != system.dimension()) {
    throw ContractViolation(std::string(what) + ": vector length " + std::to_string(n) + " does not match system dimension " +
                            std::to_string(system.dimension()));
  }
}

}  // namespace

Vector rhs(const DynamicalSystem& system, const Vector& u) {
  check_dim(system, u.size(), "rhs");
  Vector out(u.size());
  system.rhs_into(u, out);
  return out;
}

Vector jac_vec(const DynamicalSystem& system, const Vector& u, const Vector& v) {
  check_dim(system, u.size(), "jac_vec");
  check_dim(system, v.size(), "jac_vec");
  Vector out(u.size());
  system.jac_vec_into(u, v, out);
  return out;
}

Vector jac_transpose_vec(const DynamicalSystem& system, const Vector& u, const Vector& w) {
  check_dim(system, u.size(), "jac_transpose_vec");
  check_dim(system, w.size(), "jac_transpose_vec");
  Vector out(u.size());
  system.jac_transpose_vec_into(u, w, out);
  return out;
}

Vector dfds(const DynamicalSystem& system, const Vector& u) {
  check_dim(system, u.size(), "dfds");
  Vector out(u.size());
  system.dfds_into(u, out);
  return out;
}

// Lorenz

void Lorenz::rhs_into(ConstVectorRef u, VectorRef out) const {
  const double x = u[0], y = u[1], z = u[2];
  out[0] = p_.sigma * (y - x);
  out[1] = x * (p_.rho - z) - y;
  out[2] = x * y - p_.beta * z;
}

void Lorenz::jac_vec_into(ConstVectorRef u, ConstVectorRef v, VectorRef out) const {
  const double x = u[0], y = u[1], z = u[2];
  const double a = v[0], b = v[1], c = v[2];
  out[0] = p_.sigma * (b - a);
  out[1] = (p_.rho - z) * a - b - x * c;
  out[2] = y * a + x * b - p_.beta * c;
}

void Lorenz::jac_transpose_vec_into(ConstVectorRef u, ConstVectorRef w, VectorRef out) const {
  const double x = u[0], y = u[1], z = u[2];
  const double a = w[0], b = w[1], c = w[2];
  out[0] = -p_.sigma * a + (p_.rho - z) * b + y * c;
  out[1] = p_.sigma * a - b + x * c;
  out[2] = -x * b - p_.beta * c;
}

void Lorenz::dfds_into(ConstVectorRef u, VectorRef out) const {
  out[0] = 0.0;
  out[1] = u[0];
  out[2] = 0.0;
}

// Kuramoto-Sivashinsky

namespace {

// Interior values at offset 2 of a buffer of N+4 entries holding nodes -1 .. N+2.
// Node 0 and N+1 are the Dirichlet ends; nodes -1 and N+2 mirror 1 and N.
struct Padded {
  std::vector<double> data;

  void load(ConstVectorRef x) {
    const Index n = x.size();
    data.resize(static_cast<std::size_t>(n + 4));
    for (Index j = 0; j < n; ++j) data[static_cast<std::size_t>(j + 2)] = x[j];
    data[1] = 0.0;
    data[static_cast<std::size_t>(n + 2)] = 0.0;
    data[0] = x[0];
    data[static_cast<std::size_t>(n + 3)] = x[n - 1];
  }
  // value at interior index j (0-based) plus offset
  double operator()(Index j, int offset) const { return data[static_cast<std::size_t>(j + 2 + offset)]; }
};

thread_local Padded pad_a;
thread_local Padded pad_b;

}  // namespace

KuramotoSivashinsky::KuramotoSivashinsky(KsParameters p) : p_(p) {
  require(p_.nodes >= 3, "KuramotoSivashinsky: need at least 3 interior nodes");
  require(p_.length > 0.0, "KuramotoSivashinsky: length must be positive");
  dx_ = p_.length / static_cast<double>(p_.nodes + 1);
}

double KuramotoSivashinsky::stability_limit() const { return 2.785 * std::pow(dx_, 4) / 16.0; }

void KuramotoSivashinsky::rhs_into(ConstVectorRef u, VectorRef out) const {
  const Index n = p_.nodes;
  pad_a.load(u);
  const Padded& q = pad_a;
  const double d1 = 1.0 / (2.0 * dx_), d2 = 1.0 / (dx_ * dx_), d4 = d2 * d2;
  for (Index j = 0; j < n; ++j) {
    const double um2 = q(j, -2), um1 = q(j, -1), u0 = q(j, 0), up1 = q(j, 1), up2 = q(j, 2);
    const double flux = 0.5 * (up1 * up1 - um1 * um1) * d1;
    const double ux = (up1 - um1) * d1;
    const double uxx = (up1 - 2.0 * u0 + um1) * d2;
    const double uxxxx = (up2 - 4.0 * up1 + 6.0 * u0 - 4.0 * um1 + um2) * d4;
    out[j] = -flux - p_.c * ux - uxx - uxxxx;
  }
}

// J v = -D1((u+c) v) - D2 v - D4 v.
void KuramotoSivashinsky::jac_vec_into(ConstVectorRef u, ConstVectorRef v, VectorRef out) const {
  const Index n = p_.nodes;
  pad_a.load(u);
  pad_b.load(v);
  const Padded& uu = pad_a;
  const Padded& vv = pad_b;
  const double d1 = 1.0 / (2.0 * dx_), d2 = 1.0 / (dx_ * dx_), d4 = d2 * d2;
  for (Index j = 0; j < n; ++j) {
    const double flux = ((uu(j, 1) + p_.c) * vv(j, 1) - (uu(j, -1) + p_.c) * vv(j, -1)) * d1;
    const double vxx = (vv(j, 1) - 2.0 * vv(j, 0) + vv(j, -1)) * d2;
    const double vxxxx = (vv(j, 2) - 4.0 * vv(j, 1) + 6.0 * vv(j, 0) - 4.0 * vv(j, -1) + vv(j, -2)) * d4;
    out[j] = -flux - vxx - vxxxx;
  }
}

// J^T w = (u+c) D1 w - D2 w - D4 w, using D1^T = -D1 (the first difference never
// reaches a ghost node) and the symmetry of D2 and of the ghost-mirrored D4.
void KuramotoSivashinsky::jac_transpose_vec_into(ConstVectorRef u, ConstVectorRef w, VectorRef out) const {
  const Index n = p_.nodes;
  pad_a.load(u);
  pad_b.load(w);
  const Padded& uu = pad_a;
  const Padded& ww = pad_b;
  const double d1 = 1.0 / (2.0 * dx_), d2 = 1.0 / (dx_ * dx_), d4 = d2 * d2;
  for (Index j = 0; j < n; ++j) {
    const double wx = (ww(j, 1) - ww(j, -1)) * d1;
    const double wxx = (ww(j, 1) - 2.0 * ww(j, 0) + ww(j, -1)) * d2;
    const double wxxxx = (ww(j, 2) - 4.0 * ww(j, 1) + 6.0 * ww(j, 0) - 4.0 * ww(j, -1) + ww(j, -2)) * d4;
    out[j] = (uu(j, 0) + p_.c) * wx - wxx - wxxxx;
  }
}

void KuramotoSivashinsky::dfds_into(ConstVectorRef u, VectorRef out) const {
  const Index n = p_.nodes;
  pad_a.load(u);
  const double d1 = 1.0 / (2.0 * dx_);
  for (Index j = 0; j < n; ++j) out[j] = -(pad_a(j, 1) - pad_a(j, -1)) * d1;
}

// Objectives

double objective_eval(const Objective& objective, const DynamicalSystem& system, const Vector& u) {
  check_dim(system, u.size(), "objective_eval");
  return objective.value(u);
}

Vector objective_gradient(const Objective& objective, const DynamicalSystem& system, const Vector& u) {
  check_dim(system, u.size(), "objective_gradient");
  Vector out(u.size());
  objective.gradient_into(u, out);
  return out;
}

void ComponentObjective::gradient_into(ConstVectorRef, VectorRef out) const {
  out.setZero();
  out[component_] = 1.0;
}

SpatialMeanObjective::SpatialMeanObjective(Index nodes, int power) : nodes_(nodes), power_(power) {
  require(power == 1 || power == 2, "SpatialMeanObjective: power must be 1 or 2");
}

// Trapezoid with zero end values: (1/L) * dx * sum(u_j^p) = sum(u_j^p) / (N+1).
double SpatialMeanObjective::value(ConstVectorRef u) const {
  const double scale = 1.0 / static_cast<double>(nodes_ + 1);
  return power_ == 1 ? u.sum() * scale : u.squaredNorm() * scale;
}

void SpatialMeanObjective::gradient_into(ConstVectorRef u, VectorRef out) const {
  const double scale = 1.0 / static_cast<double>(nodes_ + 1);
  if (power_ == 1)
    out.setConstant(scale);
  else
    out = (2.0 * scale) * u;
}

std::unique_ptr<Objective> make_lorenz_objective() { return std::make_unique<ComponentObjective>(2); }

std::unique_ptr<Objective> make_ks_objective(Index nodes, const std::string& kind) {
  if (kind == "mean") return std::make_unique<SpatialMeanObjective>(nodes, 1);
  if (kind == "mean_square") return std::make_unique<SpatialMeanObjective>(nodes, 2);
  throw ConfigError("unknown KS objective '" + kind + "' (expected mean or mean_square)");
}

}  // namespace mss
