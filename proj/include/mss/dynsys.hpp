#pragma once

#include <memory>
#include <string>

#include "mss/types.hpp"

namespace mss {

/// du/dt = f(u, s) with a single scalar parameter s.
///
/// Implementations provide the vector field, the Jacobian action and its exact
/// transpose, and the parameter derivative, all written into caller-owned storage.
/// The free functions below are the checked entry points; the `*_into` members
/// assume the caller has validated dimensions.
class DynamicalSystem {
 public:
  virtual ~DynamicalSystem() = default;

  virtual Index dimension() const = 0;
  virtual double parameter() const = 0;
  virtual std::string name() const = 0;

  virtual void rhs_into(ConstVectorRef u, VectorRef out) const = 0;
  virtual void jac_vec_into(ConstVectorRef u, ConstVectorRef v, VectorRef out) const = 0;
  virtual void jac_transpose_vec_into(ConstVectorRef u, ConstVectorRef w, VectorRef out) const = 0;
  virtual void dfds_into(ConstVectorRef u, VectorRef out) const = 0;
};

Vector rhs(const DynamicalSystem& system, const Vector& u);
Vector jac_vec(const DynamicalSystem& system, const Vector& u, const Vector& v);
Vector jac_transpose_vec(const DynamicalSystem& system, const Vector& u, const Vector& w);
Vector dfds(const DynamicalSystem& system, const Vector& u);

struct LorenzParameters {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

/// Lorenz-63, parameter s = rho.
class Lorenz final : public DynamicalSystem {
 public:
  explicit Lorenz(LorenzParameters p = {}) : p_(p) {}

  Index dimension() const override { return 3; }
  double parameter() const override { return p_.rho; }
  std::string name() const override { return "lorenz"; }
  const LorenzParameters& parameters() const { return p_; }

  void rhs_into(ConstVectorRef u, VectorRef out) const override;
  void jac_vec_into(ConstVectorRef u, ConstVectorRef v, VectorRef out) const override;
  void jac_transpose_vec_into(ConstVectorRef u, ConstVectorRef w, VectorRef out) const override;
  void dfds_into(ConstVectorRef u, VectorRef out) const override;

 private:
  LorenzParameters p_;
};

struct KsParameters {
  Index nodes = 127;     // interior nodes N
  double length = 128.0; // domain length L
  double c = 0.8;        // advection shift, the parameter s
};

/// Kuramoto-Sivashinsky u_t = -(u+c)u_x - u_xx - u_xxxx on [0, L].
///
/// Second-order central differences on N interior nodes with spacing L/(N+1).
/// u = 0 at both ends (not part of the state); u_x = 0 through mirrored ghost nodes,
/// u_{-1} = u_1 and u_{N+2} = u_N. The nonlinear term is differenced in flux
/// form, (u^2/2)_x + c u_x; the pointwise form u u_x blows up on this grid.
class KuramotoSivashinsky final : public DynamicalSystem {
 public:
  explicit KuramotoSivashinsky(KsParameters p);

  Index dimension() const override { return p_.nodes; }
  double parameter() const override { return p_.c; }
  std::string name() const override { return "ks"; }
  const KsParameters& parameters() const { return p_; }
  double spacing() const { return dx_; }

  /// Largest stable RK4 step for the fourth-derivative term alone, 2.785 dx^4 / 16.
  double stability_limit() const;

  void rhs_into(ConstVectorRef u, VectorRef out) const override;
  void jac_vec_into(ConstVectorRef u, ConstVectorRef v, VectorRef out) const override;
  void jac_transpose_vec_into(ConstVectorRef u, ConstVectorRef w, VectorRef out) const override;
  void dfds_into(ConstVectorRef u, VectorRef out) const override;

 private:
  KsParameters p_;
  double dx_;
};

/// Pointwise objective J(u, s); time averages are taken by the caller.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::string name() const = 0;
  virtual double value(ConstVectorRef u) const = 0;
  virtual void gradient_into(ConstVectorRef u, VectorRef out) const = 0;
  /// Direct parameter derivative dJ/ds at fixed u.
  virtual double parameter_derivative(ConstVectorRef /*u*/) const { return 0.0; }
};

double objective_eval(const Objective& objective, const DynamicalSystem& system, const Vector& u);
Vector objective_gradient(const Objective& objective, const DynamicalSystem& system, const Vector& u);

/// J = u[component]; J = z for Lorenz with component 2.
class ComponentObjective final : public Objective {
 public:
  explicit ComponentObjective(Index component) : component_(component) {}
  std::string name() const override { return "component" + std::to_string(component_); }
  double value(ConstVectorRef u) const override { return u[component_]; }
  void gradient_into(ConstVectorRef u, VectorRef out) const override;

 private:
  Index component_;
};

/// (1/L) * integral of u^power over [0, L], trapezoidal rule including the zero end values.
class SpatialMeanObjective final : public Objective {
 public:
  SpatialMeanObjective(Index nodes, int power);
  std::string name() const override { return power_ == 1 ? "mean" : "mean_square"; }
  double value(ConstVectorRef u) const override;
  void gradient_into(ConstVectorRef u, VectorRef out) const override;

 private:
  Index nodes_;
  int power_;
};

std::unique_ptr<Objective> make_lorenz_objective();
std::unique_ptr<Objective> make_ks_objective(Index nodes, const std::string& kind);

}  // namespace mss
