#pragma once

#include <cstdint>
#include <memory>
#include <random>

#include "mss/analysis.hpp"
#include "mss/dynsys.hpp"
#include "mss/precond.hpp"
#include "mss/shadow.hpp"
#include "mss/timestep.hpp"

namespace mss::test {

inline Vector random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

template <typename Stack>
Stack random_stack(std::mt19937_64& rng, Index dimension, Index blocks) {
  return Stack::FromFlat(random_vector(rng, dimension * blocks), dimension);
}

inline double rel_gap(double a, double b, double scale) { return std::abs(a - b) / scale; }

/// Lorenz trajectory on the attractor: spin-up from (1,1,1) plus a seeded nudge, then T with K = T / dT.
inline Trajectory lorenz_trajectory(double rho, double window, double segment, double h = 0.002,
                                    double spinup = 20.0, std::uint64_t seed = 7) {
  auto sys = std::make_shared<Lorenz>(LorenzParameters{10.0, rho, 8.0 / 3.0});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> nudge(-0.1, 0.1);
  Vector u0 = Vector::Ones(3);
  for (Index i = 0; i < 3; ++i) u0(i) += nudge(rng);
  const Vector start = advance(*sys, u0, spinup, h);
  return integrate_nonlinear(sys, start, 0.0, window, h, steps_for_span(segment, h, "segment"));
}

/// KS trajectory after a spin-up from uniform (0, 1) data.
inline Trajectory ks_trajectory(Index nodes, double c, double window, double segment, double h = 0.02,
                                double spinup = 200.0, std::uint64_t seed = 3) {
  auto sys = std::make_shared<KuramotoSivashinsky>(KsParameters{nodes, static_cast<double>(nodes + 1), c});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vector u0(nodes);
  for (Index i = 0; i < nodes; ++i) u0(i) = uni(rng);
  const Vector start = advance(*sys, u0, spinup, h);
  return integrate_nonlinear(sys, start, 0.0, window, h, steps_for_span(segment, h, "segment"));
}

/// Toy systems for contract tests.

/// du/dt = a u + s, scalar. Jbar(s) over [0, inf) of J = u converges to -s / a for a < 0.
class LinearScalar final : public DynamicalSystem {
 public:
  LinearScalar(double a, double s) : a_(a), s_(s) {}
  Index dimension() const override { return 1; }
  double parameter() const override { return s_; }
  std::string name() const override { return "linear"; }
  void rhs_into(ConstVectorRef u, VectorRef out) const override { out[0] = a_ * u[0] + s_; }
  void jac_vec_into(ConstVectorRef, ConstVectorRef v, VectorRef out) const override { out[0] = a_ * v[0]; }
  void jac_transpose_vec_into(ConstVectorRef, ConstVectorRef w, VectorRef out) const override { out[0] = a_ * w[0]; }
  void dfds_into(ConstVectorRef, VectorRef out) const override { out[0] = 1.0; }

 private:
  double a_;
  double s_;
};

/// du/dt = A u with a constant matrix; df/ds = 0.
class LinearSystem final : public DynamicalSystem {
 public:
  explicit LinearSystem(Matrix a) : a_(std::move(a)) {}
  Index dimension() const override { return a_.rows(); }
  double parameter() const override { return 0.0; }
  std::string name() const override { return "linear_system"; }
  void rhs_into(ConstVectorRef u, VectorRef out) const override { out = a_ * u; }
  void jac_vec_into(ConstVectorRef, ConstVectorRef v, VectorRef out) const override { out = a_ * v; }
  void jac_transpose_vec_into(ConstVectorRef, ConstVectorRef w, VectorRef out) const override {
    out = a_.transpose() * w;
  }
  void dfds_into(ConstVectorRef, VectorRef out) const override { out.setZero(); }

 private:
  Matrix a_;
};

/// Lorenz with the parameter forcing switched off.
class UnforcedLorenz final : public DynamicalSystem {
 public:
  explicit UnforcedLorenz(LorenzParameters p) : inner_(p) {}
  Index dimension() const override { return 3; }
  double parameter() const override { return inner_.parameter(); }
  std::string name() const override { return "unforced_lorenz"; }
  void rhs_into(ConstVectorRef u, VectorRef out) const override { inner_.rhs_into(u, out); }
  void jac_vec_into(ConstVectorRef u, ConstVectorRef v, VectorRef out) const override {
    inner_.jac_vec_into(u, v, out);
  }
  void jac_transpose_vec_into(ConstVectorRef u, ConstVectorRef w, VectorRef out) const override {
    inner_.jac_transpose_vec_into(u, w, out);
  }
  void dfds_into(ConstVectorRef, VectorRef out) const override { out.setZero(); }

 private:
  Lorenz inner_;
};

}  // namespace mss::test
