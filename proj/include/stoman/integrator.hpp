#pragma once

// Time stepping for the conjugated random ODE (mild form) and, as a
// reference, for the original Stratonovich equation.

#include "stoman/conjugation.hpp"
#include "stoman/errors.hpp"
#include "stoman/linalg.hpp"
#include "stoman/model.hpp"
#include "stoman/nonlinearity.hpp"
#include "stoman/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace stoman {

enum class Scheme { exponential_mild, stratonovich_heun };

/// Orders used to turn step-doubling differences into error estimates:
/// first order for the mild scheme, the guaranteed strong order 1/2 for the
/// reference schemes.
inline constexpr double kMildOrder = 1.0;
inline constexpr double kReferenceStrongOrder = 0.5;

/// e_h ~ |u_h - u_{rh}| / (r^p - 1) for a method of order p.
inline double step_doubling_factor(double order, double ratio = 2.0) { return 1.0 / (std::pow(ratio, order) - 1.0); }

inline const char* to_string(Scheme s) {
  return s == Scheme::exponential_mild ? "exponential_mild" : "stratonovich_heun";
}

/// States on a grid starting at t = 0; column i is u(t_i).
struct Trajectory {
  TimeGrid grid{0.0, 0.0, 1.0};
  Matrix states;
  int method_order = 1;
  Scheme scheme = Scheme::exponential_mild;

  std::size_t size() const noexcept { return grid.size(); }
  Vector state(std::size_t i) const { return states.col(static_cast<Eigen::Index>(i)); }
  Vector at(double t) const { return state(grid.position_of(t)); }
  Vector final_state() const { return state(size() - 1); }
};

namespace detail {

inline std::int64_t horizon_steps(const TimeGrid& samples, double horizon) {
  if (!(horizon >= 0.0)) throw ConfigurationError("integrator: horizon must be >= 0");
  const std::int64_t n = samples.steps_in(horizon, "horizon");
  if (!samples.contains_index(0) || !samples.contains_index(n)) {
    throw InsufficientPathError("integrator: samples do not cover [0, " + std::to_string(horizon) + "]");
  }
  return n;
}

}  // namespace detail

/// Exponential midpoint rule on du/dt = (A + z) u + G(theta_t w, u):
///   u~     = e^{(lambda + zbar) h/2} u_i
///   u_{i+1} = e^{(lambda + zbar) h} u_i + h e^{(lambda + zbar) h/2} G_mid(u~)
/// with zbar the average of z over the step. Exact for G = 0.
inline Trajectory integrate_mild(const ConjugatedSystem& system, const Vector& x0, double horizon) {
  system.model().check_dim(x0);
  const std::int64_t N = detail::horizon_steps(system.grid(), horizon);
  const SpectralModel& m = system.model();
  const double h = system.step();
  const auto n = static_cast<Eigen::Index>(m.dim());
  Trajectory tr;
  tr.grid = TimeGrid::from_indices(0, N, h);
  tr.states.resize(n, N + 1);
  tr.states.col(0) = x0;
  Vector u = x0;
  Vector full(n), half(n);
  for (std::int64_t k = 0; k < N; ++k) {
    const double zbar = 0.5 * (system.z_index(k) + system.z_index(k + 1));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = (m.eigenvalue(static_cast<std::size_t>(j)) + zbar) * h;
      full(j) = std::exp(a);
      half(j) = std::exp(0.5 * a);
    }
    const Vector pred = half.cwiseProduct(u);
    const Vector g = system.G_mid(k, pred);
    u = full.cwiseProduct(u) + h * half.cwiseProduct(g);
    tr.states.col(k + 1) = u;
  }
  return tr;
}

struct MildEstimate {
  Trajectory fine;
  /// max over shared grid points of |u_h - u_{2h}|, an estimate of the
  /// global error of the fine solution for a first-order method.
  double max_error = 0.0;
  double final_error = 0.0;
};

/// Fine solve plus a step-doubling error estimate. The horizon must be a
/// multiple of twice the sample step.
inline MildEstimate integrate_mild_estimated(const ConjugatedSystem& system, const Vector& x0, double horizon) {
  MildEstimate out;
  out.fine = integrate_mild(system, x0, horizon);
  const Trajectory coarse = integrate_mild(system.coarsened(2), x0, horizon);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const double e = (coarse.state(i) - out.fine.state(2 * i)).norm();
    out.max_error = std::max(out.max_error, e);
  }
  out.final_error = (coarse.final_state() - out.fine.final_state()).norm();
  return out;
}

/// |u(s+t, w, x0) - u(t, theta_s w, u(s, w, x0))| with the flow at theta_s w
/// taken from `shifted_system`. Passing system.shifted(s) reuses the noise
/// samples; a system rebuilt from the shifted path measures the effect of
/// recomputing them.
inline double cocycle_defect(const ConjugatedSystem& system, const ConjugatedSystem& shifted_system,
                             const Vector& x0, double s, double t) {
  const Vector lhs = integrate_mild(system, x0, s + t).final_state();
  const Vector mid = integrate_mild(system, x0, s).final_state();
  const Vector rhs = integrate_mild(shifted_system, mid, t).final_state();
  return (lhs - rhs).norm();
}

inline double cocycle_check(const ConjugatedSystem& system, const Vector& x0, double s, double t) {
  return cocycle_defect(system, system.shifted(s), x0, s, t);
}

/// Tolerance for cocycle_defect when the shifted system's z samples differ
/// from the reused ones by at most dz pointwise: Gronwall on the difference
/// of the two flows over [0, t] after the common prefix,
///   dz t sup|u| (1 + 2 lip) max_r exp((lambda_max + lip)(t - r) + Z_t - Z_r).
inline double cocycle_tolerance(const ConjugatedSystem& system, const Trajectory& from_s, double dz) {
  const double h = system.step();
  const double lam = system.model().max_eigenvalue();
  const double lip = system.lip();
  const std::size_t N = from_s.size() - 1;
  const double t = static_cast<double>(N) * h;
  double sup_u = 0.0;
  for (std::size_t i = 0; i <= N; ++i) sup_u = std::max(sup_u, from_s.state(i).norm());
  // Z over [s, s + t] in the shifted frame.
  std::vector<double> Z(N + 1, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto k = static_cast<std::int64_t>(i);
    Z[i + 1] = Z[i] + 0.5 * h * (system.z_index(k) + system.z_index(k + 1));
  }
  double amp = 0.0;
  for (std::size_t i = 0; i <= N; ++i) {
    amp = std::max(amp, (lam + lip) * (t - static_cast<double>(i) * h) + Z[N] - Z[i]);
  }
  return dz * t * sup_u * (1.0 + 2.0 * lip) * std::exp(amp);
}

/// Interaction-picture Heun scheme for the Stratonovich equation
///   du = (A u + F(u)) dt + u o dW
/// with a single scalar channel:
///   u~      = e^{Ah} (u + h F(u) + u dW)
///   u_{i+1} = e^{Ah} u + h/2 (e^{Ah} F(u) + F(u~)) + dW/2 (e^{Ah} u + u~)
/// Strong order 1/2 (order 1 for this commutative noise).
inline Trajectory integrate_stratonovich(const SpectralModel& model, const Nonlinearity& F, const WienerPath& path,
                                         const Vector& x0, double horizon) {
  model.check_dim(x0);
  if (F.dim() != model.dim()) throw ConfigurationError("stratonovich integrator: dimension mismatch");
  if (path.channels() != 1) {
    throw ConfigurationError("stratonovich integrator: multiplicative noise needs exactly one channel, got " +
                             std::to_string(path.channels()));
  }
  const std::int64_t N = detail::horizon_steps(path.grid(), horizon);
  const double h = path.grid().step();
  const auto n = static_cast<Eigen::Index>(model.dim());
  Vector E(n);
  for (Eigen::Index j = 0; j < n; ++j) E(j) = std::exp(model.eigenvalue(static_cast<std::size_t>(j)) * h);
  Trajectory tr;
  tr.grid = TimeGrid::from_indices(0, N, h);
  tr.scheme = Scheme::stratonovich_heun;
  tr.states.resize(n, N + 1);
  tr.states.col(0) = x0;
  Vector u = x0;
  for (std::int64_t k = 0; k < N; ++k) {
    const double dw = path.at_index(0, k + 1) - path.at_index(0, k);
    const Vector f0 = F.evaluate(u);
    const Vector pred = E.cwiseProduct(u + h * f0 + dw * u);
    const Vector Eu = E.cwiseProduct(u);
    u = Eu + 0.5 * h * (E.cwiseProduct(f0) + F.evaluate(pred)) + 0.5 * dw * (Eu + pred);
    tr.states.col(k + 1) = u;
  }
  return tr;
}

/// Same scheme for additive noise du = (A u + F(u)) dt + dW, channel j
/// driving mode j:
///   u~      = e^{Ah} (u + h F(u) + dW)
///   u_{i+1} = e^{Ah} u + h/2 (e^{Ah} F(u) + F(u~)) + (e^{Ah} + 1)/2 dW
inline Trajectory integrate_additive_reference(const SpectralModel& model, const Nonlinearity& F,
                                               const WienerPath& path, const Vector& x0, double horizon) {
  model.check_dim(x0);
  if (F.dim() != model.dim()) throw ConfigurationError("additive integrator: dimension mismatch");
  if (path.channels() < model.dim()) {
    throw ConfigurationError("additive integrator: path needs one channel per mode");
  }
  const std::int64_t N = detail::horizon_steps(path.grid(), horizon);
  const double h = path.grid().step();
  const auto n = static_cast<Eigen::Index>(model.dim());
  Vector E(n);
  for (Eigen::Index j = 0; j < n; ++j) E(j) = std::exp(model.eigenvalue(static_cast<std::size_t>(j)) * h);
  Trajectory tr;
  tr.grid = TimeGrid::from_indices(0, N, h);
  tr.scheme = Scheme::stratonovich_heun;
  tr.states.resize(n, N + 1);
  tr.states.col(0) = x0;
  Vector u = x0;
  Vector dw(n);
  for (std::int64_t k = 0; k < N; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      dw(j) = path.at_index(static_cast<std::size_t>(j), k + 1) - path.at_index(static_cast<std::size_t>(j), k);
    }
    const Vector f0 = F.evaluate(u);
    const Vector pred = E.cwiseProduct(u + h * f0 + dw);
    u = E.cwiseProduct(u) + 0.5 * h * (E.cwiseProduct(f0) + F.evaluate(pred)) +
        0.5 * (E + Vector::Ones(n)).cwiseProduct(dw);
    tr.states.col(k + 1) = u;
  }
  return tr;
}

}  // namespace stoman
