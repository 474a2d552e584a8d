#pragma once

// Random coordinate changes that turn the stochastic equation into a random
// ODE (Galerkin-truncated PDE) with pathwise coefficients:
//
//   multiplicative noise:  T(w, x) = x e^{-z(w)},   G(w, u) = e^{-z(w)} F(e^{z(w)} u)
//   additive noise:        T(w, x) = x - u*(w),     G(w, u) = F(u + u*(w)) - F(u*(w))
//
// The conjugated equation is du/dt = A u + z(theta_t w) u + G(theta_t w, u),
// with z = 0 in the additive case.

#include "stoman/errors.hpp"
#include "stoman/grid_series.hpp"
#include "stoman/linalg.hpp"
#include "stoman/model.hpp"
#include "stoman/nonlinearity.hpp"
#include "stoman/stochastics.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stoman {

enum class NoiseKind { multiplicative, additive, none };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::multiplicative: return "multiplicative";
    case NoiseKind::additive: return "additive";
    case NoiseKind::none: return "none";
  }
  return "?";
}

enum class Direction { forward, inverse };

/// Samples of a stationary solution t -> u*(theta_t w) of the additive
/// equation.
struct StationarySample {
  GridSeries<Vector> values;
  double truncation_bound = 0.0;
};

/// Stationary solution of du = A u dt + dW (F = 0), mode by mode, with
/// channel j of the path driving mode j:
///
///   lambda_j < 0:  u*_j(t) =  int_{-inf}^t e^{lambda_j (t-s)} dw_j(s)
///   lambda_j > 0:  u*_j(t) = -int_t^{+inf} e^{lambda_j (t-s)} dw_j(s)
///
/// Both integrals are truncated to a window of length `truncation` and are
/// exact for the piecewise-linear interpolant of the samples; the rest of the
/// grid follows by the one-step recursions.
inline StationarySample linear_stationary_solution(const SpectralModel& model, const WienerPath& path,
                                                   const TimeGrid& out_grid,
                                                   double truncation = kDefaultOuTruncation) {
  const std::size_t n = model.dim();
  if (path.channels() < n) {
    throw ConfigurationError("stationary solution: path has " + std::to_string(path.channels()) +
                             " channels, model has " + std::to_string(n) + " modes");
  }
  const TimeGrid& g = path.grid();
  if (!g.same_step(out_grid)) throw AlignmentError("stationary solution: output grid step differs from path step");
  const std::int64_t w = g.steps_in(truncation, "truncation horizon");
  const double h = g.step();
  const std::size_t m = out_grid.size();
  std::vector<Vector> vals(m, Vector::Zero(static_cast<Eigen::Index>(n)));
  double trunc = 0.0;

  for (std::size_t j = 0; j < n; ++j) {
    const double lam = model.eigenvalue(j);
    if (lam == 0.0) throw InvalidModelError("stationary solution: no stationary solution for a zero eigenvalue");
    auto dw = [&](std::int64_t k) { return path.at_index(j, k + 1) - path.at_index(j, k); };
    const double prop = std::exp(-std::abs(lam) * h);
    // int over one interval of e^{-|lam| (distance to the near end)} * (dw/h)
    const double gain = -std::expm1(-std::abs(lam) * h) / (std::abs(lam) * h);
    double window_max = 0.0;
    if (lam < 0.0) {
      const std::int64_t k0 = out_grid.first_index();
      if (k0 - w < g.first_index() || out_grid.last_index() > g.last_index()) {
        throw InsufficientPathError("stationary solution: path does not cover [t_min - S, t_max]");
      }
      double acc = 0.0;
      for (std::int64_t k = k0 - w; k < k0; ++k) acc = prop * acc + gain * dw(k);
      vals[0](static_cast<Eigen::Index>(j)) = acc;
      for (std::size_t i = 1; i < m; ++i) {
        const std::int64_t k = k0 + static_cast<std::int64_t>(i) - 1;
        acc = prop * acc + gain * dw(k);
        vals[i](static_cast<Eigen::Index>(j)) = acc;
      }
      for (std::int64_t k = k0 - w; k <= out_grid.last_index(); ++k) {
        window_max = std::max(window_max, std::abs(path.at_index(j, k)));
      }
    } else {
      const std::int64_t k1 = out_grid.last_index();
      if (k1 + w > g.last_index() || out_grid.first_index() < g.first_index()) {
        throw InsufficientPathError("stationary solution: path does not cover [t_min, t_max + S]");
      }
      double acc = 0.0;
      for (std::int64_t k = k1 + w - 1; k >= k1; --k) acc = prop * acc - gain * dw(k);
      vals[m - 1](static_cast<Eigen::Index>(j)) = acc;
      for (std::size_t i = m - 1; i-- > 0;) {
        const std::int64_t k = out_grid.first_index() + static_cast<std::int64_t>(i);
        acc = prop * acc - gain * dw(k);
        vals[i](static_cast<Eigen::Index>(j)) = acc;
      }
      for (std::int64_t k = out_grid.first_index(); k <= k1 + w; ++k) {
        window_max = std::max(window_max, std::abs(path.at_index(j, k)));
      }
    }
    // Integration by parts on the dropped tail with |w| bounded by its
    // window maximum near the cut.
    trunc = std::max(trunc, 2.0 * std::exp(-std::abs(lam) * truncation) * (window_max + 1.0));
  }
  return {GridSeries<Vector>(out_grid, std::move(vals)), trunc};
}

/// The random ODE obtained by conjugation, with its noise samples.
///
/// Time arguments refer to the sample grid; `shifted(s)` re-anchors the
/// system at theta_s w by re-indexing the same samples.
class ConjugatedSystem {
 public:
  static ConjugatedSystem multiplicative(SpectralModel model, Nonlinearity f, OUSample ou) {
    check_dims(model, f);
    ConjugatedSystem s(std::move(model), std::move(f), NoiseKind::multiplicative);
    s.ou_ = std::move(ou);
    return s;
  }

  static ConjugatedSystem additive(SpectralModel model, Nonlinearity f, StationarySample ustar) {
    check_dims(model, f);
    ConjugatedSystem s(std::move(model), std::move(f), NoiseKind::additive);
    s.ou_ = OUSample::zero(ustar.values.grid());
    s.ustar_ = std::move(ustar.values);
    s.ustar_truncation_ = ustar.truncation_bound;
    return s;
  }

  /// Deterministic system (z = 0, G = F) on a grid.
  static ConjugatedSystem deterministic(SpectralModel model, Nonlinearity f, const TimeGrid& grid) {
    check_dims(model, f);
    ConjugatedSystem s(std::move(model), std::move(f), NoiseKind::none);
    s.ou_ = OUSample::zero(grid);
    return s;
  }

  const SpectralModel& model() const noexcept { return model_; }
  const Nonlinearity& nonlinearity() const noexcept { return f_; }
  NoiseKind kind() const noexcept { return kind_; }
  const TimeGrid& grid() const noexcept { return ou_.grid(); }
  double step() const noexcept { return grid().step(); }
  std::size_t dim() const noexcept { return model_.dim(); }
  /// G has the same Lipschitz constant as F.
  double lip() const noexcept { return f_.lip(); }
  const OUSample& ou() const noexcept { return ou_; }
  double stationary_truncation_bound() const noexcept { return ustar_truncation_; }

  double z_index(std::int64_t k) const { return ou_.at_index(k); }
  double z(double t) const { return ou_.at(t); }

  Vector ustar_index(std::int64_t k) const {
    if (kind_ != NoiseKind::additive) return Vector::Zero(static_cast<Eigen::Index>(dim()));
    return ustar_.at_index(k);
  }

  /// T(theta_t w, x) or its inverse.
  Vector transform(double t, const Vector& x, Direction dir) const {
    model_.check_dim(x);
    const std::int64_t k = grid().index_of(t);
    if (!grid().contains_index(k)) throw InsufficientPathError("transform: time outside the sample grid");
    switch (kind_) {
      case NoiseKind::multiplicative: {
        const double s = std::exp(ou_.at_index(k));
        return dir == Direction::forward ? Vector(x / s) : Vector(x * s);
      }
      case NoiseKind::additive: {
        const Vector& us = ustar_.at_index(k);
        return dir == Direction::forward ? Vector(x - us) : Vector(x + us);
      }
      case NoiseKind::none: return x;
    }
    return x;
  }

  Vector G(double t, const Vector& u) const { return G_index(grid().index_of(t), u); }

  Vector G_index(std::int64_t k, const Vector& u) const {
    return kind_ == NoiseKind::additive ? G_with(0.0, &ustar_.at_index(k), u) : G_with(ou_.at_index(k), nullptr, u);
  }

  /// G at the midpoint of [t_k, t_{k+1}] with the noise coefficient averaged
  /// over the two end samples.
  Vector G_mid(std::int64_t k, const Vector& u) const {
    if (kind_ == NoiseKind::additive) {
      const Vector mid = 0.5 * (ustar_.at_index(k) + ustar_.at_index(k + 1));
      return G_with(0.0, &mid, u);
    }
    return G_with(0.5 * (ou_.at_index(k) + ou_.at_index(k + 1)), nullptr, u);
  }

  /// D^m_u G(theta_{t_k} w, u)[dirs...], m = dirs.size() >= 1.
  Vector derivative_index(std::int64_t k, const Vector& u, std::span<const Vector> dirs) const {
    const std::size_t m = dirs.size();
    if (m == 0) return G_index(k, u);
    switch (kind_) {
      case NoiseKind::multiplicative: {
        const double z = ou_.at_index(k);
        return std::exp(z * (static_cast<double>(m) - 1.0)) * f_.derivative(u * std::exp(z), dirs);
      }
      case NoiseKind::additive: return f_.derivative(u + ustar_.at_index(k), dirs);
      case NoiseKind::none: return f_.derivative(u, dirs);
    }
    return {};
  }

  Matrix jacobian_index(std::int64_t k, const Vector& u) const {
    switch (kind_) {
      case NoiseKind::multiplicative: return f_.jacobian(u * std::exp(ou_.at_index(k)));
      case NoiseKind::additive: return f_.jacobian(u + ustar_.at_index(k));
      case NoiseKind::none: return f_.jacobian(u);
    }
    return {};
  }

  /// The same system seen from theta_s w.
  ConjugatedSystem shifted(double s) const {
    ConjugatedSystem out = *this;
    out.ou_ = ou_.shifted(s);
    if (kind_ == NoiseKind::additive) out.ustar_ = ustar_.shifted(s);
    return out;
  }

  /// Every factor-th sample (grid with step * factor).
  ConjugatedSystem coarsened(int factor) const {
    ConjugatedSystem out = *this;
    out.ou_ = ou_.coarsened(factor);
    if (kind_ == NoiseKind::additive) out.ustar_ = ustar_.coarsened(factor);
    return out;
  }

  /// Replace the nonlinearity, keeping the noise samples.
  ConjugatedSystem with_nonlinearity(Nonlinearity f) const {
    check_dims(model_, f);
    ConjugatedSystem out = *this;
    out.f_ = std::move(f);
    return out;
  }

 private:
  ConjugatedSystem(SpectralModel model, Nonlinearity f, NoiseKind kind)
      : model_(std::move(model)), f_(std::move(f)), kind_(kind) {}

  static void check_dims(const SpectralModel& model, const Nonlinearity& f) {
    if (model.dim() != f.dim()) {
      throw ConfigurationError("conjugated system: model has " + std::to_string(model.dim()) +
                               " modes, nonlinearity acts on " + std::to_string(f.dim()));
    }
  }

  Vector G_with(double z, const Vector* ustar, const Vector& u) const {
    switch (kind_) {
      case NoiseKind::multiplicative: {
        const double s = std::exp(z);
        return f_.evaluate(u * s) / s;
      }
      case NoiseKind::additive: return f_.evaluate(u + *ustar) - f_.evaluate(*ustar);
      case NoiseKind::none: return f_.evaluate(u);
    }
    return {};
  }

  SpectralModel model_;
  Nonlinearity f_;
  NoiseKind kind_;
  OUSample ou_;
  GridSeries<Vector> ustar_;
  double ustar_truncation_ = 0.0;
};

/// Free-function spellings of the system methods.
inline Vector transform(const ConjugatedSystem& system, double t, const Vector& x, Direction dir) {
  return system.transform(t, x, dir);
}

inline Vector conjugated_G(const ConjugatedSystem& system, double t, const Vector& u) { return system.G(t, u); }

}  // namespace stoman
