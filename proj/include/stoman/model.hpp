#pragma once

// Diagonal generator with an exponential dichotomy, and the spectral-gap
// certificate that gates the Lyapunov-Perron solvers.

#include "stoman/errors.hpp"
#include "stoman/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace stoman {

enum class Part { plus, minus, full };

/// Real diagonal generator A = diag(lambda_1, ..., lambda_n) split into an
/// unstable part H+ (modes with lambda >= alpha) and a stable part H-
/// (lambda <= beta). With coordinate projections the dichotomy holds with
/// K = 1; a larger user-supplied K is carried through every bound.
class SpectralModel {
 public:
  /// alpha/beta default to min over unstable / max over stable eigenvalues.
  /// When a part is empty its exponent must be supplied.
  SpectralModel(std::vector<double> eigenvalues, std::vector<std::size_t> unstable_indices, double K = 1.0,
                std::optional<double> alpha = std::nullopt, std::optional<double> beta = std::nullopt)
      : eigenvalues_(std::move(eigenvalues)), unstable_(eigenvalues_.size(), false), K_(K) {
    if (eigenvalues_.empty()) throw InvalidModelError("spectral model: no modes");
    for (std::size_t j : unstable_indices) {
      if (j >= eigenvalues_.size()) {
        throw InvalidModelError("spectral model: unstable index " + std::to_string(j) + " out of range");
      }
      unstable_[j] = true;
    }
    if (!(K_ >= 1.0)) throw InvalidModelError("spectral model: K must be >= 1");
    double min_plus = std::numeric_limits<double>::infinity();
    double max_minus = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < eigenvalues_.size(); ++j) {
      if (!std::isfinite(eigenvalues_[j])) throw InvalidModelError("spectral model: non-finite eigenvalue");
      if (unstable_[j]) {
        min_plus = std::min(min_plus, eigenvalues_[j]);
        plus_.push_back(j);
      } else {
        max_minus = std::max(max_minus, eigenvalues_[j]);
        minus_.push_back(j);
      }
    }
    if (!alpha && plus_.empty()) throw InvalidModelError("spectral model: H+ is empty, alpha must be given");
    if (!beta && minus_.empty()) throw InvalidModelError("spectral model: H- is empty, beta must be given");
    alpha_ = alpha.value_or(min_plus);
    beta_ = beta.value_or(max_minus);
    if (!(alpha_ > beta_)) {
      std::ostringstream os;
      os << "spectral model: need alpha > beta, got alpha = " << alpha_ << ", beta = " << beta_;
      throw InvalidModelError(os.str());
    }
    for (std::size_t j = 0; j < eigenvalues_.size(); ++j) {
      const double l = eigenvalues_[j];
      if (unstable_[j] && l < alpha_) {
        throw InvalidModelError("spectral model: unstable eigenvalue " + std::to_string(l) + " below alpha");
      }
      if (!unstable_[j] && l > beta_) {
        throw InvalidModelError("spectral model: stable eigenvalue " + std::to_string(l) + " above beta");
      }
    }
  }

  std::size_t dim() const noexcept { return eigenvalues_.size(); }
  const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }
  double eigenvalue(std::size_t j) const { return eigenvalues_.at(j); }
  bool is_unstable(std::size_t j) const { return unstable_.at(j); }
  /// Coordinates spanning H+ (resp. H-), ascending.
  const std::vector<std::size_t>& plus_modes() const noexcept { return plus_; }
  const std::vector<std::size_t>& minus_modes() const noexcept { return minus_; }
  double K() const noexcept { return K_; }
  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }
  double max_eigenvalue() const { return *std::max_element(eigenvalues_.begin(), eigenvalues_.end()); }

  void check_dim(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != dim()) {
      throw ConfigurationError("state has dimension " + std::to_string(x.size()) + ", model has " +
                               std::to_string(dim()));
    }
  }

 private:
  std::vector<double> eigenvalues_;
  std::vector<bool> unstable_;
  std::vector<std::size_t> plus_;
  std::vector<std::size_t> minus_;
  double K_;
  double alpha_ = 0.0;
  double beta_ = 0.0;
};

enum class Sign { plus, minus };

/// P+ x or P- x (coordinate masks).
inline Vector project(const SpectralModel& model, const Vector& x, Sign sign) {
  model.check_dim(x);
  Vector out = Vector::Zero(x.size());
  for (std::size_t j = 0; j < model.dim(); ++j) {
    if (model.is_unstable(j) == (sign == Sign::plus)) out(j) = x(j);
  }
  return out;
}

/// True when x has no component outside the given subspace.
inline bool lies_in(const SpectralModel& model, const Vector& x, Sign sign) {
  model.check_dim(x);
  for (std::size_t j = 0; j < model.dim(); ++j) {
    if (model.is_unstable(j) != (sign == Sign::plus) && x(j) != 0.0) return false;
  }
  return true;
}

/// e^{At} applied to the selected part of x. Negative t is defined only on
/// H+ (part = plus, or full with vanishing stable component).
inline Vector semigroup_apply(const SpectralModel& model, double t, const Vector& x, Part part) {
  model.check_dim(x);
  if (t < 0.0) {
    const bool stable_touched =
        part == Part::minus || (part == Part::full && !lies_in(model, x, Sign::plus));
    if (stable_touched) {
      throw DichotomyViolation("semigroup: e^{At} for t < 0 is not defined on the stable subspace");
    }
  }
  Vector out = Vector::Zero(x.size());
  for (std::size_t j = 0; j < model.dim(); ++j) {
    const bool plus = model.is_unstable(j);
    if (part == Part::full || (part == Part::plus) == plus) out(j) = std::exp(model.eigenvalue(j) * t) * x(j);
  }
  return out;
}

/// Spectral-gap certificate at a given eta and smoothness order.
struct GapReport {
  double eta = 0.0;
  int order = 1;
  double K = 1.0;
  double lip = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  /// g_i = K lip (1/(i eta - beta) + 1/(alpha - i eta)), +inf when i eta is
  /// outside (beta, alpha).
  std::vector<double> per_order_values;
  bool admissible = false;
  /// Admissible eta found by the scan; empty when none.
  std::optional<double> eta_window_lo;
  std::optional<double> eta_window_hi;
  double optimal_eta = 0.0;
  /// Human-readable statement of the first failing inequality, empty when
  /// admissible.
  std::string failure;
};

/// g(eta) = K lip (1/(eta - beta) + 1/(alpha - eta)).
inline double gap_quantity(double K, double lip, double alpha, double beta, double eta) {
  if (!(eta > beta && eta < alpha)) return std::numeric_limits<double>::infinity();
  return K * lip * (1.0 / (eta - beta) + 1.0 / (alpha - eta));
}

namespace detail {

inline double worst_gap(double K, double lip, double alpha, double beta, double eta, int order) {
  double w = 0.0;
  for (int i = 1; i <= order; ++i) w = std::max(w, gap_quantity(K, lip, alpha, beta, i * eta));
  return w;
}

inline std::string first_gap_failure(double K, double lip, double alpha, double beta, double eta, int order) {
  std::ostringstream os;
  for (int i = 1; i <= order; ++i) {
    const double ie = i * eta;
    if (!(ie > beta)) {
      os << "order " << i << ": " << i << "*eta = " << ie << " <= beta = " << beta;
      return os.str();
    }
    if (!(ie < alpha)) {
      os << "order " << i << ": " << i << "*eta = " << ie << " >= alpha = " << alpha;
      return os.str();
    }
    const double g = gap_quantity(K, lip, alpha, beta, ie);
    if (!(g < 1.0)) {
      os << "order " << i << ": K*lip*(1/(" << i << "*eta-beta) + 1/(alpha-" << i << "*eta)) = " << g << " >= 1";
      return os.str();
    }
  }
  return {};
}

}  // namespace detail

/// Evaluates g_1..g_k at eta, the admissible eta-window by a fixed-resolution
/// scan of (beta, alpha) with spacing 1e-3 (alpha - beta), and the eta that
/// minimizes max_i g_i: (alpha + beta)/2 for k = 1, otherwise a ternary search
/// of the convex function max_i g_i on its domain.
inline GapReport check_gap(const SpectralModel& model, double lip, double eta, int order = 1) {
  const double a = model.alpha();
  const double b = model.beta();
  if (!(a > b)) throw InvalidModelError("check_gap: alpha <= beta");
  if (!(lip > 0.0)) throw ConfigurationError("check_gap: lip must be positive");
  if (order < 1) throw ConfigurationError("check_gap: order must be >= 1");
  const double K = model.K();

  GapReport r;
  r.eta = eta;
  r.order = order;
  r.K = K;
  r.lip = lip;
  r.alpha = a;
  r.beta = b;
  for (int i = 1; i <= order; ++i) r.per_order_values.push_back(gap_quantity(K, lip, a, b, i * eta));
  r.failure = detail::first_gap_failure(K, lip, a, b, eta, order);
  r.admissible = r.failure.empty();

  const double res = 1e-3 * (a - b);
  for (int s = 1; s * res < a - b; ++s) {
    const double e = b + s * res;
    if (detail::first_gap_failure(K, lip, a, b, e, order).empty()) {
      if (!r.eta_window_lo) r.eta_window_lo = e;
      r.eta_window_hi = e;
    }
  }

  if (order == 1) {
    r.optimal_eta = 0.5 * (a + b);
  } else {
    // Domain where i*eta in (beta, alpha) for every i <= order.
    double lo = b;
    double hi = a;
    for (int i = 1; i <= order; ++i) {
      lo = std::max(lo, b / i);
      hi = std::min(hi, a / i);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (a - b); ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (detail::worst_gap(K, lip, a, b, m1, order) < detail::worst_gap(K, lip, a, b, m2, order)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    r.optimal_eta = 0.5 * (lo + hi);
  }
  return r;
}

/// Largest lip for which the order-1 gap inequality holds at eta.
inline double gap_limit(const SpectralModel& model, double eta) {
  return 1.0 / (model.K() * (1.0 / (eta - model.beta()) + 1.0 / (model.alpha() - eta)));
}

}  // namespace stoman
