#pragma once

// Globally Lipschitz nonlinearities F with derivatives, and the built-in
// families used by the driver.

#include "stoman/errors.hpp"
#include "stoman/linalg.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stoman {

/// Smoothness order reported by maps that are C-infinity.
inline constexpr int kSmoothInfinity = std::numeric_limits<int>::max();

/// Type-erased nonlinearity F : R^n -> R^n with a declared global Lipschitz
/// constant and derivatives up to `smoothness_order()`.
///
/// `derivative(u, dirs)` evaluates the order-m derivative D^m F(u) applied to
/// the m directions in `dirs` (m = dirs.size() >= 1).
class Nonlinearity {
 public:
  struct Impl {
    virtual ~Impl() = default;
    virtual Vector evaluate(const Vector& u) const = 0;
    virtual Vector derivative(const Vector& u, std::span<const Vector> dirs) const = 0;
    virtual Matrix jacobian(const Vector& u) const {
      const auto n = u.size();
      Matrix J(n, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const Vector e = Vector::Unit(n, j);
        J.col(j) = derivative(u, std::span<const Vector>(&e, 1));
      }
      return J;
    }
  };

  Nonlinearity(std::string name, std::size_t dim, double lip, int smoothness_order, bool fixes_origin,
               std::shared_ptr<const Impl> impl)
      : name_(std::move(name)),
        dim_(dim),
        lip_(lip),
        order_(smoothness_order),
        fixes_origin_(fixes_origin),
        impl_(std::move(impl)) {
    if (!(lip_ > 0.0)) throw ConfigurationError("nonlinearity: declared Lipschitz constant must be positive");
    if (order_ < 0) throw ConfigurationError("nonlinearity: smoothness order must be >= 0");
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  double lip() const noexcept { return lip_; }
  int smoothness_order() const noexcept { return order_; }
  bool fixes_origin() const noexcept { return fixes_origin_; }

  Vector operator()(const Vector& u) const { return evaluate(u); }
  Vector evaluate(const Vector& u) const {
    check(u);
    return impl_->evaluate(u);
  }

  Vector derivative(const Vector& u, std::span<const Vector> dirs) const {
    check(u);
    if (dirs.empty()) return impl_->evaluate(u);
    if (static_cast<int>(dirs.size()) > order_) {
      throw ConfigurationError("nonlinearity " + name_ + ": derivative of order " + std::to_string(dirs.size()) +
                               " requested, map is only C^" + std::to_string(order_));
    }
    return impl_->derivative(u, dirs);
  }

  Matrix jacobian(const Vector& u) const {
    check(u);
    if (order_ < 1) throw ConfigurationError("nonlinearity " + name_ + ": not differentiable");
    return impl_->jacobian(u);
  }

  /// Same map with a different declared constant (must dominate the true one).
  Nonlinearity with_lip(double lip) const {
    return Nonlinearity(name_, dim_, lip, order_, fixes_origin_, impl_);
  }

 private:
  void check(const Vector& u) const {
    if (static_cast<std::size_t>(u.size()) != dim_) {
      throw ConfigurationError("nonlinearity " + name_ + ": state has dimension " + std::to_string(u.size()) +
                               ", expected " + std::to_string(dim_));
    }
  }

  std::string name_;
  std::size_t dim_;
  double lip_;
  int order_;
  bool fixes_origin_;
  std::shared_ptr<const Impl> impl_;
};

namespace detail {

class ZeroImpl final : public Nonlinearity::Impl {
 public:
  Vector evaluate(const Vector& u) const override { return Vector::Zero(u.size()); }
  Vector derivative(const Vector& u, std::span<const Vector>) const override { return Vector::Zero(u.size()); }
};

class LinearImpl final : public Nonlinearity::Impl {
 public:
  explicit LinearImpl(Matrix b) : b_(std::move(b)) {}
  Vector evaluate(const Vector& u) const override { return b_ * u; }
  Vector derivative(const Vector& u, std::span<const Vector> dirs) const override {
    if (dirs.size() == 1) return b_ * dirs[0];
    return Vector::Zero(u.size());
  }
  Matrix jacobian(const Vector&) const override { return b_; }

 private:
  Matrix b_;
};

/// F(u)_j = scale * phi((M u)_j) for a scalar profile phi.
template <class Profile>
class RidgeImpl final : public Nonlinearity::Impl {
 public:
  RidgeImpl(Matrix mixing, double scale, Profile profile)
      : m_(std::move(mixing)), scale_(scale), profile_(std::move(profile)) {}

  Vector evaluate(const Vector& u) const override {
    const Vector s = m_ * u;
    Vector out(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) out(j) = scale_ * profile_(s(j), 0);
    return out;
  }

  Vector derivative(const Vector& u, std::span<const Vector> dirs) const override {
    const Vector s = m_ * u;
    Vector prod = Vector::Constant(s.size(), scale_);
    for (const auto& d : dirs) prod = prod.cwiseProduct(m_ * d);
    const int order = static_cast<int>(dirs.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) prod(j) *= profile_(s(j), order);
    return prod;
  }

  Matrix jacobian(const Vector& u) const override {
    const Vector s = m_ * u;
    Vector d(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) d(j) = scale_ * profile_(s(j), 1);
    return d.asDiagonal() * m_;
  }

 private:
  Matrix m_;
  double scale_;
  Profile profile_;
};

/// d^m/ds^m sin(s).
struct SineProfile {
  double operator()(double s, int m) const {
    switch (m % 4) {
      case 0: return std::sin(s);
      case 1: return std::cos(s);
      case 2: return -std::sin(s);
      default: return -std::cos(s);
    }
  }
};

/// Compact-support cubic bump c(s) = s^3 (1 - s^2)^4 on |s| < 1, zero
/// outside; C^3 on the real line. Rescaled to radius R as R c(s / R).
struct CubicBumpProfile {
  double radius = 1.0;

  // Coefficients of s^3 - 4 s^5 + 6 s^7 - 4 s^9 + s^11, index = power.
  static constexpr std::array<double, 12> kCoeffs{0, 0, 0, 1, 0, -4, 0, 6, 0, -4, 0, 1};

  static double poly_derivative(double s, int m) {
    double acc = 0.0;
    for (int p = static_cast<int>(kCoeffs.size()) - 1; p >= m; --p) {
      double c = kCoeffs[static_cast<std::size_t>(p)];
      for (int q = 0; q < m; ++q) c *= static_cast<double>(p - q);
      acc = acc * s + c;
    }
    return acc;
  }

  double operator()(double s, int m) const {
    const double x = s / radius;
    if (std::abs(x) >= 1.0) return 0.0;
    return std::pow(radius, 1 - m) * poly_derivative(x, m);
  }

  /// max |c'| in closed form: c'(s) = s^2 (1-s^2)^3 (3 - 11 s^2) is extremal
  /// where 55 x^2 - 34 x + 3 = 0, x = s^2; the larger root gives the maximum.
  static double lipschitz() {
    const double x = (34.0 + std::sqrt(34.0 * 34.0 - 4.0 * 55.0 * 3.0)) / 110.0;
    const double g = x * std::pow(1.0 - x, 3) * (3.0 - 11.0 * x);
    const double x1 = (34.0 - std::sqrt(34.0 * 34.0 - 4.0 * 55.0 * 3.0)) / 110.0;
    const double g1 = x1 * std::pow(1.0 - x1, 3) * (3.0 - 11.0 * x1);
    return std::max(std::abs(g), std::abs(g1));
  }
};

}  // namespace detail

/// Orthonormal DCT-II matrix; used as the default mode-mixing matrix so that
/// ridge nonlinearities couple every mode while keeping ||M||_2 = 1.
inline Matrix dct_matrix(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = (j == 0) ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t k = 0; k < n; ++k) {
      m(j, k) = c * std::cos(std::numbers::pi * (k + 0.5) * j / static_cast<double>(n));
    }
  }
  return m;
}

/// Anti-diagonal permutation; the 2x2 case is the swap (u1, u2) -> (u2, u1).
inline Matrix swap_matrix(std::size_t n) {
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < n; ++j) m(j, n - 1 - j) = 1.0;
  return m;
}

/// F = 0 with a declared Lipschitz constant (used by the gap certificate).
inline Nonlinearity make_zero(std::size_t n, double declared_lip) {
  return Nonlinearity("zero", n, declared_lip, kSmoothInfinity, true, std::make_shared<detail::ZeroImpl>());
}

/// F(u) = eps B u.
inline Nonlinearity make_linear(const Matrix& b, double eps) {
  if (b.rows() != b.cols()) throw ConfigurationError("linear nonlinearity: coupling matrix must be square");
  const Matrix scaled = eps * b;
  const double lip = spectral_norm(scaled);
  // A zero coupling still needs a positive declared constant.
  return Nonlinearity("linear", static_cast<std::size_t>(b.rows()), lip > 0 ? lip : std::numeric_limits<double>::min(),
                      kSmoothInfinity, true, std::make_shared<detail::LinearImpl>(scaled));
}

/// F(u)_j = eps sin((M u)_j); Lip F = eps ||M||_2.
inline Nonlinearity make_sine(const Matrix& mixing, double eps, int smoothness_order = 8) {
  if (mixing.rows() != mixing.cols()) throw ConfigurationError("sine nonlinearity: mixing matrix must be square");
  return Nonlinearity("sine", static_cast<std::size_t>(mixing.rows()), std::abs(eps) * spectral_norm(mixing),
                      smoothness_order, true,
                      std::make_shared<detail::RidgeImpl<detail::SineProfile>>(mixing, eps, detail::SineProfile{}));
}

/// F(u)_j = (eps / L_c) R c((M u)_j / R) with the C^3 compact-support cubic
/// c; normalized so that Lip F = eps ||M||_2.
inline Nonlinearity make_cubic(const Matrix& mixing, double eps, double radius = 1.0) {
  if (mixing.rows() != mixing.cols()) throw ConfigurationError("cubic nonlinearity: mixing matrix must be square");
  if (!(radius > 0.0)) throw ConfigurationError("cubic nonlinearity: radius must be positive");
  const double scale = eps / detail::CubicBumpProfile::lipschitz();
  return Nonlinearity(
      "cubic", static_cast<std::size_t>(mixing.rows()), std::abs(eps) * spectral_norm(mixing), 3, true,
      std::make_shared<detail::RidgeImpl<detail::CubicBumpProfile>>(mixing, scale,
                                                                    detail::CubicBumpProfile{radius}));
}

/// User-supplied map. `derivative` may be empty when smoothness_order == 0.
inline Nonlinearity make_custom(std::string name, std::size_t n, double lip, int smoothness_order, bool fixes_origin,
                                std::function<Vector(const Vector&)> evaluate,
                                std::function<Vector(const Vector&, std::span<const Vector>)> derivative = {}) {
  struct Fn final : Nonlinearity::Impl {
    std::function<Vector(const Vector&)> f;
    std::function<Vector(const Vector&, std::span<const Vector>)> df;
    Vector evaluate(const Vector& u) const override { return f(u); }
    Vector derivative(const Vector& u, std::span<const Vector> dirs) const override {
      if (!df) throw ConfigurationError("custom nonlinearity: no derivative supplied");
      return df(u, dirs);
    }
  };
  auto impl = std::make_shared<Fn>();
  impl->f = std::move(evaluate);
  impl->df = std::move(derivative);
  return Nonlinearity(std::move(name), n, lip, smoothness_order, fixes_origin, std::move(impl));
}

/// Axis-aligned sampling box for Lipschitz probes.
struct Box {
  Vector lo;
  Vector hi;

  static Box cube(std::size_t n, double half_width) {
    return {Vector::Constant(n, -half_width), Vector::Constant(n, half_width)};
  }
};

struct LipschitzProbe {
  double measured = 0.0;
  double declared = 0.0;
  bool violated = false;
};

/// max over `probes` random pairs in the box of |F(x1) - F(x2)| / |x1 - x2|,
/// flagged when it exceeds the declared constant by more than 1e-6 relative.
template <class Map>
LipschitzProbe probe_lipschitz(Map&& f, double declared, std::size_t probes, const Box& box, std::uint64_t seed) {
  if (probes < 2) throw ConfigurationError("certify_lipschitz: need at least 2 probes");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = box.lo.size();
  auto draw = [&] {
    Vector x(n);
    for (Eigen::Index j = 0; j < n; ++j) x(j) = box.lo(j) + (box.hi(j) - box.lo(j)) * unit(gen);
    return x;
  };
  LipschitzProbe out;
  out.declared = declared;
  for (std::size_t p = 0; p < probes; ++p) {
    const Vector a = draw();
    // Half the pairs are close, to catch local slopes.
    Vector b = draw();
    if (p % 2 == 1) b = a + 1e-4 * (b - a);
    const double d = (a - b).norm();
    if (d == 0.0) continue;
    out.measured = std::max(out.measured, (f(a) - f(b)).norm() / d);
  }
  out.violated = out.measured > declared * (1.0 + 1e-6);
  return out;
}

inline LipschitzProbe certify_lipschitz(const Nonlinearity& nl, std::size_t probes, const Box& box,
                                        std::uint64_t seed) {
  return probe_lipschitz([&](const Vector& x) { return nl.evaluate(x); }, nl.lip(), probes, box, seed);
}

}  // namespace stoman
