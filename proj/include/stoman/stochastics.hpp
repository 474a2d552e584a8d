#pragma once

// Two-sided Wiener paths, the shift flow on path space, and the stationary
// Ornstein-Uhlenbeck process z(theta_t omega) driven by a path.

#include "stoman/errors.hpp"
#include "stoman/grid_series.hpp"
#include "stoman/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace stoman {

/// Default truncation horizon for the improper OU integral.
inline constexpr double kDefaultOuTruncation = 40.0;

/// Sampled two-sided Wiener path omega(t_k), one series per noise channel.
///
/// Values are stored unanchored and read as raw(k) - raw(0), so shifting is a
/// re-indexing: theta_t omega evaluates raw(k + m) - raw(m) directly from the
/// base samples. Consequently shift(shift(w, t1), t2) and shift(w, t1 + t2)
/// produce bitwise identical values, and every path is exactly 0 at t = 0.
class WienerPath {
 public:
  /// Independent N(0, step) increments to both sides of 0. Channel c uses the
  /// substreams (seed, c, side) so a channel's values do not depend on how
  /// many channels are requested nor on the extent of the other side.
  static WienerPath sample(const TimeGrid& grid, std::size_t channels, std::uint64_t seed) {
    if (channels < 1) throw ConfigurationError("wiener path: need at least one channel");
    std::vector<GridSeries<double>> raw;
    raw.reserve(channels);
    const double sd = std::sqrt(grid.step());
    for (std::size_t c = 0; c < channels; ++c) {
      std::vector<double> v(grid.size(), 0.0);
      const auto zero = static_cast<std::size_t>(-grid.first_index());
      for (int side = 0; side < 2; ++side) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(side)};
        std::mt19937_64 gen(seq);
        std::normal_distribution<double> normal(0.0, sd);
        if (side == 0) {
          for (std::size_t i = zero + 1; i < v.size(); ++i) v[i] = v[i - 1] + normal(gen);
        } else {
          for (std::size_t i = zero; i-- > 0;) v[i] = v[i + 1] + normal(gen);
        }
      }
      raw.emplace_back(grid, std::move(v));
    }
    return WienerPath(std::move(raw), seed);
  }

  /// Path from explicit samples (one vector per channel, positions on grid).
  /// Each channel must vanish at t = 0.
  static WienerPath from_values(const TimeGrid& grid, std::vector<std::vector<double>> channels,
                                std::uint64_t seed = 0) {
    if (channels.empty()) throw ConfigurationError("wiener path: need at least one channel");
    std::vector<GridSeries<double>> raw;
    for (auto& ch : channels) {
      GridSeries<double> s(grid, std::move(ch));
      if (s.at_index(0) != 0.0) throw ConfigurationError("wiener path: value at t = 0 must be exactly 0");
      raw.push_back(std::move(s));
    }
    return WienerPath(std::move(raw), seed);
  }

  /// Deterministic single-channel path t -> f(t) (f(0) must be 0).
  template <class F>
  static WienerPath from_function(const TimeGrid& grid, F&& f, std::size_t channels = 1) {
    std::vector<std::vector<double>> ch(channels, std::vector<double>(grid.size()));
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < grid.size(); ++i) ch[c][i] = (grid.time(i) == 0.0) ? 0.0 : f(grid.time(i));
    }
    return from_values(grid, std::move(ch));
  }

  const TimeGrid& grid() const noexcept { return raw_.front().grid(); }
  std::size_t channels() const noexcept { return raw_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }

  /// omega_c(t_k) for global index k.
  double at_index(std::size_t channel, std::int64_t k) const {
    const auto& r = raw_.at(channel);
    return r.at_index(k) - r.at_index(0);
  }
  double at(std::size_t channel, double t) const { return at_index(channel, grid().index_of(t)); }

  std::vector<double> channel_values(std::size_t channel) const {
    std::vector<double> v(grid().size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = at_index(channel, grid().first_index() + static_cast<std::int64_t>(i));
    return v;
  }

  /// theta_t omega = omega(. + t) - omega(t) on the largest window the
  /// samples allow.
  WienerPath shift(double t) const {
    const std::int64_t m = grid().steps_in(t, "shift");
    if (!grid().contains_index(m)) {
      throw InsufficientPathError("wiener path: shift " + std::to_string(t) + " leaves the sampled window");
    }
    std::vector<GridSeries<double>> raw;
    raw.reserve(raw_.size());
    for (const auto& r : raw_) raw.push_back(r.shifted_steps(m));
    return WienerPath(std::move(raw), seed_);
  }

  /// Shift restricted to a requested output window.
  WienerPath shift(double t, const TimeGrid& window) const { return shift(t).restricted(window); }

  WienerPath restricted(const TimeGrid& window) const {
    std::vector<GridSeries<double>> raw;
    for (const auto& r : raw_) raw.push_back(r.restricted(window));
    return WienerPath(std::move(raw), seed_);
  }

  /// Samples at every factor-th grid point: the same Brownian path seen on a
  /// grid with step * factor.
  WienerPath coarsened(int factor) const {
    std::vector<GridSeries<double>> raw;
    for (const auto& r : raw_) raw.push_back(r.coarsened(factor));
    return WienerPath(std::move(raw), seed_);
  }

 private:
  WienerPath(std::vector<GridSeries<double>> raw, std::uint64_t seed) : raw_(std::move(raw)), seed_(seed) {}

  std::vector<GridSeries<double>> raw_;
  std::uint64_t seed_ = 0;
};

/// Result of the truncated quadrature for z(omega).
struct OuIntegral {
  double value = 0.0;
  /// Bound on the dropped tail over (-inf, -S).
  double truncation_bound = 0.0;
  /// Bound on the trapezoid error against the piecewise-linear interpolant of
  /// the samples.
  double quadrature_bound = 0.0;
};

/// -int_{-S}^0 e^tau w(tau) dtau by composite trapezoid, for samples `values`
/// at the points of `grid`. The samples need not vanish at 0.
///
/// The tail bound uses |w(tau)| <= c |tau| for tau <= -S with c estimated from
/// the available samples left of -S (or at -S itself), which integrates to
/// c (S + 1) e^{-S}.
inline OuIntegral ou_integral(const TimeGrid& grid, std::span<const double> values,
                              double truncation = kDefaultOuTruncation) {
  if (values.size() != grid.size()) throw ConfigurationError("ou integral: sample count does not match grid");
  if (!(truncation > 0.0)) throw ConfigurationError("ou integral: truncation must be positive");
  const std::int64_t n = grid.steps_in(truncation, "truncation horizon");
  if (-n < grid.first_index() || !grid.contains_index(0)) {
    throw InsufficientPathError("ou integral: samples do not cover [-" + std::to_string(truncation) + ", 0]");
  }
  const double h = grid.step();
  auto sample = [&](std::int64_t k) { return values[static_cast<std::size_t>(k - grid.first_index())]; };

  OuIntegral out;
  double sum = 0.0;
  double quad = 0.0;
  for (std::int64_t k = -n; k < 0; ++k) {
    const double ta = grid.time_at(k);
    const double tb = grid.time_at(k + 1);
    const double wa = sample(k);
    const double wb = sample(k + 1);
    sum += 0.5 * h * (std::exp(ta) * wa + std::exp(tb) * wb);
    // |f''| <= e^tau (|w| + 2|w'|) for f = e^tau w with w linear.
    quad += h * h * h / 12.0 * std::exp(tb) * (std::max(std::abs(wa), std::abs(wb)) + 2.0 * std::abs(wb - wa) / h);
  }
  out.value = -sum;
  out.quadrature_bound = quad;

  double growth = 0.0;
  for (std::int64_t k = grid.first_index(); k <= -n; ++k) {
    growth = std::max(growth, std::abs(sample(k) / grid.time_at(k)));
  }
  out.truncation_bound = growth * (truncation + 1.0) * std::exp(-truncation);
  return out;
}

/// z(omega) for channel `channel` of a Wiener path, with error bounds.
inline OuIntegral ou_value_detail(const WienerPath& path, double truncation = kDefaultOuTruncation,
                                  std::size_t channel = 0) {
  const auto v = path.channel_values(channel);
  return ou_integral(path.grid(), v, truncation);
}

inline double ou_value(const WienerPath& path, double truncation = kDefaultOuTruncation, std::size_t channel = 0) {
  return ou_value_detail(path, truncation, channel).value;
}

/// Samples of t -> z(theta_t omega) on a grid.
class OUSample {
 public:
  OUSample() = default;
  OUSample(GridSeries<double> z, double truncation_horizon, double quadrature_error_bound, double truncation_bound)
      : z_(std::move(z)),
        truncation_horizon_(truncation_horizon),
        quadrature_error_bound_(quadrature_error_bound),
        truncation_bound_(truncation_bound) {}

  /// z identically zero on a grid (deterministic systems, additive noise).
  static OUSample zero(const TimeGrid& grid) {
    return OUSample(GridSeries<double>(grid, std::vector<double>(grid.size(), 0.0)), 0.0, 0.0, 0.0);
  }

  const TimeGrid& grid() const noexcept { return z_.grid(); }
  const GridSeries<double>& series() const noexcept { return z_; }
  double at(double t) const { return z_.at(t); }
  double at_index(std::int64_t k) const { return z_.at_index(k); }
  std::vector<double> values() const { return z_.values(); }

  double truncation_horizon() const noexcept { return truncation_horizon_; }
  double quadrature_error_bound() const noexcept { return quadrature_error_bound_; }
  double truncation_bound() const noexcept { return truncation_bound_; }
  /// Pointwise bound on |z_sampled - z_exact(piecewise-linear path)|.
  double error_bound() const noexcept { return quadrature_error_bound_ + truncation_bound_; }

  /// z(theta_t theta_s omega) = z(theta_{t+s} omega): re-indexing only.
  OUSample shifted(double s) const {
    return OUSample(z_.shifted(s), truncation_horizon_, quadrature_error_bound_, truncation_bound_);
  }
  OUSample coarsened(int factor) const {
    return OUSample(z_.coarsened(factor), truncation_horizon_, quadrature_error_bound_, truncation_bound_);
  }
  OUSample restricted(const TimeGrid& window) const {
    return OUSample(z_.restricted(window), truncation_horizon_, quadrature_error_bound_, truncation_bound_);
  }

 private:
  GridSeries<double> z_;
  double truncation_horizon_ = 0.0;
  double quadrature_error_bound_ = 0.0;
  double truncation_bound_ = 0.0;
};

/// z(theta_t omega) for t on out_grid in one sweep.
///
/// The first value is the pointwise truncated quadrature at out_grid.t_min;
/// later values follow z(t+h) = e^{-h} z(t) + int_t^{t+h} e^{-(t+h-s)} dw(s),
/// where the stochastic integral is exact for the piecewise-linear
/// interpolant of the samples.
inline OUSample ou_trajectory(const WienerPath& path, const TimeGrid& out_grid,
                              double truncation = kDefaultOuTruncation, std::size_t channel = 0) {
  const TimeGrid& g = path.grid();
  if (!g.same_step(out_grid)) throw AlignmentError("ou trajectory: output grid step differs from the path step");
  const std::int64_t n = g.steps_in(truncation, "truncation horizon");
  if (out_grid.first_index() - n < g.first_index() || out_grid.last_index() > g.last_index()) {
    throw InsufficientPathError("ou trajectory: path does not cover [t_min - S, t_max] of the output grid");
  }
  const double h = g.step();
  const auto start = ou_value_detail(path.shift(out_grid.t_min()), truncation, channel);

  std::vector<double> z(out_grid.size());
  z[0] = start.value;
  const double decay = std::exp(-h);
  const double gain = -std::expm1(-h) / h;
  for (std::size_t i = 1; i < z.size(); ++i) {
    const std::int64_t k = out_grid.first_index() + static_cast<std::int64_t>(i);
    const double dw = path.at_index(channel, k) - path.at_index(channel, k - 1);
    z[i] = decay * z[i - 1] + gain * dw;
  }
  return OUSample(GridSeries<double>(out_grid, std::move(z)), truncation, start.quadrature_bound,
                  start.truncation_bound);
}

/// (1/T) int_0^T z(theta_tau omega) dtau by trapezoid.
inline double birkhoff_average(const OUSample& ou, double horizon) {
  if (!(horizon > 0.0)) throw ConfigurationError("birkhoff average: horizon must be positive");
  const std::int64_t n = ou.grid().steps_in(horizon, "averaging horizon");
  if (!ou.grid().contains_index(0) || !ou.grid().contains_index(n)) {
    throw InsufficientPathError("birkhoff average: OU sample does not cover [0, T]");
  }
  const double h = ou.grid().step();
  double sum = 0.5 * (ou.at_index(0) + ou.at_index(n));
  for (std::int64_t k = 1; k < n; ++k) sum += ou.at_index(k);
  return sum * h / horizon;
}

/// Pathwise residual of the OU identity
///   z(theta_t w) - z(w) + int_0^t z(theta_s w) ds - w(t) = 0
/// on [0, T], with the integral by trapezoid.
struct OuResidual {
  double max_residual = 0.0;
  /// Measured constant C with residual(t) <= C step^2 + rounding at every t:
  /// C = (1/12) sum_j |h z_j - dw_j|, the trapezoid error bound for the
  /// exact piecewise-linear-driven OU solution.
  double constant = 0.0;
  double step = 0.0;
  double truncation_bound = 0.0;
  double rounding_allowance = 0.0;
  /// True when the residual stayed below C_k step^2 + truncation + rounding at
  /// every grid time (C_k is the running partial sum).
  bool within_bound = true;
};

inline OuResidual ou_sde_residual(const WienerPath& path, const OUSample& ou, double horizon,
                                  std::size_t channel = 0) {
  const TimeGrid& g = ou.grid();
  const std::int64_t n = g.steps_in(horizon, "residual horizon");
  if (!g.contains_index(n) || !path.grid().contains_index(n)) {
    throw InsufficientPathError("ou residual: samples do not cover [0, T]");
  }
  const double h = g.step();
  const double eps = std::numeric_limits<double>::epsilon();
  OuResidual r;
  r.step = h;
  r.truncation_bound = ou.truncation_bound();
  const double z0 = ou.at_index(0);
  double integral = 0.0;
  double partial = 0.0;
  double rounding = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double za = ou.at_index(k);
    const double zb = ou.at_index(k + 1);
    const double dw = path.at_index(channel, k + 1) - path.at_index(channel, k);
    integral += 0.5 * h * (za + zb);
    partial += std::abs(h * za - dw) / 12.0;
    rounding += 8.0 * eps * (std::abs(za) + std::abs(zb) + std::abs(dw) + std::abs(integral));
    const double res = std::abs(zb - z0 + integral - path.at_index(channel, k + 1));
    r.max_residual = std::max(r.max_residual, res);
    if (res > partial * h * h + r.truncation_bound + rounding) r.within_bound = false;
  }
  r.constant = partial;
  r.rounding_allowance = rounding;
  return r;
}

/// max_{T/2 <= |t| <= T} |v(t)| / |t| for grid samples v (both sides of 0
/// where covered). Proxy for the sublinear growth of paths and of z.
inline double sublinear_growth_proxy(const GridSeries<double>& values, double horizon) {
  const TimeGrid& g = values.grid();
  const std::int64_t n = g.steps_in(horizon, "growth horizon");
  double out = 0.0;
  for (std::int64_t k = n / 2; k <= n; ++k) {
    for (std::int64_t kk : {k, -k}) {
      if (kk != 0 && g.contains_index(kk)) out = std::max(out, std::abs(values.at_index(kk) / g.time_at(kk)));
    }
  }
  return out;
}

inline GridSeries<double> channel_series(const WienerPath& path, std::size_t channel = 0) {
  return GridSeries<double>(path.grid(), path.channel_values(channel));
}

}  // namespace stoman
