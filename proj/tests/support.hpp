#pragma once

// Builders shared by the unit tests.

#include "stoman/conjugation.hpp"
#include "stoman/model.hpp"
#include "stoman/nonlinearity.hpp"
#include "stoman/stochastics.hpp"

#include <cmath>

namespace stoman::testing {

/// A = diag(1, -1) with F = eps * swap; the linear coupling oracle.
inline SpectralModel two_mode_model() { return SpectralModel({1.0, -1.0}, {0}); }

inline ConjugatedSystem coupling_system(double eps, double t_lo, double t_hi, double step) {
  return ConjugatedSystem::deterministic(two_mode_model(), make_linear(swap_matrix(2), eps),
                                         TimeGrid(t_lo, t_hi, step));
}

/// Multiplicative-noise system with OU samples on [t_lo, t_hi] from a path
/// sampled with `seed` (single channel).
inline ConjugatedSystem multiplicative_system(const SpectralModel& model, const Nonlinearity& f, double t_lo,
                                              double t_hi, double step, std::uint64_t seed) {
  const auto path = WienerPath::sample(TimeGrid(t_lo - kDefaultOuTruncation, t_hi, step), 1, seed);
  return ConjugatedSystem::multiplicative(model, f, ou_trajectory(path, TimeGrid(t_lo, t_hi, step)));
}

/// Slope of the least-squares line through (x_i, y_i).
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace stoman::testing
