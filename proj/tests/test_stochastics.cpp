#include "stoman/stochastics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace stoman;

TEST(WienerPath, AnchoredAtZeroAndDeterministic) {
  TimeGrid g(-2.0, 3.0, 0.01);
  const auto a = WienerPath::sample(g, 2, 17);
  const auto b = WienerPath::sample(g, 2, 17);
  EXPECT_EQ(a.at(0, 0.0), 0.0);
  EXPECT_EQ(a.at(1, 0.0), 0.0);
  for (std::int64_t k = g.first_index(); k <= g.last_index(); k += 37) {
    EXPECT_EQ(a.at_index(0, k), b.at_index(0, k));
  }
  const auto c = WienerPath::sample(g, 2, 18);
  EXPECT_NE(a.at(0, 1.0), c.at(0, 1.0));
}

TEST(WienerPath, ChannelIndependentOfChannelCountAndExtent) {
  const auto a = WienerPath::sample(TimeGrid(-1.0, 1.0, 0.01), 1, 5);
  const auto b = WienerPath::sample(TimeGrid(-3.0, 2.0, 0.01), 3, 5);
  for (std::int64_t k = -100; k <= 100; k += 10) EXPECT_EQ(a.at_index(0, k), b.at_index(0, k));
}

TEST(WienerPath, IncrementVarianceMatchesStep) {
  const double h = 0.01;
  const auto w = WienerPath::sample(TimeGrid(0.0, 200.0, h), 1, 3);
  double s2 = 0.0;
  const std::int64_t N = 20000;
  for (std::int64_t k = 0; k < N; ++k) {
    const double d = w.at_index(0, k + 1) - w.at_index(0, k);
    s2 += d * d;
  }
  const double var = s2 / N;
  // Sample variance of N normals: sd of the estimate is h sqrt(2/N).
  EXPECT_NEAR(var, h, 5.0 * h * std::sqrt(2.0 / N));
}

TEST(WienerPath, FlowIdentity) {
  TimeGrid g(-4.0, 4.0, 0.01);
  const auto w = WienerPath::sample(g, 1, 11);
  const auto s1 = w.shift(1.0).shift(0.5);
  const auto s2 = w.shift(1.5);
  for (std::int64_t k = -200; k <= 200; k += 7) EXPECT_EQ(s1.at_index(0, k), s2.at_index(0, k));
  EXPECT_EQ(w.shift(0.0).at(0, 2.0), w.at(0, 2.0));
  for (double t : {-1.0, 0.3, 2.0}) {
    EXPECT_NEAR(w.shift(1.0).at(0, t), w.at(0, t + 1.0) - w.at(0, 1.0), 1e-14);
  }
  EXPECT_EQ(w.shift(1.0).at(0, 0.0), 0.0);
  EXPECT_THROW(w.shift(5.0), InsufficientPathError);
  EXPECT_THROW(w.shift(0.005), AlignmentError);
}

TEST(WienerPath, FromValuesRequiresZeroAtOrigin) {
  TimeGrid g(-1.0, 1.0, 0.5);
  EXPECT_THROW(WienerPath::from_values(g, {{1, 2, 3, 4, 5}}), ConfigurationError);
  EXPECT_NO_THROW(WienerPath::from_values(g, {{1, 2, 0, 4, 5}}));
}

TEST(WienerPath, CoarsenedSeesSamePath) {
  const auto w = WienerPath::sample(TimeGrid(-1.0, 1.0, 0.01), 1, 2);
  const auto c = w.coarsened(4);
  EXPECT_NEAR(c.grid().step(), 0.04, 1e-15);
  EXPECT_EQ(c.at_index(0, 5), w.at_index(0, 20));
  EXPECT_EQ(c.at_index(0, -25), w.at_index(0, -100));
}

// z = -int_{-S}^0 e^tau omega(tau) dtau for closed-form omegas.
TEST(OuIntegral, ClosedFormOracles) {
  const double h = 1e-3;
  TimeGrid g(-40.0, 0.0, h);
  const auto zero = WienerPath::from_function(g, [](double) { return 0.0; });
  EXPECT_EQ(ou_value(zero), 0.0);
  // omega(tau) = tau: z = 1 - (S + 1) e^{-S}
  const auto lin = WienerPath::from_function(g, [](double t) { return t; });
  const auto d = ou_value_detail(lin);
  EXPECT_NEAR(d.value, 1.0 - 41.0 * std::exp(-40.0), 1e-6);
  EXPECT_LE(std::abs(d.value - (1.0 - 41.0 * std::exp(-40.0))), d.quadrature_bound);
  // omega(tau) = e^tau (not anchored) through the raw quadrature: z = -1/2.
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = std::exp(g.time(i));
  const auto e = ou_integral(g, v);
  EXPECT_NEAR(e.value, -0.5 * (1.0 - std::exp(-80.0)), 1e-6);
  // Trapezoid error for f = e^{2 tau}: h^2/12 int |f''| = h^2/6.
  EXPECT_NEAR(std::abs(e.value + 0.5), h * h / 6.0, 1e-9);
}

TEST(OuIntegral, CoverageAndAlignment) {
  TimeGrid g(-10.0, 1.0, 0.01);
  const auto w = WienerPath::sample(g, 1, 1);
  EXPECT_THROW(ou_value(w, 40.0), InsufficientPathError);
  EXPECT_THROW(ou_value(w, 5.005), AlignmentError);
  EXPECT_NO_THROW(ou_value(w, 10.0));
}

TEST(OuTrajectory, RecursionMatchesPointwiseQuadrature) {
  TimeGrid g(-45.0, 5.0, 0.01);
  const auto w = WienerPath::sample(g, 1, 21);
  const auto ou = ou_trajectory(w, TimeGrid(0.0, 5.0, 0.01));
  for (double t : {0.0, 1.0, 2.5, 5.0}) {
    const double direct = ou_value(w.shift(t));
    // Recursion is exact for the piecewise-linear path; the pointwise value
    // is a trapezoid of the same integral.
    EXPECT_NEAR(ou.at(t), direct, 2e-4) << "t = " << t;
  }
}

TEST(OuTrajectory, ShiftReusesSamples) {
  TimeGrid g(-45.0, 5.0, 0.01);
  const auto w = WienerPath::sample(g, 1, 4);
  const auto ou = ou_trajectory(w, TimeGrid(0.0, 5.0, 0.01));
  const auto s = ou.shifted(2.0);
  EXPECT_EQ(s.at(0.0), ou.at(2.0));
  EXPECT_EQ(s.at(1.5), ou.at(3.5));
}

TEST(OuTrajectory, SdeResidualWithinBound) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TimeGrid g(-41.0, 10.0, 0.01);
    const auto w = WienerPath::sample(g, 1, seed);
    const auto ou = ou_trajectory(w, TimeGrid(0.0, 10.0, 0.01));
    const auto r = ou_sde_residual(w, ou, 10.0);
    EXPECT_TRUE(r.within_bound) << "seed " << seed;
    EXPECT_LE(r.max_residual, r.constant * r.step * r.step + r.truncation_bound + r.rounding_allowance);
  }
}

TEST(OuTrajectory, ResidualScalesWithStepSquared) {
  TimeGrid g(-41.0, 10.0, 0.001);
  const auto w = WienerPath::sample(g, 1, 9);
  double prev = 0.0;
  for (int f : {1, 4, 16}) {
    const auto wc = w.coarsened(f);
    const TimeGrid out = TimeGrid::from_indices(0, 10000 / f, 0.001 * f);
    const auto r = ou_sde_residual(wc, ou_trajectory(wc, out), 10.0);
    if (prev > 0.0) {
      EXPECT_GT(r.max_residual, prev);
    }
    prev = r.max_residual;
  }
}

TEST(OuTrajectory, BirkhoffAverageOfConstantAndGrowthProxy) {
  TimeGrid g(0.0, 4.0, 0.5);
  OUSample c(GridSeries<double>(g, std::vector<double>(g.size(), 2.0)), 0.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(birkhoff_average(c, 4.0), 2.0);
  std::vector<double> lin(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) lin[i] = 3.0 * g.time(i);
  EXPECT_DOUBLE_EQ(sublinear_growth_proxy(GridSeries<double>(g, lin), 4.0), 3.0);
}

TEST(OuTrajectory, ZeroSample) {
  const auto z = OUSample::zero(TimeGrid(-1.0, 1.0, 0.1));
  EXPECT_EQ(z.at(0.5), 0.0);
  EXPECT_EQ(z.error_bound(), 0.0);
}
