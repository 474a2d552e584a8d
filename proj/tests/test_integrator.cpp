#include "stoman/integrator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace stoman;
using stoman::testing::fit_slope;
using stoman::testing::multiplicative_system;

TEST(MildIntegrator, LinearPartExact) {
  SpectralModel m({-1.0}, {}, 1.0, 1.0);
  const auto sys = ConjugatedSystem::deterministic(m, make_zero(1, 0.1), TimeGrid(0.0, 1.0, 0.01));
  const auto tr = integrate_mild(sys, Vector::Ones(1), 1.0);
  EXPECT_NEAR(tr.final_state()(0), std::exp(-1.0), 1e-14);
  EXPECT_EQ(tr.state(0)(0), 1.0);
  EXPECT_EQ(tr.size(), 101u);
}

TEST(MildIntegrator, InitialStateStoredExactly) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto sys = multiplicative_system(m, make_sine(dct_matrix(2), 0.2), 0.0, 1.0, 0.01, 3);
  Vector x(2);
  x << 0.1234567890123, -9.87654321;
  EXPECT_EQ(integrate_mild(sys, x, 1.0).state(0), x);
}

// With G = 0, u(t) = e^{lambda t + int_0^t z} x0; the exponent is compared
// with an independent trapezoid sum of the OU samples.
TEST(MildIntegrator, LinearWithOuMatchesExponentQuadrature) {
  SpectralModel m({0.5, -2.0}, {0});
  const auto sys = multiplicative_system(m, make_zero(2, 0.1), 0.0, 4.0, 0.01, 5);
  Vector x(2);
  x << 1.0, 2.0;
  const auto tr = integrate_mild(sys, x, 4.0);
  double Z = 0.0;
  for (std::int64_t k = 0; k < 400; ++k) Z += 0.005 * (sys.z_index(k) + sys.z_index(k + 1));
  EXPECT_NEAR(tr.final_state()(0), std::exp(0.5 * 4.0 + Z) * 1.0, 1e-12 * std::exp(2.0 + Z));
  EXPECT_NEAR(tr.final_state()(1), std::exp(-2.0 * 4.0 + Z) * 2.0, 1e-14);
}

TEST(MildIntegrator, FirstOrderSelfConvergence) {
  SpectralModel m({0.8, -1.0, -3.0}, {0});
  const auto f = make_sine(dct_matrix(3), 0.5);
  const double fine = 1e-3 / 8;
  const auto base = ConjugatedSystem::deterministic(m, f, TimeGrid(0.0, 2.0, fine));
  Vector x(3);
  x << 0.5, -1.0, 2.0;
  const Vector ref = integrate_mild(base, x, 2.0).final_state();
  std::vector<double> logh, loge;
  for (int c : {64, 32, 16}) {
    const auto sys = base.coarsened(c);
    logh.push_back(std::log(sys.step()));
    loge.push_back(std::log((integrate_mild(sys, x, 2.0).final_state() - ref).norm()));
  }
  const double order = fit_slope(logh, loge);
  EXPECT_GT(order, 0.9);
  EXPECT_LT(order, 1.2);
  // Halving the step roughly halves the error.
  const double ratio = std::exp(loge[0] - loge[1]);
  EXPECT_GT(ratio, 1.7);
  EXPECT_LT(ratio, 2.3);
}

// With OU coefficients the error is pathwise and irregular from step to step;
// only the overall trend is asserted.
TEST(MildIntegrator, ConvergesWithMultiplicativeNoise) {
  SpectralModel m({0.8, -1.0, -3.0}, {0});
  const auto f = make_sine(dct_matrix(3), 0.5);
  const auto base = multiplicative_system(m, f, 0.0, 2.0, 1e-3 / 8, 14);
  Vector x(3);
  x << 0.5, -1.0, 2.0;
  const Vector ref = integrate_mild(base, x, 2.0).final_state();
  std::vector<double> logh, loge;
  for (int c : {128, 64, 32, 16}) {
    const auto sys = base.coarsened(c);
    logh.push_back(std::log(sys.step()));
    loge.push_back(std::log((integrate_mild(sys, x, 2.0).final_state() - ref).norm()));
  }
  EXPECT_GT(fit_slope(logh, loge), 0.5);
}

TEST(MildIntegrator, StepDoublingEstimateTracksError) {
  SpectralModel m({0.8, -1.0}, {0});
  const auto f = make_sine(dct_matrix(2), 0.5);
  const auto base = multiplicative_system(m, f, 0.0, 2.0, 1e-4, 2);
  Vector x(2);
  x << 0.5, -1.0;
  const Vector ref = integrate_mild(base, x, 2.0).final_state();
  const auto sys = base.coarsened(20);
  const auto est = integrate_mild_estimated(sys, x, 2.0);
  const double err = (est.fine.final_state() - ref).norm();
  EXPECT_GT(est.final_error, 0.5 * err);
  EXPECT_LT(est.final_error, 2.0 * err);
}

TEST(MildIntegrator, AlignmentAndCoverage) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto sys = ConjugatedSystem::deterministic(m, make_zero(2, 0.1), TimeGrid(0.0, 1.0, 0.1));
  EXPECT_THROW(integrate_mild(sys, Vector::Ones(2), 0.55), AlignmentError);
  EXPECT_THROW(integrate_mild(sys, Vector::Ones(2), 2.0), InsufficientPathError);
}

TEST(Cocycle, ExactUnderReuse) {
  SpectralModel m({1.0, -0.5, -2.0}, {0});
  const auto sys = multiplicative_system(m, make_sine(dct_matrix(3), 0.4), 0.0, 6.0, 0.01, 21);
  Vector x(3);
  x << 0.3, 1.0, -0.7;
  EXPECT_EQ(cocycle_check(sys, x, 0.0, 2.0), 0.0);
  EXPECT_EQ(cocycle_check(sys, x, 2.0, 0.0), 0.0);
  EXPECT_EQ(cocycle_check(sys, x, 1.37, 2.5), 0.0);
  EXPECT_EQ(cocycle_check(sys, x, 3.0, 3.0), 0.0);
}

TEST(Cocycle, RecomputedOuWithinTolerance) {
  SpectralModel m({1.0, -0.5, -2.0}, {0});
  const auto f = make_sine(dct_matrix(3), 0.4);
  const double h = 0.01;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto path = WienerPath::sample(TimeGrid(-kDefaultOuTruncation, 6.0, h), 1, seed);
    const auto ou = ou_trajectory(path, TimeGrid(0.0, 6.0, h));
    const auto sys = ConjugatedSystem::multiplicative(m, f, ou);
    const double s = 2.0, t = 3.0;
    const auto shifted_path = path.shift(s);
    const auto ou2 = ou_trajectory(shifted_path, TimeGrid(0.0, t, h));
    const auto sys2 = ConjugatedSystem::multiplicative(m, f, ou2);
    Vector x(3);
    x << 0.3, 1.0, -0.7;
    const double defect = cocycle_defect(sys, sys2, x, s, t);
    double dz = 0.0;
    for (std::int64_t k = 0; k <= 300; ++k) dz = std::max(dz, std::abs(sys.z_index(200 + k) - sys2.z_index(k)));
    EXPECT_LE(dz, ou.error_bound() + ou2.error_bound() + 1e-12);
    const auto mid = integrate_mild(sys, x, s).final_state();
    const double tol = cocycle_tolerance(sys.shifted(s), integrate_mild(sys.shifted(s), mid, t),
                                         ou.error_bound() + ou2.error_bound());
    EXPECT_LE(defect, tol) << "seed " << seed;
  }
}

TEST(Stratonovich, GeometricBrownianClosedForm) {
  SpectralModel m({0.0}, {}, 1.0, 1.0, 0.0);
  const auto F = make_zero(1, 0.1);
  const auto fine = WienerPath::sample(TimeGrid(0.0, 1.0, 1e-4), 1, 31);
  std::vector<double> logh, loge;
  for (int f : {10, 20, 40, 80}) {
    const auto p = fine.coarsened(f);
    const auto tr = integrate_stratonovich(m, F, p, Vector::Ones(1), 1.0);
    double e = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      e = std::max(e, std::abs(tr.state(i)(0) - std::exp(p.at_index(0, static_cast<std::int64_t>(i)))));
    }
    logh.push_back(std::log(p.grid().step()));
    loge.push_back(std::log(e));
  }
  EXPECT_GT(fit_slope(logh, loge), 0.8);
}

TEST(Stratonovich, ZeroSolutionStaysZero) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto p = WienerPath::sample(TimeGrid(0.0, 2.0, 0.01), 1, 2);
  const auto tr = integrate_stratonovich(m, make_sine(dct_matrix(2), 0.3), p, Vector::Zero(2), 2.0);
  EXPECT_EQ(tr.states.norm(), 0.0);
  const auto p2 = WienerPath::sample(TimeGrid(0.0, 2.0, 0.01), 2, 2);
  EXPECT_THROW(integrate_stratonovich(m, make_zero(2, 0.1), p2, Vector::Zero(2), 2.0), ConfigurationError);
}

// T^{-1}(theta_t w, u(t, w, T(w, x0))) against the Stratonovich solution for a
// nonlinear multiplicative system.
TEST(Conjugacy, NonlinearMultiplicativeGapShrinks) {
  SpectralModel m({0.5, -1.0}, {0});
  const auto f = make_sine(dct_matrix(2), 0.8);
  const double hf = 1e-4, T = 1.0;
  const auto path = WienerPath::sample(TimeGrid(-kDefaultOuTruncation, T, hf), 1, 77);
  const auto ou = ou_trajectory(path, TimeGrid(0.0, T, hf));
  const auto base = ConjugatedSystem::multiplicative(m, f, ou);
  Vector x(2);
  x << 1.0, -2.0;
  std::vector<double> logh, loge;
  for (int c : {80, 40, 20, 10}) {
    const auto sys = base.coarsened(c);
    const auto mild = integrate_mild(sys, sys.transform(0.0, x, Direction::forward), T);
    const auto ref = integrate_stratonovich(m, f, path.coarsened(c), x, T);
    double gap = 0.0;
    for (std::size_t i = 0; i < mild.size(); ++i) {
      const Vector back = sys.transform(mild.grid.time(i), mild.state(i), Direction::inverse);
      gap = std::max(gap, (back - ref.state(i)).norm());
    }
    logh.push_back(std::log(sys.step()));
    loge.push_back(std::log(gap));
  }
  EXPECT_GT(fit_slope(logh, loge), 0.5);
  EXPECT_LT(std::exp(loge.back()), 0.05);
}

TEST(Conjugacy, AdditiveLinearGapShrinks) {
  SpectralModel m({0.7, -1.2}, {0});
  const auto F = make_zero(2, 0.1);
  const double hf = 1e-4, T = 1.0;
  const auto path = WienerPath::sample(TimeGrid(-45.0, 45.0, hf), 2, 5);
  const auto us = linear_stationary_solution(m, path, TimeGrid(0.0, T, hf));
  const auto base = ConjugatedSystem::additive(m, F, us);
  Vector x(2);
  x << 0.3, 0.4;
  std::vector<double> logh, loge;
  for (int c : {80, 40, 20, 10}) {
    const auto sys = base.coarsened(c);
    const auto mild = integrate_mild(sys, sys.transform(0.0, x, Direction::forward), T);
    const auto ref = integrate_additive_reference(m, F, path.coarsened(c), x, T);
    double gap = 0.0;
    for (std::size_t i = 0; i < mild.size(); ++i) {
      gap = std::max(gap, (sys.transform(mild.grid.time(i), mild.state(i), Direction::inverse) - ref.state(i)).norm());
    }
    logh.push_back(std::log(sys.step()));
    loge.push_back(std::log(gap));
  }
  EXPECT_GT(fit_slope(logh, loge), 0.5);
}
