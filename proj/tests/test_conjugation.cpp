#include "stoman/conjugation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace stoman;
using stoman::testing::multiplicative_system;

namespace {

OUSample constant_ou(const TimeGrid& g, double z) {
  return OUSample(GridSeries<double>(g, std::vector<double>(g.size(), z)), 0.0, 0.0, 0.0);
}

}  // namespace

TEST(Transform, ScalarScaling) {
  const TimeGrid g(0.0, 1.0, 0.5);
  SpectralModel m({1.0, -1.0}, {0});
  const auto sys = ConjugatedSystem::multiplicative(m, make_zero(2, 0.1), constant_ou(g, std::log(2.0)));
  Vector x(2);
  x << 4.0, 2.0;
  const Vector y = sys.transform(0.5, x, Direction::forward);
  EXPECT_NEAR(y(0), 2.0, 1e-15);
  EXPECT_NEAR(y(1), 1.0, 1e-15);
  EXPECT_NEAR((sys.transform(0.5, y, Direction::inverse) - x).norm(), 0.0, 1e-15);
  const auto id = ConjugatedSystem::multiplicative(m, make_zero(2, 0.1), constant_ou(g, 0.0));
  EXPECT_EQ(id.transform(0.0, x, Direction::forward), x);
  EXPECT_THROW(sys.transform(0.25, x, Direction::forward), AlignmentError);
}

TEST(Transform, RoundTripWithinTwoUlps) {
  SpectralModel m({1.0, -1.0, -2.0}, {0});
  const auto sys = multiplicative_system(m, make_zero(3, 0.1), 0.0, 5.0, 0.01, 7);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0.0, 10.0);
  for (int r = 0; r < 200; ++r) {
    Vector x(3);
    for (int j = 0; j < 3; ++j) x(j) = nd(gen);
    const double t = 0.01 * (r % 500);
    const Vector back = sys.transform(t, sys.transform(t, x, Direction::forward), Direction::inverse);
    for (int j = 0; j < 3; ++j) {
      EXPECT_LE(std::abs(back(j) - x(j)), 2.0 * std::numeric_limits<double>::epsilon() * std::abs(x(j)));
    }
  }
}

TEST(Transform, AdditiveTranslation) {
  const TimeGrid g(0.0, 1.0, 0.5);
  SpectralModel m({1.0, -1.0}, {0});
  Vector us(2);
  us << 1.0, 0.0;
  const auto sys = ConjugatedSystem::additive(
      m, make_zero(2, 0.1), StationarySample{GridSeries<Vector>(g, std::vector<Vector>(g.size(), us)), 0.0});
  const Vector y = sys.transform(0.0, Vector::Zero(2), Direction::forward);
  EXPECT_EQ(y(0), -1.0);
  EXPECT_EQ(y(1), 0.0);
}

TEST(ConjugatedG, LinearFIsUnchanged) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto f = make_linear(swap_matrix(2), 0.3);
  const auto sys = multiplicative_system(m, f, 0.0, 2.0, 0.01, 3);
  Vector u(2);
  u << 0.7, -1.3;
  for (double t : {0.0, 0.5, 2.0}) EXPECT_NEAR((sys.G(t, u) - f(u)).norm(), 0.0, 1e-15);
}

TEST(ConjugatedG, ZeroFGivesZeroG) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto sys = multiplicative_system(m, make_zero(2, 0.2), 0.0, 1.0, 0.01, 3);
  EXPECT_EQ(sys.G(0.5, Vector::Ones(2)).norm(), 0.0);
}

TEST(ConjugatedG, SineAtLog2) {
  const TimeGrid g(0.0, 1.0, 0.5);
  SpectralModel m({1.0, -1.0}, {0});
  const auto f = make_sine(Matrix::Identity(2, 2), 1.0);
  const auto sys = ConjugatedSystem::multiplicative(m, f, constant_ou(g, std::log(2.0)));
  Vector u(2);
  u << 2.0 * std::numbers::pi, 0.0;
  const Vector v = sys.G(0.0, u);
  EXPECT_NEAR(v(0), 0.0, 1e-15);
  EXPECT_EQ(v(1), 0.0);
  // e^{-z} F(e^{z} u) at a generic point: (1/2) sin(2 * 0.3).
  u << 0.3, 0.0;
  EXPECT_NEAR(sys.G(0.0, u)(0), 0.5 * std::sin(0.6), 1e-15);
}

TEST(ConjugatedG, LipschitzConstantPreserved) {
  SpectralModel m({1.0, -0.5, -1.0}, {0});
  const auto f = make_sine(dct_matrix(3), 0.4);
  const auto sys = multiplicative_system(m, f, 0.0, 3.0, 0.01, 5);
  const Box box = Box::cube(3, 3.0);
  for (double t : {0.0, 1.0, 2.5}) {
    // Same probe pairs for F and G: measured constants agree.
    const auto pg = probe_lipschitz([&](const Vector& u) { return sys.G(t, u); }, sys.lip(), 3000, box, 9);
    EXPECT_FALSE(pg.violated) << "t = " << t;
    EXPECT_LE(pg.measured, f.lip() * (1.0 + 1e-6));
    EXPECT_EQ(sys.G(t, Vector::Zero(3)).norm(), 0.0);
  }
}

TEST(ConjugatedG, DerivativesMatchFiniteDifferences) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto f = make_cubic(dct_matrix(2), 0.3, 2.0);
  const auto sys = multiplicative_system(m, f, 0.0, 1.0, 0.01, 2);
  Vector u(2), a(2), b(2);
  u << 0.4, -0.9;
  a << 1.0, 0.3;
  b << -0.2, 0.7;
  const std::int64_t k = 50;
  const double h = 1e-5;
  const Vector d1 = sys.derivative_index(k, u, std::vector<Vector>{a});
  const Vector fd1 = (sys.G_index(k, u + h * a) - sys.G_index(k, u - h * a)) / (2 * h);
  EXPECT_NEAR((d1 - fd1).norm(), 0.0, 1e-8);
  const Vector d2 = sys.derivative_index(k, u, std::vector<Vector>{a, b});
  const Vector fd2 = (sys.derivative_index(k, u + h * b, std::vector<Vector>{a}) -
                      sys.derivative_index(k, u - h * b, std::vector<Vector>{a})) /
                     (2 * h);
  EXPECT_NEAR((d2 - fd2).norm(), 0.0, 1e-7);
  EXPECT_NEAR((sys.jacobian_index(k, u) * a - d1).norm(), 0.0, 1e-15);
}

TEST(ConjugatedSystem, ShiftReindexesNoise) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto sys = multiplicative_system(m, make_zero(2, 0.1), -2.0, 3.0, 0.01, 8);
  const auto s = sys.shifted(1.0);
  EXPECT_EQ(s.z(0.0), sys.z(1.0));
  EXPECT_EQ(s.z(-3.0), sys.z(-2.0));
  EXPECT_EQ(sys.coarsened(5).z_index(3), sys.z_index(15));
}

TEST(ConjugatedSystem, DimensionMismatchRejected) {
  SpectralModel m({1.0, -1.0}, {0});
  EXPECT_THROW(ConjugatedSystem::deterministic(m, make_zero(3, 0.1), TimeGrid(0, 1, 0.1)), ConfigurationError);
}

TEST(StationarySolution, ZeroNoise) {
  SpectralModel m({1.0, -1.0}, {0});
  const TimeGrid pg(-45.0, 45.0, 0.01);
  const auto w = WienerPath::from_function(pg, [](double) { return 0.0; }, 2);
  const auto us = linear_stationary_solution(m, w, TimeGrid(-1.0, 1.0, 0.01));
  for (const auto& v : us.values.values()) EXPECT_EQ(v.norm(), 0.0);
}

// u*(t) = int_{-inf}^t e^{-(t-s)} ds = 1 for omega(s) = s, lambda = -1; for
// lambda = +1, u*(t) = -int_t^inf e^{(t-s)} ds = -1.
TEST(StationarySolution, RampOracle) {
  SpectralModel m({1.0, -1.0}, {0});
  const TimeGrid pg(-45.0, 45.0, 0.01);
  const auto w = WienerPath::from_function(pg, [](double s) { return s; }, 2);
  const auto us = linear_stationary_solution(m, w, TimeGrid(-2.0, 2.0, 0.01));
  for (const auto& v : us.values.values()) {
    EXPECT_NEAR(v(1), 1.0, 1e-12);
    EXPECT_NEAR(v(0), -1.0, 1e-12);
  }
}

// Mild form u*(t) = e^{lambda (t-s)} u*(s) + int_s^t e^{lambda (t-r)} dw(r),
// with the stochastic integral by parts and trapezoid:
//   w(t) - e^{lambda (t-s)} w(s) + lambda int_s^t e^{lambda (t-r)} w(r) dr.
TEST(StationarySolution, MildFormResidual) {
  SpectralModel m({0.5, -1.5}, {0});
  const double h = 1e-3;
  const TimeGrid pg(-42.0, 85.0, h);
  const auto w = WienerPath::sample(pg, 2, 12);
  const auto us = linear_stationary_solution(m, w, TimeGrid(0.0, 5.0, h));
  for (std::size_t j = 0; j < 2; ++j) {
    const double lam = m.eigenvalue(j);
    const std::int64_t ks = 1000, kt = 4000;
    double integral = 0.0;
    for (std::int64_t k = ks; k < kt; ++k) {
      const double fa = std::exp(lam * (kt - k) * h) * w.at_index(j, k);
      const double fb = std::exp(lam * (kt - k - 1) * h) * w.at_index(j, k + 1);
      integral += 0.5 * h * (fa + fb);
    }
    const double stoch =
        w.at_index(j, kt) - std::exp(lam * (kt - ks) * h) * w.at_index(j, ks) + lam * integral;
    const double lhs = us.values.at_index(kt)(j) - std::exp(lam * (kt - ks) * h) * us.values.at_index(ks)(j);
    EXPECT_NEAR(lhs, stoch, 1e-3) << "mode " << j;
  }
  EXPECT_LT(us.truncation_bound, 1e-6);
}

TEST(StationarySolution, CoverageAndZeroEigenvalue) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto w = WienerPath::sample(TimeGrid(-10.0, 10.0, 0.01), 2, 1);
  EXPECT_THROW(linear_stationary_solution(m, w, TimeGrid(0.0, 1.0, 0.01)), InsufficientPathError);
  SpectralModel z({0.0}, {}, 1.0, 1.0, 0.0);
  const auto w1 = WienerPath::sample(TimeGrid(-50.0, 50.0, 0.01), 1, 1);
  EXPECT_THROW(linear_stationary_solution(z, w1, TimeGrid(0.0, 1.0, 0.01)), InvalidModelError);
}

TEST(ConjugatedG, AdditiveFormula) {
  SpectralModel m({1.0, -1.0}, {0});
  const auto f = make_sine(Matrix::Identity(2, 2), 1.0);
  const auto w = WienerPath::sample(TimeGrid(-45.0, 45.0, 0.01), 2, 4);
  const auto sys = ConjugatedSystem::additive(m, f, linear_stationary_solution(m, w, TimeGrid(0.0, 1.0, 0.01)));
  Vector u(2);
  u << 0.2, -0.4;
  const Vector us = sys.ustar_index(30);
  EXPECT_NEAR((sys.G_index(30, u) - (f(u + us) - f(us))).norm(), 0.0, 0.0);
  EXPECT_EQ(sys.G_index(30, Vector::Zero(2)).norm(), 0.0);
}
