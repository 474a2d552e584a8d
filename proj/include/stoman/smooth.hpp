#pragma once

// Derivatives of the Perron fixed point and of the manifold graphs with
// respect to the base point.
//
// D_xi u solves the linear equation V = S + T V, where S(t) = e^{At + Z_t}
// restricted to the base subspace and T is the Perron operator with
// coefficient D_u G(theta_s w, u(s; xi)). Order k >= 2 solves the same
// equation with zero boundary data and the forcing
//   R_k(s) = sum over set partitions pi of {1..k} with |pi| >= 2 of
//            D^{|pi|} G(u(s)) [D^{|B|} u(s)]_{B in pi},
// the multivariate chain rule for D^k of s -> G(u(s; xi)).

#include "stoman/errors.hpp"
#include "stoman/linalg.hpp"
#include "stoman/model.hpp"
#include "stoman/perron.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stoman {

/// delta = min(0.1 (alpha - eta), 0.1 (eta - beta)).
inline double select_delta(const SpectralModel& model, double eta) {
  return std::min(0.1 * (model.alpha() - eta), 0.1 * (eta - model.beta()));
}

/// Weight exponent of the first-derivative space: eta - delta on [0, T]
/// (stable kind), eta + delta on [-T, 0] (unstable kind).
inline double shifted_eta(ManifoldKind kind, double eta, double delta) {
  return kind == ManifoldKind::stable ? eta - delta : eta + delta;
}

/// Margin inequalities for the first derivative: the shifted exponents
/// eta -+ delta and eta -+ 2 delta stay inside (beta, alpha) and keep the gap
/// quantity below 1. Throws GapViolation naming the first failure.
inline void check_delta_margins(const SpectralModel& model, double lip, double eta, double delta, ManifoldKind kind) {
  const double a = model.alpha();
  const double b = model.beta();
  const char* sgn = kind == ManifoldKind::stable ? "-" : "+";
  if (!(delta > 0.0)) throw GapViolation("derivative: delta must be positive, got " + std::to_string(delta));
  for (int m : {1, 2}) {
    const double e = shifted_eta(kind, eta, m * delta);
    std::ostringstream os;
    if (!(e > b)) {
      os << "derivative margin: eta " << sgn << " " << m << "*delta = " << e << " <= beta = " << b;
      throw GapViolation(os.str());
    }
    if (!(e < a)) {
      os << "derivative margin: eta " << sgn << " " << m << "*delta = " << e << " >= alpha = " << a;
      throw GapViolation(os.str());
    }
    const double g = gap_quantity(model.K(), lip, a, b, e);
    if (!(g < 1.0)) {
      os << "derivative margin: K*lip*(1/(eta" << sgn << m << "*delta-beta) + 1/(alpha-eta" << sgn << m
         << "*delta)) = " << g << " >= 1";
      throw GapViolation(os.str());
    }
  }
}

/// Order-k derivative of the fixed point along the solver grid. Block i
/// (columns i*p^k .. (i+1)*p^k - 1 of `data`) holds D^k u(t_i)[e_{j_1}, ..,
/// e_{j_k}] in column j_1 + p j_2 + ... + p^{k-1} j_k, where e_j runs over
/// the base-subspace coordinates in `base_modes`.
struct DerivativePath {
  ManifoldKind kind = ManifoldKind::stable;
  int order = 1;
  TimeGrid grid{0.0, 0.0, 1.0};
  std::vector<std::size_t> base_modes;
  Matrix data;
  /// Weight exponent of the norm: eta -+ delta for k = 1, k eta for k >= 2.
  double eta_shifted = 0.0;
  double delta = 0.0;
  /// Bound on the operator norm of T in that norm.
  double contraction_bound = 0.0;
  int iterations = 0;
  std::vector<double> differences;
  std::vector<double> ratios;
  /// Weighted tail bound at t = 0 (same policy as the Perron solver).
  double tail_bound = 0.0;

  std::size_t columns() const {
    std::size_t c = 1;
    for (int r = 0; r < order; ++r) c *= base_modes.size();
    return c;
  }
  auto block(std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(columns());
    return data.middleCols(static_cast<Eigen::Index>(i) * c, c);
  }
  /// Column for the multi-index (j_1, .., j_k) at grid position i.
  Vector column(std::size_t i, const std::vector<std::size_t>& js) const {
    std::size_t idx = 0, w = 1;
    for (std::size_t j : js) {
      idx += j * w;
      w *= base_modes.size();
    }
    return data.col(static_cast<Eigen::Index>(i * columns() + idx));
  }
};

namespace detail {

/// Set partitions of {0..k-1} as block lists, via restricted growth strings.
inline std::vector<std::vector<std::vector<int>>> set_partitions(int k) {
  std::vector<std::vector<std::vector<int>>> out;
  std::vector<int> a(static_cast<std::size_t>(k), 0);
  while (true) {
    int blocks = 0;
    for (int v : a) blocks = std::max(blocks, v + 1);
    std::vector<std::vector<int>> p(static_cast<std::size_t>(blocks));
    for (int r = 0; r < k; ++r) p[static_cast<std::size_t>(a[static_cast<std::size_t>(r)])].push_back(r);
    out.push_back(std::move(p));
    // Next restricted growth string.
    int r = k - 1;
    for (; r > 0; --r) {
      int mx = 0;
      for (int q = 0; q < r; ++q) mx = std::max(mx, a[static_cast<std::size_t>(q)]);
      if (a[static_cast<std::size_t>(r)] <= mx) break;
    }
    if (r <= 0) break;
    ++a[static_cast<std::size_t>(r)];
    for (int q = r + 1; q < k; ++q) a[static_cast<std::size_t>(q)] = 0;
  }
  return out;
}

}  // namespace detail

/// Linear derivative solver attached to one Perron fixed point.
class DerivativeSolver {
 public:
  DerivativeSolver(const PerronSolver& solver, PerronSolution fixed_point, std::optional<double> delta = std::nullopt)
      : solver_(&solver), fp_(std::move(fixed_point)) {
    const SpectralModel& m = solver.model();
    if (solver.system().nonlinearity().smoothness_order() < 1) {
      throw ConfigurationError("derivative: nonlinearity is not differentiable");
    }
    delta_ = delta.value_or(select_delta(m, solver.eta()));
    check_delta_margins(m, solver.system().lip(), solver.eta(), delta_, solver.kind());
    base_modes_ = solver.kind() == ManifoldKind::stable ? m.minus_modes() : m.plus_modes();
    const std::size_t N1 = solver.grid().size();
    jac_.reserve(N1);
    for (std::size_t i = 0; i < N1; ++i) {
      jac_.push_back(solver.system().jacobian_index(solver.grid().first_index() + static_cast<std::int64_t>(i),
                                                    fp_.path.state(i)));
    }
  }

  const PerronSolver& perron() const noexcept { return *solver_; }
  const PerronSolution& fixed_point() const noexcept { return fp_; }
  double delta() const noexcept { return delta_; }
  const std::vector<std::size_t>& base_modes() const noexcept { return base_modes_; }

  /// D_xi u: one column per base-subspace coordinate.
  DerivativePath first() const {
    const PerronSolver& s = *solver_;
    const SpectralModel& m = s.model();
    DerivativePath d = blank(1);
    d.delta = delta_;
    d.eta_shifted = shifted_eta(s.kind(), s.eta(), delta_);
    d.contraction_bound = gap_quantity(m.K(), s.system().lip(), m.alpha(), m.beta(), d.eta_shifted);
    std::vector<Vector> boundary;
    for (std::size_t j : base_modes_) boundary.push_back(Vector::Unit(static_cast<Eigen::Index>(m.dim()), j));
    solve_linear(d, boundary, nullptr);
    return d;
  }

  /// D^k_xi u for k >= 2 given all lower orders (lower[r] has order r + 1).
  DerivativePath higher(int k, const std::vector<DerivativePath>& lower) const {
    const PerronSolver& s = *solver_;
    const SpectralModel& m = s.model();
    if (k < 2) throw ConfigurationError("higher derivative: order must be >= 2");
    if (static_cast<int>(lower.size()) < k - 1) {
      throw ConfigurationError("higher derivative: all orders below " + std::to_string(k) + " are required");
    }
    for (int r = 0; r < k - 1; ++r) {
      if (lower[static_cast<std::size_t>(r)].order != r + 1) {
        throw ConfigurationError("higher derivative: lower[" + std::to_string(r) + "] has the wrong order");
      }
    }
    if (s.system().nonlinearity().smoothness_order() < k) {
      throw ConfigurationError("higher derivative: nonlinearity is only C^" +
                               std::to_string(s.system().nonlinearity().smoothness_order()));
    }
    const GapReport gap = check_gap(m, s.system().lip(), s.eta(), k);
    if (!gap.admissible) throw GapViolation("order-" + std::to_string(k) + " derivative: " + gap.failure);

    DerivativePath d = blank(k);
    d.delta = delta_;
    d.eta_shifted = k * s.eta();
    d.contraction_bound = gap.per_order_values.back();

    const std::size_t cols = d.columns();
    const std::size_t p = base_modes_.size();
    const std::size_t N1 = s.grid().size();
    const auto partitions = detail::set_partitions(k);
    const auto n = static_cast<Eigen::Index>(m.dim());
    Matrix R = Matrix::Zero(n, static_cast<Eigen::Index>(cols * N1));
    std::vector<std::size_t> js(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < N1; ++i) {
      const std::int64_t gk = s.grid().first_index() + static_cast<std::int64_t>(i);
      const Vector u = fp_.path.state(i);
      for (std::size_t c = 0; c < cols; ++c) {
        std::size_t rem = c;
        for (std::size_t r = 0; r < js.size(); ++r) {
          js[r] = rem % p;
          rem /= p;
        }
        Vector acc = Vector::Zero(n);
        for (const auto& part : partitions) {
          if (part.size() < 2) continue;
          std::vector<Vector> dirs;
          dirs.reserve(part.size());
          for (const auto& blk : part) {
            std::vector<std::size_t> sub;
            for (int e : blk) sub.push_back(js[static_cast<std::size_t>(e)]);
            dirs.push_back(lower[blk.size() - 1].column(i, sub));
          }
          acc += s.system().derivative_index(gk, u, dirs);
        }
        R.col(static_cast<Eigen::Index>(i * cols + c)) = acc;
      }
    }
    std::vector<Vector> boundary(cols, Vector::Zero(n));
    solve_linear(d, boundary, &R);
    return d;
  }

 private:
  DerivativePath blank(int k) const {
    DerivativePath d;
    d.kind = solver_->kind();
    d.order = k;
    d.grid = solver_->grid();
    d.base_modes = base_modes_;
    return d;
  }

  double weighted(const Matrix& data, std::size_t cols, double mu) const {
    const PerronSolver& s = *solver_;
    double out = 0.0;
    for (std::size_t i = 0; i < s.grid().size(); ++i) {
      const double w = std::exp(-mu * s.grid().time(i) - s.Z()[i]);
      const double b = data.middleCols(static_cast<Eigen::Index>(i * cols), static_cast<Eigen::Index>(cols)).norm();
      out = std::max(out, w * b);
    }
    return out;
  }

  // Fixed point of V = propagate(boundary, J V + R), column by column.
  void solve_linear(DerivativePath& d, const std::vector<Vector>& boundary, const Matrix* R) const {
    const PerronSolver& s = *solver_;
    const auto n = static_cast<Eigen::Index>(s.model().dim());
    const std::size_t N1 = s.grid().size();
    const std::size_t cols = boundary.size();
    Matrix V(n, static_cast<Eigen::Index>(cols * N1));
    Matrix g(n, static_cast<Eigen::Index>(N1));

    auto sweep = [&](const Matrix* prev, Matrix& out) {
      for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t i = 0; i < N1; ++i) {
          const auto col = static_cast<Eigen::Index>(i * cols + c);
          Vector gi = Vector::Zero(n);
          if (prev) gi = jac_[i] * prev->col(col);
          if (R) gi += R->col(col);
          g.col(static_cast<Eigen::Index>(i)) = gi;
        }
        const Matrix p = s.propagate(boundary[c], g);
        for (std::size_t i = 0; i < N1; ++i) {
          out.col(static_cast<Eigen::Index>(i * cols + c)) = p.col(static_cast<Eigen::Index>(i));
        }
      }
    };

    sweep(nullptr, V);
    const PerronConfig& cfg = s.config();
    bool converged = false;
    Matrix next(n, V.cols());
    for (int it = 1; it <= cfg.max_iterations; ++it) {
      sweep(&V, next);
      const double diff = weighted(next - V, cols, d.eta_shifted);
      if (!d.differences.empty() && d.differences.back() > 0.0) d.ratios.push_back(diff / d.differences.back());
      d.differences.push_back(diff);
      V.swap(next);
      d.iterations = it;
      if (diff < cfg.fixed_point_tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      const double ratio = d.ratios.empty() ? std::numeric_limits<double>::quiet_NaN() : d.ratios.back();
      throw ConvergenceFailure("derivative: no convergence in " + std::to_string(cfg.max_iterations) + " iterations",
                               ratio, cfg.max_iterations);
    }
    const SpectralModel& m = s.model();
    const double vnorm = weighted(V, cols, d.eta_shifted);
    const double rate = s.kind() == ManifoldKind::stable ? m.alpha() - d.eta_shifted : d.eta_shifted - m.beta();
    d.tail_bound = m.K() * s.system().lip() * vnorm * std::exp(-rate * cfg.T_max) / rate;
    d.data = std::move(V);
  }

  const PerronSolver* solver_;
  PerronSolution fp_;
  double delta_ = 0.0;
  std::vector<std::size_t> base_modes_;
  std::vector<Matrix> jac_;
};

/// D_xi u(.; xi) for the solver's kind.
inline DerivativePath solve_derivative(const Vector& xi, const PerronSolver& solver,
                                       std::optional<double> delta = std::nullopt) {
  return DerivativeSolver(solver, solver.solve(xi), delta).first();
}

/// Derivatives of orders 1..k at xi (element r has order r + 1).
inline std::vector<DerivativePath> solve_derivatives(const Vector& xi, const PerronSolver& solver, int k) {
  if (k < 1) throw ConfigurationError("derivatives: order must be >= 1");
  const GapReport gap = check_gap(solver.model(), solver.system().lip(), solver.eta(), k);
  if (!gap.admissible) throw GapViolation("order-" + std::to_string(k) + " derivative: " + gap.failure);
  const DerivativeSolver ds(solver, solver.solve(xi));
  std::vector<DerivativePath> out{ds.first()};
  for (int r = 2; r <= k; ++r) out.push_back(ds.higher(r, out));
  return out;
}

/// Complementary rows at t = 0: D^k h(xi) as a q x p^k matrix (rows follow
/// the complementary modes in ascending order).
inline Matrix graph_derivative(const DerivativePath& d, const SpectralModel& model) {
  const auto& rows = d.kind == ManifoldKind::stable ? model.plus_modes() : model.minus_modes();
  const std::size_t origin = d.kind == ManifoldKind::stable ? 0 : d.grid.size() - 1;
  const Matrix b = d.block(origin);
  Matrix out(static_cast<Eigen::Index>(rows.size()), b.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = b.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

/// Central-difference Jacobian of the graph map at xi, step
/// 1e-5 |xi| + 1e-7 (q x p, same layout as graph_derivative).
inline Matrix fd_graph_jacobian(const PerronSolver& solver, const Vector& xi, double rel = 1e-5, double abs = 1e-7) {
  const SpectralModel& m = solver.model();
  const auto& cols = solver.kind() == ManifoldKind::stable ? m.minus_modes() : m.plus_modes();
  const auto& rows = solver.kind() == ManifoldKind::stable ? m.plus_modes() : m.minus_modes();
  const double h = rel * xi.norm() + abs;
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const Vector e = Vector::Unit(static_cast<Eigen::Index>(m.dim()), cols[c]);
    const Vector d = (solver.graph(xi + h * e) - solver.graph(xi - h * e)) / (2.0 * h);
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d(rows[r]);
  }
  return out;
}

/// Central second difference of the graph: D^2 h(xi)[e_a, e_b] for base
/// coordinates a, b (positions in the base-mode list), as a full vector.
inline Vector fd_graph_second(const PerronSolver& solver, const Vector& xi, std::size_t a, std::size_t b,
                              double step) {
  const SpectralModel& m = solver.model();
  const auto& cols = solver.kind() == ManifoldKind::stable ? m.minus_modes() : m.plus_modes();
  const Vector ea = Vector::Unit(static_cast<Eigen::Index>(m.dim()), cols.at(a));
  const Vector eb = Vector::Unit(static_cast<Eigen::Index>(m.dim()), cols.at(b));
  const Vector pp = solver.graph(xi + step * ea + step * eb);
  const Vector pm = solver.graph(xi + step * ea - step * eb);
  const Vector mp = solver.graph(xi - step * ea + step * eb);
  const Vector mm = solver.graph(xi - step * ea - step * eb);
  return (pp - pm - mp + mm) / (4.0 * step * step);
}

/// Weighted distance sup_i e^{-mu t_i - Z_i} |V_i - W_i|_F between two
/// derivative paths of the same solver.
inline double derivative_distance(const PerronSolver& solver, const DerivativePath& a, const DerivativePath& b) {
  if (a.data.cols() != b.data.cols() || a.order != b.order) {
    throw AlignmentError("derivative distance: paths have different shapes");
  }
  double out = 0.0;
  for (std::size_t i = 0; i < solver.grid().size(); ++i) {
    const double w = std::exp(-a.eta_shifted * solver.grid().time(i) - solver.Z()[i]);
    out = std::max(out, w * (a.block(i) - b.block(i)).norm());
  }
  return out;
}

/// Max over `samples` points xi in the ball of the given radius around xi0
/// (within the base subspace) of the weighted distance between D_xi u and
/// D_xi0 u.
inline double continuity_probe(const PerronSolver& solver, const Vector& xi0, double radius, std::size_t samples,
                               std::uint64_t seed = 0) {
  solver.check_base_point(xi0);
  if (!(radius >= 0.0)) throw ConfigurationError("continuity probe: radius must be >= 0");
  const DerivativePath d0 = solve_derivative(xi0, solver);
  if (radius == 0.0) return 0.0;
  const SpectralModel& m = solver.model();
  const auto& modes = solver.kind() == ManifoldKind::stable ? m.minus_modes() : m.plus_modes();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double out = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Vector dir = Vector::Zero(static_cast<Eigen::Index>(m.dim()));
    for (std::size_t j : modes) dir(static_cast<Eigen::Index>(j)) = nd(gen);
    if (dir.norm() == 0.0) continue;
    const double r = radius * std::pow(ud(gen), 1.0 / static_cast<double>(modes.size()));
    const Vector xi = xi0 + r * dir / dir.norm();
    out = std::max(out, derivative_distance(solver, solve_derivative(xi, solver), d0));
  }
  return out;
}

/// Modulus-of-continuity table: (radius, probe) for radius0, radius0/2, ...
inline std::vector<std::pair<double, double>> continuity_table(const PerronSolver& solver, const Vector& xi0,
                                                               double radius0, int halvings, std::size_t samples,
                                                               std::uint64_t seed = 0) {
  std::vector<std::pair<double, double>> out;
  double r = radius0;
  for (int h = 0; h <= halvings; ++h, r *= 0.5) out.emplace_back(r, continuity_probe(solver, xi0, r, samples, seed));
  return out;
}

}  // namespace stoman
