#pragma once

// Lyapunov-Perron operators on exponentially weighted path spaces and the
// graph maps of the pseudo-stable and pseudo-unstable manifolds.
//
// Stable kind, t in [0, T]:
//   J(u, xi)(t) = e^{At + Z_t} xi + int_0^t e^{A(t-s) + Z_t - Z_s} P- G(s, u(s)) ds
//                               - int_t^T e^{A(t-s) + Z_t - Z_s} P+ G(s, u(s)) ds
// Unstable kind, t in [-T, 0]:
//   J(u, xi)(t) = e^{At + Z_t} xi - int_t^0 e^{A(t-s) + Z_t - Z_s} P+ G(s, u(s)) ds
//                               + int_{-T}^t e^{A(t-s) + Z_t - Z_s} P- G(s, u(s)) ds
// with Z_t = int_0^t z(theta_r w) dr. The semi-infinite integrals are cut at
// |t| = T and the dropped tail is bounded explicitly.

#include "stoman/conjugation.hpp"
#include "stoman/errors.hpp"
#include "stoman/linalg.hpp"
#include "stoman/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace stoman {

enum class ManifoldKind { stable, unstable };

inline const char* to_string(ManifoldKind k) { return k == ManifoldKind::stable ? "stable" : "unstable"; }

namespace detail {

/// Weights of int_0^h e^{mu r} p(r) dr for the linear p with p(0) = a
/// ("near" end) and p(h) = b ("far" end), x = mu h:
///   far  = h (x e^x - e^x + 1) / x^2
///   near = h (e^x - 1 - x) / x^2
struct EtdWeights {
  double propagate;
  double far;
  double near;
};

inline EtdWeights etd_weights(double x, double h) {
  const double ex = std::exp(x);
  if (std::abs(x) < 1e-2) {
    const double far = 0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x * (1.0 / 30.0 + x * (1.0 / 144.0 + x / 840.0))));
    const double near = 0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x * (1.0 / 720.0 + x / 5040.0))));
    return {ex, h * far, h * near};
  }
  const double em1 = std::expm1(x);
  return {ex, h * (x * ex - em1) / (x * x), h * (em1 - x) / (x * x)};
}

}  // namespace detail

struct PerronConfig {
  double eta = 0.0;
  double T_max = 20.0;
  double step = 1e-2;
  double fixed_point_tol = 1e-12;
  int max_iterations = 500;
  double tail_tol = 1e-8;

  /// Smallest T with e^{-(alpha - eta) T} <= tail_tol (stable) or
  /// e^{-(eta - beta) T} <= tail_tol (unstable).
  static double min_horizon(const SpectralModel& model, double eta, double tail_tol, ManifoldKind kind) {
    const double rate = kind == ManifoldKind::stable ? model.alpha() - eta : eta - model.beta();
    if (!(rate > 0.0)) throw GapViolation("perron config: eta must lie strictly between beta and alpha");
    if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw ConfigurationError("perron config: tail_tol must be in (0, 1)");
    return -std::log(tail_tol) / rate;
  }

  /// Config whose horizon is the smallest step multiple satisfying both the
  /// stable and the unstable tail requirement.
  static PerronConfig for_model(const SpectralModel& model, double eta, double step, double tail_tol = 1e-8,
                                double fixed_point_tol = 1e-12) {
    PerronConfig c;
    c.eta = eta;
    c.step = step;
    c.tail_tol = tail_tol;
    c.fixed_point_tol = fixed_point_tol;
    const double t = std::max(min_horizon(model, eta, tail_tol, ManifoldKind::stable),
                              min_horizon(model, eta, tail_tol, ManifoldKind::unstable));
    c.T_max = std::ceil(t / step - 1e-9) * step;
    return c;
  }

  void validate(const SpectralModel& model, double lip, ManifoldKind kind) const {
    if (!(step > 0.0)) throw ConfigurationError("perron config: step must be positive");
    if (!(T_max > 0.0)) throw ConfigurationError("perron config: T_max must be positive");
    if (!(fixed_point_tol > 0.0)) throw ConfigurationError("perron config: fixed_point_tol must be positive");
    if (max_iterations < 1) throw ConfigurationError("perron config: max_iterations must be >= 1");
    const GapReport gap = check_gap(model, lip, eta, 1);
    if (!gap.admissible) throw GapViolation("gap condition fails: " + gap.failure);
    const double need = min_horizon(model, eta, tail_tol, kind);
    if (T_max < need * (1.0 - 1e-12)) {
      std::ostringstream os;
      os << "perron config: T_max = " << T_max << " too short for tail_tol = " << tail_tol << " (" << to_string(kind)
         << " case needs T_max >= " << need << ")";
      throw ConfigurationError(os.str());
    }
  }
};

/// Path on the solver grid with its weight data. Column i of `states` is
/// the state at grid().time(i).
struct WeightedPath {
  TimeGrid grid{0.0, 0.0, 1.0};
  Matrix states;
  double eta = 0.0;
  /// Z at the grid points, shared with the solver that produced the path.
  std::shared_ptr<const std::vector<double>> Z;

  Vector state(std::size_t i) const { return states.col(static_cast<Eigen::Index>(i)); }
  Vector at(double t) const { return state(grid.position_of(t)); }
};

/// sup_i e^{-mu t_i - Z_i} |u_i| for columns u_i of `states`.
inline double weighted_sup(const TimeGrid& grid, const std::vector<double>& Z, const Matrix& states, double mu) {
  if (static_cast<std::size_t>(states.cols()) != grid.size() || Z.size() != grid.size()) {
    throw AlignmentError("weighted norm: path, grid and Z lengths differ");
  }
  double out = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = std::exp(-mu * grid.time(i) - Z[i]);
    out = std::max(out, w * states.col(static_cast<Eigen::Index>(i)).norm());
  }
  return out;
}

inline double weighted_norm(const WeightedPath& u) {
  if (!u.Z) throw AlignmentError("weighted norm: path carries no Z samples");
  return weighted_sup(u.grid, *u.Z, u.states, u.eta);
}

/// K lip (1/(eta - beta) + 1/(alpha - eta)).
inline double contraction_constant(const SpectralModel& model, double lip, double eta) {
  return gap_quantity(model.K(), lip, model.alpha(), model.beta(), eta);
}

/// Bound on the graph Lipschitz constant: K^2 lip / ((alpha - eta)(1 - rho))
/// for h^s, with (eta - beta) in place of (alpha - eta) for h^u.
inline double theoretical_graph_lipschitz(const SpectralModel& model, double lip, double eta, ManifoldKind kind) {
  const double rho = contraction_constant(model, lip, eta);
  const double gap = kind == ManifoldKind::stable ? model.alpha() - eta : eta - model.beta();
  return model.K() * model.K() * lip / (gap * (1.0 - rho));
}

/// Bound K / (1 - rho) on |u(.; xi) - u(.; xi')|_eta / |xi - xi'|.
inline double theoretical_path_lipschitz(const SpectralModel& model, double lip, double eta) {
  return model.K() / (1.0 - contraction_constant(model, lip, eta));
}

struct PerronSolution {
  WeightedPath path;
  Vector xi;
  /// Complementary component at t = 0: h(xi).
  Vector graph_value;
  int iterations = 0;
  /// |u_{n+1} - u_n|_eta per iteration.
  std::vector<double> differences;
  /// differences[n] / differences[n-1].
  std::vector<double> ratios;
  double rho = 0.0;
  /// |J(u) - u|_eta at the returned path.
  double residual = 0.0;
  /// rho/(1-rho) * last difference: bound on the distance to the exact
  /// fixed point of the discrete operator.
  double fixed_point_error_bound = 0.0;
  /// Dropped-tail bound of the operator at t = 0:
  /// K lip |u|_eta e^{-(alpha-eta) T} / (alpha - eta) (stable case).
  double tail_bound = 0.0;
  /// Bound on |u_T(0) - u_inf(0)| between the truncated and the untruncated
  /// fixed point (propagated through the contraction).
  double tail_error_bound = 0.0;
};

/// Discretized Lyapunov-Perron operator for one system, config and kind.
/// Construction precomputes the per-interval kernel weights; the solver can
/// then be reused for any number of base points.
class PerronSolver {
 public:
  PerronSolver(const ConjugatedSystem& system, PerronConfig config, ManifoldKind kind)
      : config_(config), kind_(kind), system_(prepare(system, config)) {
    const SpectralModel& m = system_.model();
    config_.validate(m, system_.lip(), kind_);
    rho_ = contraction_constant(m, system_.lip(), config_.eta);
    const std::int64_t n_steps = system_.grid().steps_in(config_.T_max, "T_max");
    grid_ = kind_ == ManifoldKind::stable ? TimeGrid::from_indices(0, n_steps, system_.step())
                                          : TimeGrid::from_indices(-n_steps, 0, system_.step());
    if (!system_.grid().covers(grid_)) {
      std::ostringstream os;
      os << "perron solver: noise samples cover [" << system_.grid().t_min() << ", " << system_.grid().t_max()
         << "], solver needs [" << grid_.t_min() << ", " << grid_.t_max() << "]";
      throw InsufficientPathError(os.str());
    }
    build_kernel();
  }

  const PerronConfig& config() const noexcept { return config_; }
  ManifoldKind kind() const noexcept { return kind_; }
  const ConjugatedSystem& system() const noexcept { return system_; }
  const SpectralModel& model() const noexcept { return system_.model(); }
  const TimeGrid& grid() const noexcept { return grid_; }
  double rho() const noexcept { return rho_; }
  double eta() const noexcept { return config_.eta; }
  const std::vector<double>& Z() const noexcept { return *Z_; }
  std::shared_ptr<const std::vector<double>> Z_ptr() const noexcept { return Z_; }
  /// Storage position of t = 0.
  std::size_t origin() const noexcept { return kind_ == ManifoldKind::stable ? 0 : grid_.size() - 1; }
  /// Subspace the base points live in.
  Sign base_sign() const noexcept { return kind_ == ManifoldKind::stable ? Sign::minus : Sign::plus; }

  WeightedPath make_path(Matrix states) const {
    if (static_cast<std::size_t>(states.rows()) != model().dim() ||
        static_cast<std::size_t>(states.cols()) != grid_.size()) {
      throw AlignmentError("perron solver: path does not match the solver grid");
    }
    return WeightedPath{grid_, std::move(states), config_.eta, Z_};
  }

  double norm(const Matrix& states) const { return weighted_sup(grid_, *Z_, states, config_.eta); }
  double norm(const Matrix& states, double mu) const { return weighted_sup(grid_, *Z_, states, mu); }

  void check_base_point(const Vector& xi) const {
    model().check_dim(xi);
    if (!lies_in(model(), xi, base_sign())) {
      throw InputError(std::string("perron solver: base point has a component outside ") +
                       (kind_ == ManifoldKind::stable ? "H-" : "H+"));
    }
  }

  /// Samples of G(theta_s w, u(s)) along a path.
  Matrix forcing(const Matrix& states) const {
    Matrix out(states.rows(), states.cols());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      out.col(c) = system_.G_index(grid_.first_index() + c, states.col(c));
    }
    return out;
  }

  /// The linear part of the operator with boundary data `boundary` and
  /// forcing samples g: stable modes run forward from the left end of the
  /// grid, unstable modes backward from the right end; the boundary value of
  /// each mode is taken from the corresponding coordinate of `boundary`.
  Matrix propagate(const Vector& boundary, const Matrix& g) const {
    const std::size_t n = model().dim();
    const std::size_t N = grid_.size() - 1;
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(N + 1));
    for (std::size_t j = 0; j < n; ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      const ModeKernel& k = kernel_[j];
      if (!k.backward) {
        double acc = boundary(r);
        out(r, 0) = acc;
        for (std::size_t i = 0; i < N; ++i) {
          const auto c = static_cast<Eigen::Index>(i);
          acc = k.propagate[i] * acc + k.far[i] * g(r, c) + k.near[i] * g(r, c + 1);
          out(r, c + 1) = acc;
        }
      } else {
        double acc = boundary(r);
        out(r, static_cast<Eigen::Index>(N)) = acc;
        for (std::size_t i = N; i-- > 0;) {
          const auto c = static_cast<Eigen::Index>(i);
          acc = k.propagate[i] * acc - (k.near[i] * g(r, c) + k.far[i] * g(r, c + 1));
          out(r, c) = acc;
        }
      }
    }
    return out;
  }

  /// t -> e^{At + Z_t} xi.
  WeightedPath linear_term(const Vector& xi) const {
    check_base_point(xi);
    return make_path(propagate(boundary_of(xi), Matrix::Zero(xi.size(), static_cast<Eigen::Index>(grid_.size()))));
  }

  WeightedPath apply(const WeightedPath& u, const Vector& xi) const {
    check_base_point(xi);
    if (!(u.grid == grid_)) throw AlignmentError("perron solver: path lives on a different grid");
    return make_path(propagate(boundary_of(xi), forcing(u.states)));
  }

  /// Weighted tail bound of the operator at every grid point.
  std::vector<double> tail_bounds(double unorm) const {
    const SpectralModel& m = model();
    const double c = m.K() * system_.lip() * unorm;
    std::vector<double> out(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const double t = grid_.time(i);
      out[i] = kind_ == ManifoldKind::stable
                   ? c * std::exp(-(m.alpha() - eta()) * (config_.T_max - t)) / (m.alpha() - eta())
                   : c * std::exp(-(eta() - m.beta()) * (t + config_.T_max)) / (eta() - m.beta());
    }
    return out;
  }

  /// Bound on the t = 0 difference between the truncated and untruncated
  /// fixed points. The truncation error is measured in a steeper weight
  /// eta2 (between eta and alpha for the stable kind) where it is small
  /// uniformly in t, then propagated through the contraction at eta2.
  double tail_error_bound(double unorm) const {
    const SpectralModel& m = model();
    const double a = m.alpha();
    const double b = m.beta();
    const double eta0 = eta();
    const double gap = kind_ == ManifoldKind::stable ? a - eta0 : eta0 - b;
    const double far_end = kind_ == ManifoldKind::stable ? a : b;
    double best = std::numeric_limits<double>::infinity();
    for (int s = 1; s < 200; ++s) {
      const double eta2 = eta0 + (far_end - eta0) * s / 200.0;
      const double g2 = contraction_constant(m, system_.lip(), eta2);
      if (!(g2 < 1.0)) continue;
      const double decay = std::exp(-std::abs(eta2 - eta0) * config_.T_max);
      best = std::min(best, m.K() * system_.lip() * unorm * decay / (gap * (1.0 - g2)));
    }
    if (system_.lip() == 0.0) return 0.0;
    return best;
  }

  PerronSolution solve(const Vector& xi) const {
    PerronSolution sol;
    sol.xi = xi;
    sol.rho = rho_;
    WeightedPath u = linear_term(xi);
    const Vector b = boundary_of(xi);
    double last_diff = 0.0;
    bool converged = false;
    for (int it = 1; it <= config_.max_iterations; ++it) {
      WeightedPath next = make_path(propagate(b, forcing(u.states)));
      const double diff = norm(next.states - u.states);
      if (!sol.differences.empty() && sol.differences.back() > 0.0) {
        sol.ratios.push_back(diff / sol.differences.back());
      }
      sol.differences.push_back(diff);
      u = std::move(next);
      sol.iterations = it;
      last_diff = diff;
      if (diff < config_.fixed_point_tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      const double ratio = sol.ratios.empty() ? std::numeric_limits<double>::quiet_NaN() : sol.ratios.back();
      std::ostringstream os;
      os << "perron fixed point: no convergence in " << config_.max_iterations << " iterations (last ratio " << ratio
         << ", certified rho " << rho_ << ")";
      throw ConvergenceFailure(os.str(), ratio, config_.max_iterations);
    }
    sol.residual = last_diff == 0.0 ? 0.0 : norm(propagate(b, forcing(u.states)) - u.states);
    sol.fixed_point_error_bound = rho_ / (1.0 - rho_) * last_diff;
    const double unorm = norm(u.states);
    sol.tail_bound = tail_bounds(unorm)[origin()];
    sol.tail_error_bound = tail_error_bound(unorm);
    sol.graph_value = project(model(), u.state(origin()), base_sign() == Sign::minus ? Sign::plus : Sign::minus);
    sol.path = std::move(u);
    return sol;
  }

  Vector graph(const Vector& xi) const { return solve(xi).graph_value; }

  /// Random path with e^{-eta t - Z_t}|u(t)| uniform-ish in [0, scale].
  template <class Rng>
  WeightedPath random_path(Rng& rng, double scale = 1.0) const {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const std::size_t n = model().dim();
    Matrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid_.size()));
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      const double w = std::exp(eta() * grid_.time(i) + (*Z_)[i]);
      Vector v(static_cast<Eigen::Index>(n));
      for (std::size_t j = 0; j < n; ++j) v(static_cast<Eigen::Index>(j)) = U(rng);
      s.col(static_cast<Eigen::Index>(i)) = scale * w / std::sqrt(static_cast<double>(n)) * v;
    }
    return make_path(std::move(s));
  }

 private:
  struct ModeKernel {
    bool backward = false;
    std::vector<double> propagate;
    std::vector<double> far;
    std::vector<double> near;
  };

  static ConjugatedSystem prepare(const ConjugatedSystem& system, const PerronConfig& config) {
    const std::int64_t f = system.grid().steps_in(config.step, "perron step");
    if (f < 1) throw AlignmentError("perron solver: step must be a positive multiple of the sample step");
    return f == 1 ? system : system.coarsened(static_cast<int>(f));
  }

  Vector boundary_of(const Vector& xi) const { return xi; }

  void build_kernel() {
    const std::size_t N = grid_.size() - 1;
    const double h = grid_.step();
    auto Z = std::make_shared<std::vector<double>>(grid_.size(), 0.0);
    std::vector<double> zbar(N);
    for (std::size_t i = 0; i < N; ++i) {
      const std::int64_t k = grid_.first_index() + static_cast<std::int64_t>(i);
      zbar[i] = 0.5 * (system_.z_index(k) + system_.z_index(k + 1));
    }
    // Z vanishes at t = 0 and accumulates outward by the trapezoid rule.
    const std::size_t o = origin();
    for (std::size_t i = o; i < N; ++i) (*Z)[i + 1] = (*Z)[i] + h * zbar[i];
    for (std::size_t i = o; i-- > 0;) (*Z)[i] = (*Z)[i + 1] - h * zbar[i];
    Z_ = std::move(Z);

    const SpectralModel& m = model();
    kernel_.assign(m.dim(), {});
    for (std::size_t j = 0; j < m.dim(); ++j) {
      ModeKernel& k = kernel_[j];
      k.backward = m.is_unstable(j);
      k.propagate.resize(N);
      k.far.resize(N);
      k.near.resize(N);
      for (std::size_t i = 0; i < N; ++i) {
        const double mu = m.eigenvalue(j) + zbar[i];
        const auto w = detail::etd_weights(k.backward ? -mu * h : mu * h, h);
        k.propagate[i] = w.propagate;
        k.far[i] = w.far;
        k.near[i] = w.near;
      }
    }
  }

  PerronConfig config_;
  ManifoldKind kind_;
  ConjugatedSystem system_;
  TimeGrid grid_{0.0, 0.0, 1.0};
  double rho_ = 0.0;
  std::shared_ptr<const std::vector<double>> Z_;
  std::vector<ModeKernel> kernel_;
};

inline WeightedPath apply_Js(const WeightedPath& u, const Vector& xi, const ConjugatedSystem& system,
                             const PerronConfig& config) {
  return PerronSolver(system, config, ManifoldKind::stable).apply(u, xi);
}

inline WeightedPath apply_Ju(const WeightedPath& u, const Vector& xi, const ConjugatedSystem& system,
                             const PerronConfig& config) {
  return PerronSolver(system, config, ManifoldKind::unstable).apply(u, xi);
}

inline PerronSolution solve_stable(const Vector& xi, const ConjugatedSystem& system, const PerronConfig& config) {
  return PerronSolver(system, config, ManifoldKind::stable).solve(xi);
}

inline PerronSolution solve_unstable(const Vector& xi, const ConjugatedSystem& system, const PerronConfig& config) {
  return PerronSolver(system, config, ManifoldKind::unstable).solve(xi);
}

inline Vector graph_stable(const Vector& xi, const ConjugatedSystem& system, const PerronConfig& config) {
  return solve_stable(xi, system, config).graph_value;
}

inline Vector graph_unstable(const Vector& xi, const ConjugatedSystem& system, const PerronConfig& config) {
  return solve_unstable(xi, system, config).graph_value;
}

/// Sampled graph of h^s or h^u. Base points and values are full state
/// vectors supported on H- / H+ (stable) or H+ / H- (unstable).
struct ManifoldGraph {
  ManifoldKind kind = ManifoldKind::stable;
  std::vector<Vector> base_points;
  std::vector<Vector> values;
  std::uint64_t omega_seed = 0;
  double measured_lipschitz = 0.0;
  double theoretical_lipschitz = 0.0;
  double rho = 0.0;
  int max_iterations = 0;
  double max_fixed_point_error = 0.0;
  double max_tail_error = 0.0;
  /// Step-doubling estimate of the quadrature error (0 until estimated).
  double max_discretization_error = 0.0;
  /// e^{z0} scale applied by transformed_graph (1 for an untransformed graph).
  double scale = 1.0;
};

/// max over pairs of |v_a - v_b| / |x_a - x_b|.
inline double max_secant(const std::vector<Vector>& x, const std::vector<Vector>& v) {
  double out = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    for (std::size_t b = a + 1; b < x.size(); ++b) {
      const double d = (x[a] - x[b]).norm();
      if (d > 0.0) out = std::max(out, (v[a] - v[b]).norm() / d);
    }
  }
  return out;
}

inline ManifoldGraph build_graph(const PerronSolver& solver, std::vector<Vector> base_points,
                                 std::uint64_t omega_seed = 0) {
  ManifoldGraph g;
  g.kind = solver.kind();
  g.omega_seed = omega_seed;
  g.rho = solver.rho();
  g.theoretical_lipschitz =
      theoretical_graph_lipschitz(solver.model(), solver.system().lip(), solver.eta(), solver.kind());
  for (const Vector& xi : base_points) {
    const PerronSolution s = solver.solve(xi);
    g.values.push_back(s.graph_value);
    g.max_iterations = std::max(g.max_iterations, s.iterations);
    g.max_fixed_point_error = std::max(g.max_fixed_point_error, s.fixed_point_error_bound);
    g.max_tail_error = std::max(g.max_tail_error, s.tail_error_bound);
  }
  g.base_points = std::move(base_points);
  g.measured_lipschitz = max_secant(g.base_points, g.values);
  return g;
}

/// Graph of T^{-1}(w, M(w)) for multiplicative noise: base points e^{z0} xi
/// and values e^{z0} h(xi), i.e. h~(x) = e^{z0} h(e^{-z0} x).
inline ManifoldGraph transformed_graph(const ManifoldGraph& graph, double z0) {
  if (!std::isfinite(z0)) throw InputError("transformed graph: z0 must be finite");
  ManifoldGraph out = graph;
  const double s = std::exp(z0);
  for (auto& x : out.base_points) x *= s;
  for (auto& v : out.values) v *= s;
  out.scale = graph.scale * s;
  out.max_fixed_point_error *= s;
  out.max_tail_error *= s;
  out.max_discretization_error *= s;
  return out;
}

/// max over xi of |h_step(xi) - h_{2 step}(xi)|: the graph recomputed with a
/// doubled step. The horizon is rounded up to a multiple of the new step, so
/// the system must cover that slightly longer window.
inline double graph_discretization_estimate(const PerronSolver& solver, const std::vector<Vector>& base_points,
                                            const std::vector<Vector>& values) {
  PerronConfig coarse = solver.config();
  coarse.step = 2.0 * coarse.step;
  coarse.T_max = std::ceil(coarse.T_max / coarse.step - 1e-9) * coarse.step;
  const PerronSolver s2(solver.system(), coarse, solver.kind());
  double out = 0.0;
  for (std::size_t i = 0; i < base_points.size(); ++i) {
    out = std::max(out, (s2.graph(base_points[i]) - values.at(i)).norm());
  }
  return out;
}

/// Fills max_discretization_error of a graph built by `solver`; call it
/// before transformed_graph.
inline void estimate_discretization(ManifoldGraph& graph, const PerronSolver& solver) {
  if (graph.scale != 1.0) throw InputError("discretization estimate: graph is already transformed");
  graph.max_discretization_error = graph_discretization_estimate(solver, graph.base_points, graph.values);
}

}  // namespace stoman
