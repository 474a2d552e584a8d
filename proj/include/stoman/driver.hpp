#pragma once

// Experiment configuration, Monte Carlo orchestration over seeds and the
// verification checks (invariance, decay, conjugacy, contraction,
// Lipschitz bounds, derivatives).

#include "stoman/conjugation.hpp"
#include "stoman/errors.hpp"
#include "stoman/integrator.hpp"
#include "stoman/io.hpp"
#include "stoman/linalg.hpp"
#include "stoman/model.hpp"
#include "stoman/nonlinearity.hpp"
#include "stoman/perron.hpp"
#include "stoman/smooth.hpp"
#include "stoman/stochastics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace stoman {

// ---------------------------------------------------------------------------
// Checks

/// Pathwise invariance defect of one base point after time tau, with the
/// budget it is compared against:
///   tolerance = (1 + Lip h) (E_int + L_flow e_0) + e_tau
/// E_int is the step-doubling estimate of the integrator error at tau, e_0
/// and e_tau bound the graph errors at w and theta_tau w (fixed point, tail,
/// step-doubling quadrature estimate) and L_flow = exp((lambda_max + lip) tau
/// + Z_tau) is the Gronwall factor of the conjugated flow.
struct InvarianceEntry {
  Vector xi;
  double tau = 0.0;
  double defect = 0.0;
  double tolerance = 0.0;
  double integrator_error = 0.0;
  double initial_error = 0.0;
  double resolve_error = 0.0;
  double flow_factor = 1.0;
  double graph_lipschitz = 0.0;
  /// Same test for T^{-1}(w, M(w)) under the reference flow of the original
  /// equation, in original coordinates.
  bool has_transformed = false;
  double transformed_defect = 0.0;
  double transformed_tolerance = 0.0;
  double reference_error = 0.0;
  /// Multiplicative noise only: the defect of the set
  /// {xi + h(e^{-z} xi)} (no e^{z} factor on h), reported without a verdict.
  std::optional<double> unscaled_form_defect;
};

namespace detail {

inline ConjugatedSystem at_step(const ConjugatedSystem& system, double step) {
  const std::int64_t f = system.grid().steps_in(step, "step");
  if (f < 1) throw AlignmentError("step must be a positive multiple of the sample step");
  return f == 1 ? system : system.coarsened(static_cast<int>(f));
}

inline WienerPath path_at_step(const WienerPath& path, double step) {
  const std::int64_t f = path.grid().steps_in(step, "step");
  if (f < 1) throw AlignmentError("step must be a positive multiple of the path step");
  return f == 1 ? path : path.coarsened(static_cast<int>(f));
}

inline Trajectory reference_flow(const ConjugatedSystem& sys, const WienerPath& path, const Vector& x0, double tau) {
  if (sys.kind() == NoiseKind::multiplicative) {
    return integrate_stratonovich(sys.model(), sys.nonlinearity(), path, x0, tau);
  }
  return integrate_additive_reference(sys.model(), sys.nonlinearity(), path, x0, tau);
}

inline double integrated_z(const ConjugatedSystem& sys, std::int64_t n) {
  double Z = 0.0;
  for (std::int64_t k = 0; k < n; ++k) Z += 0.5 * sys.step() * (sys.z_index(k) + sys.z_index(k + 1));
  return Z;
}

}  // namespace detail

/// Invariance of a graph built at w under the flow up to tau. The graph must
/// be untransformed and carry its discretization estimate. With a path, the
/// transformed manifold is checked against the reference integrator as well
/// (multiplicative or additive systems).
inline std::vector<InvarianceEntry> check_invariance(const ManifoldGraph& graph, double tau,
                                                     const ConjugatedSystem& system, const PerronConfig& config,
                                                     const WienerPath* path = nullptr) {
  if (graph.scale != 1.0) throw InputError("invariance: pass the untransformed graph");
  const ConjugatedSystem sys = detail::at_step(system, config.step);
  const SpectralModel& m = sys.model();
  const std::int64_t N = sys.grid().steps_in(tau, "tau");
  if (N < 0) throw ConfigurationError("invariance: tau must be >= 0");
  const PerronSolver at_tau(sys.shifted(tau), config, graph.kind);
  const Sign base = graph.kind == ManifoldKind::stable ? Sign::minus : Sign::plus;
  const Sign comp = graph.kind == ManifoldKind::stable ? Sign::plus : Sign::minus;
  const double lip_h = graph.theoretical_lipschitz;
  const double flow = std::exp((m.max_eigenvalue() + sys.lip()) * tau + detail::integrated_z(sys, N));
  const double e0 = graph.max_fixed_point_error + graph.max_tail_error + graph.max_discretization_error;
  const bool transformed = path != nullptr && sys.kind() != NoiseKind::none;
  std::optional<WienerPath> ref_path;
  if (transformed) ref_path = detail::path_at_step(*path, config.step);

  auto resolve = [&](const Vector& x, Vector& h) {
    const Vector xb = project(m, x, base);
    const PerronSolution s = at_tau.solve(xb);
    h = s.graph_value;
    return s.fixed_point_error_bound + s.tail_error_bound + graph_discretization_estimate(at_tau, {xb}, {h});
  };

  std::vector<InvarianceEntry> out;
  for (std::size_t i = 0; i < graph.base_points.size(); ++i) {
    InvarianceEntry e;
    e.xi = graph.base_points[i];
    e.tau = tau;
    e.flow_factor = flow;
    e.graph_lipschitz = lip_h;
    e.initial_error = e0;
    const Vector x0 = graph.base_points[i] + graph.values[i];
    Vector u = x0;
    if (N > 0) {
      const MildEstimate est = integrate_mild_estimated(sys, x0, tau);
      u = est.fine.final_state();
      e.integrator_error = est.final_error;
    }
    Vector h;
    e.resolve_error = resolve(u, h);
    e.defect = (project(m, u, comp) - h).norm();
    e.tolerance = (1.0 + lip_h) * (e.integrator_error + flow * e0) + e.resolve_error;

    if (transformed) {
      e.has_transformed = true;
      const Vector xt0 = sys.transform(0.0, x0, Direction::inverse);
      Vector ut = xt0;
      if (N > 0) {
        ut = detail::reference_flow(sys, *ref_path, xt0, tau).final_state();
        const Vector ut2 = detail::reference_flow(sys, ref_path->coarsened(2), xt0, tau).final_state();
        e.reference_error = step_doubling_factor(kReferenceStrongOrder) * (ut - ut2).norm();
      }
      const Vector back = sys.transform(tau, ut, Direction::forward);
      Vector ht;
      const double et = resolve(back, ht);
      const double scale = sys.kind() == NoiseKind::multiplicative ? std::exp(sys.z(tau)) : 1.0;
      const double sample_err = sys.kind() == NoiseKind::multiplicative
                                    ? 2.0 * sys.ou().error_bound() * back.norm()
                                    : 2.0 * sys.stationary_truncation_bound();
      e.transformed_defect = scale * (project(m, back, comp) - ht).norm();
      e.transformed_tolerance =
          scale * ((1.0 + lip_h) * (e.reference_error / scale + flow * e0 + sample_err) + et);
      if (sys.kind() == NoiseKind::multiplicative) e.unscaled_form_defect = (project(m, ut, comp) - ht).norm();
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// sup_t e^{-eta t - Z_t} |u(t)| / |u(0)|, Z_t = int_0^t z; 0 for u(0) = 0.
inline double check_decay(const Trajectory& tr, double eta, const OUSample& ou) {
  const double h = tr.grid.step();
  if (std::abs(ou.grid().step() - h) > 1e-12 * h) throw AlignmentError("decay: trajectory and OU grids differ");
  const double u0 = tr.state(0).norm();
  if (u0 == 0.0) return 0.0;
  double Z = 0.0, out = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i);
    if (i > 0) Z += 0.5 * h * (ou.at_index(k - 1) + ou.at_index(k));
    out = std::max(out, std::exp(-eta * tr.grid.time(i) - Z) * tr.state(i).norm());
  }
  return out / u0;
}

/// max_t e^{-eta t - Z_t} along the trajectory grid.
inline double check_decay_weight_max(const Trajectory& tr, double eta, const OUSample& ou) {
  const double h = tr.grid.step();
  double Z = 0.0, out = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i);
    if (i > 0) Z += 0.5 * h * (ou.at_index(k - 1) + ou.at_index(k));
    out = std::max(out, std::exp(-eta * tr.grid.time(i) - Z));
  }
  return out;
}

/// K / (1 - rho): bound on the decay ratio for initial data on M^s.
inline double decay_bound(const SpectralModel& model, double lip, double eta) {
  return theoretical_path_lipschitz(model, lip, eta);
}

struct ConjugacyCurve {
  std::vector<double> steps;
  /// max_t |T^{-1}(t, u_mild(t)) - u_ref(t)| per step.
  std::vector<double> gaps;
  /// Least-squares slope of log gap against log step (NaN when a gap is 0).
  double order = std::numeric_limits<double>::quiet_NaN();
  /// Error estimates of the finest level from the first two levels:
  /// mild solution mapped back (order 1) and reference (strong order 1/2),
  /// plus the effect of the noise-sample error bound.
  double mild_error = 0.0;
  double reference_error = 0.0;
  double sample_error = 0.0;
  double budget() const { return mild_error + reference_error + sample_error; }
};

/// Least-squares slope of log y against log x (NaN if some y <= 0).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  for (double v : y) {
    if (!(v > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

/// Gap between the conjugated mild solution mapped back and the reference
/// integrator of the original equation, on the path coarsened by each factor
/// (increasing; each a multiple of the previous one).
inline ConjugacyCurve check_conjugacy(const SpectralModel& model, const Nonlinearity& F, NoiseKind kind,
                                      const WienerPath& path, const Vector& x0, double horizon,
                                      const std::vector<int>& factors, double truncation = kDefaultOuTruncation) {
  if (kind == NoiseKind::none) throw ConfigurationError("conjugacy: needs a noisy system");
  if (factors.size() < 2) throw ConfigurationError("conjugacy: need at least two refinement levels");
  for (std::size_t i = 1; i < factors.size(); ++i) {
    if (factors[i] <= factors[i - 1] || factors[i] % factors[i - 1] != 0) {
      throw ConfigurationError("conjugacy: factors must increase, each a multiple of the previous one");
    }
  }
  ConjugacyCurve c;
  Matrix mild0, ref0;
  for (std::size_t l = 0; l < factors.size(); ++l) {
    const WienerPath pf = path.coarsened(factors[l]);
    const double h = pf.grid().step();
    const TimeGrid g(0.0, horizon, h);
    const ConjugatedSystem sys =
        kind == NoiseKind::multiplicative
            ? ConjugatedSystem::multiplicative(model, F, ou_trajectory(pf, g, truncation))
            : ConjugatedSystem::additive(model, F, linear_stationary_solution(model, pf, g, truncation));
    const Trajectory mild = integrate_mild(sys, sys.transform(0.0, x0, Direction::forward), horizon);
    const Trajectory ref = detail::reference_flow(sys, pf, x0, horizon);
    Matrix back(mild.states.rows(), mild.states.cols());
    double gap = 0.0;
    for (std::size_t i = 0; i < mild.size(); ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      back.col(col) = sys.transform(mild.grid.time(i), mild.state(i), Direction::inverse);
      gap = std::max(gap, (back.col(col) - ref.states.col(col)).norm());
    }
    if (l == 0) {
      mild0 = back;
      ref0 = ref.states;
      const double err = kind == NoiseKind::multiplicative ? sys.ou().error_bound() : sys.stationary_truncation_bound();
      for (Eigen::Index i = 0; i < back.cols(); ++i) {
        c.sample_error = std::max(c.sample_error, kind == NoiseKind::multiplicative ? 2.0 * err * back.col(i).norm()
                                                                                    : 2.0 * err);
      }
    } else if (l == 1) {
      const auto r = factors[1] / factors[0];
      double dm = 0.0, dr = 0.0;
      for (Eigen::Index i = 0; i < back.cols(); ++i) {
        dm = std::max(dm, (back.col(i) - mild0.col(i * r)).norm());
        dr = std::max(dr, (ref.states.col(i) - ref0.col(i * r)).norm());
      }
      c.mild_error = step_doubling_factor(kMildOrder, r) * dm;
      c.reference_error = step_doubling_factor(kReferenceStrongOrder, r) * dr;
    }
    c.steps.push_back(h);
    c.gaps.push_back(gap);
  }
  c.order = log_log_slope(c.steps, c.gaps);
  return c;
}

// ---------------------------------------------------------------------------
// Configuration

struct NonlinearitySpec {
  /// zero | linear | sine | cubic
  std::string family = "sine";
  double eps = 0.1;
  /// dct | identity | swap
  std::string mixing = "dct";
  /// Support radius of the cubic family.
  double radius = 1.0;
  /// Declared Lipschitz constant; must not undercut the closed form. For
  /// the zero family it is the constant used by the gap certificate.
  std::optional<double> lip;
  std::optional<int> smoothness_order;
};

struct XiSampling {
  /// random_ball: `count` points uniform in the ball of `radius` in the base
  /// subspace. grid: `count` points per base axis on [-radius, radius].
  std::string mode = "random_ball";
  std::size_t count = 8;
  double radius = 1.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::vector<double> eigenvalues{0.5, -1.0, -2.0};
  std::vector<std::size_t> unstable_indices{0};
  double K = 1.0;
  NonlinearitySpec nonlinearity;
  NoiseKind noise_kind = NoiseKind::multiplicative;
  /// Defaults to the gap-optimal (alpha + beta)/2.
  std::optional<double> eta;
  double step = 1e-2;
  /// Defaults to the smallest step multiple meeting tail_tol for both kinds.
  std::optional<double> T_max;
  double fixed_point_tol = 1e-12;
  int max_iterations = 500;
  double tail_tol = 1e-8;
  double ou_truncation = kDefaultOuTruncation;
  std::vector<std::uint64_t> seeds{1};
  XiSampling xi_samples;
  std::vector<std::string> manifolds{"stable", "unstable"};
  std::vector<double> taus{1.0, 2.0, 5.0};
  /// Horizon of the decay and conjugacy checks.
  double horizon = 5.0;
  int derivative_order = 1;
  std::vector<int> conjugacy_factors{1, 2, 4, 8};
  std::size_t operator_probes = 4;
  double contraction_slack = 0.05;
  double lipschitz_slack = 0.01;
  double fd_tolerance = 1e-3;
  double fd_rel_step = 1e-5;
  double fd_abs_step = 1e-7;
  std::string output_dir;
  /// 0: one worker per hardware thread.
  std::size_t threads = 0;

  SpectralModel model() const { return SpectralModel(eigenvalues, unstable_indices, K); }

  Nonlinearity make_nonlinearity() const {
    const std::size_t n = eigenvalues.size();
    const NonlinearitySpec& s = nonlinearity;
    Matrix M;
    if (s.mixing == "dct") {
      M = dct_matrix(n);
    } else if (s.mixing == "identity") {
      M = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    } else if (s.mixing == "swap") {
      M = swap_matrix(n);
    } else {
      throw ConfigurationError("config: unknown mixing '" + s.mixing + "'");
    }
    Nonlinearity f = [&] {
      if (s.family == "zero") return make_zero(n, s.lip.value_or(0.1));
      if (s.family == "linear") return make_linear(M, s.eps);
      if (s.family == "sine") return make_sine(M, s.eps, s.smoothness_order.value_or(8));
      if (s.family == "cubic") return make_cubic(M, s.eps, s.radius);
      throw ConfigurationError("config: unknown nonlinearity family '" + s.family + "'");
    }();
    if (s.lip && s.family != "zero") {
      if (*s.lip < f.lip() * (1.0 - 1e-12)) {
        throw ConfigurationError("config: declared lip " + format_double(*s.lip) + " is below the closed-form value " +
                                 format_double(f.lip()));
      }
      f = f.with_lip(*s.lip);
    }
    return f;
  }

  double resolved_eta() const { return eta.value_or(0.5 * (model().alpha() + model().beta())); }

  PerronConfig perron() const {
    PerronConfig c = PerronConfig::for_model(model(), resolved_eta(), step, tail_tol, fixed_point_tol);
    if (T_max) c.T_max = *T_max;
    c.max_iterations = max_iterations;
    return c;
  }

  std::vector<ManifoldKind> kinds() const {
    std::vector<ManifoldKind> out;
    for (const auto& k : manifolds) {
      if (k == "stable") {
        out.push_back(ManifoldKind::stable);
      } else if (k == "unstable") {
        out.push_back(ManifoldKind::unstable);
      } else {
        throw ConfigurationError("config: unknown manifold '" + k + "'");
      }
    }
    return out;
  }

  /// Model validation and gap certification at the requested derivative
  /// order. Throws on the first problem.
  GapReport validate() const {
    const SpectralModel m = model();
    const Nonlinearity f = make_nonlinearity();
    if (f.dim() != m.dim()) throw ConfigurationError("config: nonlinearity dimension mismatch");
    if (!(step > 0.0)) throw ConfigurationError("config: step must be positive");
    if (seeds.empty()) throw ConfigurationError("config: no seeds");
    if (xi_samples.count < 1) throw ConfigurationError("config: xi_samples.count must be >= 1");
    if (!(xi_samples.radius > 0.0)) throw ConfigurationError("config: xi_samples.radius must be positive");
    if (xi_samples.mode != "random_ball" && xi_samples.mode != "grid") {
      throw ConfigurationError("config: unknown xi_samples.mode '" + xi_samples.mode + "'");
    }
    if (noise_kind == NoiseKind::additive && nonlinearity.family != "zero") {
      throw ConfigurationError(
          "config: additive noise needs a stationary solution of the full equation; the built-in one solves "
          "F = 0 only, so the nonlinearity family must be 'zero'");
    }
    if (derivative_order < 0) throw ConfigurationError("config: derivative_order must be >= 0");
    if (derivative_order > f.smoothness_order()) {
      throw ConfigurationError("config: derivative_order exceeds the smoothness order of the nonlinearity");
    }
    for (double t : taus) {
      if (!(t >= 0.0)) throw ConfigurationError("config: taus must be >= 0");
      (void)TimeGrid(0.0, t, 2.0 * step);
    }
    (void)TimeGrid(0.0, horizon, step);
    for (int c : conjugacy_factors) {
      if (c < 1) throw ConfigurationError("config: conjugacy factors must be >= 1");
    }
    (void)kinds();
    const int order = std::max(1, derivative_order);
    GapReport g = check_gap(m, f.lip(), resolved_eta(), order);
    if (!g.admissible) throw GapViolation("gap condition fails: " + g.failure);
    const PerronConfig pc = perron();
    for (ManifoldKind k : kinds()) pc.validate(m, f.lip(), k);
    return g;
  }

  static NoiseKind parse_noise(const std::string& s) {
    if (s == "multiplicative") return NoiseKind::multiplicative;
    if (s == "additive") return NoiseKind::additive;
    if (s == "none") return NoiseKind::none;
    throw ConfigurationError("config: unknown noise_kind '" + s + "'");
  }

  static ExperimentConfig from_json(const Json& j) {
    ExperimentConfig c;
    try {
      if (j.contains("model")) {
        const Json& m = j.at("model");
        c.eigenvalues = m.value("eigenvalues", c.eigenvalues);
        c.unstable_indices = m.value("unstable_indices", c.unstable_indices);
        c.K = m.value("K", c.K);
      }
      if (j.contains("nonlinearity")) {
        const Json& n = j.at("nonlinearity");
        c.nonlinearity.family = n.value("family", c.nonlinearity.family);
        c.nonlinearity.eps = n.value("eps", c.nonlinearity.eps);
        c.nonlinearity.mixing = n.value("mixing", c.nonlinearity.mixing);
        c.nonlinearity.radius = n.value("radius", c.nonlinearity.radius);
        if (n.contains("lip") && !n.at("lip").is_null()) c.nonlinearity.lip = n.at("lip").get<double>();
        if (n.contains("smoothness_order") && !n.at("smoothness_order").is_null()) {
          c.nonlinearity.smoothness_order = n.at("smoothness_order").get<int>();
        }
      }
      if (j.contains("noise_kind")) c.noise_kind = parse_noise(j.at("noise_kind").get<std::string>());
      if (j.contains("eta") && !j.at("eta").is_null()) c.eta = j.at("eta").get<double>();
      if (j.contains("perron")) {
        const Json& p = j.at("perron");
        c.step = p.value("step", c.step);
        if (p.contains("T_max") && !p.at("T_max").is_null()) c.T_max = p.at("T_max").get<double>();
        c.fixed_point_tol = p.value("fixed_point_tol", c.fixed_point_tol);
        c.max_iterations = p.value("max_iterations", c.max_iterations);
        c.tail_tol = p.value("tail_tol", c.tail_tol);
      }
      c.ou_truncation = j.value("ou_truncation", c.ou_truncation);
      c.seeds = j.value("seeds", c.seeds);
      if (j.contains("xi_samples")) {
        const Json& x = j.at("xi_samples");
        c.xi_samples.mode = x.value("mode", c.xi_samples.mode);
        c.xi_samples.count = x.value("count", c.xi_samples.count);
        c.xi_samples.radius = x.value("radius", c.xi_samples.radius);
        c.xi_samples.seed = x.value("seed", c.xi_samples.seed);
      }
      c.manifolds = j.value("manifolds", c.manifolds);
      c.taus = j.value("taus", c.taus);
      c.horizon = j.value("horizon", c.horizon);
      c.derivative_order = j.value("derivative_order", c.derivative_order);
      c.conjugacy_factors = j.value("conjugacy_factors", c.conjugacy_factors);
      c.operator_probes = j.value("operator_probes", c.operator_probes);
      if (j.contains("tolerances")) {
        const Json& t = j.at("tolerances");
        c.contraction_slack = t.value("contraction_slack", c.contraction_slack);
        c.lipschitz_slack = t.value("lipschitz_slack", c.lipschitz_slack);
        c.fd_tolerance = t.value("fd_tolerance", c.fd_tolerance);
        c.fd_rel_step = t.value("fd_rel_step", c.fd_rel_step);
        c.fd_abs_step = t.value("fd_abs_step", c.fd_abs_step);
      }
      c.output_dir = j.value("output_dir", c.output_dir);
      c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError(std::string("config: ") + e.what());
    }
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigurationError("config: cannot open " + file.string());
    Json j;
    try {
      j = Json::parse(is, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError("config: " + file.string() + ": " + e.what());
    }
    return from_json(j);
  }

  Json to_json() const {
    Json j = json_document("experiment_config");
    j["model"] = {{"eigenvalues", eigenvalues}, {"unstable_indices", unstable_indices}, {"K", K}};
    Json n = {{"family", nonlinearity.family},
              {"eps", nonlinearity.eps},
              {"mixing", nonlinearity.mixing},
              {"radius", nonlinearity.radius}};
    n["lip"] = nonlinearity.lip ? Json(*nonlinearity.lip) : Json(nullptr);
    n["smoothness_order"] = nonlinearity.smoothness_order ? Json(*nonlinearity.smoothness_order) : Json(nullptr);
    j["nonlinearity"] = n;
    j["noise_kind"] = to_string(noise_kind);
    j["eta"] = eta ? Json(*eta) : Json(nullptr);
    j["perron"] = {{"step", step},
                   {"T_max", T_max ? Json(*T_max) : Json(nullptr)},
                   {"fixed_point_tol", fixed_point_tol},
                   {"max_iterations", max_iterations},
                   {"tail_tol", tail_tol}};
    j["ou_truncation"] = ou_truncation;
    j["seeds"] = seeds;
    j["xi_samples"] = {{"mode", xi_samples.mode},
                       {"count", xi_samples.count},
                       {"radius", xi_samples.radius},
                       {"seed", xi_samples.seed}};
    j["manifolds"] = manifolds;
    j["taus"] = taus;
    j["horizon"] = horizon;
    j["derivative_order"] = derivative_order;
    j["conjugacy_factors"] = conjugacy_factors;
    j["operator_probes"] = operator_probes;
    j["tolerances"] = {{"contraction_slack", contraction_slack},
                       {"lipschitz_slack", lipschitz_slack},
                       {"fd_tolerance", fd_tolerance},
                       {"fd_rel_step", fd_rel_step},
                       {"fd_abs_step", fd_abs_step}};
    j["output_dir"] = output_dir;
    j["threads"] = threads;
    return j;
  }
};

/// Base points in the base subspace of `kind`.
inline std::vector<Vector> sample_base_points(const SpectralModel& model, ManifoldKind kind, const XiSampling& s) {
  const auto& modes = kind == ManifoldKind::stable ? model.minus_modes() : model.plus_modes();
  const auto n = static_cast<Eigen::Index>(model.dim());
  const std::size_t p = modes.size();
  std::vector<Vector> out;
  if (s.mode == "grid") {
    std::size_t total = 1;
    for (std::size_t a = 0; a < p; ++a) total *= s.count;
    for (std::size_t idx = 0; idx < total; ++idx) {
      Vector x = Vector::Zero(n);
      std::size_t rem = idx;
      for (std::size_t a = 0; a < p; ++a) {
        const std::size_t q = rem % s.count;
        rem /= s.count;
        const double t = s.count == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(q) / static_cast<double>(s.count - 1);
        x(static_cast<Eigen::Index>(modes[a])) = s.radius * t;
      }
      out.push_back(x);
    }
    return out;
  }
  std::mt19937_64 gen(s.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  while (out.size() < s.count) {
    Vector x = Vector::Zero(n);
    for (std::size_t j : modes) x(static_cast<Eigen::Index>(j)) = nd(gen);
    const double r = x.norm();
    if (r == 0.0) continue;
    x *= s.radius * std::pow(ud(gen), 1.0 / static_cast<double>(p)) / r;
    out.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

enum class Comparison { at_most, at_least };

/// One verdict: pass is value <= tolerance (at_most) or value >= tolerance
/// (at_least).
struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  Comparison cmp = Comparison::at_most;
  bool pass = false;

  static Check make(std::string name, double value, double tolerance, Comparison cmp = Comparison::at_most) {
    Check c{std::move(name), value, tolerance, cmp, false};
    c.pass = evaluate(value, tolerance, cmp);
    return c;
  }
  static bool evaluate(double value, double tolerance, Comparison cmp) {
    return cmp == Comparison::at_most ? value <= tolerance : value >= tolerance;
  }
};

struct SeedRecord {
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  std::vector<Check> checks;
  /// Per-manifold numbers without a verdict (iterations, rho, unscaled-form
  /// defects, derivative matrices, ...).
  Json details = Json::object();
  /// Kept for artifact export.
  std::vector<std::pair<ManifoldGraph, PerronConfig>> graphs;

  bool pass() const {
    if (!completed) return false;
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
};

struct VerificationReport {
  Json config;
  GapReport gap;
  std::vector<SeedRecord> seeds;

  std::size_t passing_seeds() const {
    return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.pass(); }));
  }
  bool all_pass() const { return !seeds.empty() && passing_seeds() == seeds.size(); }

  /// Slope of the geometric-mean conjugacy gap over completed seeds against
  /// the step (NaN when no seed has a conjugacy curve).
  double pooled_conjugacy_order() const {
    std::vector<double> steps, logs;
    std::size_t count = 0;
    for (const auto& s : seeds) {
      if (!s.completed || !s.details.contains("conjugacy")) continue;
      const auto st = s.details.at("conjugacy").at("steps").get<std::vector<double>>();
      const auto gp = s.details.at("conjugacy").at("gaps").get<std::vector<double>>();
      if (steps.empty()) {
        steps = st;
        logs.assign(st.size(), 0.0);
      }
      for (std::size_t i = 0; i < gp.size(); ++i) {
        if (!(gp[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        logs[i] += std::log(gp[i]);
      }
      ++count;
    }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> mean;
    for (double l : logs) mean.push_back(std::exp(l / static_cast<double>(count)));
    return log_log_slope(steps, mean);
  }

  /// Every check value grouped by name.
  std::vector<std::pair<std::string, std::vector<const Check*>>> by_name() const {
    std::vector<std::pair<std::string, std::vector<const Check*>>> out;
    for (const auto& s : seeds) {
      for (const auto& c : s.checks) {
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == c.name; });
        if (it == out.end()) {
          out.push_back({c.name, {}});
          it = out.end() - 1;
        }
        it->second.push_back(&c);
      }
    }
    return out;
  }

  Json to_json() const {
    Json j = json_document("verification_report");
    j["config"] = config;
    j["gap"] = stoman::to_json(gap);
    Json seeds_j = Json::array();
    for (const auto& s : seeds) {
      Json r;
      r["seed"] = s.seed;
      r["completed"] = s.completed;
      r["error"] = s.error;
      Json cs = Json::array();
      for (const auto& c : s.checks) {
        cs.push_back({{"name", c.name},
                      {"value", c.value},
                      {"tolerance", c.tolerance},
                      {"comparison", c.cmp == Comparison::at_most ? "at_most" : "at_least"},
                      {"pass", c.pass}});
      }
      r["checks"] = cs;
      r["pass"] = s.pass();
      r["details"] = s.details;
      seeds_j.push_back(r);
    }
    j["seeds"] = seeds_j;
    Json agg = Json::array();
    for (const auto& [name, cs] : by_name()) {
      std::vector<double> v;
      std::size_t passed = 0;
      for (const Check* c : cs) {
        v.push_back(c->value);
        passed += c->pass ? 1 : 0;
      }
      std::sort(v.begin(), v.end());
      auto q = [&](double p) { return v[static_cast<std::size_t>(std::floor(p * static_cast<double>(v.size() - 1)))]; };
      agg.push_back({{"name", name},
                     {"count", v.size()},
                     {"passed", passed},
                     {"min", v.front()},
                     {"median", q(0.5)},
                     {"q90", q(0.9)},
                     {"max", v.back()}});
    }
    j["aggregates"] = agg;
    const double po = pooled_conjugacy_order();
    j["pooled_conjugacy_order"] = std::isnan(po) ? Json(nullptr) : Json(po);
    j["passing_seeds"] = passing_seeds();
    j["total_seeds"] = seeds.size();
    j["all_pass"] = all_pass();
    return j;
  }
};

/// Recomputes every verdict of a serialized report from its numbers and
/// returns the names of entries whose stored flag disagrees (empty: the
/// report is consistent).
inline std::vector<std::string> audit_report(const Json& report) {
  std::vector<std::string> bad;
  std::size_t passing = 0;
  for (const auto& s : report.at("seeds")) {
    bool seed_pass = s.at("completed").get<bool>();
    for (const auto& c : s.at("checks")) {
      const auto cmp = c.at("comparison").get<std::string>() == "at_most" ? Comparison::at_most : Comparison::at_least;
      const bool p = !c.at("value").is_null() && !c.at("tolerance").is_null() &&
                     Check::evaluate(c.at("value").get<double>(), c.at("tolerance").get<double>(), cmp);
      if (p != c.at("pass").get<bool>()) bad.push_back(std::to_string(s.at("seed").get<std::uint64_t>()) + ":" +
                                                       c.at("name").get<std::string>());
      seed_pass = seed_pass && p;
    }
    if (seed_pass != s.at("pass").get<bool>()) bad.push_back(std::to_string(s.at("seed").get<std::uint64_t>()) + ":pass");
    passing += seed_pass ? 1 : 0;
  }
  if (passing != report.at("passing_seeds").get<std::size_t>()) bad.push_back("passing_seeds");
  return bad;
}

// ---------------------------------------------------------------------------
// Experiment

/// Everything one seed needs: path, conjugated system on [-T, tau_max + T].
struct SeedSetup {
  std::optional<WienerPath> path;
  ConjugatedSystem system;
};

inline SeedSetup make_seed_setup(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SpectralModel m = cfg.model();
  const Nonlinearity f = cfg.make_nonlinearity();
  const PerronConfig pc = cfg.perron();
  double tmax = cfg.horizon;
  for (double t : cfg.taus) tmax = std::max(tmax, t);
  // Room for the doubled-step horizon of the discretization estimate.
  const double T = std::ceil(pc.T_max / (2.0 * cfg.step)) * 2.0 * cfg.step + 2.0 * cfg.step;
  const double hi = std::ceil(tmax / cfg.step) * cfg.step + T;
  const TimeGrid grid(-T, hi, cfg.step);
  const double S = std::ceil(cfg.ou_truncation / cfg.step) * cfg.step;
  switch (cfg.noise_kind) {
    case NoiseKind::multiplicative: {
      auto path = WienerPath::sample(TimeGrid(-T - S, hi, cfg.step), 1, seed);
      auto sys = ConjugatedSystem::multiplicative(m, f, ou_trajectory(path, grid, cfg.ou_truncation));
      return {std::move(path), std::move(sys)};
    }
    case NoiseKind::additive: {
      auto path = WienerPath::sample(TimeGrid(-T - S, hi + S, cfg.step), m.dim(), seed);
      auto sys =
          ConjugatedSystem::additive(m, f, linear_stationary_solution(m, path, grid, cfg.ou_truncation));
      return {std::move(path), std::move(sys)};
    }
    case NoiseKind::none:
      break;
  }
  return {std::nullopt, ConjugatedSystem::deterministic(m, f, grid)};
}

namespace detail {

inline std::string tau_label(double t) { return format_double(t); }

inline void run_manifold(const ExperimentConfig& cfg, const SeedSetup& setup, ManifoldKind kind, SeedRecord& rec) {
  const std::string tag = to_string(kind);
  const PerronConfig pc = cfg.perron();
  const ConjugatedSystem& sys = setup.system;
  const SpectralModel& m = sys.model();
  const PerronSolver solver(sys, pc, kind);
  const double rho = solver.rho();
  const std::vector<Vector> pts = sample_base_points(m, kind, cfg.xi_samples);

  std::vector<PerronSolution> sols;
  for (const auto& x : pts) sols.push_back(solver.solve(x));
  ManifoldGraph g = build_graph(solver, pts, rec.seed);
  estimate_discretization(g, solver);

  Json d;
  d["rho"] = rho;
  d["eta"] = pc.eta;
  d["T_max"] = pc.T_max;
  d["max_iterations"] = g.max_iterations;
  d["max_fixed_point_error"] = g.max_fixed_point_error;
  d["max_tail_error"] = g.max_tail_error;
  d["max_discretization_error"] = g.max_discretization_error;
  d["measured_graph_lipschitz"] = g.measured_lipschitz;
  d["theoretical_graph_lipschitz"] = g.theoretical_lipschitz;

  double iter_ratio = 0.0;
  for (const auto& s : sols) {
    for (double r : s.ratios) iter_ratio = std::max(iter_ratio, r);
  }
  rec.checks.push_back(Check::make(tag + ".contraction.iterates", iter_ratio, rho + cfg.contraction_slack));

  std::mt19937_64 rng(rec.seed ^ 0x9e3779b97f4a7c15ULL);
  double op_ratio = 0.0;
  for (std::size_t k = 0; k < cfg.operator_probes; ++k) {
    const WeightedPath a = solver.random_path(rng, 2.0);
    const WeightedPath b = solver.random_path(rng, 2.0);
    const Vector& xi = pts[k % pts.size()];
    const double den = solver.norm(a.states - b.states);
    if (den > 0.0) {
      op_ratio = std::max(op_ratio, solver.norm(solver.apply(a, xi).states - solver.apply(b, xi).states) / den);
    }
  }
  rec.checks.push_back(Check::make(tag + ".contraction.operator", op_ratio, rho + cfg.contraction_slack));

  double path_lip = 0.0;
  for (std::size_t a = 0; a < sols.size(); ++a) {
    for (std::size_t b = a + 1; b < sols.size(); ++b) {
      const double dx = (pts[a] - pts[b]).norm();
      if (dx > 0.0) path_lip = std::max(path_lip, solver.norm(sols[a].path.states - sols[b].path.states) / dx);
    }
  }
  const double path_bound = theoretical_path_lipschitz(m, sys.lip(), pc.eta);
  rec.checks.push_back(Check::make(tag + ".lipschitz.path", path_lip, path_bound * (1.0 + cfg.lipschitz_slack)));
  rec.checks.push_back(
      Check::make(tag + ".lipschitz.graph", g.measured_lipschitz, g.theoretical_lipschitz * (1.0 + cfg.lipschitz_slack)));

  if (sys.nonlinearity().name() == "zero") {
    double hmax = 0.0;
    for (const auto& v : g.values) hmax = std::max(hmax, v.cwiseAbs().maxCoeff());
    rec.checks.push_back(Check::make(tag + ".graph_vanishes", hmax, pc.fixed_point_tol + pc.tail_tol));
  }

  Json inv = Json::array();
  for (double tau : cfg.taus) {
    const auto entries = check_invariance(g, tau, sys, pc, setup.path ? &*setup.path : nullptr);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const std::string at = "[tau=" + tau_label(tau) + ",point=" + std::to_string(i) + "]";
      rec.checks.push_back(Check::make(tag + ".invariance" + at, e.defect, e.tolerance));
      if (e.has_transformed) {
        rec.checks.push_back(Check::make(tag + ".invariance_transformed" + at, e.transformed_defect,
                                         e.transformed_tolerance));
      }
      Json ej = {{"tau", tau},
                 {"point", i},
                 {"integrator_error", e.integrator_error},
                 {"initial_error", e.initial_error},
                 {"resolve_error", e.resolve_error},
                 {"flow_factor", e.flow_factor}};
      if (e.has_transformed) ej["reference_error"] = e.reference_error;
      if (e.unscaled_form_defect) ej["unscaled_form_defect"] = *e.unscaled_form_defect;
      inv.push_back(ej);
    }
  }
  d["invariance"] = inv;

  if (kind == ManifoldKind::stable && cfg.horizon > 0.0) {
    // Decay along the manifold solution from the largest base point.
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].norm() > pts[best].norm()) best = i;
    }
    const ConjugatedSystem cs = detail::at_step(sys, pc.step);
    const Vector x0 = pts[best] + g.values[best];
    const MildEstimate est = integrate_mild_estimated(cs, x0, std::floor(cfg.horizon / (2 * pc.step)) * 2 * pc.step);
    const double ratio = check_decay(est.fine, pc.eta, cs.ou());
    // Integration and initial-point errors in the weighted norm.
    const double e0 = g.max_fixed_point_error + g.max_tail_error + g.max_discretization_error;
    const double growth = std::max(0.0, m.max_eigenvalue() + sys.lip() - pc.eta);
    const double slack = (est.max_error * check_decay_weight_max(est.fine, pc.eta, cs.ou()) +
                          e0 * std::exp(growth * est.fine.grid.t_max())) /
                         x0.norm();
    const double bound = decay_bound(m, sys.lip(), pc.eta);
    rec.checks.push_back(Check::make(tag + ".decay", ratio, bound + slack));
    d["decay_bound"] = bound;
  }

  if (cfg.derivative_order >= 1) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].norm() > pts[best].norm()) best = i;
    }
    const auto ds = solve_derivatives(pts[best], solver, cfg.derivative_order);
    const Matrix Dh = graph_derivative(ds[0], m);
    const Matrix fd = fd_graph_jacobian(solver, pts[best], cfg.fd_rel_step, cfg.fd_abs_step);
    rec.checks.push_back(Check::make(tag + ".derivative.fd", (Dh - fd).norm() / (1.0 + Dh.norm()), cfg.fd_tolerance));
    Json dj = Json::array();
    for (const auto& p : ds) {
      double r = 0.0;
      for (double x : p.ratios) r = std::max(r, x);
      rec.checks.push_back(Check::make(tag + ".derivative.contraction[order=" + std::to_string(p.order) + "]", r,
                                       p.contraction_bound + cfg.contraction_slack));
      dj.push_back({{"order", p.order},
                    {"delta", p.delta},
                    {"eta_shifted", p.eta_shifted},
                    {"iterations", p.iterations},
                    {"contraction_bound", p.contraction_bound}});
    }
    d["derivatives"] = dj;
  }

  rec.details[tag] = d;
  rec.graphs.emplace_back(std::move(g), pc);
}

}  // namespace detail

/// All checks for one seed; module errors are recorded, never thrown.
inline SeedRecord run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedRecord rec;
  rec.seed = seed;
  try {
    const SeedSetup setup = make_seed_setup(cfg, seed);
    for (ManifoldKind k : cfg.kinds()) detail::run_manifold(cfg, setup, k, rec);
    if (setup.path && cfg.horizon > 0.0 && !cfg.kinds().empty()) {
      const SpectralModel m = cfg.model();
      const ManifoldGraph& g = rec.graphs.front().first;
      const Vector x0 = setup.system.transform(0.0, g.base_points.front() + g.values.front(), Direction::inverse);
      int fmax = 1;
      for (int f : cfg.conjugacy_factors) fmax = std::max(fmax, f);
      const double H = std::floor(cfg.horizon / (fmax * cfg.step)) * fmax * cfg.step;
      const ConjugacyCurve c = check_conjugacy(m, setup.system.nonlinearity(), cfg.noise_kind, *setup.path, x0, H,
                                               cfg.conjugacy_factors, cfg.ou_truncation);
      rec.checks.push_back(Check::make("conjugacy.gap", c.gaps.front(), c.budget()));
      Json cj = {{"steps", c.steps},
                 {"gaps", c.gaps},
                 {"mild_error", c.mild_error},
                 {"reference_error", c.reference_error},
                 {"sample_error", c.sample_error}};
      cj["order"] = std::isnan(c.order) ? Json(nullptr) : Json(c.order);
      rec.details["conjugacy"] = cj;
    }
    rec.completed = true;
  } catch (const std::exception& e) {
    rec.completed = false;
    rec.error = e.what();
  }
  return rec;
}

/// Writes report.json plus, per seed and manifold, graph CSV and sidecar.
inline void write_artifacts(const VerificationReport& report, const std::filesystem::path& dir) {
  write_json(dir / "report.json", report.to_json());
  const ExperimentConfig cfg = ExperimentConfig::from_json(report.config);
  const SpectralModel m = cfg.model();
  for (const auto& s : report.seeds) {
    for (const auto& [g, pc] : s.graphs) {
      const std::string stem = std::string("graph_") + to_string(g.kind) + "_seed" + std::to_string(s.seed);
      write_csv(dir / (stem + ".csv"), graph_csv(g, m));
      write_json(dir / (stem + ".json"), graph_sidecar(g, pc));
    }
  }
}

/// Validates, runs every seed on a worker pool and assembles the report in
/// seed order. Artifacts go to cfg.output_dir when it is set.
inline VerificationReport run_experiment(const ExperimentConfig& cfg) {
  VerificationReport report;
  report.config = cfg.to_json();
  report.gap = cfg.validate();
  report.seeds.resize(cfg.seeds.size());
  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfg.seeds.size();) report.seeds[i] = run_seed(cfg, cfg.seeds[i]);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (!cfg.output_dir.empty()) write_artifacts(report, cfg.output_dir);
  return report;
}

}  // namespace stoman
