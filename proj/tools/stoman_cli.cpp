// stoman_cli: gap certificates, manifold graphs, graph derivatives,
// verification runs and trajectory simulation from a JSON experiment config.

#include "stoman/driver.hpp"
#include "stoman/io.hpp"

#include <CLI/CLI.hpp>

#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace stoman;

namespace {

// CLI cap on the derivative order; the library accepts any certified order.
constexpr int kMaxCliOrder = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed_override;
  std::string out;
  std::string format = "csv";
  std::string kind = "stable";
  int order = 1;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = ExperimentConfig::load(o.config);
  if (o.seed_override) c.seeds = {*o.seed_override};
  if (!o.out.empty()) c.output_dir = o.out;
  if (c.output_dir.empty()) c.output_dir = "stoman_out";
  return c;
}

ManifoldKind parse_kind(const std::string& k) {
  if (k == "stable") return ManifoldKind::stable;
  if (k == "unstable") return ManifoldKind::unstable;
  throw ConfigurationError("unknown manifold kind '" + k + "'");
}

int gap_check(const Options& o) {
  const ExperimentConfig c = ExperimentConfig::load(o.config);
  const SpectralModel m = c.model();
  const Nonlinearity f = c.make_nonlinearity();
  const GapReport g = check_gap(m, f.lip(), c.resolved_eta(), std::max(1, c.derivative_order));
  if (o.format == "json") {
    const std::string text = to_json(g).dump(2) + "\n";
    if (o.out.empty()) {
      std::cout << text;
    } else {
      write_text(fs::path(o.out) / "gap_report.json", text);
    }
  } else {
    CsvTable t;
    t.meta = {{"content", "gap_report"},
              {"admissible", g.admissible ? "true" : "false"},
              {"optimal_eta", format_double(g.optimal_eta)}};
    if (!g.failure.empty()) t.meta.emplace_back("failure", g.failure);
    t.columns = {"order", "i_eta", "g_i"};
    for (std::size_t i = 0; i < g.per_order_values.size(); ++i) {
      t.add_row({static_cast<double>(i + 1), static_cast<double>(i + 1) * g.eta, g.per_order_values[i]});
    }
    if (o.out.empty()) {
      std::cout << t.str();
    } else {
      write_csv(fs::path(o.out) / "gap_report.csv", t);
    }
  }
  return g.admissible ? 0 : 2;
}

int manifold(const Options& o) {
  const ExperimentConfig c = load(o);
  (void)c.validate();
  const ManifoldKind kind = parse_kind(o.kind);
  const PerronConfig pc = c.perron();
  const SpectralModel m = c.model();
  for (std::uint64_t seed : c.seeds) {
    const SeedSetup setup = make_seed_setup(c, seed);
    const PerronSolver solver(setup.system, pc, kind);
    ManifoldGraph g = build_graph(solver, sample_base_points(m, kind, c.xi_samples), seed);
    estimate_discretization(g, solver);
    const std::string stem = std::string("graph_") + to_string(kind) + "_seed" + std::to_string(seed);
    if (o.format == "json") {
      Json j = graph_sidecar(g, pc);
      Json pts = Json::array(), vals = Json::array();
      for (std::size_t i = 0; i < g.base_points.size(); ++i) {
        pts.push_back(to_json(g.base_points[i]));
        vals.push_back(to_json(g.values[i]));
      }
      j["base_points"] = pts;
      j["values"] = vals;
      j["max_discretization_error"] = g.max_discretization_error;
      write_json(fs::path(c.output_dir) / (stem + ".json"), j);
    } else {
      write_csv(fs::path(c.output_dir) / (stem + ".csv"), graph_csv(g, m));
      write_json(fs::path(c.output_dir) / (stem + ".json"), graph_sidecar(g, pc));
    }
    std::cout << stem << ": rho " << format_double(g.rho) << ", max iterations " << g.max_iterations
              << ", Lipschitz " << format_double(g.measured_lipschitz) << " (bound "
              << format_double(g.theoretical_lipschitz) << ")\n";
  }
  return 0;
}

int derivative(const Options& o) {
  if (o.order < 1 || o.order > kMaxCliOrder) {
    throw ConfigurationError("--order must be between 1 and " + std::to_string(kMaxCliOrder));
  }
  ExperimentConfig c = load(o);
  c.derivative_order = o.order;
  (void)c.validate();
  const ManifoldKind kind = parse_kind(o.kind);
  const PerronConfig pc = c.perron();
  const SpectralModel m = c.model();
  for (std::uint64_t seed : c.seeds) {
    const SeedSetup setup = make_seed_setup(c, seed);
    const PerronSolver solver(setup.system, pc, kind);
    const auto pts = sample_base_points(m, kind, c.xi_samples);
    std::vector<std::vector<std::pair<Vector, Matrix>>> per_order(static_cast<std::size_t>(o.order));
    for (const auto& xi : pts) {
      const auto ds = solve_derivatives(xi, solver, o.order);
      for (int k = 0; k < o.order; ++k) per_order[static_cast<std::size_t>(k)].emplace_back(xi, graph_derivative(ds[static_cast<std::size_t>(k)], m));
    }
    const std::size_t p = (kind == ManifoldKind::stable ? m.minus_modes() : m.plus_modes()).size();
    for (int k = 1; k <= o.order; ++k) {
      const std::string stem = std::string("derivative_") + to_string(kind) + "_order" + std::to_string(k) + "_seed" +
                               std::to_string(seed);
      const auto& rows = per_order[static_cast<std::size_t>(k - 1)];
      if (o.format == "json") {
        Json j = json_document("graph_derivative");
        j["manifold"] = to_string(kind);
        j["order"] = k;
        j["seed"] = seed;
        Json arr = Json::array();
        for (const auto& [xi, D] : rows) {
          Json mat = Json::array();
          for (Eigen::Index r = 0; r < D.rows(); ++r) mat.push_back(to_json(Vector(D.row(r).transpose())));
          arr.push_back({{"xi", to_json(xi)}, {"matrix", mat}});
        }
        j["points"] = arr;
        write_json(fs::path(c.output_dir) / (stem + ".json"), j);
      } else {
        write_csv(fs::path(c.output_dir) / (stem + ".csv"), derivative_csv(rows, k, p, kind));
      }
      std::cout << stem << ": " << rows.size() << " points\n";
    }
  }
  return 0;
}

int verify(const Options& o) {
  const ExperimentConfig c = load(o);
  const VerificationReport r = run_experiment(c);
  for (const auto& s : r.seeds) {
    std::size_t failed = 0;
    for (const auto& ch : s.checks) failed += ch.pass ? 0 : 1;
    std::cout << "seed " << s.seed << ": " << (s.pass() ? "PASS" : "FAIL");
    if (!s.completed) {
      std::cout << " (error: " << s.error << ")";
    } else {
      std::cout << " (" << s.checks.size() - failed << "/" << s.checks.size() << " checks)";
    }
    std::cout << "\n";
  }
  std::cout << r.passing_seeds() << "/" << r.seeds.size() << " seeds pass; report: "
            << (fs::path(c.output_dir) / "report.json").string() << "\n";
  return r.all_pass() ? 0 : 1;
}

int simulate(const Options& o) {
  const ExperimentConfig c = load(o);
  (void)c.validate();
  const SpectralModel m = c.model();
  const PerronConfig pc = c.perron();
  for (std::uint64_t seed : c.seeds) {
    const SeedSetup setup = make_seed_setup(c, seed);
    const auto pts = sample_base_points(m, ManifoldKind::stable, c.xi_samples);
    const PerronSolver solver(setup.system, pc, ManifoldKind::stable);
    const Vector x0 = pts.front() + solver.graph(pts.front());
    const ConjugatedSystem sys = detail::at_step(setup.system, pc.step);
    const Trajectory tr = integrate_mild(sys, x0, c.horizon);
    const std::string tag = "_seed" + std::to_string(seed);
    const fs::path dir(c.output_dir);
    if (o.format == "json") {
      Json j = json_document("simulation");
      j["seed"] = seed;
      j["t"] = Json::array();
      j["states"] = Json::array();
      for (std::size_t i = 0; i < tr.size(); ++i) {
        j["t"].push_back(tr.grid.time(i));
        j["states"].push_back(to_json(tr.state(i)));
      }
      write_json(dir / ("trajectory" + tag + ".json"), j);
    } else {
      write_csv(dir / ("trajectory" + tag + ".csv"), trajectory_csv(tr));
      if (setup.path) write_csv(dir / ("path" + tag + ".csv"), path_csv(*setup.path));
      if (sys.kind() == NoiseKind::multiplicative) write_csv(dir / ("ou" + tag + ".csv"), ou_csv(sys.ou()));
      if (setup.path) {
        const Vector xt0 = sys.transform(0.0, x0, Direction::inverse);
        const Trajectory ref = detail::reference_flow(sys, detail::path_at_step(*setup.path, pc.step), xt0, c.horizon);
        write_csv(dir / ("reference" + tag + ".csv"), trajectory_csv(ref));
      }
    }
    std::cout << "seed " << seed << ": " << tr.size() << " states on [0, " << format_double(c.horizon) << "]\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable and unstable manifolds of stochastic evolution equations"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed-override", o.seed_override, "run only this seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--format", o.format, "artifact format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto* gap = app.add_subcommand("gap-check", "evaluate the gap inequalities");
  common(gap);
  auto* man = app.add_subcommand("manifold", "sample the graph of a manifold");
  common(man);
  man->add_option("--kind", o.kind, "stable or unstable")->check(CLI::IsMember({"stable", "unstable"}));
  auto* der = app.add_subcommand("derivative", "derivatives of the graph at the sampled base points");
  common(der);
  der->add_option("--kind", o.kind, "stable or unstable")->check(CLI::IsMember({"stable", "unstable"}));
  der->add_option("--order", o.order, "highest order (1 to 3)")->check(CLI::Range(1, kMaxCliOrder));
  auto* ver = app.add_subcommand("verify", "run every check over all seeds");
  common(ver);
  auto* sim = app.add_subcommand("simulate", "trajectory from the stable manifold plus noise data");
  common(sim);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gap) return gap_check(o);
    if (*man) return manifold(o);
    if (*der) return derivative(o);
    if (*ver) return verify(o);
    if (*sim) return simulate(o);
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const GapViolation& e) {
    std::cerr << "gap violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
