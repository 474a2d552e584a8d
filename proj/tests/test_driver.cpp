#include "stoman/driver.hpp"
#include "stoman/io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stoman;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seeds = {3, 4};
  c.xi_samples.count = 4;
  c.taus = {1.0, 2.0};
  c.horizon = 2.0;
  c.threads = 2;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stoman_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(Io, CsvRoundTrip) {
  CsvTable t;
  t.meta = {{"content", "demo"}};
  t.columns = {"t", "u_1"};
  t.add_row({0.0, 1.5});
  t.add_row({0.01, -2.25e-7});
  const std::string s = t.str();
  EXPECT_EQ(s.rfind("# schema_version: 1\n", 0), 0u);
  const CsvTable r = read_csv(s);
  EXPECT_EQ(r.columns, t.columns);
  EXPECT_EQ(r.rows, t.rows);
  ASSERT_EQ(r.meta.size(), 1u);
  EXPECT_EQ(r.meta[0].second, "demo");
  EXPECT_THROW(t.add_row({1.0}), InputError);
  EXPECT_THROW((void)read_csv("t,u\n1,2\n"), InputError);
}

TEST(Io, PathAndTrajectoryCsv) {
  const auto path = WienerPath::sample(TimeGrid(-0.1, 0.1, 0.05), 2, 9);
  const CsvTable t = path_csv(path);
  EXPECT_EQ(t.columns, (std::vector<std::string>{"t", "channel_0", "channel_1"}));
  ASSERT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.rows[2][0], 0.0);
  EXPECT_EQ(t.rows[2][1], 0.0);
  const auto sys = stoman::testing::coupling_system(0.1, 0.0, 1.0, 0.1);
  const CsvTable tr = trajectory_csv(integrate_mild(sys, Vector{{1.0, 1.0}}, 1.0));
  EXPECT_EQ(tr.columns, (std::vector<std::string>{"t", "u_1", "u_2"}));
  EXPECT_EQ(tr.rows.size(), 11u);
}

TEST(Config, JsonRoundTripAndDefaults) {
  ExperimentConfig c = small_config();
  c.eta = -0.2;
  c.nonlinearity.family = "cubic";
  const Json j = c.to_json();
  EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
  const ExperimentConfig d = ExperimentConfig::from_json(j);
  EXPECT_EQ(d.to_json().dump(), j.dump());
  const ExperimentConfig e = ExperimentConfig::from_json(Json::object());
  EXPECT_EQ(e.ou_truncation, 40.0);
  EXPECT_EQ(e.contraction_slack, 0.05);
  EXPECT_EQ(e.fd_tolerance, 1e-3);
  EXPECT_EQ(e.fd_rel_step, 1e-5);
  EXPECT_EQ(e.fd_abs_step, 1e-7);
  EXPECT_DOUBLE_EQ(e.resolved_eta(), -0.25);
}

TEST(Config, ValidationErrors) {
  ExperimentConfig c = small_config();
  c.nonlinearity.family = "tanh";
  EXPECT_THROW((void)c.validate(), ConfigurationError);
  c = small_config();
  c.nonlinearity.eps = 2.0;
  EXPECT_THROW((void)c.validate(), GapViolation);
  c = small_config();
  c.nonlinearity.lip = 0.01;
  EXPECT_THROW((void)c.validate(), ConfigurationError);
  c = small_config();
  c.taus = {0.015};
  EXPECT_THROW((void)c.validate(), ConfigurationError);
  EXPECT_THROW((void)ExperimentConfig::from_json(Json{{"seeds", "x"}}), ConfigurationError);
  EXPECT_THROW((void)run_experiment([] {
                 auto c = small_config();
                 c.nonlinearity.eps = 2.0;
                 return c;
               }()),
               GapViolation);
}

TEST(BaseSamples, GridAndBall) {
  const SpectralModel m({0.5, -1.0, -2.0}, {0});
  XiSampling s;
  s.mode = "grid";
  s.count = 3;
  const auto g = sample_base_points(m, ManifoldKind::stable, s);
  ASSERT_EQ(g.size(), 9u);
  for (const auto& x : g) EXPECT_TRUE(lies_in(m, x, Sign::minus));
  EXPECT_EQ(g.front()(1), -1.0);
  s.mode = "random_ball";
  s.count = 50;
  const auto b = sample_base_points(m, ManifoldKind::unstable, s);
  ASSERT_EQ(b.size(), 50u);
  for (const auto& x : b) {
    EXPECT_TRUE(lies_in(m, x, Sign::plus));
    EXPECT_LE(x.norm(), 1.0);
  }
}

TEST(Decay, Oracles) {
  const SpectralModel m({0.5, -1.0}, {0});
  const TimeGrid g(0.0, 4.0, 0.01);
  const OUSample zero = OUSample::zero(g);
  const auto sys = ConjugatedSystem::deterministic(m, make_zero(2, 0.1), g);
  // Stable-subspace data: e^{-t} decays faster than e^{eta t}.
  EXPECT_LE(check_decay(integrate_mild(sys, Vector{{0.0, 1.0}}, 4.0), -0.25, zero), 1.0 + 1e-12);
  // Off-manifold data grows like e^{(alpha - eta) t}.
  const double r2 = check_decay(integrate_mild(sys, Vector{{0.1, 1.0}}, 2.0), -0.25, zero);
  const double r4 = check_decay(integrate_mild(sys, Vector{{0.1, 1.0}}, 4.0), -0.25, zero);
  EXPECT_GT(r4, r2);
  EXPECT_NEAR(r4, std::exp(1.0) * std::hypot(0.1 * std::exp(2.0), std::exp(-4.0)) / std::sqrt(1.01), 1e-9);
  EXPECT_EQ(check_decay(integrate_mild(sys, Vector::Zero(2), 4.0), -0.25, zero), 0.0);
}

TEST(Conjugacy, ZeroInitialDataAndGeometricBrownianMotion) {
  const SpectralModel m({0.0}, {}, 1.0, 1.0);
  const auto path = WienerPath::sample(TimeGrid(-41.0, 1.0, 1e-4), 1, 21);
  const auto zero = check_conjugacy(m, make_zero(1, 0.1), NoiseKind::multiplicative, path, Vector{{0.0}}, 1.0,
                                    {10, 20, 40, 80});
  for (double gap : zero.gaps) EXPECT_EQ(gap, 0.0);
  EXPECT_TRUE(std::isnan(zero.order));
  const auto gbm = check_conjugacy(m, make_zero(1, 0.1), NoiseKind::multiplicative, path, Vector{{1.0}}, 1.0,
                                   {10, 20, 40, 80});
  EXPECT_GE(gbm.order, 0.5);
  EXPECT_LE(gbm.gaps.front(), gbm.budget());
}

TEST(Conjugacy, AdditiveLinear) {
  const SpectralModel m({0.5, -1.0}, {0});
  const auto path = WienerPath::sample(TimeGrid(-41.0, 42.0, 1e-3), 2, 8);
  const auto c = check_conjugacy(m, make_zero(2, 0.1), NoiseKind::additive, path, Vector{{0.3, -0.2}}, 1.0,
                                 {1, 2, 4, 8});
  EXPECT_LE(c.gaps.front(), c.budget());
  EXPECT_LT(c.gaps.front(), c.gaps.back());
}

TEST(Invariance, TauZeroIsFixedPointAccurate) {
  const ExperimentConfig cfg = small_config();
  const SeedSetup setup = make_seed_setup(cfg, 5);
  const PerronConfig pc = cfg.perron();
  const PerronSolver s(setup.system, pc, ManifoldKind::stable);
  ManifoldGraph g = build_graph(s, sample_base_points(cfg.model(), ManifoldKind::stable, cfg.xi_samples));
  estimate_discretization(g, s);
  for (const auto& e : check_invariance(g, 0.0, setup.system, pc)) {
    EXPECT_LE(e.defect, 10 * pc.fixed_point_tol);
    EXPECT_LE(e.defect, e.tolerance);
  }
  EXPECT_THROW((void)check_invariance(transformed_graph(g, 0.3), 1.0, setup.system, pc), InputError);
}

TEST(Experiment, NullCaseVanishes) {
  ExperimentConfig c = small_config();
  c.nonlinearity.family = "zero";
  c.derivative_order = 0;
  const VerificationReport r = run_experiment(c);
  EXPECT_TRUE(r.all_pass());
  for (const auto& s : r.seeds) {
    for (const auto& [g, pc] : s.graphs) {
      for (const auto& v : g.values) EXPECT_LE(v.cwiseAbs().maxCoeff(), pc.fixed_point_tol + pc.tail_tol);
    }
  }
}

TEST(Experiment, DeterministicCouplingSlope) {
  ExperimentConfig c;
  c.eigenvalues = {1.0, -1.0};
  c.unstable_indices = {0};
  c.nonlinearity.family = "linear";
  c.nonlinearity.mixing = "swap";
  c.nonlinearity.eps = 0.1;
  c.noise_kind = NoiseKind::none;
  c.eta = 0.0;
  c.step = 1e-3;
  c.T_max = 25.0;
  c.taus = {1.0};
  c.horizon = 0.0;
  c.seeds = {1};
  c.xi_samples.mode = "grid";
  c.xi_samples.count = 3;
  const VerificationReport r = run_experiment(c);
  ASSERT_TRUE(r.all_pass()) << r.seeds[0].error;
  const double slope = 0.1 / (1.0 + std::sqrt(1.01));
  for (const auto& [g, pc] : r.seeds[0].graphs) {
    const double want = g.kind == ManifoldKind::stable ? -slope : slope;
    for (std::size_t i = 0; i < g.base_points.size(); ++i) {
      const double x = g.kind == ManifoldKind::stable ? g.base_points[i](1) : g.base_points[i](0);
      const double h = g.kind == ManifoldKind::stable ? g.values[i](0) : g.values[i](1);
      if (x != 0.0) {
        EXPECT_NEAR(h / x, want, 1e-4);
      }
    }
  }
}

TEST(Experiment, ReportAuditsAndIsDeterministic) {
  ExperimentConfig c = small_config();
  c.output_dir = temp_dir("a").string();
  const VerificationReport r = run_experiment(c);
  EXPECT_TRUE(r.all_pass());
  const Json j = r.to_json();
  EXPECT_TRUE(audit_report(j).empty());
  Json tampered = j;
  tampered["seeds"][0]["checks"][0]["pass"] = !tampered["seeds"][0]["checks"][0]["pass"].get<bool>();
  EXPECT_FALSE(audit_report(tampered).empty());

  c.output_dir = temp_dir("b").string();
  c.threads = 1;
  (void)run_experiment(c);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(temp_dir("probe").parent_path() / "stoman_test_a")) {
    const auto other = std::filesystem::path(c.output_dir) / e.path().filename();
    if (e.path().filename() == "report.json") continue;  // records output_dir and thread count
    ASSERT_TRUE(std::filesystem::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 8u);
  Json ra = Json::parse(slurp(std::filesystem::path(temp_dir("probe").parent_path() / "stoman_test_a" / "report.json")));
  Json rb = Json::parse(slurp(std::filesystem::path(c.output_dir) / "report.json"));
  EXPECT_EQ(ra.at("seeds").dump(), rb.at("seeds").dump());
}

TEST(Experiment, FailingSeedsAreRecorded) {
  ExperimentConfig c = small_config();
  c.max_iterations = 1;
  const VerificationReport r = run_experiment(c);
  EXPECT_EQ(r.passing_seeds(), 0u);
  ASSERT_EQ(r.seeds.size(), 2u);
  for (const auto& s : r.seeds) {
    EXPECT_FALSE(s.completed);
    EXPECT_NE(s.error.find("iterations"), std::string::npos) << s.error;
  }
  EXPECT_TRUE(audit_report(r.to_json()).empty());
}
