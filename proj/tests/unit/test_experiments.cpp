#include "config.hpp"
#include "experiments.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fastslow;
using namespace fastslow::testing;

namespace fs = std::filesystem;

namespace {

ExperimentConfig shipped(const std::string& name, const std::string& out) {
    auto cfg = load_config(std::string(FASTSLOW_CONFIG_DIR) + "/" + name);
    cfg.output.dir = (fs::temp_directory_path() / "fastslow_unit" / out).string();
    fs::remove_all(cfg.output.dir);
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Experiments, ZeroNoiseSdeWritesReports) {
    const auto cfg = shipped("simulate_sde_zero_noise.yaml", "zero_noise");
    const auto r = run_experiment(cfg);
    EXPECT_TRUE(r.passed);
    for (const char* f : {"summary.csv", "endpoints.csv", "cdf.csv", "resolved_config.yaml", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(fs::path(cfg.output.dir) / f)) << f;
    }
    EXPECT_EQ(slurp(fs::path(cfg.output.dir) / "summary.csv").rfind("stat,value,stderr", 0), 0u);
}

TEST(Experiments, RerunIsByteIdenticalApartFromManifest) {
    auto a = shipped("estimate_coefficients_lorenz.yaml", "rerun_a");
    auto b = shipped("estimate_coefficients_lorenz.yaml", "rerun_b");
    const auto ra = run_experiment(a);
    const auto rb = run_experiment(b);
    ASSERT_EQ(ra.files, rb.files);
    for (const auto& f : ra.files) {
        if (f == "manifest.json") continue;
        EXPECT_EQ(slurp(fs::path(a.output.dir) / f), slurp(fs::path(b.output.dir) / f)) << f;
    }
}

TEST(Experiments, ThreadCountDoesNotChangeReports) {
    auto a = shipped("simulate_multiscale_lorenz.yaml", "threads_1");
    auto b = shipped("simulate_multiscale_lorenz.yaml", "threads_3");
    a.ensemble = 12;
    b.ensemble = 12;
    b.threads = 3;
    run_experiment(a);
    run_experiment(b);
    EXPECT_EQ(slurp(fs::path(a.output.dir) / "endpoints.csv"), slurp(fs::path(b.output.dir) / "endpoints.csv"));
    EXPECT_EQ(slurp(fs::path(a.output.dir) / "trajectories.csv"), slurp(fs::path(b.output.dir) / "trajectories.csv"));
}

TEST(Experiments, FailedCheckWritesReportsThenRaises) {
    auto cfg = shipped("centering_planted_bias.yaml", "planted");
    EXPECT_EQ(category_of([&] { run_experiment(cfg); }), ErrorCategory::CheckFailed);
    EXPECT_TRUE(fs::exists(fs::path(cfg.output.dir) / "centering.csv"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.output.dir) / "manifest.json"));
}

TEST(Experiments, GradientBoundViolations) {
    auto at_one = shipped("grad_bound_violation.yaml", "gb1");
    EXPECT_EQ(category_of([&] { run_experiment(at_one); }), ErrorCategory::NearSingular);
    auto margin = shipped("grad_bound_margin.yaml", "gb2");
    EXPECT_EQ(category_of([&] { run_experiment(margin); }), ErrorCategory::ConfigInvalid);
}

TEST(Experiments, AnalyticGreenKuboForOu) {
    const auto cfg = shipped("converge_ou.yaml", "analytic");
    const auto map = build_observables(cfg);
    const auto g = analytic_green_kubo(cfg, map);
    ASSERT_EQ(g.rows(), 1);
    EXPECT_DOUBLE_EQ(g(0, 0), 0.5);
}

TEST(Experiments, ProbePointsFromLattice) {
    ProbeConfig p;
    p.lattice = {2, 3};
    const auto pts = probe_points(p, Domain{{2.0, 3.0}, true});
    ASSERT_EQ(pts.size(), 6u);
    EXPECT_LT((pts[5] - vec({1.0, 2.0})).norm(), 1e-15);
}

TEST(Experiments, AutoSlowStepDividesHorizon) {
    const auto cfg = shipped("converge_ou.yaml", "auto_dt");
    const auto model = build_model(cfg, 0.05);
    const double dt = resolve_dt_slow(model, std::nullopt, 1.0);
    EXPECT_LE(dt, max_stable_dt_slow(model));
    EXPECT_NEAR(1.0 / dt, std::round(1.0 / dt), 1e-9);
}
