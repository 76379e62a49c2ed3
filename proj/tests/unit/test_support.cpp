#include "config.hpp"
#include "lattice.hpp"
#include "statistics.hpp"
#include "test_helpers.hpp"
#include "trajectory.hpp"
#include "velocity_field.hpp"

#include <gtest/gtest.h>
#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace fastslow;
using namespace fastslow::testing;

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> shipped_configs() {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(FASTSLOW_CONFIG_DIR))
        if (e.path().extension() == ".yaml") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<double> as_number(const std::string& s) {
    std::string t = s;
    double factor = 1.0;
    if (t.size() >= 2 && t.substr(t.size() - 2) == "pi") {
        factor = std::numbers::pi;
        t = t.substr(0, t.size() - 2);
        if (!t.empty() && t.back() == '*') t.pop_back();
        if (t.empty()) t = "1";
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) return std::nullopt;
        return v * factor;
    } catch (...) {
        return std::nullopt;
    }
}

/// Every key and value of `original` appears in `resolved` with an equal value.
void expect_contained(const YAML::Node& original, const YAML::Node& resolved, const std::string& path) {
    ASSERT_TRUE(resolved.IsDefined()) << "missing " << path;
    if (original.IsMap()) {
        ASSERT_TRUE(resolved.IsMap()) << path;
        for (const auto& kv : original) {
            const auto key = kv.first.as<std::string>();
            expect_contained(kv.second, resolved[key], path + "." + key);
        }
    } else if (original.IsSequence()) {
        ASSERT_TRUE(resolved.IsSequence()) << path;
        ASSERT_EQ(original.size(), resolved.size()) << path;
        for (std::size_t i = 0; i < original.size(); ++i) expect_contained(original[i], resolved[i], path + "[" + std::to_string(i) + "]");
    } else if (original.IsScalar()) {
        const auto a = original.as<std::string>(), b = resolved.as<std::string>();
        if (a == b) return;
        const auto na = as_number(a), nb = as_number(b);
        if (!na && a == "true") { EXPECT_EQ(b, "true") << path; return; }
        if (!na && a == "false") { EXPECT_EQ(b, "false") << path; return; }
        ASSERT_TRUE(na && nb) << path << ": '" << a << "' vs '" << b << "'";
        EXPECT_NEAR(*na, *nb, 1e-15 * std::max(1.0, std::abs(*na))) << path;
    }
}

}  // namespace

TEST(Config, ShippedConfigsRoundTrip) {
    for (const auto& p : shipped_configs()) {
        if (p.filename().string().rfind("malformed", 0) == 0) continue;
        SCOPED_TRACE(p.filename().string());
        const auto cfg = load_config(p.string());
        const std::string once = serialize_config(cfg);
        const std::string twice = serialize_config(parse_config(once));
        EXPECT_EQ(once, twice);
        EXPECT_EQ(config_hash(cfg), config_hash(parse_config(once)));
        expect_contained(YAML::LoadFile(p.string()), YAML::Load(once), "");
    }
}

TEST(Config, MissingDriverNamesKey) {
    try {
        load_config(std::string(FASTSLOW_CONFIG_DIR) + "/malformed_missing_driver.yaml");
        FAIL() << "expected config-invalid";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::ConfigInvalid);
        EXPECT_NE(std::string(e.what()).find("driver"), std::string::npos);
    }
}

TEST(Config, UnknownKeyRejected) {
    const std::string text = R"(
kind: simulate-sde
seed: 1
sde: {interpretation: ito, dt: 0.1, t_final: 1, ensemble: 10, initial_position: [0], coefficients: zero, bogus: 3}
modes: {domain: [1], list: [{wavevector: [0], amplitude: 1, direction: [1]}]}
velocity: {kind: zero}
)";
    try {
        parse_config(text);
        FAIL() << "expected config-invalid";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::ConfigInvalid);
        EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
    }
}

TEST(Config, MalformedValues) {
    EXPECT_EQ(category_of([] { parse_config("kind: nonsense\nseed: 1\n"); }), ErrorCategory::ConfigInvalid);
    EXPECT_EQ(category_of([] { parse_config("kind: [unclosed\n"); }), ErrorCategory::ConfigInvalid);
    EXPECT_EQ(category_of([] { load_config("/nonexistent/config.yaml"); }), ErrorCategory::Io);
}

TEST(Config, HashIgnoresOutputDirectory) {
    auto cfg = load_config(std::string(FASTSLOW_CONFIG_DIR) + "/converge_ou.yaml");
    const auto h = config_hash(cfg);
    cfg.output.dir = "/somewhere/else";
    EXPECT_EQ(config_hash(cfg), h);
    cfg.seed += 1;
    EXPECT_NE(config_hash(cfg), h);
    EXPECT_EQ(h.size(), 16u);
}

TEST(FormatDouble, ShortestRoundTrip) {
    RandomStream rs(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rs.normal(), static_cast<int>(rs.uniform() * 200) - 100);
        EXPECT_EQ(parse_double(format_double(v)), v);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(2.0), "2");
}

TEST(ErrorCategories, NamesAreStable) {
    EXPECT_EQ(category_name(ErrorCategory::ConfigInvalid), "config-invalid");
    EXPECT_EQ(category_name(ErrorCategory::NearSingular), "near-singular");
    EXPECT_EQ(category_name(ErrorCategory::CheckFailed), "check-failed");
}

TEST(RandomStream, PureFunctionOfKey) {
    RandomStream a(5, stream_tag::sde, 3), b(5, stream_tag::sde, 3), c(5, stream_tag::sde, 4), d(5, stream_tag::driver, 3);
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    EXPECT_NE(x, c.normal());
    EXPECT_NE(x, d.normal());
}

TEST(Statistics, SummaryMoments) {
    Eigen::MatrixXd x(4, 1);
    x << 1, 2, 3, 4;
    const auto s = summarize(x);
    EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
    EXPECT_DOUBLE_EQ(s.covariance(0, 0), 5.0 / 3.0);
    EXPECT_NEAR(s.mean_stderr[0], std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
    EXPECT_EQ(s.count, 4);
}

TEST(Statistics, KolmogorovSmirnov) {
    EXPECT_EQ(ks_statistic({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_EQ(ks_statistic({0, 0, 0}, {1, 1, 1}), 1.0);
    EXPECT_NEAR(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}), 0.5, 1e-15);
}

TEST(Statistics, EmpiricalCdf) {
    const auto c = empirical_cdf({1, 2, 3, 4}, {0.5, 2.0, 10.0});
    EXPECT_EQ(c.value[0], 0.0);
    EXPECT_EQ(c.value[1], 0.5);
    EXPECT_EQ(c.value[2], 1.0);
    EXPECT_NEAR(c.standard_error[1], 0.25, 1e-15);
    const auto g = linear_grid(0.0, 1.0, 5);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g.back(), 1.0);
    EXPECT_EQ(g.size(), 5u);
}

TEST(Lattice, NodesAndStencil) {
    const Domain d{{2.0, 1.0}, true};
    const auto lat = Lattice::over(d, {4, 2});
    EXPECT_EQ(lat.size(), 8);
    EXPECT_LT((lat.node(5) - vec({0.5, 0.5})).norm(), 1e-15);
    const auto st = lat.stencil(vec({0.25, 0.25}));
    double total = 0.0;
    for (const auto& [i, w] : st) total += w;
    EXPECT_NEAR(total, 1.0, 1e-15);
    const auto bounded = Lattice::over(Domain{{1.0}, false}, {3});
    EXPECT_EQ(category_of([&] { bounded.stencil(vec1(-0.1)); }), ErrorCategory::OutOfHull);
}

TEST(VelocityField, CellularIsDivergenceFree) {
    const auto u = MeanVelocityField::make_cellular(2, 1.3, 2.0);
    for (const Vec& x : {vec({0.1, 0.5}), vec({2.0, 4.0})}) EXPECT_NEAR(u.divergence(x, 0.0), 0.0, 1e-14);
    const auto s = MeanVelocityField::make_shear(2, 0.5, 1.0, 0, 1);
    EXPECT_NEAR(s.value(vec({0.0, std::numbers::pi / 2}), 0.0)[0], 0.5, 1e-15);
}

TEST(VelocityField, JacobianMatchesFiniteDifferences) {
    const auto u = MeanVelocityField::make_cellular(2, 1.3, 2.0);
    const Vec x = vec({0.4, 0.9});
    const double h = 1e-6;
    const Mat j = u.jacobian(x, 0.0);
    for (int c = 0; c < 2; ++c) {
        Vec xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        EXPECT_LT(((u.value(xp, 0.0) - u.value(xm, 0.0)) / (2 * h) - j.col(c)).norm(), 1e-8);
    }
}

TEST(VelocityField, RotationNeedsBoundedDomain) {
    const auto r = MeanVelocityField::make_rotation(2, 1.0, vec({0, 0}));
    EXPECT_EQ(category_of([&] { r.validate(Domain{{1.0, 1.0}, true}); }), ErrorCategory::ConfigInvalid);
    EXPECT_NO_THROW(r.validate(Domain{{1.0, 1.0}, false}));
}

TEST(Trajectory, CsvAndBinaryRoundTrip) {
    TrajectoryBatch b(3, 5, 2, 0.25, Domain{{6.0, 7.0}, true});
    RandomStream rs(3);
    for (auto& v : b.data) v = rs.uniform() * 6.0;
    const auto dir = fs::temp_directory_path();
    const auto csv = (dir / "fastslow_traj.csv").string();
    const auto bin = (dir / "fastslow_traj.bin").string();
    write_trajectory_csv(b, csv);
    write_trajectory_binary(b, bin);
    const auto c = read_trajectory_csv(csv, b.domain);
    const auto r = read_trajectory_binary(bin);
    fs::remove(csv);
    fs::remove(bin);
    EXPECT_EQ(c.data, b.data);
    EXPECT_EQ(r.data, b.data);
    EXPECT_EQ(r.dt, b.dt);
    EXPECT_EQ(r.domain, b.domain);
    EXPECT_EQ(c.n_traj, 3);
    EXPECT_EQ(c.n_samples, 5);
}

TEST(Trajectory, MissingFileIsIoError) {
    EXPECT_EQ(category_of([] { read_trajectory_binary("/nonexistent/x.bin"); }), ErrorCategory::Io);
}
