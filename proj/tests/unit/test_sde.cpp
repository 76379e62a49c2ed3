#include "sde_integrator.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

using namespace fastslow;
using namespace fastslow::testing;

namespace {

SdeSpec scalar_spec(SdeField f, Interpretation interp, double dt, double t_final, int n, std::uint64_t seed, double x0) {
    SdeSpec s;
    s.field = std::move(f);
    s.interpretation = interp;
    s.dt = dt;
    s.t_final = t_final;
    s.ensemble = n;
    s.seed = seed;
    s.x0 = vec1(x0);
    return s;
}

SdeField linear_field_2d(const Mat& a, const Mat& noise) {
    SdeField f;
    f.dim = 2;
    f.drift = [a](const Vec& x) -> Vec { return a * x; };
    f.sigma = [noise](const Vec&) { return noise; };
    f.drift_jacobian = [a](const Vec&) { return a; };
    return f;
}

double mean_of(const Eigen::VectorXd& v) { return v.mean(); }
double var_of(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1); }

}  // namespace

TEST(EulerMaruyama, DeterministicStep) {
    const auto f = scalar_field([](double) { return 0.7; }, [](double) { return 0.0; });
    const Vec x = euler_maruyama_step(vec1(1.0), f, 0.1, Eigen::VectorXd::Constant(1, 0.3));
    EXPECT_NEAR(x[0], 1.07, 1e-15);
}

TEST(EulerMaruyama, BrownianLawMoments) {
    const auto f = scalar_field([](double) { return 0.0; }, [](double) { return 1.0; });
    const auto r = simulate_sde_ensemble(scalar_spec(f, Interpretation::Ito, 0.05, 2.0, 100000, 3, 0.5));
    const Eigen::VectorXd x = r.endpoints.col(0);
    const double n = 100000.0;
    EXPECT_LT(std::abs(mean_of(x) - 0.5), 3.0 * std::sqrt(2.0 / n));
    EXPECT_LT(std::abs(var_of(x) - 2.0), 3.0 * 2.0 * std::sqrt(2.0 / (n - 1)));
}

TEST(EulerMaruyama, IncrementsAreUncorrelated) {
    const auto f = scalar_field([](double) { return 0.0; }, [](double) { return 1.0; });
    const int n = 20000;
    Eigen::VectorXd a(n), b(n);
    for (int m = 0; m < n; ++m) {
        auto spec = scalar_spec(f, Interpretation::Ito, 0.1, 0.1, 2, 5, 0.0);
        const double x1 = simulate_sde_member(spec, static_cast<std::uint64_t>(m))[0];
        spec.t_final = 0.2;
        const double x2 = simulate_sde_member(spec, static_cast<std::uint64_t>(m))[0];
        a[m] = x1;
        b[m] = x2 - x1;
    }
    const double corr = ((a.array() - a.mean()) * (b.array() - b.mean())).mean() / std::sqrt(var_of(a) * var_of(b));
    EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(EulerMaruyama, WeakOrderOne) {
    // geometric test dX = mu X dt + s X dW; error against the exact solution on the same path
    const double mu = 1.0, s = 0.5, t_final = 1.0;
    const int n = 100000;
    std::vector<double> errors;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
        const auto steps = static_cast<int>(std::lround(t_final / dt));
        const auto f = scalar_field([mu](double x) { return mu * x; }, [s](double x) { return s * x; });
        double acc = 0.0;
        for (int m = 0; m < n; ++m) {
            RandomStream rng(17, stream_tag::sde, static_cast<std::uint64_t>(m));
            Vec x = vec1(1.0);
            double w = 0.0;
            Eigen::VectorXd dw(1);
            for (int k = 0; k < steps; ++k) {
                dw[0] = std::sqrt(dt) * rng.normal();
                w += dw[0];
                x = euler_maruyama_step(x, f, dt, dw);
            }
            acc += x[0] - std::exp((mu - 0.5 * s * s) * t_final + s * w);
        }
        errors.push_back(std::abs(acc / n));
    }
    const double slope = std::log2(errors[0] / errors[2]) / 2.0;
    EXPECT_GE(slope, 0.7);
    EXPECT_LE(slope, 1.3);
}

TEST(StratonovichHeun, ZeroNoiseIsExplicitStep) {
    const auto f = scalar_field([](double x) { return -x; }, [](double) { return 0.0; });
    const Vec x = stratonovich_heun_step(vec1(1.0), f, 0.1, Eigen::VectorXd::Constant(1, 0.4));
    EXPECT_NEAR(x[0], 1.0 - 0.1 + 0.5 * 0.01, 1e-15);
}

TEST(StratonovichHeun, GeometricNoiseLogMean) {
    const auto f = scalar_field([](double) { return 0.0; }, [](double x) { return x; });
    const auto r = simulate_sde_ensemble(scalar_spec(f, Interpretation::Stratonovich, 0.01, 1.0, 100000, 4, 2.0));
    const Eigen::VectorXd l = r.endpoints.col(0).array().log();
    EXPECT_LT(std::abs(mean_of(l) - std::log(2.0)), 3.0 * std::sqrt(var_of(l) / 100000.0));
}

TEST(StratonovichHeun, SameLawAsCorrectedIto) {
    const int n = 100000;
    const auto strat = scalar_field([](double) { return 0.0; }, [](double x) { return x; });
    const auto ito = scalar_field([](double x) { return 0.5 * x; }, [](double x) { return x; });
    const auto a = simulate_sde_ensemble(scalar_spec(strat, Interpretation::Stratonovich, 0.002, 1.0, n, 31, 1.0));
    const auto b = simulate_sde_ensemble(scalar_spec(ito, Interpretation::Ito, 0.002, 1.0, n, 32, 1.0));
    const Eigen::VectorXd la = a.endpoints.col(0).array().log();
    const Eigen::VectorXd lb = b.endpoints.col(0).array().log();
    const double se_mean = std::sqrt((var_of(la) + var_of(lb)) / n);
    EXPECT_LT(std::abs(mean_of(la) - mean_of(lb)), 3.0 * se_mean);
    const double se_var = std::sqrt(2.0 / (n - 1)) * std::sqrt(var_of(la) * var_of(la) + var_of(lb) * var_of(lb));
    EXPECT_LT(std::abs(var_of(la) - var_of(lb)), 3.0 * se_var);
}

TEST(Interpretation, ItoAndStratonovichMeansDifferByCorrection) {
    const int n = 50000;
    const auto f = scalar_field([](double) { return 0.0; }, [](double x) { return 0.5 * x; });
    const auto ito = simulate_sde_ensemble(scalar_spec(f, Interpretation::Ito, 0.01, 1.0, n, 41, 1.0));
    const auto str = simulate_sde_ensemble(scalar_spec(f, Interpretation::Stratonovich, 0.01, 1.0, n, 42, 1.0));
    // E[X] = 1 (Ito) and exp(0.125) (Stratonovich, drift 1/2 s s' = x/8)
    const Eigen::VectorXd xi = ito.endpoints.col(0), xs = str.endpoints.col(0);
    EXPECT_LT(std::abs(mean_of(xi) - 1.0), 3.0 * std::sqrt(var_of(xi) / n));
    EXPECT_LT(std::abs(mean_of(xs) - std::exp(0.125)), 3.0 * std::sqrt(var_of(xs) / n));
}

TEST(Ensemble, ZeroNoiseIsDegenerateAtOdeEndpoint) {
    const auto f = scalar_field([](double x) { return std::sin(x); }, [](double) { return 0.0; });
    const auto r = simulate_sde_ensemble(scalar_spec(f, Interpretation::Ito, 0.01, 1.0, 10, 1, 0.3));
    for (Eigen::Index i = 1; i < r.endpoints.rows(); ++i) EXPECT_EQ(r.endpoints(i, 0), r.endpoints(0, 0));
    double x = 0.3;
    for (int k = 0; k < 100; ++k) x += 0.01 * std::sin(x);
    EXPECT_EQ(r.endpoints(0, 0), x);
    EXPECT_EQ(r.moments.covariance(0, 0), 0.0);
}

TEST(Ensemble, SeedDeterminism) {
    const auto f = scalar_field([](double x) { return -x; }, [](double) { return 0.3; });
    const auto spec = scalar_spec(f, Interpretation::Ito, 0.01, 0.5, 200, 5, 0.0);
    const auto a = simulate_sde_ensemble(spec, 1);
    const auto b = simulate_sde_ensemble(spec, 3);
    EXPECT_EQ(a.endpoints, b.endpoints);
    auto other = spec;
    other.seed = 6;
    EXPECT_NE(simulate_sde_ensemble(other).endpoints, a.endpoints);
}

TEST(Ensemble, CdfIsMonotoneWithinUnitInterval) {
    const auto f = scalar_field([](double) { return 0.0; }, [](double) { return 1.0; });
    const auto r = simulate_sde_ensemble(scalar_spec(f, Interpretation::Ito, 0.1, 1.0, 2000, 2, 0.0));
    ASSERT_EQ(r.cdf.size(), 1u);
    const auto& c = r.cdf[0];
    for (std::size_t i = 1; i < c.value.size(); ++i) EXPECT_GE(c.value[i], c.value[i - 1]);
    EXPECT_GE(c.value.front(), 0.0);
    EXPECT_DOUBLE_EQ(c.value.back(), 1.0);
}

TEST(Ensemble, RejectsNonIntegerStepCount) {
    const auto f = scalar_field([](double) { return 0.0; }, [](double) { return 1.0; });
    EXPECT_EQ(category_of([&] { simulate_sde_ensemble(scalar_spec(f, Interpretation::Ito, 0.3, 1.0, 10, 1, 0.0)); }),
              ErrorCategory::ConfigInvalid);
}

TEST(Ensemble, NonFiniteStateIsReported) {
    const auto f = scalar_field([](double x) { return x * x * x; }, [](double) { return 0.0; });
    EXPECT_EQ(category_of([&] { simulate_sde_ensemble(scalar_spec(f, Interpretation::Ito, 0.5, 50.0, 2, 1, 10.0)); }),
              ErrorCategory::NonFinite);
}

TEST(Transport, IncompressibleFlowKeepsUnitJacobian) {
    Mat a(2, 2);
    a << 0.3, 1.0, -0.5, -0.3;
    Mat noise(2, 2);
    noise << 0.4, 0.0, 0.1, 0.2;  // constant noise fields are divergence free
    const auto f = linear_field_2d(a, noise);
    ParticleCloud cloud;
    cloud.positions = Eigen::MatrixXd::Random(50, 2);
    cloud.weights.assign(50, 0.02);
    cloud.density.assign(50, 1.0);
    const auto r = advect_density_particles(cloud, f, 1e-3, 1.0, 3);
    EXPECT_LT(r.max_jacobian_defect, 1e-6);
}

TEST(Transport, HyperbolicFlowClosedForm) {
    const double alpha = 0.5;
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = alpha;
    a(1, 1) = -alpha;
    const auto f = linear_field_2d(a, Mat::Zero(2, 1));
    ParticleCloud cloud;
    cloud.positions = Eigen::MatrixXd::Ones(1, 2);
    cloud.weights = {1.0};
    cloud.density = {1.0};
    const auto r = advect_density_particles(cloud, f, 1e-4, 1.0, 1);
    EXPECT_EQ(r.jacobian[0], 1.0);
    EXPECT_NEAR(r.particles.positions(0, 0), std::exp(alpha), 1e-8);
    EXPECT_NEAR(r.particles.positions(0, 1), std::exp(-alpha), 1e-8);
}

TEST(Transport, CompressibleFlowDensityFollowsJacobian) {
    // u = beta x in 1D: J_t = exp(beta t), rho_t = rho_0 exp(-beta t)
    const double beta = 0.4;
    const auto f = scalar_field([beta](double x) { return beta * x; }, [](double) { return 0.0; });
    ParticleCloud cloud;
    cloud.positions = Eigen::MatrixXd::Constant(3, 1, 0.5);
    cloud.weights = {0.1, 0.2, 0.7};
    cloud.density = {2.0, 2.0, 2.0};
    const auto r = advect_density_particles(cloud, f, 1e-3, 1.0, 2);
    EXPECT_NEAR(r.jacobian[1], std::exp(beta), 1e-6);
    EXPECT_NEAR(r.particles.density[1], 2.0 * std::exp(-beta), 1e-6);
}

TEST(Transport, TotalWeightIsConservedExactly) {
    Mat a(2, 2);
    a << 0.2, -0.3, 0.7, 0.1;
    Mat noise(2, 2);
    noise << 0.3, 0.1, 0.0, 0.2;
    auto f = linear_field_2d(a, noise);
    f.sigma = [](const Vec& x) {
        Mat s(2, 2);
        s << std::sin(x[1]), 0.1, x[0], 0.2;
        return s;
    };
    ParticleCloud cloud;
    cloud.positions = Eigen::MatrixXd::Random(40, 2);
    RandomStream rs(1);
    for (int i = 0; i < 40; ++i) cloud.weights.push_back(rs.uniform());
    cloud.density.assign(40, 1.0);
    const auto r = advect_density_particles(cloud, f, 1e-2, 1.0, 7);
    EXPECT_EQ(r.weight_before, r.weight_after);
}

TEST(Transport, NegativeWeightRejected) {
    const auto f = scalar_field([](double) { return 0.0; }, [](double) { return 0.0; });
    ParticleCloud cloud;
    cloud.positions = Eigen::MatrixXd::Zero(1, 1);
    cloud.weights = {-1.0};
    cloud.density = {1.0};
    EXPECT_EQ(category_of([&] { advect_density_particles(cloud, f, 0.1, 1.0, 1); }), ErrorCategory::InvalidArgument);
}

TEST(Divergence, NumericalMatchesAnalytic) {
    SdeField f;
    f.dim = 2;
    f.drift = [](const Vec& x) { return vec({x[0] * x[1], std::sin(x[1])}); };
    f.sigma = [](const Vec& x) {
        Mat s(2, 1);
        s << x[0] * x[0], x[1];
        return s;
    };
    const Vec x = vec({0.7, 0.3});
    EXPECT_NEAR(drift_divergence(f, x), x[1] + std::cos(x[1]), 1e-7);
    EXPECT_NEAR(noise_divergence(f, x)[0], 2.0 * x[0] + 1.0, 1e-7);
}
