#include "displacement_field.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace fastslow;
using namespace fastslow::testing;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

TrigMode mode(Vec k, double phase, double amp, Vec dir) { return TrigMode{std::move(k), phase, amp, std::move(dir)}; }

Domain box2() { return Domain{{kTwoPi, kTwoPi}, true}; }

ModeBasis three_modes() {
    return ModeBasis(box2(), {mode(vec({1, 0}), 0.2, 0.3, vec({0, 1})),
                              mode(vec({0, 1}), 1.1, 0.2, vec({1, 0})),
                              mode(vec({1, 1}), -0.4, 0.1, vec({std::sqrt(0.5), -std::sqrt(0.5)}))});
}

Mat finite_difference_grad(const ModeBasis& b, const Eigen::VectorXd& c, const Vec& x, double h) {
    const int d = b.dim();
    Mat g(d, d);
    for (int j = 0; j < d; ++j) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        g.col(j) = (eval_zeta(b, c, xp) - eval_zeta(b, c, xm)) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST(EvalZeta, ZeroCoefficientsGiveZero) {
    const auto b = three_modes();
    EXPECT_EQ(eval_zeta(b, Eigen::VectorXd::Zero(3), vec({0.4, 2.0})).norm(), 0.0);
}

TEST(EvalZeta, SingleModeAtPeak) {
    const ModeBasis b(box2(), {mode(vec({1, 0}), 0.0, 0.7, vec({0, 1}))});
    const Vec z = eval_zeta(b, Eigen::VectorXd::Ones(1), vec({0.0, 1.3}));
    EXPECT_NEAR(z[0], 0.0, 1e-15);
    EXPECT_NEAR(z[1], 0.7, 1e-15);
}

TEST(EvalZeta, ModeOrderDoesNotMatter) {
    const auto b = three_modes();
    auto reversed = b.mode_list();
    std::reverse(reversed.begin(), reversed.end());
    const ModeBasis r(box2(), reversed);
    const Eigen::Vector3d c(0.3, -1.2, 0.8);
    const Eigen::Vector3d cr(0.8, -1.2, 0.3);
    const Vec x = vec({1.7, 4.2});
    EXPECT_LT((eval_zeta(b, c, x) - eval_zeta(r, cr, x)).norm(), 1e-14);
}

TEST(EvalZeta, LinearInCoefficients) {
    const auto b = three_modes();
    const Eigen::Vector3d c1(0.3, -1.2, 0.8), c2(-0.5, 0.1, 2.0);
    const Vec x = vec({0.9, 5.1});
    const Vec lhs = eval_zeta(b, 2.0 * c1 - 3.0 * c2, x);
    const Vec rhs = 2.0 * eval_zeta(b, c1, x) - 3.0 * eval_zeta(b, c2, x);
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(DzetaDt, UnitObservableSelectsMode) {
    const auto b = three_modes();
    const Vec x = vec({2.5, 0.3});
    for (int j = 0; j < 3; ++j) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(3, j);
        EXPECT_LT((dzeta_dt(b, e, x) - b.phi(j, x)).norm(), 1e-15);
    }
    const Eigen::Vector3d lam(0.1, 0.2, -0.7);
    EXPECT_EQ(dzeta_dt(b, lam, x), eval_zeta(b, lam, x));
}

TEST(MeanMapJacobian, IdentityForZeroCoefficients) {
    const auto b = three_modes();
    const auto j = mean_map_jacobian(b, Eigen::VectorXd::Zero(3), vec({1.0, 2.0}));
    EXPECT_EQ(j.jacobian, Mat::Identity(2, 2));
    EXPECT_EQ(j.inverse, Mat::Identity(2, 2));
}

TEST(MeanMapJacobian, OneDimensionalClosedForm) {
    const double a = 0.4, k = 2.0, phase = 0.3;
    const ModeBasis b(Domain{{kTwoPi}, true}, {mode(vec1(k), phase, a, vec1(1.0))});
    for (double x : {0.0, 0.7, 2.9}) {
        const auto j = mean_map_jacobian(b, Eigen::VectorXd::Ones(1), vec1(x));
        EXPECT_NEAR(j.jacobian(0, 0), 1.0 - a * k * std::sin(k * x + phase), 1e-14);
    }
}

TEST(MeanMapJacobian, InverseMatchesNeumannSeries) {
    const auto b = three_modes();
    const Eigen::Vector3d c(0.4, -0.5, 0.3);
    const Vec x = vec({0.8, 3.3});
    const Mat g = b.combine_grad(x, c);
    ASSERT_LE(g.norm(), 0.3 + 1e-12) << "test setup needs a small gradient";
    Mat series = Mat::Identity(2, 2), term = Mat::Identity(2, 2);
    for (int k = 1; k < 60; ++k) {
        term = (-g * term).eval();
        series += term;
    }
    const auto j = mean_map_jacobian(b, c, x);
    EXPECT_LT((j.inverse - series).norm(), 1e-8);
    EXPECT_LT((j.inverse * j.jacobian - Mat::Identity(2, 2)).norm(), 1e-12);
}

TEST(MeanMapJacobian, SingularMapIsRejected) {
    const ModeBasis b(Domain{{kTwoPi}, true}, {mode(vec1(1.0), 0.0, 1.0, vec1(1.0))});
    // J = 1 - sin(x) vanishes at pi/2
    EXPECT_EQ(category_of([&] { mean_map_jacobian(b, Eigen::VectorXd::Ones(1), vec1(std::numbers::pi / 2)); }),
              ErrorCategory::NearSingular);
}

TEST(Gradient, MatchesFiniteDifferences) {
    const auto b = three_modes();
    const Eigen::Vector3d c(0.9, -0.4, 1.3);
    for (const Vec& x : {vec({0.1, 0.2}), vec({3.0, 5.5}), vec({4.4, 1.9})}) {
        const Mat fd = finite_difference_grad(b, c, x, 1e-5);
        EXPECT_LT((b.combine_grad(x, c) - fd).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Gradient, SecondDerivativeMatchesFiniteDifferences) {
    const auto b = three_modes();
    const Vec x = vec({1.2, 0.4});
    const double h = 1e-5;
    for (int i = 0; i < b.modes(); ++i) {
        for (int j = 0; j < 2; ++j) {
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Mat fd = (b.grad_phi(i, xp) - b.grad_phi(i, xm)) / (2.0 * h);
            EXPECT_LT((b.grad_phi_derivative(i, x, j) - fd).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}

TEST(ModeBasis, DistinctWavevectorsAreOrthogonal) {
    EXPECT_LT(three_modes().orthogonality_defect(), 1e-10);
    const auto g = ModeBasis::generate(Domain{{kTwoPi, kTwoPi, kTwoPi}, true}, 6, 2, 0.1, 17);
    EXPECT_EQ(g.modes(), 6);
    EXPECT_LT(g.orthogonality_defect(), 1e-10);
}

TEST(ModeBasis, GenerationIsDeterministic) {
    const auto a = ModeBasis::generate(box2(), 4, 2, 0.1, 5);
    const auto b = ModeBasis::generate(box2(), 4, 2, 0.1, 5);
    const Vec x = vec({0.3, 0.6});
    for (int i = 0; i < 4; ++i) EXPECT_EQ(a.phi(i, x), b.phi(i, x));
}

TEST(Diffeomorphism, BoundAtOneIsNearSingular) {
    const ModeBasis b(Domain{{kTwoPi}, true}, {mode(vec1(1.0), 0.0, 1.0, vec1(1.0))});
    EXPECT_NEAR(grad_zeta_bound(b, {0.5}), 0.5, 1e-12);
    EXPECT_EQ(category_of([&] { check_diffeomorphism(b, {1.0}, 0.5); }), ErrorCategory::NearSingular);
    EXPECT_EQ(category_of([&] { check_diffeomorphism(b, {0.7}, 0.5); }), ErrorCategory::ConfigInvalid);
    EXPECT_NO_THROW(check_diffeomorphism(b, {0.4}, 0.5));
}

TEST(Diffeomorphism, BoundControlsSingularValues) {
    const auto b = three_modes();
    const std::vector<double> caps{0.5, 0.5, 0.5};
    const double bound = grad_zeta_bound(b, caps);
    ASSERT_LT(bound, 1.0);
    const double smin = min_singular_value_on_grid(b, Eigen::Vector3d(0.5, -0.5, 0.5), 24);
    EXPECT_GE(smin, 1.0 - bound - 1e-12);
}

TEST(CenteringResidual, ZeroObservablesGiveZero) {
    const auto b = three_modes();
    const auto r = centering_residual(b, Eigen::MatrixXd::Zero(100, 3), Eigen::MatrixXd(), {vec({0.1, 0.2}), vec({1.0, 3.0})});
    EXPECT_EQ(r.max_residual, 0.0);
}

TEST(CenteringResidual, IndependentSamplesWithinCltBound) {
    const ModeBasis b(box2(), {mode(vec({1, 0}), 0.0, 1.0, vec({0, 1}))});
    RandomStream rs(3);
    const int n = 40000;
    Eigen::MatrixXd lam(n, 1);
    for (int s = 0; s < n; ++s) lam(s, 0) = rs.normal();
    const Vec x = vec({0.4, 0.0});
    const auto r = centering_residual(b, lam, Eigen::MatrixXd(), {x});
    EXPECT_LE(r.max_residual, 3.0 * b.phi(0, x).norm() / std::sqrt(static_cast<double>(n)));
}

TEST(CenteringResidual, PlantedMeanIsDetected) {
    const ModeBasis b(box2(), {mode(vec({1, 0}), 0.0, 1.0, vec({0, 1}))});
    RandomStream rs(4);
    const int n = 40000;
    Eigen::MatrixXd lam(n, 1);
    for (int s = 0; s < n; ++s) lam(s, 0) = 0.1 + rs.normal();
    const Vec x = vec({0.0, 0.0});
    const auto r = centering_residual(b, lam, Eigen::MatrixXd(), {x});
    EXPECT_GE(r.max_residual, 0.05 * b.phi(0, x).norm());
}

TEST(CenteringResidual, MisalignedSamples) {
    const auto b = three_modes();
    EXPECT_EQ(category_of([&] { centering_residual(b, Eigen::MatrixXd::Zero(10, 2), Eigen::MatrixXd(), {vec({0, 0})}); }),
              ErrorCategory::Misaligned);
}
