#pragma once

#include "chaotic_drivers.hpp"
#include "coefficient_field.hpp"
#include "displacement_field.hpp"
#include "lattice.hpp"
#include "velocity_field.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fastslow {

/// (a (x) b)_ij = a_i b_j
Mat outer(const Vec& a, const Vec& b);

/// Homogenized coefficients at one probe. `diffusion_matrix` is sigma sigma^T,
/// i.e. twice the Green-Kubo diffusion tensor D.
struct CoefficientEstimate {
    Vec at;
    Vec drift;
    Vec mean_velocity;     ///< <J^{-1} u(x + zeta)>
    Vec drift_correction;  ///< int_0^inf <grad f0(s) f0(0)> ds
    Mat diffusion_matrix;
    Mat sigma;
    std::vector<Vec> xi;   ///< nonzero rows of sigma
    int dropped_xi = 0;
    double clip = 0.0;     ///< magnitude of negative eigenvalues removed from sigma sigma^T
    int truncation_lag = 0;
    double truncation_time = 0.0;
    std::int64_t sample_count = 0;
};

struct DiffusionFactor {
    Mat sigma;
    double clip = 0.0;
};

/// Symmetric PSD square root of sigma sigma^T. Negative eigenvalues are clipped
/// to zero; clipping more than 1e-4 |D2| is a not-psd error.
DiffusionFactor factor_diffusion(const Mat& d2);

struct XiFields {
    std::vector<Vec> retained;
    std::vector<int> dropped;  ///< row indices with norm < 1e-12
};

XiFields extract_xi(const Mat& sigma);

/// D = sum_ij Gsym_ij phi_i(x) phi_j(x)^T for frozen displacement.
Mat frozen_diffusion(const ModeBasis& basis, const Eigen::MatrixXd& g, const Vec& x);

/// sum_il G_il (grad phi_l(x)) phi_i(x), with G_il = int <lambda_i(0) lambda_l(s)> ds.
Vec frozen_drift_correction(const ModeBasis& basis, const Eigen::MatrixXd& g, const Vec& x);

/// d x M matrix whose column k is sqrt(2) sum_i R_ik phi_i(x), R = (Gsym)^{1/2}:
/// the mode-indexed noise convention with one Brownian motion per mode.
Eigen::MatrixXd mode_noise_fields(const ModeBasis& basis, const Eigen::MatrixXd& g, const Vec& x);

/// Correlation window chosen by the truncation rule, growing the lag range
/// until the rule resolves (or the sample count runs out).
struct CorrelationWindow {
    Acf acf;
    GreenKuboResult green_kubo;
};

CorrelationWindow correlation_window(const Eigen::MatrixXd& samples, double dt, const TruncationRule& rule);

/// Green-Kubo estimator of the homogenized drift and diffusion from one long
/// record of fast observables (and displacement coefficients, unless frozen).
///
/// Frozen mode uses the closed forms in terms of the observable Green-Kubo
/// matrix. Full mode forms f0 = -J^{-1} sum_i lambda_i phi_i and its gradient
/// per sample and integrates their lagged cross-correlations over the same
/// window.
class CoefficientEstimator {
public:
    CoefficientEstimator(ModeBasis basis, MeanVelocityField u, ObservableSamples samples,
                         TruncationRule rule, double t = 0.0);

    bool frozen() const noexcept { return samples_.coeffs.cols() == 0; }
    const CorrelationWindow& window() const noexcept { return window_; }
    const Eigen::MatrixXd& green_kubo() const noexcept { return window_.green_kubo.integral; }
    std::int64_t sample_count() const noexcept { return samples_.count(); }

    CoefficientEstimate estimate(const Vec& x) const;
    /// Always use the general lagged-product path, also in frozen mode.
    CoefficientEstimate estimate_lagged(const Vec& x) const;

private:
    CoefficientEstimate finish(const Vec& x, Vec mean_velocity, Vec correction, Mat diffusion) const;

    ModeBasis basis_;
    MeanVelocityField u_;
    ObservableSamples samples_;
    double t_;
    CorrelationWindow window_;
};

/// D = (1/2) sigma sigma^T at x.
Mat estimate_diffusion_tensor(const CoefficientEstimator& est, const Vec& x);
Vec estimate_drift(const CoefficientEstimator& est, const Vec& x);

/// Probes plus shared metadata; the content of a coefficient file.
struct CoefficientTable {
    int dim = 1;
    int modes = 0;
    std::uint64_t seed = 0;
    std::int64_t sample_count = 0;
    int truncation_lag = 0;
    double truncation_time = 0.0;
    Domain domain;
    std::optional<Lattice> lattice;  ///< probes are the lattice nodes in flat order when set
    std::vector<CoefficientEstimate> probes;
};

void write_coefficient_file(const CoefficientTable& table, const std::string& path);
CoefficientTable read_coefficient_file(const std::string& path);
std::string serialize_coefficients(const CoefficientTable& table);
CoefficientTable parse_coefficients(const std::string& text);

/// Evaluate the table at x: multilinear interpolation of drift and sigma on the
/// probe lattice (out-of-hull outside a non-periodic lattice), or the single
/// probe's constants when the table holds one probe.
SdeField interpolated_field(CoefficientTable table);

/// Closed-form frozen-displacement field from a Green-Kubo matrix:
/// drift = u(x) + frozen_drift_correction, sigma = sqrt(2 D(x)).
SdeField frozen_closed_form_field(const ModeBasis& basis, const MeanVelocityField& u, const Eigen::MatrixXd& g);

}  // namespace fastslow
