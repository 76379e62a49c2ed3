#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fastslow {

/// One-pass mean and covariance (Welford update, Chan et al. merge).
class CovarianceAccumulator {
public:
    CovarianceAccumulator() = default;
    explicit CovarianceAccumulator(int dim);

    void add(const Eigen::Ref<const Eigen::VectorXd>& x);
    /// Merge another accumulator; the result does not depend on how samples were split
    /// beyond floating-point rounding.
    void merge(const CovarianceAccumulator& other);

    int dim() const noexcept { return static_cast<int>(mean_.size()); }
    std::int64_t count() const noexcept { return count_; }
    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    /// Unbiased sample covariance (divides by n - 1); zero when n < 2.
    Eigen::MatrixXd covariance() const;
    /// Population covariance (divides by n).
    Eigen::MatrixXd population_covariance() const;

private:
    std::int64_t count_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd m2_;
};

struct MomentSummary {
    Eigen::VectorXd mean;
    Eigen::VectorXd mean_stderr;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd variance_stderr;  ///< normal-theory estimate sqrt(2/(n-1)) * var, refined by the fourth moment
    std::int64_t count = 0;
};

/// Moments of the rows of `samples`.
MomentSummary summarize(const Eigen::MatrixXd& samples);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Max over columns of the per-coordinate two-sample KS statistic.
double ks_statistic_columns(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Empirical CDF of `values` at the grid points, with binomial standard errors.
struct CdfSamples {
    std::vector<double> grid;
    std::vector<double> value;
    std::vector<double> standard_error;
};

CdfSamples empirical_cdf(std::vector<double> values, const std::vector<double>& grid);

/// `points` evenly spaced values spanning [lo, hi].
std::vector<double> linear_grid(double lo, double hi, int points);

}  // namespace fastslow
