#include "statistics.hpp"

#include "errors.hpp"

#include <algorithm>
#include <cmath>

namespace fastslow {

namespace {
constexpr const char* kModule = "statistics";
}

CovarianceAccumulator::CovarianceAccumulator(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {}

void CovarianceAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != mean_.size()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "add", "sample dimension does not match accumulator");
    }
    ++count_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_.noalias() += delta * (x - mean_).transpose();
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
        *this = other;
        return;
    }
    if (other.mean_.size() != mean_.size()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "merge", "accumulator dimensions differ");
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    const Eigen::VectorXd delta = other.mean_ - mean_;
    mean_ += delta * (nb / n);
    m2_ += other.m2_ + (delta * delta.transpose()) * (na * nb / n);
    count_ += other.count_;
}

Eigen::MatrixXd CovarianceAccumulator::covariance() const {
    if (count_ < 2) return Eigen::MatrixXd::Zero(dim(), dim());
    Eigen::MatrixXd c = m2_ / static_cast<double>(count_ - 1);
    return 0.5 * (c + c.transpose());
}

Eigen::MatrixXd CovarianceAccumulator::population_covariance() const {
    if (count_ < 1) return Eigen::MatrixXd::Zero(dim(), dim());
    Eigen::MatrixXd c = m2_ / static_cast<double>(count_);
    return 0.5 * (c + c.transpose());
}

MomentSummary summarize(const Eigen::MatrixXd& samples) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < 2) raise(ErrorCategory::TooFewSamples, kModule, "summarize", "need at least 2 samples");
    CovarianceAccumulator acc(static_cast<int>(d));
    for (Eigen::Index i = 0; i < n; ++i) acc.add(samples.row(i).transpose());
    MomentSummary s;
    s.count = n;
    s.mean = acc.mean();
    s.covariance = acc.covariance();
    s.mean_stderr = (s.covariance.diagonal() / static_cast<double>(n)).cwiseSqrt();
    s.variance_stderr.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        double m4 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) m4 += std::pow(samples(i, k) - s.mean[k], 4);
        m4 /= static_cast<double>(n);
        const double var = s.covariance(k, k);
        const double nn = static_cast<double>(n);
        // Var(s^2) = (m4 - (n-3)/(n-1) var^2) / n
        const double v = (m4 - (nn - 3.0) / (nn - 1.0) * var * var) / nn;
        s.variance_stderr[k] = std::sqrt(std::max(v, 0.0));
    }
    return s;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) raise(ErrorCategory::TooFewSamples, kModule, "ks_statistic", "empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_statistic_columns(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) raise(ErrorCategory::DimensionMismatch, kModule, "ks_statistic_columns", "column counts differ");
    double d = 0.0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
        std::vector<double> va(a.col(k).data(), a.col(k).data() + a.rows());
        std::vector<double> vb(b.col(k).data(), b.col(k).data() + b.rows());
        d = std::max(d, ks_statistic(std::move(va), std::move(vb)));
    }
    return d;
}

CdfSamples empirical_cdf(std::vector<double> values, const std::vector<double>& grid) {
    if (values.empty()) raise(ErrorCategory::TooFewSamples, kModule, "empirical_cdf", "empty sample");
    std::sort(values.begin(), values.end());
    CdfSamples out;
    out.grid = grid;
    const double n = static_cast<double>(values.size());
    for (double g : grid) {
        const auto it = std::upper_bound(values.begin(), values.end(), g);
        const double f = static_cast<double>(it - values.begin()) / n;
        out.value.push_back(f);
        out.standard_error.push_back(std::sqrt(f * (1.0 - f) / n));
    }
    return out;
}

std::vector<double> linear_grid(double lo, double hi, int points) {
    std::vector<double> g;
    if (points < 1) return g;
    if (points == 1) return {0.5 * (lo + hi)};
    for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * static_cast<double>(i) / (points - 1));
    g.back() = hi;
    return g;
}

}  // namespace fastslow
