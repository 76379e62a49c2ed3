#include "chaotic_drivers.hpp"

#include "errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace fastslow {

namespace {

constexpr const char* kModule = "chaotic_drivers";
constexpr double kLorenzStabilityBound = 0.02;

std::array<double, 3> lorenz_rhs(const DriverParams& p, const std::array<double, 3>& y) {
    return {p.sigma * (y[1] - y[0]), y[0] * (p.rho - y[2]) - y[1], y[0] * y[1] - p.beta * y[2]};
}

}  // namespace

std::string_view driver_kind_name(DriverKind kind) {
    switch (kind) {
        case DriverKind::Lorenz63: return "lorenz63";
        case DriverKind::DoublingMap: return "doubling_map";
        case DriverKind::OuSurrogate: return "ou_surrogate";
    }
    return "unknown";
}

DriverKind parse_driver_kind(std::string_view name) {
    if (name == "lorenz63") return DriverKind::Lorenz63;
    if (name == "doubling_map") return DriverKind::DoublingMap;
    if (name == "ou_surrogate" || name == "ou") return DriverKind::OuSurrogate;
    raise(ErrorCategory::ConfigInvalid, kModule, "parse_driver_kind",
          "unknown driver kind '" + std::string(name) + "'");
}

FastDriver::FastDriver(DriverKind kind, DriverParams params, RandomStream stream)
    : kind_(kind), params_(params), stream_(std::move(stream)) {
    switch (kind_) {
        case DriverKind::Lorenz63:
            state_ = Eigen::VectorXd::Ones(3);
            break;
        case DriverKind::DoublingMap:
            state_ = Eigen::VectorXd::Zero(1);
            set_state(Eigen::VectorXd::Constant(1, 0.5 * (std::sqrt(5.0) - 1.0)));
            break;
        case DriverKind::OuSurrogate:
            if (params_.gamma <= 0.0 || params_.noise <= 0.0 || params_.ou_dimension < 1) {
                raise(ErrorCategory::ConfigInvalid, kModule, "FastDriver",
                      "ou_surrogate needs gamma > 0, noise > 0 and dimension >= 1");
            }
            state_ = Eigen::VectorXd::Zero(params_.ou_dimension);
            break;
    }
}

void FastDriver::set_state(const Eigen::VectorXd& y) {
    if (y.size() != state_.size()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "set_state",
              std::string(driver_kind_name(kind_)) + " expects state dimension " +
                  std::to_string(state_.size()) + ", got " + std::to_string(y.size()));
    }
    if (kind_ == DriverKind::DoublingMap) {
        double v = y[0] - std::floor(y[0]);
        // 53 significant bits in the upper part of the 64-bit fraction
        doubling_bits_ = static_cast<std::uint64_t>(std::ldexp(v, 53)) << 11;
        refresh_doubling_value();
        return;
    }
    state_ = y;
}

void FastDriver::refresh_doubling_value() {
    state_[0] = std::ldexp(static_cast<double>(doubling_bits_ >> 11), -53);
}

void FastDriver::randomize_state() {
    switch (kind_) {
        case DriverKind::Lorenz63:
            for (int i = 0; i < 3; ++i) state_[i] = 1.0 + stream_.normal();
            break;
        case DriverKind::DoublingMap:
            doubling_bits_ = stream_.bits();
            refresh_doubling_value();
            break;
        case DriverKind::OuSurrogate: {
            const double sd = params_.noise / std::sqrt(2.0 * params_.gamma);
            for (Eigen::Index i = 0; i < state_.size(); ++i) state_[i] = sd * stream_.normal();
            break;
        }
    }
}

double FastDriver::stability_bound() const noexcept {
    return kind_ == DriverKind::Lorenz63 ? kLorenzStabilityBound
                                         : std::numeric_limits<double>::infinity();
}

void FastDriver::step(double dt_fast) {
    switch (kind_) {
        case DriverKind::Lorenz63: {
            if (!(dt_fast > 0.0) || dt_fast > kLorenzStabilityBound) {
                raise(ErrorCategory::StepSizeGuard, kModule, "step_driver",
                      "lorenz63 dt_fast=" + std::to_string(dt_fast) + " outside (0, " +
                          std::to_string(kLorenzStabilityBound) + "]");
            }
            const std::array<double, 3> y{state_[0], state_[1], state_[2]};
            const auto k1 = lorenz_rhs(params_, y);
            std::array<double, 3> tmp;
            for (int i = 0; i < 3; ++i) tmp[i] = y[i] + 0.5 * dt_fast * k1[i];
            const auto k2 = lorenz_rhs(params_, tmp);
            for (int i = 0; i < 3; ++i) tmp[i] = y[i] + 0.5 * dt_fast * k2[i];
            const auto k3 = lorenz_rhs(params_, tmp);
            for (int i = 0; i < 3; ++i) tmp[i] = y[i] + dt_fast * k3[i];
            const auto k4 = lorenz_rhs(params_, tmp);
            for (int i = 0; i < 3; ++i) {
                state_[i] = y[i] + dt_fast / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            break;
        }
        case DriverKind::DoublingMap:
            doubling_bits_ = (doubling_bits_ << 1) | (stream_.bits() >> 63);
            refresh_doubling_value();
            break;
        case DriverKind::OuSurrogate: {
            if (!(dt_fast > 0.0)) {
                raise(ErrorCategory::StepSizeGuard, kModule, "step_driver",
                      "ou_surrogate needs dt_fast > 0");
            }
            const double a = std::exp(-params_.gamma * dt_fast);
            const double b = params_.noise * std::sqrt((1.0 - a * a) / (2.0 * params_.gamma));
            for (Eigen::Index i = 0; i < state_.size(); ++i) {
                state_[i] = a * state_[i] + b * stream_.normal();
            }
            break;
        }
    }
    ++steps_;
    if (!state_.allFinite()) {
        raise(ErrorCategory::IntegrationDiverged, kModule, "step_driver",
              std::string(driver_kind_name(kind_)) + " state non-finite at step " +
                  std::to_string(steps_));
    }
}

ObservableMap::ObservableMap(std::vector<ObservableChannel> lambda,
                             std::vector<CoefficientChannel> coeffs, bool normalize)
    : lambda_(std::move(lambda)), coeffs_(std::move(coeffs)), normalize_(normalize) {
    if (!coeffs_.empty() && coeffs_.size() != lambda_.size()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "ObservableMap",
              "coefficient channels (" + std::to_string(coeffs_.size()) +
                  ") must match observable channels (" + std::to_string(lambda_.size()) + ")");
    }
    lambda_bounds_.assign(lambda_.size(), 0.0);
}

void ObservableMap::calibrate(const FastDriver& driver, std::int64_t n_samples, std::int64_t burn_in,
                              double dt_fast) {
    const int dim = driver.dimension();
    for (const auto& ch : lambda_) {
        if (ch.coordinate < 0 || ch.coordinate >= dim) {
            raise(ErrorCategory::ConfigInvalid, kModule, "calibrate",
                  "observable coordinate " + std::to_string(ch.coordinate) + " outside driver dimension " +
                      std::to_string(dim));
        }
    }
    for (const auto& ch : coeffs_) {
        if (ch.coordinate < 0 || ch.coordinate >= dim) {
            raise(ErrorCategory::ConfigInvalid, kModule, "calibrate",
                  "coefficient coordinate " + std::to_string(ch.coordinate) +
                      " outside driver dimension " + std::to_string(dim));
        }
    }
    if (n_samples < 2) {
        raise(ErrorCategory::TooFewSamples, kModule, "calibrate", "need at least 2 calibration samples");
    }
    FastDriver probe = driver;
    probe.advance(dt_fast, burn_in);
    Eigen::MatrixXd ys(n_samples, dim);
    for (std::int64_t n = 0; n < n_samples; ++n) {
        ys.row(n) = probe.state().transpose();
        probe.step(dt_fast);
    }
    const Eigen::RowVectorXd mean = ys.colwise().mean();
    const Eigen::MatrixXd centered = ys.rowwise() - mean;
    Eigen::VectorXd sd(dim);
    for (int k = 0; k < dim; ++k) {
        sd[k] = std::sqrt(centered.col(k).squaredNorm() / static_cast<double>(n_samples - 1));
    }
    auto resolve = [&](auto& ch) {
        if (!ch.center) ch.center = normalize_ ? mean[ch.coordinate] : 0.0;
        if (!ch.scale) {
            const double s = sd[ch.coordinate];
            ch.scale = (normalize_ && s > 0.0) ? 1.0 / s : 1.0;
        }
    };
    for (auto& ch : lambda_) resolve(ch);
    for (auto& ch : coeffs_) resolve(ch);

    lambda_bounds_.assign(lambda_.size(), 0.0);
    Eigen::VectorXd out(lambda_.size());
    for (std::int64_t n = 0; n < n_samples; ++n) {
        lambda(ys.row(n).transpose(), out);
        for (std::size_t i = 0; i < lambda_.size(); ++i) {
            lambda_bounds_[i] = std::max(lambda_bounds_[i], std::abs(out[static_cast<Eigen::Index>(i)]));
        }
    }
    calibrated_ = true;
}

void ObservableMap::lambda(const Eigen::VectorXd& y, Eigen::Ref<Eigen::VectorXd> out) const {
    for (std::size_t i = 0; i < lambda_.size(); ++i) {
        const auto& ch = lambda_[i];
        out[static_cast<Eigen::Index>(i)] =
            ch.gain * ch.scale.value_or(1.0) * (y[ch.coordinate] - ch.center.value_or(0.0)) + ch.bias;
    }
}

void ObservableMap::coefficients(const Eigen::VectorXd& y, Eigen::Ref<Eigen::VectorXd> out) const {
    if (coeffs_.empty()) {
        out.setZero();
        return;
    }
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
        const auto& ch = coeffs_[i];
        out[static_cast<Eigen::Index>(i)] =
            ch.amplitude * std::tanh(ch.scale.value_or(1.0) * (y[ch.coordinate] - ch.center.value_or(0.0)));
    }
}

double ObservableMap::max_lambda_bound() const {
    double m = 0.0;
    for (double b : lambda_bounds_) m = std::max(m, b);
    return m;
}

void ObservableMap::scale_gains(double alpha) {
    for (auto& ch : lambda_) {
        ch.gain *= alpha;
        ch.bias *= alpha;
    }
    for (auto& b : lambda_bounds_) b *= std::abs(alpha);
}

ObservableSamples sample_invariant_measure(FastDriver& driver, const ObservableMap& map,
                                           std::int64_t n_samples, std::int64_t burn_in,
                                           std::int64_t stride, double dt_fast) {
    if (n_samples < 1 || burn_in < 0 || stride < 1) {
        raise(ErrorCategory::InvalidArgument, kModule, "sample_invariant_measure",
              "need n_samples >= 1, burn_in >= 0, stride >= 1");
    }
    const int m = map.modes();
    ObservableSamples out;
    out.dt = dt_fast * static_cast<double>(stride);
    out.lambda.resize(n_samples, m);
    out.coeffs.resize(map.frozen() ? 0 : n_samples, map.frozen() ? 0 : m);
    driver.advance(dt_fast, burn_in);
    Eigen::VectorXd buf(m);
    for (std::int64_t n = 0; n < n_samples; ++n) {
        if (n > 0) driver.advance(dt_fast, stride);
        map.lambda(driver.state(), buf);
        out.lambda.row(n) = buf.transpose();
        if (!map.frozen()) {
            map.coefficients(driver.state(), buf);
            out.coeffs.row(n) = buf.transpose();
        }
    }
    out.mean = out.lambda.colwise().mean().transpose();
    return out;
}

Acf autocorrelation(const Eigen::MatrixXd& samples, int max_lag, double dt) {
    const Eigen::Index n = samples.rows();
    if (max_lag < 1 || !(dt > 0.0)) {
        raise(ErrorCategory::InvalidArgument, kModule, "autocorrelation", "need max_lag >= 1 and dt > 0");
    }
    if (n <= 10 * static_cast<Eigen::Index>(max_lag)) {
        raise(ErrorCategory::TooFewSamples, kModule, "autocorrelation",
              "sample count " + std::to_string(n) + " must exceed 10*max_lag = " +
                  std::to_string(10 * max_lag));
    }
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Eigen::MatrixXd x = samples.rowwise() - mean;
    Acf acf;
    acf.dt = dt;
    acf.sample_count = n;
    acf.values.reserve(static_cast<std::size_t>(max_lag) + 1);
    for (int k = 0; k <= max_lag; ++k) {
        const Eigen::Index len = n - k;
        Eigen::MatrixXd c = x.topRows(len).transpose() * x.bottomRows(len);
        c /= static_cast<double>(len);
        if (k == 0) c = 0.5 * (c + c.transpose()).eval();
        if (!c.allFinite()) {
            raise(ErrorCategory::NonFinite, kModule, "autocorrelation",
                  "non-finite correlation at lag " + std::to_string(k));
        }
        acf.values.push_back(std::move(c));
    }
    return acf;
}

std::string_view truncation_kind_name(TruncationRule::Kind kind) {
    switch (kind) {
        case TruncationRule::Kind::FixedLag: return "fixed_lag";
        case TruncationRule::Kind::FirstZeroCrossing: return "first_zero_crossing";
        case TruncationRule::Kind::EfoldMultiple: return "efold_multiple";
    }
    return "unknown";
}

TruncationRule::Kind parse_truncation_kind(std::string_view name) {
    if (name == "fixed_lag") return TruncationRule::Kind::FixedLag;
    if (name == "first_zero_crossing") return TruncationRule::Kind::FirstZeroCrossing;
    if (name == "efold_multiple") return TruncationRule::Kind::EfoldMultiple;
    raise(ErrorCategory::ConfigInvalid, kModule, "parse_truncation_kind",
          "unknown truncation rule '" + std::string(name) + "'");
}

int resolve_truncation_lag(const Acf& acf, const TruncationRule& rule) {
    const int available = acf.max_lag();
    const double c0 = acf.values.at(0).trace();
    switch (rule.kind) {
        case TruncationRule::Kind::FixedLag:
            if (rule.lag < 0 || rule.lag > available) {
                raise(ErrorCategory::InsufficientLags, kModule, "green_kubo_integral",
                      "fixed lag " + std::to_string(rule.lag) + " exceeds available " +
                          std::to_string(available));
            }
            return rule.lag;
        case TruncationRule::Kind::FirstZeroCrossing: {
            if (c0 == 0.0) return 0;
            for (int k = 1; k <= available; ++k) {
                if (acf.values[static_cast<std::size_t>(k)].trace() <= 0.0) return k;
            }
            raise(ErrorCategory::InsufficientLags, kModule, "green_kubo_integral",
                  "trace of correlation has no zero crossing within " + std::to_string(available) + " lags");
        }
        case TruncationRule::Kind::EfoldMultiple: {
            if (c0 == 0.0) return 0;
            const double threshold = c0 / std::exp(1.0);
            for (int k = 1; k <= available; ++k) {
                const double ck = acf.values[static_cast<std::size_t>(k)].trace();
                if (ck <= threshold) {
                    const double prev = acf.values[static_cast<std::size_t>(k - 1)].trace();
                    const double frac = (prev - threshold) / (prev - ck);
                    const double efold = static_cast<double>(k - 1) + frac;
                    const int lag = static_cast<int>(std::ceil(rule.multiple * efold));
                    if (lag > available) {
                        raise(ErrorCategory::InsufficientLags, kModule, "green_kubo_integral",
                              "window of " + std::to_string(rule.multiple) + " e-foldings needs " +
                                  std::to_string(lag) + " lags, only " + std::to_string(available) +
                                  " available");
                    }
                    return std::max(lag, 1);
                }
            }
            raise(ErrorCategory::InsufficientLags, kModule, "green_kubo_integral",
                  "correlation does not decay by 1/e within " + std::to_string(available) + " lags");
        }
    }
    return 0;
}

std::vector<double> trapezoid_weights(int lag, double dt) {
    std::vector<double> w(static_cast<std::size_t>(lag) + 1, dt);
    if (lag == 0) {
        w[0] = 0.0;
        return w;
    }
    w.front() = 0.5 * dt;
    w.back() = 0.5 * dt;
    return w;
}

GreenKuboResult green_kubo_integral(const Acf& acf, const TruncationRule& rule) {
    GreenKuboResult out;
    out.lag = resolve_truncation_lag(acf, rule);
    out.time = out.lag * acf.dt;
    const auto w = trapezoid_weights(out.lag, acf.dt);
    const int m = acf.channels();
    out.integral = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k <= out.lag; ++k) out.integral += w[static_cast<std::size_t>(k)] * acf.values[static_cast<std::size_t>(k)];
    return out;
}

Eigen::VectorXd effective_sample_size(const Acf& acf, int lag) {
    const int m = acf.channels();
    const double n = static_cast<double>(acf.sample_count);
    Eigen::VectorXd out(m);
    for (int i = 0; i < m; ++i) {
        const double c0 = acf.values[0](i, i);
        if (c0 <= 0.0) {
            out[i] = n;
            continue;
        }
        double factor = 1.0;
        for (int k = 1; k <= std::min(lag, acf.max_lag()); ++k) factor += 2.0 * acf.values[static_cast<std::size_t>(k)](i, i) / c0;
        out[i] = std::clamp(n / std::max(factor, 1e-12), 1.0, n);
    }
    return out;
}

}  // namespace fastslow
