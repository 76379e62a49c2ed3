#pragma once

#include "random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fastslow {

enum class DriverKind { Lorenz63, DoublingMap, OuSurrogate };

std::string_view driver_kind_name(DriverKind kind);
DriverKind parse_driver_kind(std::string_view name);

struct DriverParams {
    // lorenz63
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    // ou_surrogate (oracle only: stochastic, not chaotic)
    double gamma = 1.0;
    double noise = 1.0;
    int ou_dimension = 1;

    bool operator==(const DriverParams&) const = default;
};

/// Fast dynamics y' = g0(y) in fast time.
///
/// lorenz63 is stepped with classical RK4. doubling_map performs one iteration
/// y -> 2y mod 1 per step regardless of dt; its state is kept as a 64-bit binary
/// fraction and each iteration shifts in one fresh low-order bit from the stream,
/// i.e. the binary digits of an exact initial condition are revealed lazily
/// (plain double arithmetic collapses to 0 after ~53 iterations).
/// ou_surrogate uses the exact Gaussian transition and consumes one normal
/// variate per component per step.
class FastDriver {
public:
    FastDriver(DriverKind kind, DriverParams params, RandomStream stream);

    DriverKind kind() const noexcept { return kind_; }
    const DriverParams& params() const noexcept { return params_; }
    int dimension() const noexcept { return static_cast<int>(state_.size()); }
    const Eigen::VectorXd& state() const noexcept { return state_; }
    std::uint64_t step_index() const noexcept { return steps_; }

    void set_state(const Eigen::VectorXd& y);

    /// Draw a fresh initial condition from the member stream: a random
    /// perturbation of (1,1,1) for lorenz63, uniform bits for doubling_map, a
    /// stationary draw for ou_surrogate.
    void randomize_state();

    /// Largest admissible fast step (infinite for the exact/map kinds).
    double stability_bound() const noexcept;

    void step(double dt_fast);
    void advance(double dt_fast, std::int64_t n_steps) {
        for (std::int64_t i = 0; i < n_steps; ++i) step(dt_fast);
    }

private:
    void refresh_doubling_value();

    DriverKind kind_;
    DriverParams params_;
    RandomStream stream_;
    Eigen::VectorXd state_;
    std::uint64_t doubling_bits_ = 0;
    std::uint64_t steps_ = 0;
};

/// lambda_i = gain * scale * (y[coordinate] - center) + bias
struct ObservableChannel {
    int coordinate = 0;
    double gain = 1.0;
    double bias = 0.0;
    std::optional<double> center;
    std::optional<double> scale;

    bool operator==(const ObservableChannel&) const = default;
};

/// c_i = amplitude * tanh(scale * (y[coordinate] - center)); bounded by |amplitude|.
struct CoefficientChannel {
    int coordinate = 0;
    double amplitude = 0.0;
    std::optional<double> center;
    std::optional<double> scale;

    bool operator==(const CoefficientChannel&) const = default;
};

/// Maps a fast state y to the M observables lambda(y) and, unless frozen, the
/// M displacement coefficients c(y) read from separate channels.
class ObservableMap {
public:
    ObservableMap() = default;
    ObservableMap(std::vector<ObservableChannel> lambda, std::vector<CoefficientChannel> coeffs,
                  bool normalize);

    int modes() const noexcept { return static_cast<int>(lambda_.size()); }
    bool frozen() const noexcept { return coeffs_.empty(); }
    bool calibrated() const noexcept { return calibrated_; }

    const std::vector<ObservableChannel>& lambda_channels() const noexcept { return lambda_; }
    const std::vector<CoefficientChannel>& coefficient_channels() const noexcept { return coeffs_; }

    /// Resolve missing centers/scales from a long trajectory of a copy of
    /// `driver` (centered, unit-variance when normalizing; identity otherwise)
    /// and record the observed sup |lambda_i|.
    void calibrate(const FastDriver& driver, std::int64_t n_samples, std::int64_t burn_in,
                   double dt_fast);

    void lambda(const Eigen::VectorXd& y, Eigen::Ref<Eigen::VectorXd> out) const;
    void coefficients(const Eigen::VectorXd& y, Eigen::Ref<Eigen::VectorXd> out) const;

    /// Empirical sup |lambda_i| seen during calibration.
    const std::vector<double>& lambda_bounds() const noexcept { return lambda_bounds_; }
    double max_lambda_bound() const;

    /// Multiply every lambda channel gain by alpha.
    void scale_gains(double alpha);

private:
    std::vector<ObservableChannel> lambda_;
    std::vector<CoefficientChannel> coeffs_;
    bool normalize_ = true;
    bool calibrated_ = false;
    std::vector<double> lambda_bounds_;
};

/// Aligned observable records: row n holds lambda (and c) at sample n.
struct ObservableSamples {
    Eigen::MatrixXd lambda;
    Eigen::MatrixXd coeffs;  ///< zero columns in frozen mode
    Eigen::VectorXd mean;    ///< sample mean of each lambda_i
    double dt = 1.0;         ///< fast time between samples

    Eigen::Index count() const { return lambda.rows(); }
};

/// Ergodic sampling: discard burn_in steps, then record every `stride` steps.
ObservableSamples sample_invariant_measure(FastDriver& driver, const ObservableMap& map,
                                           std::int64_t n_samples, std::int64_t burn_in,
                                           std::int64_t stride, double dt_fast);

/// Lagged correlation matrices C(k)_ij = <lambda_i(0) lambda_j(k dt)>.
struct Acf {
    double dt = 1.0;
    std::vector<Eigen::MatrixXd> values;
    Eigen::Index sample_count = 0;

    int max_lag() const { return static_cast<int>(values.size()) - 1; }
    int channels() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
};

/// Mean-subtracted, lag-normalized (1/(N-k)) correlations; requires N > 10 max_lag.
Acf autocorrelation(const Eigen::MatrixXd& samples, int max_lag, double dt);

struct TruncationRule {
    enum class Kind { FixedLag, FirstZeroCrossing, EfoldMultiple };
    Kind kind = Kind::EfoldMultiple;
    int lag = 0;
    double multiple = 8.0;

    static TruncationRule fixed_lag(int lag) { return {Kind::FixedLag, lag, 0.0}; }
    static TruncationRule first_zero_crossing() { return {Kind::FirstZeroCrossing, 0, 0.0}; }
    static TruncationRule efold_multiple(double m = 8.0) { return {Kind::EfoldMultiple, 0, m}; }

    bool operator==(const TruncationRule&) const = default;
};

std::string_view truncation_kind_name(TruncationRule::Kind kind);
TruncationRule::Kind parse_truncation_kind(std::string_view name);

/// Lag index where the Green-Kubo quadrature stops.
int resolve_truncation_lag(const Acf& acf, const TruncationRule& rule);

/// Trapezoid weights over lags 0..lag with spacing dt.
std::vector<double> trapezoid_weights(int lag, double dt);

struct GreenKuboResult {
    Eigen::MatrixXd integral;  ///< G = int_0^T C(s) ds (not symmetrized)
    int lag = 0;
    double time = 0.0;

    Eigen::MatrixXd symmetric() const { return 0.5 * (integral + integral.transpose()); }
};

GreenKuboResult green_kubo_integral(const Acf& acf, const TruncationRule& rule);

/// N / (1 + 2 sum_{k=1}^{lag} rho_k) per channel, clamped to [1, N].
Eigen::VectorXd effective_sample_size(const Acf& acf, int lag);

}  // namespace fastslow
