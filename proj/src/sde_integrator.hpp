#pragma once

#include "coefficient_field.hpp"
#include "statistics.hpp"
#include "types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>
#include <vector>

namespace fastslow {

enum class Interpretation { Ito, Stratonovich };

std::string_view interpretation_name(Interpretation i);
Interpretation parse_interpretation(std::string_view name);

struct SdeSpec {
    SdeField field;
    Interpretation interpretation = Interpretation::Ito;
    double dt = 1e-3;
    double t_final = 1.0;
    int ensemble = 1000;
    std::uint64_t seed = 0;
    Vec x0;
};

/// X + b(X) dt + S(X) dW
Vec euler_maruyama_step(const Vec& x, const SdeField& f, double dt, const Eigen::Ref<const Eigen::VectorXd>& dw);

/// Predictor x* = x + b(x) dt + S(x) dW, corrector averages b and S over x and x*.
Vec stratonovich_heun_step(const Vec& x, const SdeField& f, double dt, const Eigen::Ref<const Eigen::VectorXd>& dw);

/// Number of noise components of the field at x0.
int noise_dimension(const SdeField& f, const Vec& x0);

struct EnsembleReport {
    Eigen::MatrixXd endpoints;      ///< one row per member
    MomentSummary moments;
    std::vector<CdfSamples> cdf;    ///< per coordinate
};

/// Endpoint of one member; the variates depend only on (seed, member, step).
Vec simulate_sde_member(const SdeSpec& spec, std::uint64_t member);

/// Members are independent and written to fixed slots, so the report does not
/// depend on the thread count. The CDF grid spans the sample range unless given.
EnsembleReport simulate_sde_ensemble(const SdeSpec& spec, int threads = 1, int cdf_points = 51);

/// Summarize an endpoint sample (shared with the multiscale reports).
EnsembleReport make_report(Eigen::MatrixXd endpoints, int cdf_points = 51);

struct ParticleCloud {
    Eigen::MatrixXd positions;  ///< n x d
    std::vector<double> weights;
    std::vector<double> density;  ///< rho_0 per particle
};

struct TransportResult {
    ParticleCloud particles;       ///< density holds rho_0 / J_t
    std::vector<double> jacobian;  ///< J_t per particle
    double weight_before = 0.0;
    double weight_after = 0.0;
    double max_jacobian_defect = 0.0;  ///< max |J_t - 1|
};

/// Move particles with the Stratonovich Heun scheme along one shared Brownian
/// path and integrate ln J by d ln J = div b dt + sum_i div s_i o dW_i.
TransportResult advect_density_particles(const ParticleCloud& cloud, const SdeField& field, double dt,
                                         double t_final, std::uint64_t seed);

/// Divergence of the drift and of every noise column at x; analytic when the
/// field provides it, central differences otherwise.
double drift_divergence(const SdeField& f, const Vec& x);
Vec noise_divergence(const SdeField& f, const Vec& x);

}  // namespace fastslow
