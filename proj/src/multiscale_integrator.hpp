#pragma once

#include "chaotic_drivers.hpp"
#include "displacement_field.hpp"
#include "trajectory.hpp"
#include "velocity_field.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>

namespace fastslow {

/// Everything a multiscale member needs that is shared read-only across the
/// ensemble. `observables` must already be calibrated.
struct MultiscaleModel {
    ModeBasis basis;
    MeanVelocityField velocity;
    ObservableMap observables;
    DriverKind driver_kind = DriverKind::Lorenz63;
    DriverParams driver_params;
    double eps = 0.1;
    double dt_fast = 0.005;
    std::int64_t burn_in = 0;
};

struct MultiscaleState {
    Vec qbar;    ///< wrapped into the fundamental domain
    Vec lifted;  ///< unwrapped position on the covering space
    FastDriver driver;
    Eigen::VectorXd lambda;
    Eigen::VectorXd c;
    double t = 0.0;
    double eps = 0.1;
};

/// J^{-1} [u(x + zeta(x), t) - (1/eps) sum_i lambda_i phi_i(x)] with J = Id + grad zeta(x).
/// A zero-length `c` means frozen displacement (J = Id, zeta = 0).
Vec slow_rhs(const Vec& x, double t, const Eigen::Ref<const Eigen::VectorXd>& lambda,
             const Eigen::Ref<const Eigen::VectorXd>& c, double eps, const ModeBasis& basis,
             const MeanVelocityField& u);

/// Same, reading lambda and c from the state.
Vec slow_rhs(const MultiscaleState& state, const ModeBasis& basis, const MeanVelocityField& u);

/// sum_i sup|phi_i| * sup|lambda_i| from the calibrated observable bounds.
double forcing_bound(const ModeBasis& basis, const ObservableMap& map);

/// Largest dt_slow allowed by dt_slow * forcing / eps <= 0.1.
double max_stable_dt_slow(const MultiscaleModel& model);

/// Substeps per slow step: ceil(dt_slow / (eps^2 dt_fast)); 1 when there is no fast forcing.
int substeps(const MultiscaleModel& model, double dt_slow);

/// Fresh member state: driver drawn from (seed, member), burned in, observables read.
MultiscaleState initial_state(const MultiscaleModel& model, const Vec& position, std::uint64_t seed,
                              std::uint64_t member);

/// Advance one slow step. Each of the n_sub substeps takes one RK4 step of the
/// slow equation with lambda and c frozen at the current driver state, then
/// advances the driver by dt_slow / (eps^2 n_sub) of fast time.
void step_multiscale(MultiscaleState& state, double dt_slow, const MultiscaleModel& model);

struct MultiscaleRun {
    double dt_slow = 1e-3;
    double t_final = 1.0;
    int output_stride = 1;  ///< slow steps between recorded samples
    Vec initial_position;
};

/// Number of slow steps: t_final / dt_slow, which must be an integer to 1e-9.
std::int64_t slow_step_count(const MultiscaleRun& run);

struct MemberResult {
    std::vector<double> times;
    std::vector<Vec> positions;  ///< wrapped samples, including t = 0
    MultiscaleState final_state;
};

MemberResult simulate_multiscale(const MultiscaleModel& model, const MultiscaleRun& run, std::uint64_t seed,
                                 std::uint64_t member, bool record = true);

struct MultiscaleEnsemble {
    Eigen::MatrixXd endpoints;  ///< lifted, one row per member
    std::optional<TrajectoryBatch> trajectories;
};

MultiscaleEnsemble run_multiscale_ensemble(const MultiscaleModel& model, const MultiscaleRun& run,
                                           std::uint64_t seed, int members, int threads, bool record);

/// Classical RK4 for x' = u(x, t) at fixed step; the fluctuation-free reference.
Vec integrate_mean_flow(const MeanVelocityField& u, const Vec& x0, double t0, double dt, std::int64_t steps);

}  // namespace fastslow
