#pragma once

#include "config.hpp"
#include "eof_pipeline.hpp"
#include "homogenization.hpp"
#include "multiscale_integrator.hpp"
#include "statistics.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fastslow {

ModeBasis build_basis(const ExperimentConfig& config);

/// Observable map calibrated on a driver drawn from (seed, calibration, 0).
/// When centering injection is configured, the bias is added after calibration.
ObservableMap build_observables(const ExperimentConfig& config);

/// Diffeomorphism guard for the configured coefficient channels; frozen
/// configurations have zeta = 0 and always pass.
double displacement_grad_bound(const ExperimentConfig& config, const ModeBasis& basis);

MultiscaleModel build_model(const ExperimentConfig& config, double eps);

/// Configured dt_slow, or t_final / ceil(t_final / dt_max) under the step-size guard.
double resolve_dt_slow(const MultiscaleModel& model, const std::optional<double>& requested, double t_final);

/// Observable Green-Kubo matrix in closed form; only available for the
/// ou_surrogate driver: G_ij = a_i a_j s^2 / (2 gamma^2) when channels i and j
/// read the same coordinate (a = gain * scale), 0 otherwise.
Eigen::MatrixXd analytic_green_kubo(const ExperimentConfig& config, const ObservableMap& map);

/// Long ergodic record of the fast observables, driver stream (seed, sampling, 0).
ObservableSamples draw_samples(const ExperimentConfig& config, const ObservableMap& map, const SamplingConfig& sampling);

std::vector<Vec> probe_points(const ProbeConfig& probes, const Domain& domain);

CoefficientTable estimate_coefficient_table(const ExperimentConfig& config, const CoefficientEstimator& est);

struct ConvergenceRow {
    double eps = 0.0;
    double dt_slow = 0.0;
    int substeps = 0;
    MomentSummary moments;
    double ks = 0.0;
    double ks_bound = 0.0;  ///< slack * max(previous KS, noise level); 1 for the first eps
    bool monotone = true;
    bool guard_violation = false;
    std::string guard_message;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    MomentSummary reference;
    double ks_noise = 0.0;            ///< max KS between seed-resampled reference ensembles
    double variance_rel_error = 0.0;  ///< smallest eps, max over coordinates, vs the reference variance
    bool variance_ok = true;
    bool monotone = true;
    bool passed() const;
};

/// Multiscale endpoint laws for each eps against the homogenized Ito SDE.
ConvergenceReport weak_convergence_test(const ExperimentConfig& config);

struct CenteringProbe {
    Vec at;
    double residual = 0.0;
    double bound = 0.0;
};

struct CenteringReport {
    std::vector<CenteringProbe> probes;
    double grad_bound = 0.0;
    std::int64_t samples = 0;
    bool passed() const;
};

CenteringReport centering_check(const ExperimentConfig& config);

struct RunOutcome {
    std::vector<std::string> files;  ///< relative to the output directory
    bool passed = true;
    std::string message;
};

/// Execute the configured pipeline and write its reports into config.output.dir.
/// A failed statistical check still writes every report and then raises check-failed.
RunOutcome run_experiment(const ExperimentConfig& config);

std::string version_string();

}  // namespace fastslow
