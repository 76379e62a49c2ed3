#pragma once

#include "chaotic_drivers.hpp"
#include "displacement_field.hpp"
#include "sde_integrator.hpp"
#include "velocity_field.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fastslow {

enum class ExperimentKind { SimulateMultiscale, EstimateCoefficients, SimulateSde, Converge, Eof, CenteringCheck };

std::string_view experiment_kind_name(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

struct DriverConfig {
    DriverKind kind = DriverKind::Lorenz63;
    DriverParams params;
    double dt_fast = 0.005;
    std::int64_t burn_in = 10000;
    bool normalize = true;
    std::int64_t calibration_samples = 100000;
    std::vector<ObservableChannel> observables;
    std::vector<CoefficientChannel> coefficient_channels;  ///< empty: frozen displacement
};

struct AutoModes {
    int count = 1;
    int max_wavenumber = 1;
    double amplitude = 1.0;
    std::uint64_t seed = 0;
};

struct ModesConfig {
    Domain domain;
    double max_grad_norm = 0.5;
    std::vector<TrigMode> list;
    std::optional<AutoModes> generate;
};

struct IntegrationConfig {
    double eps = 0.1;
    std::optional<double> dt_slow;  ///< unset: largest guard-compliant step dividing t_final
    double t_final = 1.0;
    int output_stride = 1;
    Vec initial_position;
};

struct ProbeConfig {
    std::vector<int> lattice;   ///< counts per axis
    std::vector<Vec> points;    ///< explicit probes (used when lattice is empty)
};

struct SamplingConfig {
    std::int64_t samples = 100000;
    std::int64_t stride = 1;
};

struct HomogenizationConfig {
    SamplingConfig sampling;
    TruncationRule truncation = TruncationRule::efold_multiple(8.0);
    ProbeConfig probes;
};

enum class CoefficientSource { Estimate, Analytic, File, Zero };
std::string_view coefficient_source_name(CoefficientSource s);
CoefficientSource parse_coefficient_source(std::string_view name);

struct SdeConfig {
    Interpretation interpretation = Interpretation::Ito;
    double dt = 1e-3;
    double t_final = 1.0;
    int ensemble = 1000;
    Vec initial_position;
    CoefficientSource source = CoefficientSource::Estimate;
    std::string path;
};

struct ConvergeConfig {
    std::vector<double> eps_list;
    double t_final = 1.0;
    int ensemble = 4000;
    double sde_dt = 1e-3;
    CoefficientSource reference = CoefficientSource::Analytic;
    int reference_ensemble = 4000;
    int noise_resamples = 8;
    double slack = 1.5;
    double variance_tolerance = 0.15;
};

struct EofConfig {
    std::string input;       ///< empty: simulate trajectories from the multiscale blocks
    std::string format = "csv";
    double cutoff_period = 1.0;
    std::vector<int> grid;
    int min_count = 10;
    int retained = 1;
    std::vector<Vec> planted;  ///< optional directions to compare the pooled subspace against
    double max_angle = 0.1;
};

struct CenteringConfig {
    SamplingConfig sampling;
    ProbeConfig probes;
    double sigmas = 3.0;
    std::optional<int> inject_channel;
    double inject_mean = 0.0;
};

struct OutputConfig {
    std::string dir = "out";
    bool trajectories = false;
    std::string trajectory_format = "csv";
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::SimulateMultiscale;
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<DriverConfig> driver;
    std::optional<ModesConfig> modes;
    std::optional<MeanVelocityField> velocity;
    std::optional<IntegrationConfig> integration;
    std::optional<int> ensemble;
    std::optional<HomogenizationConfig> homogenization;
    std::optional<SdeConfig> sde;
    std::optional<ConvergeConfig> converge;
    std::optional<EofConfig> eof;
    std::optional<CenteringConfig> centering;
    OutputConfig output;
};

/// Parse YAML text. Missing or malformed keys are config-invalid errors naming the key path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Check that every block the kind needs is present and consistent.
void validate_config(const ExperimentConfig& config);

/// Canonical YAML with every resolved field; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& config);

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits. The output
/// directory is not part of an experiment's identity and is left out.
std::string config_hash(const ExperimentConfig& config);

}  // namespace fastslow
