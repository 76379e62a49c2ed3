#include "experiments.hpp"

#include "errors.hpp"
#include "random.hpp"
#include "sde_integrator.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef FASTSLOW_VERSION
#define FASTSLOW_VERSION "0.0.0"
#endif

namespace fastslow {

namespace {
constexpr const char* kModule = "harness_cli";

const DriverConfig& need_driver(const ExperimentConfig& c, const char* op) {
    if (!c.driver) raise(ErrorCategory::ConfigInvalid, kModule, op, "missing key 'driver'");
    return *c.driver;
}

const ModesConfig& need_modes(const ExperimentConfig& c, const char* op) {
    if (!c.modes) raise(ErrorCategory::ConfigInvalid, kModule, op, "missing key 'modes'");
    return *c.modes;
}

const MeanVelocityField& need_velocity(const ExperimentConfig& c, const char* op) {
    if (!c.velocity) raise(ErrorCategory::ConfigInvalid, kModule, op, "missing key 'velocity'");
    return *c.velocity;
}

const IntegrationConfig& need_integration(const ExperimentConfig& c, const char* op) {
    if (!c.integration) raise(ErrorCategory::ConfigInvalid, kModule, op, "missing key 'integration'");
    return *c.integration;
}

FastDriver make_driver(const ExperimentConfig& c, std::uint64_t tag) {
    const DriverConfig& d = need_driver(c, "make_driver");
    FastDriver driver(d.kind, d.params, RandomStream(c.seed, tag, 0));
    driver.randomize_state();
    return driver;
}

std::string num(double v) { return format_double(v); }

class ReportWriter {
public:
    explicit ReportWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) raise(ErrorCategory::Io, kModule, "run_experiment", "cannot create output directory " + dir_.string());
    }

    std::string path(const std::string& name) {
        files_.push_back(name);
        return (dir_ / name).string();
    }

    void text(const std::string& name, const std::string& content) {
        std::ofstream out(path(name), std::ios::binary);
        if (!out) raise(ErrorCategory::Io, kModule, "run_experiment", "cannot write " + (dir_ / name).string());
        out << content;
    }

    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

/// stat,value,stderr rows
class Summary {
public:
    Summary() { os_ << "stat,value,stderr\n"; }
    void add(const std::string& stat, double value) { os_ << stat << ',' << num(value) << ",\n"; }
    void add(const std::string& stat, double value, double stderr_value) {
        os_ << stat << ',' << num(value) << ',' << num(stderr_value) << '\n';
    }
    void add_text(const std::string& stat, const std::string& value) { os_ << stat << ',' << value << ",\n"; }
    void moments(const std::string& prefix, const MomentSummary& m) {
        const auto d = m.mean.size();
        for (Eigen::Index k = 0; k < d; ++k) add(prefix + "mean_" + std::to_string(k + 1), m.mean[k], m.mean_stderr[k]);
        for (Eigen::Index k = 0; k < d; ++k) {
            add(prefix + "variance_" + std::to_string(k + 1), m.covariance(k, k), m.variance_stderr[k]);
        }
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index k = j + 1; k < d; ++k)
                add(prefix + "covariance_" + std::to_string(j + 1) + "_" + std::to_string(k + 1), m.covariance(j, k));
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
};

std::string endpoints_csv(const Eigen::MatrixXd& e) {
    std::ostringstream os;
    os << "member";
    for (Eigen::Index k = 0; k < e.cols(); ++k) os << ",x" << (k + 1);
    os << '\n';
    for (Eigen::Index m = 0; m < e.rows(); ++m) {
        os << m;
        for (Eigen::Index k = 0; k < e.cols(); ++k) os << ',' << num(e(m, k));
        os << '\n';
    }
    return os.str();
}

std::string cdf_csv(const std::vector<CdfSamples>& cdf) {
    std::ostringstream os;
    os << "coordinate,x,cdf,stderr\n";
    for (std::size_t k = 0; k < cdf.size(); ++k) {
        for (std::size_t i = 0; i < cdf[k].grid.size(); ++i) {
            os << (k + 1) << ',' << num(cdf[k].grid[i]) << ',' << num(cdf[k].value[i]) << ','
               << num(cdf[k].standard_error[i]) << '\n';
        }
    }
    return os.str();
}

void write_trajectories(ReportWriter& w, const ExperimentConfig& c, const TrajectoryBatch& batch) {
    if (c.output.trajectory_format == "binary") write_trajectory_binary(batch, w.path("trajectories.bin"));
    else write_trajectory_csv(batch, w.path("trajectories.csv"));
}

MultiscaleRun make_run(const MultiscaleModel& model, const IntegrationConfig& ic, double t_final, int stride) {
    MultiscaleRun run;
    run.t_final = t_final;
    run.dt_slow = resolve_dt_slow(model, ic.dt_slow, t_final);
    run.output_stride = stride;
    run.initial_position = ic.initial_position;
    return run;
}

SdeField zero_noise_field(const MeanVelocityField& u, int dim) {
    SdeField f;
    f.dim = dim;
    f.drift = [u](const Vec& x) { return u.value(x, 0.0); };
    f.sigma = [dim](const Vec&) { return Mat(Mat::Zero(dim, dim)); };
    f.drift_jacobian = [u](const Vec& x) { return u.jacobian(x, 0.0); };
    f.sigma_divergence = [dim](const Vec&) { return Vec(Vec::Zero(dim)); };
    return f;
}

/// Homogenized field from the estimator: closed form in frozen mode, lattice
/// interpolation of the probe table otherwise.
SdeField estimated_field(const ExperimentConfig& c, const ModeBasis& basis, const ObservableMap& map) {
    if (!c.homogenization) raise(ErrorCategory::ConfigInvalid, kModule, "estimated_field", "missing key 'homogenization'");
    const MeanVelocityField& u = need_velocity(c, "estimated_field");
    CoefficientEstimator est(basis, u, draw_samples(c, map, c.homogenization->sampling), c.homogenization->truncation);
    if (est.frozen()) return frozen_closed_form_field(basis, u, est.green_kubo());
    return interpolated_field(estimate_coefficient_table(c, est));
}

SdeField analytic_field(const ExperimentConfig& c, const ModeBasis& basis, const ObservableMap& map) {
    return frozen_closed_form_field(basis, need_velocity(c, "analytic_field"), analytic_green_kubo(c, map));
}

std::string green_kubo_csv(const Eigen::MatrixXd& g) {
    std::ostringstream os;
    os << "i,j,value\n";
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j) os << (i + 1) << ',' << (j + 1) << ',' << num(g(i, j)) << '\n';
    return os.str();
}

std::string coefficients_csv(const CoefficientTable& t) {
    std::ostringstream os;
    const int d = t.dim;
    os << "probe";
    for (int k = 0; k < d; ++k) os << ",x" << (k + 1);
    for (int k = 0; k < d; ++k) os << ",drift" << (k + 1);
    for (int k = 0; k < d; ++k) os << ",correction" << (k + 1);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) os << ",sigma2_" << (a + 1) << (b + 1);
    os << ",clip\n";
    for (std::size_t p = 0; p < t.probes.size(); ++p) {
        const auto& e = t.probes[p];
        os << p;
        for (int k = 0; k < d; ++k) os << ',' << num(e.at[k]);
        for (int k = 0; k < d; ++k) os << ',' << num(e.drift[k]);
        for (int k = 0; k < d; ++k) os << ',' << num(e.drift_correction[k]);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) os << ',' << num(e.diffusion_matrix(a, b));
        os << ',' << num(e.clip) << '\n';
    }
    return os.str();
}

// Runners -----------------------------------------------------------------

RunOutcome run_simulate_multiscale(const ExperimentConfig& c, ReportWriter& w) {
    const IntegrationConfig& ic = need_integration(c, "simulate_multiscale");
    const MultiscaleModel model = build_model(c, ic.eps);
    const MultiscaleRun run = make_run(model, ic, ic.t_final, ic.output_stride);
    const auto ens = run_multiscale_ensemble(model, run, c.seed, *c.ensemble, c.threads, c.output.trajectories);
    const EnsembleReport rep = make_report(ens.endpoints);
    Summary s;
    s.add("eps", ic.eps);
    s.add("dt_slow", run.dt_slow);
    s.add("substeps", substeps(model, run.dt_slow));
    s.add("slow_steps", static_cast<double>(slow_step_count(run)));
    s.add("ensemble", static_cast<double>(*c.ensemble));
    s.moments("endpoint_", rep.moments);
    w.text("summary.csv", s.str());
    w.text("endpoints.csv", endpoints_csv(rep.endpoints));
    w.text("cdf.csv", cdf_csv(rep.cdf));
    if (ens.trajectories) write_trajectories(w, c, *ens.trajectories);
    return {};
}

RunOutcome run_estimate_coefficients(const ExperimentConfig& c, ReportWriter& w) {
    const ModeBasis basis = build_basis(c);
    displacement_grad_bound(c, basis);
    const ObservableMap map = build_observables(c);
    CoefficientEstimator est(basis, need_velocity(c, "estimate_coefficients"), draw_samples(c, map, c.homogenization->sampling),
                             c.homogenization->truncation);
    const CoefficientTable table = estimate_coefficient_table(c, est);
    write_coefficient_file(table, w.path("coefficients.txt"));
    w.text("coefficients.csv", coefficients_csv(table));
    w.text("green_kubo.csv", green_kubo_csv(est.green_kubo()));
    Summary s;
    s.add("sample_count", static_cast<double>(table.sample_count));
    s.add("sample_dt", est.window().acf.dt);
    s.add("truncation_lag", table.truncation_lag);
    s.add("truncation_time", table.truncation_time);
    s.add("frozen", est.frozen() ? 1.0 : 0.0);
    s.add("probes", static_cast<double>(table.probes.size()));
    double clip = 0.0;
    for (const auto& p : table.probes) clip = std::max(clip, p.clip);
    s.add("max_clip", clip);
    w.text("summary.csv", s.str());
    return {};
}

RunOutcome run_simulate_sde(const ExperimentConfig& c, ReportWriter& w) {
    const SdeConfig& sc = *c.sde;
    const ModeBasis basis = build_basis(c);
    const MeanVelocityField& u = need_velocity(c, "simulate_sde");
    SdeSpec spec;
    switch (sc.source) {
        case CoefficientSource::Zero: spec.field = zero_noise_field(u, basis.dim()); break;
        case CoefficientSource::File: spec.field = interpolated_field(read_coefficient_file(sc.path)); break;
        case CoefficientSource::Analytic: spec.field = analytic_field(c, basis, build_observables(c)); break;
        case CoefficientSource::Estimate:
            displacement_grad_bound(c, basis);
            spec.field = estimated_field(c, basis, build_observables(c));
            break;
    }
    if (spec.field.dim != basis.dim()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "simulate_sde", "coefficient field dimension differs from the modes domain");
    }
    spec.interpretation = sc.interpretation;
    spec.dt = sc.dt;
    spec.t_final = sc.t_final;
    spec.ensemble = sc.ensemble;
    spec.seed = c.seed;
    spec.x0 = sc.initial_position;
    const EnsembleReport rep = simulate_sde_ensemble(spec, c.threads);
    // Deterministic skeleton: the same scheme with every Brownian increment set to zero.
    const auto steps = static_cast<std::int64_t>(std::llround(sc.t_final / sc.dt));
    const Eigen::VectorXd no_noise = Eigen::VectorXd::Zero(noise_dimension(spec.field, spec.x0));
    Vec ode = spec.x0;
    for (std::int64_t n = 0; n < steps; ++n) {
        ode = sc.interpretation == Interpretation::Ito ? euler_maruyama_step(ode, spec.field, sc.dt, no_noise)
                                                       : stratonovich_heun_step(ode, spec.field, sc.dt, no_noise);
    }
    const Vec rk4 = integrate_mean_flow(u, sc.initial_position, 0.0, sc.dt, steps);
    Summary s;
    s.add_text("interpretation", std::string(interpretation_name(sc.interpretation)));
    s.add_text("coefficients", std::string(coefficient_source_name(sc.source)));
    s.add("dt", sc.dt);
    s.add("ensemble", sc.ensemble);
    s.moments("endpoint_", rep.moments);
    double dev = 0.0;
    for (int k = 0; k < ode.size(); ++k) {
        s.add("ode_endpoint_" + std::to_string(k + 1), ode[k]);
        s.add("mean_flow_rk4_endpoint_" + std::to_string(k + 1), rk4[k]);
        dev = std::max(dev, (rep.endpoints.col(k).array() - ode[k]).abs().maxCoeff());
    }
    s.add("max_deviation_from_ode", dev);
    w.text("summary.csv", s.str());
    w.text("endpoints.csv", endpoints_csv(rep.endpoints));
    w.text("cdf.csv", cdf_csv(rep.cdf));
    return {};
}

RunOutcome run_converge(const ExperimentConfig& c, ReportWriter& w) {
    const ConvergenceReport rep = weak_convergence_test(c);
    const int d = static_cast<int>(rep.reference.mean.size());
    std::ostringstream os;
    os << "eps,dt_slow,substeps,coordinate,mean,mean_stderr,variance,variance_stderr,reference_mean,reference_variance,"
          "ks,ks_noise,ks_bound,monotone,status\n";
    for (const auto& r : rep.rows) {
        for (int k = 0; k < d; ++k) {
            os << num(r.eps) << ',' << num(r.dt_slow) << ',' << r.substeps << ',' << (k + 1) << ',';
            if (r.guard_violation) {
                os << ",,,," << num(rep.reference.mean[k]) << ',' << num(rep.reference.covariance(k, k)) << ",," << num(rep.ks_noise)
                   << ",,0,step-size-guard\n";
                continue;
            }
            os << num(r.moments.mean[k]) << ',' << num(r.moments.mean_stderr[k]) << ',' << num(r.moments.covariance(k, k)) << ','
               << num(r.moments.variance_stderr[k]) << ',' << num(rep.reference.mean[k]) << ','
               << num(rep.reference.covariance(k, k)) << ',' << num(r.ks) << ',' << num(rep.ks_noise) << ','
               << num(r.ks_bound) << ',' << (r.monotone ? 1 : 0) << ",ok\n";
        }
    }
    w.text("convergence.csv", os.str());
    Summary s;
    s.moments("reference_", rep.reference);
    s.add("ks_noise", rep.ks_noise);
    s.add("variance_relative_error", rep.variance_rel_error);
    s.add("variance_ok", rep.variance_ok ? 1.0 : 0.0);
    s.add("monotone", rep.monotone ? 1.0 : 0.0);
    s.add("passed", rep.passed() ? 1.0 : 0.0);
    w.text("summary.csv", s.str());
    for (const auto& r : rep.rows) {
        if (r.guard_violation) raise(ErrorCategory::StepSizeGuard, "multiscale_integrator", "step_multiscale", r.guard_message);
    }
    RunOutcome out;
    out.passed = rep.passed();
    if (!out.passed) {
        out.message = !rep.variance_ok ? "endpoint variance at the smallest eps is outside the tolerance"
                                       : "KS distance is not nonincreasing within the slack";
    }
    return out;
}

RunOutcome run_eof(const ExperimentConfig& c, ReportWriter& w) {
    const EofConfig& ec = *c.eof;
    TrajectoryBatch batch;
    bool simulated = false;
    if (!ec.input.empty()) {
        if (ec.format == "binary") {
            batch = read_trajectory_binary(ec.input);
        } else {
            const ModesConfig& m = need_modes(c, "eof");
            batch = read_trajectory_csv(ec.input, m.domain);
        }
    } else {
        const IntegrationConfig& ic = need_integration(c, "eof");
        const MultiscaleModel model = build_model(c, ic.eps);
        const MultiscaleRun run = make_run(model, ic, ic.t_final, ic.output_stride);
        batch = *run_multiscale_ensemble(model, run, c.seed, *c.ensemble, c.threads, true).trajectories;
        simulated = true;
    }
    EofOptions opt;
    opt.cutoff_period = ec.cutoff_period;
    opt.grid_counts = ec.grid;
    opt.min_count = ec.min_count;
    opt.retained = ec.retained;
    const EofResult res = run_eof_pipeline(batch, opt);
    write_eof_file(res, w.path("eofs.txt"));

    std::ostringstream boxes;
    const int d = batch.dim;
    boxes << "box";
    for (int k = 0; k < d; ++k) boxes << ",center" << (k + 1);
    boxes << ",count,empty";
    for (int k = 0; k < d; ++k) boxes << ",value" << (k + 1);
    boxes << ",retained_fraction\n";
    auto row = [&](const BoxEof& b, const Vec& center) {
        boxes << b.box;
        for (int k = 0; k < d; ++k) boxes << ',' << num(center[k]);
        boxes << ',' << b.count << ',' << (b.empty ? 1 : 0);
        for (int k = 0; k < d; ++k) boxes << ',' << (b.empty ? std::string() : num(b.eof.values[k]));
        boxes << ',' << (b.empty ? std::string() : num(b.eof.retained_fraction)) << '\n';
    };
    for (const auto& b : res.boxes) row(b, res.grid.box_center(b.box));
    Vec mid(d);
    for (int k = 0; k < d; ++k) mid[k] = 0.5 * batch.domain.lengths[static_cast<std::size_t>(k)];
    row(res.pooled, mid);
    w.text("eof_boxes.csv", boxes.str());

    Summary s;
    s.add("trajectories", batch.n_traj);
    s.add("samples_per_trajectory", batch.n_samples);
    s.add("sample_dt", batch.dt);
    s.add("filter_window", filter_window(batch.dt, ec.cutoff_period));
    s.add("pooled_count", static_cast<double>(res.pooled.count));
    if (!res.pooled.empty) {
        for (int k = 0; k < d; ++k) s.add("pooled_value_" + std::to_string(k + 1), res.pooled.eof.values[k]);
        s.add("pooled_retained_fraction", res.pooled.eof.retained_fraction);
    }
    RunOutcome out;
    if (!ec.planted.empty()) {
        if (res.pooled.empty) raise(ErrorCategory::TooFewSamples, "eof_pipeline", "run_eof_pipeline", "no pooled samples");
        Eigen::MatrixXd planted(d, static_cast<Eigen::Index>(ec.planted.size()));
        for (std::size_t j = 0; j < ec.planted.size(); ++j) {
            if (ec.planted[j].size() != d) raise(ErrorCategory::DimensionMismatch, kModule, "eof", "planted direction dimension mismatch");
            planted.col(static_cast<Eigen::Index>(j)) = ec.planted[j];
        }
        const Eigen::VectorXd angles = principal_angles(res.pooled.eof.modes, planted);
        for (Eigen::Index i = 0; i < angles.size(); ++i) s.add("principal_angle_" + std::to_string(i + 1), angles[i]);
        const double worst = angles.size() > 0 ? angles.maxCoeff() : 0.0;
        s.add("max_principal_angle", worst);
        s.add("max_angle_allowed", ec.max_angle);
        out.passed = worst < ec.max_angle;
        if (!out.passed) out.message = "recovered subspace is " + num(worst) + " rad from the planted directions";
    }
    w.text("summary.csv", s.str());
    if (simulated && c.output.trajectories) write_trajectories(w, c, batch);
    return out;
}

RunOutcome run_centering(const ExperimentConfig& c, ReportWriter& w) {
    const CenteringReport rep = centering_check(c);
    const int d = rep.probes.empty() ? 0 : static_cast<int>(rep.probes.front().at.size());
    std::ostringstream os;
    os << "probe";
    for (int k = 0; k < d; ++k) os << ",x" << (k + 1);
    os << ",residual,bound,pass\n";
    double worst_ratio = 0.0;
    for (std::size_t p = 0; p < rep.probes.size(); ++p) {
        const auto& pr = rep.probes[p];
        os << p;
        for (int k = 0; k < d; ++k) os << ',' << num(pr.at[k]);
        os << ',' << num(pr.residual) << ',' << num(pr.bound) << ',' << (pr.residual <= pr.bound ? 1 : 0) << '\n';
        if (pr.bound > 0.0) worst_ratio = std::max(worst_ratio, pr.residual / pr.bound);
        else if (pr.residual > 0.0) worst_ratio = std::numeric_limits<double>::infinity();
    }
    w.text("centering.csv", os.str());
    Summary s;
    s.add("samples", static_cast<double>(rep.samples));
    s.add("grad_zeta_bound", rep.grad_bound);
    s.add("max_residual_over_bound", worst_ratio);
    s.add("passed", rep.passed() ? 1.0 : 0.0);
    w.text("summary.csv", s.str());
    RunOutcome out;
    out.passed = rep.passed();
    if (!out.passed) out.message = "centering residual exceeds the CLT bound (max ratio " + num(worst_ratio) + ")";
    return out;
}

}  // namespace

ModeBasis build_basis(const ExperimentConfig& c) {
    const ModesConfig& m = need_modes(c, "build_basis");
    if (m.generate) {
        return ModeBasis::generate(m.domain, m.generate->count, m.generate->max_wavenumber, m.generate->amplitude, m.generate->seed);
    }
    return ModeBasis(m.domain, m.list);
}

ObservableMap build_observables(const ExperimentConfig& c) {
    const DriverConfig& d = need_driver(c, "build_observables");
    std::vector<ObservableChannel> channels = d.observables;
    if (c.kind == ExperimentKind::CenteringCheck && c.centering && c.centering->inject_channel) {
        channels.at(static_cast<std::size_t>(*c.centering->inject_channel)).bias += c.centering->inject_mean;
    }
    ObservableMap map(channels, d.coefficient_channels, d.normalize);
    map.calibrate(make_driver(c, stream_tag::calibration), d.calibration_samples, d.burn_in, d.dt_fast);
    return map;
}

double displacement_grad_bound(const ExperimentConfig& c, const ModeBasis& basis) {
    if (!c.driver || c.driver->coefficient_channels.empty()) return 0.0;
    std::vector<double> caps;
    for (const auto& ch : c.driver->coefficient_channels) caps.push_back(std::abs(ch.amplitude));
    check_diffeomorphism(basis, caps, need_modes(c, "displacement_grad_bound").max_grad_norm);
    return grad_zeta_bound(basis, caps);
}

MultiscaleModel build_model(const ExperimentConfig& c, double eps) {
    const DriverConfig& d = need_driver(c, "build_model");
    MultiscaleModel model;
    model.basis = build_basis(c);
    displacement_grad_bound(c, model.basis);
    model.velocity = need_velocity(c, "build_model");
    model.observables = build_observables(c);
    model.driver_kind = d.kind;
    model.driver_params = d.params;
    model.eps = eps;
    model.dt_fast = d.dt_fast;
    model.burn_in = d.burn_in;
    return model;
}

double resolve_dt_slow(const MultiscaleModel& model, const std::optional<double>& requested, double t_final) {
    if (requested) return *requested;
    const double limit = max_stable_dt_slow(model);
    if (!std::isfinite(limit)) return t_final / std::ceil(t_final / 1e-2);
    return t_final / std::ceil(t_final / limit);
}

Eigen::MatrixXd analytic_green_kubo(const ExperimentConfig& c, const ObservableMap& map) {
    const DriverConfig& d = need_driver(c, "analytic_green_kubo");
    if (d.kind != DriverKind::OuSurrogate) {
        raise(ErrorCategory::ConfigInvalid, kModule, "analytic_green_kubo", "analytic coefficients need the ou_surrogate driver");
    }
    if (!map.frozen()) {
        raise(ErrorCategory::ConfigInvalid, kModule, "analytic_green_kubo", "analytic coefficients need frozen displacement");
    }
    const auto& ch = map.lambda_channels();
    const int m = static_cast<int>(ch.size());
    const double base = d.params.noise * d.params.noise / (2.0 * d.params.gamma * d.params.gamma);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (ch[static_cast<std::size_t>(i)].coordinate != ch[static_cast<std::size_t>(j)].coordinate) continue;
            const double ai = ch[static_cast<std::size_t>(i)].gain * ch[static_cast<std::size_t>(i)].scale.value_or(1.0);
            const double aj = ch[static_cast<std::size_t>(j)].gain * ch[static_cast<std::size_t>(j)].scale.value_or(1.0);
            g(i, j) = ai * aj * base;
        }
    }
    return g;
}

ObservableSamples draw_samples(const ExperimentConfig& c, const ObservableMap& map, const SamplingConfig& sampling) {
    const DriverConfig& d = need_driver(c, "draw_samples");
    FastDriver driver = make_driver(c, stream_tag::sampling);
    return sample_invariant_measure(driver, map, sampling.samples, d.burn_in, sampling.stride, d.dt_fast);
}

std::vector<Vec> probe_points(const ProbeConfig& probes, const Domain& domain) {
    if (!probes.lattice.empty()) return Lattice::over(domain, probes.lattice).nodes();
    return probes.points;
}

CoefficientTable estimate_coefficient_table(const ExperimentConfig& c, const CoefficientEstimator& est) {
    if (!c.homogenization) raise(ErrorCategory::ConfigInvalid, kModule, "estimate_coefficients", "missing key 'homogenization'");
    const ModesConfig& m = need_modes(c, "estimate_coefficients");
    CoefficientTable t;
    t.dim = m.domain.dim();
    t.modes = need_driver(c, "estimate_coefficients").observables.empty() ? 0 : static_cast<int>(c.driver->observables.size());
    t.seed = c.seed;
    t.sample_count = est.sample_count();
    t.truncation_lag = est.window().green_kubo.lag;
    t.truncation_time = est.window().green_kubo.time;
    t.domain = m.domain;
    if (!c.homogenization->probes.lattice.empty()) t.lattice = Lattice::over(m.domain, c.homogenization->probes.lattice);
    for (const Vec& x : probe_points(c.homogenization->probes, m.domain)) t.probes.push_back(est.estimate(x));
    return t;
}

bool ConvergenceReport::passed() const {
    if (!variance_ok || !monotone) return false;
    for (const auto& r : rows)
        if (r.guard_violation) return false;
    return true;
}

ConvergenceReport weak_convergence_test(const ExperimentConfig& c) {
    if (!c.converge) raise(ErrorCategory::ConfigInvalid, kModule, "weak_convergence_test", "missing key 'converge'");
    const ConvergeConfig& cc = *c.converge;
    const IntegrationConfig& ic = need_integration(c, "weak_convergence_test");
    if (cc.eps_list.size() < 3) raise(ErrorCategory::ConfigInvalid, kModule, "weak_convergence_test", "eps_list needs at least 3 values");

    const ModeBasis basis = build_basis(c);
    displacement_grad_bound(c, basis);
    const ObservableMap map = build_observables(c);

    SdeSpec ref;
    ref.field = cc.reference == CoefficientSource::Analytic ? analytic_field(c, basis, map) : estimated_field(c, basis, map);
    ref.interpretation = Interpretation::Ito;
    ref.dt = cc.sde_dt;
    ref.t_final = cc.t_final;
    ref.ensemble = cc.reference_ensemble;
    ref.x0 = ic.initial_position;
    ref.seed = derive_key(c.seed, stream_tag::reference, 0);
    const EnsembleReport reference = simulate_sde_ensemble(ref, c.threads);

    ConvergenceReport rep;
    rep.reference = reference.moments;
    ref.ensemble = cc.ensemble;
    for (int r = 1; r <= cc.noise_resamples; ++r) {
        ref.seed = derive_key(c.seed, stream_tag::reference, static_cast<std::uint64_t>(r));
        const EnsembleReport e = simulate_sde_ensemble(ref, c.threads);
        rep.ks_noise = std::max(rep.ks_noise, ks_statistic_columns(e.endpoints, reference.endpoints));
    }

    const ConvergenceRow* prev = nullptr;
    for (double eps : cc.eps_list) {
        ConvergenceRow row;
        row.eps = eps;
        MultiscaleModel model = build_model(c, eps);
        const MultiscaleRun run = make_run(model, ic, cc.t_final, 1);
        row.dt_slow = run.dt_slow;
        row.substeps = substeps(model, run.dt_slow);
        try {
            const auto ens = run_multiscale_ensemble(model, run, c.seed, cc.ensemble, c.threads, false);
            row.moments = summarize(ens.endpoints);
            row.ks = ks_statistic_columns(ens.endpoints, reference.endpoints);
        } catch (const Error& e) {
            if (e.category() != ErrorCategory::StepSizeGuard) throw;
            row.guard_violation = true;
            row.guard_message = e.detail();
            row.monotone = false;
        }
        if (!row.guard_violation) {
            if (prev && !prev->guard_violation) {
                row.ks_bound = cc.slack * std::max(prev->ks, rep.ks_noise);
                row.monotone = row.ks <= row.ks_bound;
            } else {
                row.ks_bound = 1.0;
            }
        }
        rep.monotone = rep.monotone && row.monotone;
        rep.rows.push_back(row);
        prev = &rep.rows.back();
    }

    const ConvergenceRow& last = rep.rows.back();
    if (last.guard_violation) {
        rep.variance_ok = false;
    } else {
        for (Eigen::Index k = 0; k < rep.reference.covariance.rows(); ++k) {
            const double target = rep.reference.covariance(k, k);
            const double got = last.moments.covariance(k, k);
            const double rel = target > 0.0 ? std::abs(got - target) / target : std::abs(got);
            rep.variance_rel_error = std::max(rep.variance_rel_error, rel);
        }
        rep.variance_ok = rep.variance_rel_error <= cc.variance_tolerance;
    }
    return rep;
}

bool CenteringReport::passed() const {
    for (const auto& p : probes)
        if (!(p.residual <= p.bound)) return false;
    return true;
}

CenteringReport centering_check(const ExperimentConfig& c) {
    if (!c.centering) raise(ErrorCategory::ConfigInvalid, kModule, "centering_check", "missing key 'centering'");
    const CenteringConfig& cc = *c.centering;
    const ModeBasis basis = build_basis(c);
    CenteringReport rep;
    rep.grad_bound = displacement_grad_bound(c, basis);
    const ObservableMap map = build_observables(c);
    const ObservableSamples samples = draw_samples(c, map, cc.sampling);
    rep.samples = samples.count();
    const std::vector<Vec> points = probe_points(cc.probes, basis.domain());
    const CenteringResidual res = centering_residual(basis, samples.lambda, samples.coeffs, points);

    const CorrelationWindow window = correlation_window(samples.lambda, samples.dt, TruncationRule::efold_multiple(8.0));
    const Eigen::VectorXd neff = effective_sample_size(window.acf, window.green_kubo.lag);
    const Eigen::Index m = samples.lambda.cols();
    Eigen::VectorXd sd(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double mean = samples.lambda.col(i).mean();
        sd[i] = std::sqrt((samples.lambda.col(i).array() - mean).square().sum() / static_cast<double>(samples.count() - 1));
    }
    const double factor = map.frozen() ? 1.0 : 1.0 / (1.0 - rep.grad_bound);
    for (std::size_t p = 0; p < points.size(); ++p) {
        CenteringProbe pr;
        pr.at = points[p];
        pr.residual = res.per_probe[p];
        double b = 0.0;
        for (int i = 0; i < basis.modes(); ++i) b += sd[i] * basis.phi(i, points[p]).norm() / std::sqrt(neff[i]);
        pr.bound = cc.sigmas * factor * b;
        rep.probes.push_back(pr);
    }
    return rep;
}

std::string version_string() { return FASTSLOW_VERSION; }

RunOutcome run_experiment(const ExperimentConfig& config) {
    validate_config(config);
    const auto start = std::chrono::steady_clock::now();
    ReportWriter w(config.output.dir);

    // The experiment's identity excludes where its reports are written.
    ExperimentConfig identity = config;
    identity.output.dir = ".";
    w.text("resolved_config.yaml", serialize_config(identity));

    RunOutcome out;
    switch (config.kind) {
        case ExperimentKind::SimulateMultiscale: out = run_simulate_multiscale(config, w); break;
        case ExperimentKind::EstimateCoefficients: out = run_estimate_coefficients(config, w); break;
        case ExperimentKind::SimulateSde: out = run_simulate_sde(config, w); break;
        case ExperimentKind::Converge: out = run_converge(config, w); break;
        case ExperimentKind::Eof: out = run_eof(config, w); break;
        case ExperimentKind::CenteringCheck: out = run_centering(config, w); break;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    nlohmann::ordered_json manifest;
    manifest["tool"] = "fastslow";
    manifest["version"] = version_string();
    manifest["kind"] = std::string(experiment_kind_name(config.kind));
    manifest["seed"] = config.seed;
    manifest["threads"] = config.threads;
    manifest["config_hash"] = config_hash(identity);
    manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION);
    manifest["wall_time_seconds"] = wall;
    manifest["status"] = out.passed ? "ok" : "check-failed";
    if (!out.passed) manifest["message"] = out.message;
    manifest["files"] = w.files();
    out.files = w.files();
    out.files.push_back("manifest.json");
    {
        std::ofstream m((w.dir() / "manifest.json").string(), std::ios::binary);
        if (!m) raise(ErrorCategory::Io, kModule, "run_experiment", "cannot write manifest.json");
        m << manifest.dump(2) << '\n';
    }
    if (!out.passed) raise(ErrorCategory::CheckFailed, kModule, "run_experiment", out.message);
    return out;
}

}  // namespace fastslow
