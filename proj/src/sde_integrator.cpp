#include "sde_integrator.hpp"

#include "errors.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <cmath>

namespace fastslow {

namespace {
constexpr const char* kModule = "sde_integrator";
constexpr std::uint64_t kFlowMember = 0x666c6f77ULL;

std::int64_t step_count(double dt, double t_final) {
    if (!(dt > 0.0) || !(t_final >= 0.0)) raise(ErrorCategory::ConfigInvalid, kModule, "simulate_sde_ensemble", "need dt > 0 and t_final >= 0");
    const double n = t_final / dt;
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
        raise(ErrorCategory::ConfigInvalid, kModule, "simulate_sde_ensemble", "t_final must be an integer multiple of dt");
    }
    return static_cast<std::int64_t>(r);
}

void require_finite(const Vec& x, const char* op) {
    if (!x.allFinite()) raise(ErrorCategory::NonFinite, kModule, op, "state became non-finite");
}

double fd_step(double v) { return 1e-6 * std::max(1.0, std::abs(v)); }
}  // namespace

std::string_view interpretation_name(Interpretation i) {
    return i == Interpretation::Ito ? "ito" : "stratonovich";
}

Interpretation parse_interpretation(std::string_view name) {
    if (name == "ito") return Interpretation::Ito;
    if (name == "stratonovich") return Interpretation::Stratonovich;
    raise(ErrorCategory::ConfigInvalid, kModule, "parse_interpretation",
          "interpretation must be 'ito' or 'stratonovich', got '" + std::string(name) + "'");
}

Vec euler_maruyama_step(const Vec& x, const SdeField& f, double dt, const Eigen::Ref<const Eigen::VectorXd>& dw) {
    Vec out = x + f.drift(x) * dt + f.sigma(x) * dw;
    require_finite(out, "euler_maruyama_step");
    return out;
}

Vec stratonovich_heun_step(const Vec& x, const SdeField& f, double dt, const Eigen::Ref<const Eigen::VectorXd>& dw) {
    const Vec b0 = f.drift(x);
    const Mat s0 = f.sigma(x);
    const Vec pred = x + b0 * dt + s0 * dw;
    Vec out = x + 0.5 * (b0 + f.drift(pred)) * dt + 0.5 * (s0 + f.sigma(pred)) * dw;
    require_finite(out, "stratonovich_heun_step");
    return out;
}

int noise_dimension(const SdeField& f, const Vec& x0) { return static_cast<int>(f.sigma(x0).cols()); }

Vec simulate_sde_member(const SdeSpec& spec, std::uint64_t member) {
    const std::int64_t steps = step_count(spec.dt, spec.t_final);
    if (spec.x0.size() != spec.field.dim) {
        raise(ErrorCategory::DimensionMismatch, kModule, "simulate_sde_ensemble", "initial position dimension mismatch");
    }
    RandomStream rng(spec.seed, stream_tag::sde, member);
    const int m = noise_dimension(spec.field, spec.x0);
    const double sq = std::sqrt(spec.dt);
    Eigen::VectorXd dw(m);
    Vec x = spec.x0;
    for (std::int64_t n = 0; n < steps; ++n) {
        for (int i = 0; i < m; ++i) dw[i] = sq * rng.normal();
        x = spec.interpretation == Interpretation::Ito ? euler_maruyama_step(x, spec.field, spec.dt, dw)
                                                       : stratonovich_heun_step(x, spec.field, spec.dt, dw);
    }
    return x;
}

EnsembleReport make_report(Eigen::MatrixXd endpoints, int cdf_points) {
    EnsembleReport r;
    r.moments = summarize(endpoints);
    for (Eigen::Index k = 0; k < endpoints.cols(); ++k) {
        const double lo = endpoints.col(k).minCoeff();
        const double hi = endpoints.col(k).maxCoeff();
        std::vector<double> v(endpoints.col(k).data(), endpoints.col(k).data() + endpoints.rows());
        r.cdf.push_back(empirical_cdf(std::move(v), linear_grid(lo, hi, cdf_points)));
    }
    r.endpoints = std::move(endpoints);
    return r;
}

EnsembleReport simulate_sde_ensemble(const SdeSpec& spec, int threads, int cdf_points) {
    if (spec.ensemble < 2) raise(ErrorCategory::ConfigInvalid, kModule, "simulate_sde_ensemble", "ensemble size must be >= 2");
    if (!spec.field.drift || !spec.field.sigma) raise(ErrorCategory::ConfigInvalid, kModule, "simulate_sde_ensemble", "field is incomplete");
    step_count(spec.dt, spec.t_final);
    Eigen::MatrixXd endpoints(spec.ensemble, spec.field.dim);
    parallel_for(static_cast<std::size_t>(spec.ensemble), threads, [&](std::size_t m) {
        endpoints.row(static_cast<Eigen::Index>(m)) = simulate_sde_member(spec, m).transpose();
    });
    return make_report(std::move(endpoints), cdf_points);
}

double drift_divergence(const SdeField& f, const Vec& x) {
    if (f.drift_jacobian) return f.drift_jacobian(x).trace();
    double div = 0.0;
    for (int k = 0; k < x.size(); ++k) {
        const double h = fd_step(x[k]);
        Vec xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        div += (f.drift(xp)[k] - f.drift(xm)[k]) / (2.0 * h);
    }
    return div;
}

Vec noise_divergence(const SdeField& f, const Vec& x) {
    if (f.sigma_divergence) return f.sigma_divergence(x);
    const Mat s = f.sigma(x);
    Vec div = Vec::Zero(s.cols());
    for (int k = 0; k < x.size(); ++k) {
        const double h = fd_step(x[k]);
        Vec xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        div += ((f.sigma(xp).row(k) - f.sigma(xm).row(k)) / (2.0 * h)).transpose();
    }
    return div;
}

TransportResult advect_density_particles(const ParticleCloud& cloud, const SdeField& field, double dt,
                                         double t_final, std::uint64_t seed) {
    const std::int64_t steps = step_count(dt, t_final);
    const Eigen::Index n = cloud.positions.rows();
    if (cloud.positions.cols() != field.dim) {
        raise(ErrorCategory::DimensionMismatch, kModule, "advect_density_particles", "particle dimension mismatch");
    }
    if (static_cast<Eigen::Index>(cloud.weights.size()) != n || static_cast<Eigen::Index>(cloud.density.size()) != n) {
        raise(ErrorCategory::DimensionMismatch, kModule, "advect_density_particles", "weights/density length mismatch");
    }
    for (double w : cloud.weights) {
        if (!(w >= 0.0)) raise(ErrorCategory::InvalidArgument, kModule, "advect_density_particles", "weights must be nonnegative");
    }
    TransportResult out;
    out.particles = cloud;
    for (double w : cloud.weights) out.weight_before += w;
    if (n == 0) return out;

    const int m = noise_dimension(field, cloud.positions.row(0).transpose());
    // A single Brownian path drives every particle: the stochastic flow map.
    RandomStream rng(seed, stream_tag::sde, kFlowMember);
    const double sq = std::sqrt(dt);
    std::vector<Eigen::VectorXd> path(static_cast<std::size_t>(steps), Eigen::VectorXd(m));
    for (auto& dw : path)
        for (int i = 0; i < m; ++i) dw[i] = sq * rng.normal();

    std::vector<double> log_j(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index p = 0; p < n; ++p) {
        Vec x = cloud.positions.row(p).transpose();
        double lj = 0.0;
        for (const auto& dw : path) {
            const Vec b0 = field.drift(x);
            const Mat s0 = field.sigma(x);
            const double divb0 = drift_divergence(field, x);
            const Vec divs0 = noise_divergence(field, x);
            const Vec pred = x + b0 * dt + s0 * dw;
            const double divb1 = drift_divergence(field, pred);
            const Vec divs1 = noise_divergence(field, pred);
            x = x + 0.5 * (b0 + field.drift(pred)) * dt + 0.5 * (s0 + field.sigma(pred)) * dw;
            lj += 0.5 * (divb0 + divb1) * dt + 0.5 * (divs0 + divs1).dot(dw);
        }
        require_finite(x, "advect_density_particles");
        if (!std::isfinite(lj)) raise(ErrorCategory::NonFinite, kModule, "advect_density_particles", "non-finite Jacobian");
        out.particles.positions.row(p) = x.transpose();
        log_j[static_cast<std::size_t>(p)] = lj;
    }
    out.jacobian.resize(static_cast<std::size_t>(n));
    for (Eigen::Index p = 0; p < n; ++p) {
        const double j = std::exp(log_j[static_cast<std::size_t>(p)]);
        if (!std::isfinite(j) || j <= 0.0) raise(ErrorCategory::NonFinite, kModule, "advect_density_particles", "non-finite Jacobian");
        out.jacobian[static_cast<std::size_t>(p)] = j;
        out.particles.density[static_cast<std::size_t>(p)] = cloud.density[static_cast<std::size_t>(p)] / j;
        out.max_jacobian_defect = std::max(out.max_jacobian_defect, std::abs(j - 1.0));
    }
    for (double w : out.particles.weights) out.weight_after += w;
    return out;
}

}  // namespace fastslow
