#include "multiscale_integrator.hpp"

#include "errors.hpp"
#include "parallel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace fastslow {

namespace {
constexpr const char* kModule = "multiscale_integrator";

bool has_fast_forcing(const MultiscaleModel& model) { return model.observables.modes() > 0; }

void check_finite(const Vec& x, const char* op, double t) {
    if (!x.allFinite()) {
        std::ostringstream os;
        os << "slow state became non-finite at t=" << format_double(t);
        raise(ErrorCategory::IntegrationDiverged, kModule, op, os.str());
    }
}
}  // namespace

Vec slow_rhs(const Vec& x, double t, const Eigen::Ref<const Eigen::VectorXd>& lambda,
             const Eigen::Ref<const Eigen::VectorXd>& c, double eps, const ModeBasis& basis,
             const MeanVelocityField& u) {
    const bool frozen = c.size() == 0;
    Vec rhs = frozen ? u.value(x, t) : u.value(x + basis.combine(x, c), t);
    if (lambda.size() > 0) rhs -= basis.combine(x, lambda) / eps;
    if (frozen) return rhs;
    const MeanMapJacobian jac = mean_map_jacobian(basis, c, x);
    return jac.inverse * rhs;
}

Vec slow_rhs(const MultiscaleState& state, const ModeBasis& basis, const MeanVelocityField& u) {
    return slow_rhs(state.lifted, state.t, state.lambda, state.c, state.eps, basis, u);
}

double forcing_bound(const ModeBasis& basis, const ObservableMap& map) {
    const auto& bounds = map.lambda_bounds();
    double total = 0.0;
    for (int i = 0; i < basis.modes() && i < static_cast<int>(bounds.size()); ++i) {
        total += basis.sup_norm(i) * bounds[static_cast<std::size_t>(i)];
    }
    return total;
}

double max_stable_dt_slow(const MultiscaleModel& model) {
    const double f = forcing_bound(model.basis, model.observables);
    return f > 0.0 ? 0.1 * model.eps / f : std::numeric_limits<double>::infinity();
}

int substeps(const MultiscaleModel& model, double dt_slow) {
    if (!has_fast_forcing(model)) return 1;
    const double ratio = dt_slow / (model.eps * model.eps * model.dt_fast);
    // Guard against ratio = 20.000000000000004 turning into 21 substeps.
    return std::max(1, static_cast<int>(std::ceil(ratio - 1e-9 * ratio)));
}

MultiscaleState initial_state(const MultiscaleModel& model, const Vec& position, std::uint64_t seed,
                              std::uint64_t member) {
    if (position.size() != model.basis.dim()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "initial_state",
              "initial position has dimension " + std::to_string(position.size()) + ", domain has " +
                  std::to_string(model.basis.dim()));
    }
    if (model.observables.modes() != model.basis.modes()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "initial_state",
              "observable count differs from mode count");
    }
    MultiscaleState s{
        model.basis.domain().wrap(position),
        position,
        FastDriver(model.driver_kind, model.driver_params, RandomStream(seed, stream_tag::driver, member)),
        Eigen::VectorXd::Zero(model.observables.modes()),
        Eigen::VectorXd::Zero(model.observables.frozen() ? 0 : model.observables.modes()),
        0.0,
        model.eps,
    };
    s.driver.randomize_state();
    s.driver.advance(model.dt_fast, model.burn_in);
    model.observables.lambda(s.driver.state(), s.lambda);
    if (!model.observables.frozen()) model.observables.coefficients(s.driver.state(), s.c);
    return s;
}

void step_multiscale(MultiscaleState& state, double dt_slow, const MultiscaleModel& model) {
    if (!(dt_slow > 0.0)) {
        raise(ErrorCategory::InvalidArgument, kModule, "step_multiscale", "dt_slow must be positive");
    }
    const double limit = max_stable_dt_slow(model);
    if (dt_slow > limit * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "dt_slow=" << format_double(dt_slow) << " exceeds guard " << format_double(limit)
           << " (dt_slow * sup|phi| * sup|lambda| / eps must be <= 0.1) at eps=" << format_double(model.eps);
        raise(ErrorCategory::StepSizeGuard, kModule, "step_multiscale", os.str());
    }
    const bool forcing = has_fast_forcing(model);
    const int n_sub = substeps(model, dt_slow);
    const double h = dt_slow / n_sub;
    const double h_fast = dt_slow / (model.eps * model.eps * n_sub);
    const auto& basis = model.basis;
    const auto& u = model.velocity;
    for (int k = 0; k < n_sub; ++k) {
        const Vec& x = state.lifted;
        const double t = state.t;
        const Vec k1 = slow_rhs(x, t, state.lambda, state.c, state.eps, basis, u);
        const Vec k2 = slow_rhs(x + 0.5 * h * k1, t + 0.5 * h, state.lambda, state.c, state.eps, basis, u);
        const Vec k3 = slow_rhs(x + 0.5 * h * k2, t + 0.5 * h, state.lambda, state.c, state.eps, basis, u);
        const Vec k4 = slow_rhs(x + h * k3, t + h, state.lambda, state.c, state.eps, basis, u);
        state.lifted = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        state.t = t + h;
        if (forcing) {
            state.driver.step(h_fast);
            model.observables.lambda(state.driver.state(), state.lambda);
            if (state.c.size() > 0) model.observables.coefficients(state.driver.state(), state.c);
        }
    }
    check_finite(state.lifted, "step_multiscale", state.t);
    state.qbar = basis.domain().wrap(state.lifted);
}

std::int64_t slow_step_count(const MultiscaleRun& run) {
    if (!(run.dt_slow > 0.0) || !(run.t_final >= 0.0)) {
        raise(ErrorCategory::ConfigInvalid, kModule, "simulate_multiscale", "need dt_slow > 0 and t_final >= 0");
    }
    const double n = run.t_final / run.dt_slow;
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
        raise(ErrorCategory::ConfigInvalid, kModule, "simulate_multiscale",
              "t_final must be an integer multiple of dt_slow");
    }
    return static_cast<std::int64_t>(r);
}

MemberResult simulate_multiscale(const MultiscaleModel& model, const MultiscaleRun& run, std::uint64_t seed,
                                 std::uint64_t member, bool record) {
    if (run.output_stride < 1) {
        raise(ErrorCategory::ConfigInvalid, kModule, "simulate_multiscale", "output_stride must be >= 1");
    }
    const std::int64_t steps = slow_step_count(run);
    MemberResult out{{}, {}, initial_state(model, run.initial_position, seed, member)};
    MultiscaleState& s = out.final_state;
    if (record) {
        out.times.push_back(0.0);
        out.positions.push_back(s.qbar);
    }
    for (std::int64_t n = 1; n <= steps; ++n) {
        step_multiscale(s, run.dt_slow, model);
        // Set time from the step index so records do not accumulate roundoff.
        s.t = static_cast<double>(n) * run.dt_slow;
        if (record && n % run.output_stride == 0) {
            out.times.push_back(s.t);
            out.positions.push_back(s.qbar);
        }
    }
    return out;
}

MultiscaleEnsemble run_multiscale_ensemble(const MultiscaleModel& model, const MultiscaleRun& run,
                                           std::uint64_t seed, int members, int threads, bool record) {
    if (members < 1) raise(ErrorCategory::ConfigInvalid, kModule, "run_multiscale_ensemble", "ensemble size must be >= 1");
    const int d = model.basis.dim();
    MultiscaleEnsemble ens;
    ens.endpoints.resize(members, d);
    const std::int64_t steps = slow_step_count(run);
    if (record) {
        const int n_samples = static_cast<int>(steps / run.output_stride) + 1;
        ens.trajectories.emplace(members, n_samples, d, run.dt_slow * run.output_stride, model.basis.domain());
    }
    parallel_for(static_cast<std::size_t>(members), threads, [&](std::size_t m) {
        MemberResult r = simulate_multiscale(model, run, seed, m, record);
        ens.endpoints.row(static_cast<Eigen::Index>(m)) = r.final_state.lifted.transpose();
        if (record) {
            for (std::size_t s = 0; s < r.positions.size(); ++s) {
                ens.trajectories->set_position(static_cast<int>(m), static_cast<int>(s), r.positions[s]);
            }
        }
    });
    return ens;
}

Vec integrate_mean_flow(const MeanVelocityField& u, const Vec& x0, double t0, double dt, std::int64_t steps) {
    Vec x = x0;
    for (std::int64_t n = 0; n < steps; ++n) {
        const double t = t0 + static_cast<double>(n) * dt;
        const Vec k1 = u.value(x, t);
        const Vec k2 = u.value(x + 0.5 * dt * k1, t + 0.5 * dt);
        const Vec k3 = u.value(x + 0.5 * dt * k2, t + 0.5 * dt);
        const Vec k4 = u.value(x + dt * k3, t + dt);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

}  // namespace fastslow
