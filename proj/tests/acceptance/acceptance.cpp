// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include "chaotic_drivers.hpp"
#include "config.hpp"
#include "displacement_field.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "homogenization.hpp"
#include "multiscale_integrator.hpp"
#include "random.hpp"
#include "sde_integrator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace fastslow;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Vec vec1(double x) { return Vec::Constant(1, x); }

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

ExperimentConfig shipped(const std::string& name, const std::string& out) {
    auto cfg = load_config(std::string(FASTSLOW_CONFIG_DIR) + "/" + name);
    cfg.output.dir = (fs::current_path() / "acceptance_out" / out).string();
    fs::remove_all(cfg.output.dir);
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Value of `stat` in a stat,value,stderr summary file.
double summary_value(const fs::path& file, const std::string& stat) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(stat + ",", 0) == 0) {
            const auto a = line.find(',');
            const auto b = line.find(',', a + 1);
            return parse_double(line.substr(a + 1, b - a - 1));
        }
    }
    throw std::runtime_error("no '" + stat + "' in " + file.string());
}

ObservableSamples ou_samples(std::int64_t n, double dt, std::uint64_t seed) {
    FastDriver d(DriverKind::OuSurrogate, DriverParams{}, RandomStream(seed, stream_tag::driver, 0));
    d.randomize_state();
    ObservableChannel ch;
    ch.center = 0.0;
    ch.scale = 1.0;
    return sample_invariant_measure(d, ObservableMap({ch}, {}, false), n, 0, 1, dt);
}

SdeField scalar_field(std::function<double(double)> b, std::function<double(double)> s) {
    SdeField f;
    f.drift = [b](const Vec& x) { return vec1(b(x[0])); };
    f.sigma = [s](const Vec& x) { return Mat::Constant(1, 1, s(x[0])); };
    return f;
}

double mean_of(const Eigen::VectorXd& v) { return v.mean(); }
double var_of(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1); }

// ---------------------------------------------------------------------------

Outcome ac1_ou_diffusion() {
    const auto t0 = Clock::now();
    const ModeBasis b(Domain{{kTwoPi}, true}, {TrigMode{vec1(0.0), 0.0, 1.0, vec1(1.0)}});
    CoefficientEstimator est(b, MeanVelocityField::zero(1), ou_samples(1000000, 0.05, 101), TruncationRule::efold_multiple(8.0));
    const double d = estimate_diffusion_tensor(est, vec1(0.0))(0, 0);
    const double elapsed = seconds_since(t0);
    const double rel = std::abs(d - 0.5) / 0.5;
    return {rel <= 0.05 && elapsed < 60.0,
            "D=" + fmt("%.5f", d) + " rel_err=" + fmt("%.4f", rel) + " (<=0.05) time=" + fmt("%.1f", elapsed) + "s (<60)"};
}

Outcome ac2_doubling_map() {
    FastDriver d(DriverKind::DoublingMap, DriverParams{}, RandomStream(202, stream_tag::driver, 0));
    d.randomize_state();
    ObservableChannel ch;
    ch.center = 0.5;
    ch.scale = 1.0;
    const auto s = sample_invariant_measure(d, ObservableMap({ch}, {}, false), 1000000, 0, 1, 1.0);
    const auto w = correlation_window(s.lambda, 1.0, TruncationRule::efold_multiple(8.0));
    const double g = w.green_kubo.integral(0, 0);
    const double rel = std::abs(g - 0.125) / 0.125;
    return {rel <= 0.10, "G=" + fmt("%.5f", g) + " rel_err=" + fmt("%.4f", rel) + " (<=0.10) lag=" + std::to_string(w.green_kubo.lag)};
}

Outcome ac3_weak_convergence() {
    const auto cfg = shipped("converge_ou.yaml", "ac3");
    const auto rep = weak_convergence_test(cfg);
    // exact homogenized variance: 2 G t = 1 at t = 1
    const double var = rep.rows.back().moments.covariance(0, 0);
    const double rel = std::abs(var - 1.0);
    std::string ks;
    for (const auto& r : rep.rows) ks += fmt(" %.4f", r.ks);
    bool guard_ok = true;
    for (const auto& r : rep.rows) guard_ok &= !r.guard_violation;
    return {rel <= 0.15 && rep.monotone && guard_ok,
            "var(eps=" + format_double(rep.rows.back().eps) + ")=" + fmt("%.4f", var) + " rel_err=" + fmt("%.4f", rel) +
                " (<=0.15) KS:" + ks + " noise=" + fmt("%.4f", rep.ks_noise) + (rep.monotone ? " monotone" : " NOT monotone")};
}

Outcome ac4_ito_stratonovich() {
    // (a) drift correction of phi(x) = 1 + beta x + O(x^2) near 0 driven by OU (G = 1/2)
    const double beta = 0.5;
    const ModeBasis b(Domain{{kTwoPi / beta}, true},
                      {TrigMode{vec1(beta), -std::numbers::pi / 4, std::sqrt(2.0), vec1(1.0)}});
    CoefficientEstimator est(b, MeanVelocityField::zero(1), ou_samples(1000000, 0.05, 404), TruncationRule::efold_multiple(8.0));
    const auto e = est.estimate_lagged(vec1(0.0));
    // D = G phi^2, so 1/2 dD/dx = G phi phi' = 0.5 * 1 * beta at x = 0
    const double expected = 0.5 * beta;
    const double rel = std::abs(e.drift_correction[0] - expected) / expected;

    // (b) Heun on dq = q o dW vs Euler-Maruyama on dq = q/2 dt + q dW
    const int n = 100000;
    SdeSpec s;
    s.field = scalar_field([](double) { return 0.0; }, [](double x) { return x; });
    s.field.dim = 1;
    s.interpretation = Interpretation::Stratonovich;
    s.dt = 0.002;
    s.t_final = 1.0;
    s.ensemble = n;
    s.seed = 405;
    s.x0 = vec1(1.0);
    const auto heun = simulate_sde_ensemble(s);
    s.field = scalar_field([](double x) { return 0.5 * x; }, [](double x) { return x; });
    s.field.dim = 1;
    s.interpretation = Interpretation::Ito;
    s.seed = 406;
    const auto em = simulate_sde_ensemble(s);
    const Eigen::VectorXd la = heun.endpoints.col(0).array().log();
    const Eigen::VectorXd lb = em.endpoints.col(0).array().log();
    const double se = std::sqrt((var_of(la) + var_of(lb)) / n);
    const double z = std::abs(mean_of(la) - mean_of(lb)) / se;
    return {rel <= 0.10 && z <= 3.0,
            "correction=" + fmt("%.5f", e.drift_correction[0]) + " vs " + fmt("%.3f", expected) + " rel_err=" + fmt("%.4f", rel) +
                " (<=0.10); E[ln q] diff=" + fmt("%.2f", z) + " SE (<=3)"};
}

Outcome ac5_centering() {
    const auto good = centering_check(shipped("centering_default.yaml", "ac5_default"));
    const auto bad = centering_check(shipped("centering_planted_bias.yaml", "ac5_bias"));
    auto worst = [](const CenteringReport& r) {
        double m = 0.0;
        for (const auto& p : r.probes) m = std::max(m, p.residual / p.bound);
        return m;
    };
    return {good.passed() && !bad.passed(),
            "default max residual/bound=" + fmt("%.3f", worst(good)) + (good.passed() ? " (pass)" : " (FAIL)") +
                "; planted bias max residual/bound=" + fmt("%.3f", worst(bad)) + (bad.passed() ? " (missed)" : " (detected)")};
}

Outcome ac6_diffeomorphism() {
    // (a) a gradient bound at or above 1 is a near-singular error
    bool near_singular = false;
    try {
        const ModeBasis b(Domain{{kTwoPi}, true}, {TrigMode{vec1(1.0), 0.0, 1.0, vec1(1.0)}});
        check_diffeomorphism(b, {1.0}, 0.5);
    } catch (const Error& e) {
        near_singular = e.category() == ErrorCategory::NearSingular;
    }
    bool via_config = false;
    try {
        run_experiment(shipped("grad_bound_violation.yaml", "ac6"));
    } catch (const Error& e) {
        via_config = e.category() == ErrorCategory::NearSingular;
    }
    // (b) every shipped configuration that runs keeps sigma_min(Id + grad zeta) >= 0.5
    double worst = 1.0;
    std::string worst_name;
    for (const auto& entry : fs::directory_iterator(FASTSLOW_CONFIG_DIR)) {
        const std::string name = entry.path().filename().string();
        if (entry.path().extension() != ".yaml" || name.rfind("malformed", 0) == 0 || name.rfind("grad_bound", 0) == 0) continue;
        const auto cfg = load_config(entry.path().string());
        if (!cfg.modes || !cfg.driver || cfg.driver->coefficient_channels.empty()) continue;
        const auto basis = build_basis(cfg);
        const auto& chans = cfg.driver->coefficient_channels;
        const int m = static_cast<int>(chans.size());
        // c_i ranges over [-|a_i|, |a_i|]; check every corner of the box
        for (int mask = 0; mask < (1 << m); ++mask) {
            Eigen::VectorXd c(m);
            for (int i = 0; i < m; ++i) c[i] = ((mask >> i) & 1 ? 1.0 : -1.0) * std::abs(chans[static_cast<std::size_t>(i)].amplitude);
            const double s = min_singular_value_on_grid(basis, c, basis.dim() == 1 ? 400 : 64);
            if (s < worst) {
                worst = s;
                worst_name = name;
            }
        }
        double caps_bound = grad_zeta_bound(basis, [&] {
            std::vector<double> caps;
            for (const auto& ch : chans) caps.push_back(std::abs(ch.amplitude));
            return caps;
        }());
        if (1.0 - caps_bound < worst) {
            worst = 1.0 - caps_bound;
            worst_name = name + " (bound)";
        }
    }
    return {near_singular && via_config && worst >= 0.5,
            std::string("grad>=1 near-singular: ") + (near_singular && via_config ? "yes" : "no") +
                "; min singular value over shipped configs=" + fmt("%.3f", worst) + " (>=0.5)" +
                (worst_name.empty() ? "" : " at " + worst_name)};
}

Outcome ac7_eof_closure() {
    const auto t0 = Clock::now();
    auto cfg = shipped("eof_closure.yaml", "ac7");
    bool ran = true;
    std::string msg;
    try {
        run_experiment(cfg);
    } catch (const Error& e) {
        ran = e.category() == ErrorCategory::CheckFailed;
        msg = e.what();
    }
    const double elapsed = seconds_since(t0);
    if (!ran) return {false, "eof run failed: " + msg};
    const double angle = summary_value(fs::path(cfg.output.dir) / "summary.csv", "max_principal_angle");
    return {angle < 0.1 && elapsed < 300.0,
            "max principal angle=" + fmt("%.3g", angle) + " rad (<0.1) time=" + fmt("%.1f", elapsed) + "s (<300)"};
}

Outcome ac8_transport() {
    Mat a(2, 2);
    a << 0.4, 1.0, -0.7, -0.4;  // trace zero
    SdeField f;
    f.dim = 2;
    f.drift = [a](const Vec& x) -> Vec { return a * x; };
    f.drift_jacobian = [a](const Vec&) { return a; };
    // noise fields: a constant field and the rotation (-x2, x1), both divergence free
    f.sigma = [](const Vec& x) {
        Mat s(2, 2);
        s << 0.3, -0.2 * x[1], 0.1, 0.2 * x[0];
        return s;
    };
    ParticleCloud cloud;
    RandomStream rs(808);
    const int n = 200;
    cloud.positions.resize(n, 2);
    for (int p = 0; p < n; ++p) {
        cloud.positions(p, 0) = rs.normal();
        cloud.positions(p, 1) = rs.normal();
        cloud.weights.push_back(rs.uniform());
        cloud.density.push_back(1.0);
    }
    const auto r = advect_density_particles(cloud, f, 1e-3, 1.0, 809);
    const bool exact = r.weight_before == r.weight_after;
    return {r.max_jacobian_defect <= 1e-6 && exact,
            "max |J-1|=" + fmt("%.3g", r.max_jacobian_defect) + " (<=1e-6); total weight " + (exact ? "bit-exact" : "CHANGED")};
}

Outcome ac9_numerics() {
    // (a) mode Jacobians against central differences
    const ModeBasis b(Domain{{kTwoPi, kTwoPi}, true},
                      {TrigMode{vec2(1, 0), 0.2, 0.3, vec2(0, 1)}, TrigMode{vec2(1, 2), 1.0, 0.2, vec2(0.6, 0.8)}});
    const Eigen::Vector2d c(0.7, -0.4);
    double jac_err = 0.0;
    const double h = 1e-5;
    for (int p = 0; p < 20; ++p) {
        const Vec x = vec2(0.3 * p, 0.7 * p + 0.1);
        const Mat g = b.combine_grad(x, c);
        for (int j = 0; j < 2; ++j) {
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Vec fd = (eval_zeta(b, c, xp) - eval_zeta(b, c, xm)) / (2 * h);
            jac_err = std::max(jac_err, (fd - g.col(j)).cwiseAbs().maxCoeff());
        }
    }

    // (b) RK4 step-halving on the fluctuation-free slow equation
    MultiscaleModel m;
    m.basis = b;
    m.velocity = MeanVelocityField::make_cellular(2, 1.0, 1.0);
    ObservableChannel quiet;
    quiet.gain = 0.0;
    quiet.center = 0.0;
    quiet.scale = 1.0;
    m.observables = ObservableMap({quiet, quiet}, {}, false);
    // one substep per slow step
    m.driver_kind = DriverKind::OuSurrogate;
    m.eps = 1.0;
    m.dt_fast = 1.0;
    auto endpoint = [&](double dt) {
        MultiscaleRun run;
        run.dt_slow = dt;
        run.t_final = 2.0;
        run.initial_position = vec2(0.4, 0.9);
        return simulate_multiscale(m, run, 1, 0, false).final_state.lifted;
    };
    const Vec ref = integrate_mean_flow(m.velocity, vec2(0.4, 0.9), 0.0, 1e-4, 20000);
    const double rk_slope = std::log2((endpoint(0.2) - ref).norm() / (endpoint(0.1) - ref).norm());

    // (c) Euler-Maruyama weak error on geometric Brownian motion, measured against
    // the exact solution on the same path
    const double mu = 1.0, sg = 0.5;
    const auto field = scalar_field([mu](double x) { return mu * x; }, [sg](double x) { return sg * x; });
    std::vector<double> errs;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        double acc = 0.0;
        const int n = 100000;
        for (int k = 0; k < n; ++k) {
            RandomStream rng(909, stream_tag::sde, static_cast<std::uint64_t>(k));
            Vec x = vec1(1.0);
            Eigen::VectorXd dw(1);
            double w = 0.0;
            for (int s = 0; s < steps; ++s) {
                dw[0] = std::sqrt(dt) * rng.normal();
                w += dw[0];
                x = euler_maruyama_step(x, field, dt, dw);
            }
            acc += x[0] - std::exp((mu - 0.5 * sg * sg) + sg * w);
        }
        errs.push_back(std::abs(acc / n));
    }
    // least-squares slope of log error against log dt
    const double lx[3] = {std::log(1e-2), std::log(5e-3), std::log(2.5e-3)};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 3; ++i) {
        const double ly = std::log(errs[static_cast<std::size_t>(i)]);
        sx += lx[i];
        sy += ly;
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly;
    }
    const double em_slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
    const bool ok = jac_err <= 1e-8 && rk_slope >= 3.5 && rk_slope <= 4.5 && em_slope >= 0.7 && em_slope <= 1.3;
    return {ok, "jacobian fd err=" + fmt("%.2g", jac_err) + " (<=1e-8); RK4 slope=" + fmt("%.3f", rk_slope) +
                    " [3.5,4.5]; EM weak slope=" + fmt("%.3f", em_slope) + " [0.7,1.3]"};
}

Outcome ac10_reproducibility() {
    std::string detail;
    bool ok = true;
    for (const std::string name : {"estimate_coefficients_lorenz.yaml", "simulate_multiscale_lorenz.yaml", "simulate_sde_estimated.yaml"}) {
        auto a = shipped(name, "ac10_a");
        auto b = shipped(name, "ac10_b");
        const auto ra = run_experiment(a);
        const auto rb = run_experiment(b);
        int compared = 0;
        bool same = ra.files == rb.files;
        for (const auto& f : ra.files) {
            if (f == "manifest.json") continue;
            same &= slurp(fs::path(a.output.dir) / f) == slurp(fs::path(b.output.dir) / f);
            ++compared;
        }
        ok &= same;
        detail += name + ":" + std::to_string(compared) + " files " + (same ? "identical" : "DIFFER") + "; ";
    }
    return {ok, detail};
}

}  // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* title;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"AC1", "OU Green-Kubo diffusion", ac1_ou_diffusion},
        {"AC2", "doubling-map Green-Kubo integral", ac2_doubling_map},
        {"AC3", "weak convergence to the homogenized SDE", ac3_weak_convergence},
        {"AC4", "Ito-Stratonovich correction", ac4_ito_stratonovich},
        {"AC5", "centering check", ac5_centering},
        {"AC6", "mean-map invertibility guard", ac6_diffeomorphism},
        {"AC7", "EOF subspace recovery", ac7_eof_closure},
        {"AC8", "particle transport conservation", ac8_transport},
        {"AC9", "derivatives and convergence orders", ac9_numerics},
        {"AC10", "bitwise reproducibility", ac10_reproducibility},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %s: %s | %s [%.1fs]\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
