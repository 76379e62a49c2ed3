#include "homogenization.hpp"

#include "errors.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

namespace fastslow {

namespace {
constexpr const char* kModule = "homogenization";
constexpr const char* kFileMagic = "fastslow-coefficients";
constexpr int kFileVersion = 1;

Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace

Mat outer(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) raise(ErrorCategory::DimensionMismatch, kModule, "outer", "vectors differ in length");
    return a * b.transpose();
}

DiffusionFactor factor_diffusion(const Mat& d2) {
    if (d2.rows() != d2.cols()) raise(ErrorCategory::DimensionMismatch, kModule, "factor_diffusion", "matrix not square");
    if (!d2.allFinite()) raise(ErrorCategory::NonFinite, kModule, "factor_diffusion", "non-finite diffusion matrix");
    const double asym = (d2 - d2.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, d2.cwiseAbs().maxCoeff());
    if (asym > 1e-8 * scale) {
        raise(ErrorCategory::NotPsd, kModule, "factor_diffusion",
              "diffusion matrix is not symmetric (max asymmetry " + format_double(asym) + ")");
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(d2));
    const Vec ev = es.eigenvalues();
    const double norm = ev.cwiseAbs().maxCoeff();
    const double clip = std::max(0.0, -ev.minCoeff());
    if (clip > 1e-4 * norm && clip > 0.0) {
        raise(ErrorCategory::NotPsd, kModule, "factor_diffusion",
              "negative eigenvalue " + format_double(-clip) + " exceeds 1e-4 of the spectral norm " + format_double(norm));
    }
    const Vec root = ev.cwiseMax(0.0).cwiseSqrt();
    DiffusionFactor out;
    out.sigma = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
    out.sigma = symmetrize(out.sigma);
    out.clip = clip;
    return out;
}

XiFields extract_xi(const Mat& sigma) {
    XiFields out;
    for (int i = 0; i < sigma.rows(); ++i) {
        const Vec row = sigma.row(i).transpose();
        if (row.norm() < 1e-12) {
            out.dropped.push_back(i);
        } else {
            out.retained.push_back(row);
        }
    }
    return out;
}

Mat frozen_diffusion(const ModeBasis& basis, const Eigen::MatrixXd& g, const Vec& x) {
    const Eigen::MatrixXd phi = basis.phi_matrix(x);  // d x M
    const Eigen::MatrixXd gs = 0.5 * (g + g.transpose());
    Mat d = phi * gs * phi.transpose();
    return symmetrize(d);
}

Vec frozen_drift_correction(const ModeBasis& basis, const Eigen::MatrixXd& g, const Vec& x) {
    const int m = basis.modes();
    Vec out = Vec::Zero(basis.dim());
    for (int l = 0; l < m; ++l) {
        const Mat grad = basis.grad_phi(l, x);
        Vec weighted = Vec::Zero(basis.dim());
        for (int i = 0; i < m; ++i) weighted += g(i, l) * basis.phi(i, x);
        out += grad * weighted;
    }
    return out;
}

Eigen::MatrixXd mode_noise_fields(const ModeBasis& basis, const Eigen::MatrixXd& g, const Vec& x) {
    return std::sqrt(2.0) * basis.phi_matrix(x) * sqrt_psd(g);
}

CorrelationWindow correlation_window(const Eigen::MatrixXd& samples, double dt, const TruncationRule& rule) {
    const Eigen::Index n = samples.rows();
    if (rule.kind == TruncationRule::Kind::FixedLag) {
        Acf acf = autocorrelation(samples, std::max(rule.lag, 1), dt);
        GreenKuboResult gk = green_kubo_integral(acf, rule);
        return {std::move(acf), std::move(gk)};
    }
    const int cap = static_cast<int>(std::max<Eigen::Index>((n - 1) / 10, 1));
    int lag = std::min(32, cap);
    for (;;) {
        Acf acf = autocorrelation(samples, lag, dt);
        try {
            GreenKuboResult gk = green_kubo_integral(acf, rule);
            return {std::move(acf), std::move(gk)};
        } catch (const Error& e) {
            if (e.category() != ErrorCategory::InsufficientLags || lag >= cap) throw;
        }
        lag = std::min(2 * lag, cap);
    }
}

CoefficientEstimator::CoefficientEstimator(ModeBasis basis, MeanVelocityField u, ObservableSamples samples,
                                           TruncationRule rule, double t)
    : basis_(std::move(basis)), u_(std::move(u)), samples_(std::move(samples)), t_(t) {
    if (samples_.lambda.cols() != basis_.modes()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "estimate_coefficients",
              "observable count " + std::to_string(samples_.lambda.cols()) + " differs from mode count " +
                  std::to_string(basis_.modes()));
    }
    if (samples_.coeffs.cols() != 0 && (samples_.coeffs.cols() != basis_.modes() || samples_.coeffs.rows() != samples_.lambda.rows())) {
        raise(ErrorCategory::Misaligned, kModule, "estimate_coefficients", "coefficient samples not aligned with observables");
    }
    window_ = correlation_window(samples_.lambda, samples_.dt, rule);
}

CoefficientEstimate CoefficientEstimator::finish(const Vec& x, Vec mean_velocity, Vec correction, Mat diffusion) const {
    CoefficientEstimate e;
    e.at = x;
    e.mean_velocity = std::move(mean_velocity);
    e.drift_correction = std::move(correction);
    e.drift = e.mean_velocity + e.drift_correction;
    e.diffusion_matrix = symmetrize(2.0 * diffusion);
    const DiffusionFactor f = factor_diffusion(e.diffusion_matrix);
    e.sigma = f.sigma;
    e.clip = f.clip;
    XiFields xi = extract_xi(e.sigma);
    e.xi = std::move(xi.retained);
    e.dropped_xi = static_cast<int>(xi.dropped.size());
    e.truncation_lag = window_.green_kubo.lag;
    e.truncation_time = window_.green_kubo.time;
    e.sample_count = samples_.count();
    if (!e.drift.allFinite()) raise(ErrorCategory::NonFinite, kModule, "estimate_drift", "non-finite drift");
    return e;
}

CoefficientEstimate CoefficientEstimator::estimate(const Vec& x) const {
    if (x.size() != basis_.dim()) raise(ErrorCategory::DimensionMismatch, kModule, "estimate", "probe dimension mismatch");
    if (!frozen()) return estimate_lagged(x);
    const Eigen::MatrixXd& g = window_.green_kubo.integral;
    return finish(x, u_.value(x, t_), frozen_drift_correction(basis_, g, x), frozen_diffusion(basis_, g, x));
}

CoefficientEstimate CoefficientEstimator::estimate_lagged(const Vec& x) const {
    if (x.size() != basis_.dim()) raise(ErrorCategory::DimensionMismatch, kModule, "estimate_lagged", "probe dimension mismatch");
    const int d = basis_.dim();
    const int m = basis_.modes();
    const Eigen::Index n = samples_.count();
    const bool full = !frozen();

    // f0 per sample (n x d), its gradient (n x d*d, column-major d x d blocks), mean of f1.
    Eigen::MatrixXd f0(n, d);
    Eigen::MatrixXd a(n, d * d);
    Vec f1_sum = Vec::Zero(d);
    const Eigen::MatrixXd phi = basis_.phi_matrix(x);
    std::vector<Mat> grads;
    grads.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) grads.push_back(basis_.grad_phi(i, x));
    std::vector<std::vector<Mat>> dgrads;  // [j][i] = d/dx_j grad phi_i
    if (full) {
        dgrads.resize(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < m; ++i) dgrads[static_cast<std::size_t>(j)].push_back(basis_.grad_phi_derivative(i, x, j));
    }
    const Vec u_plain = u_.value(x, t_);
    for (Eigen::Index s = 0; s < n; ++s) {
        const Eigen::VectorXd lam = samples_.lambda.row(s).transpose();
        const Vec v = phi * lam;
        Mat dv = Mat::Zero(d, d);  // column j: d v / d x_j
        for (int i = 0; i < m; ++i) dv += lam[i] * grads[static_cast<std::size_t>(i)];
        Mat grad_f0(d, d);
        if (!full) {
            f0.row(s) = -v.transpose();
            grad_f0 = -dv;
            f1_sum += u_plain;
        } else {
            const Eigen::VectorXd c = samples_.coeffs.row(s).transpose();
            const MeanMapJacobian jac = mean_map_jacobian(basis_, c, x);
            const Vec jv = jac.inverse * v;
            f0.row(s) = -jv.transpose();
            for (int j = 0; j < d; ++j) {
                Mat dj = Mat::Zero(d, d);
                for (int i = 0; i < m; ++i) dj += c[i] * dgrads[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
                const Vec col = -jac.inverse * dj * jv + jac.inverse * dv.col(j);
                grad_f0.col(j) = -col;
            }
            f1_sum += jac.inverse * u_.value(x + eval_zeta(basis_, c, x), t_);
        }
        for (int j = 0; j < d; ++j)
            for (int r = 0; r < d; ++r) a(s, j * d + r) = grad_f0(r, j);
    }
    const Eigen::RowVectorXd f0_mean = f0.colwise().mean();
    const Eigen::RowVectorXd a_mean = a.colwise().mean();
    f0.rowwise() -= f0_mean;
    a.rowwise() -= a_mean;

    const int lag = window_.green_kubo.lag;
    const auto w = trapezoid_weights(lag, samples_.dt);
    Mat diffusion = Mat::Zero(d, d);
    Vec correction = Vec::Zero(d);
    for (int k = 0; k <= lag; ++k) {
        const Eigen::Index len = n - k;
        const double wk = w[static_cast<std::size_t>(k)] / static_cast<double>(len);
        if (wk == 0.0) continue;
        // <f0(0) f0(k)^T>
        const Eigen::MatrixXd c = f0.topRows(len).transpose() * f0.bottomRows(len);
        diffusion += wk * c;
        // <A(k) f0(0)>: sum_s A_{s+k} f0_s
        const Eigen::MatrixXd cross = a.bottomRows(len).transpose() * f0.topRows(len);  // (d*d) x d
        for (int j = 0; j < d; ++j)
            for (int r = 0; r < d; ++r) correction[r] += wk * cross(j * d + r, j);
    }
    return finish(x, f1_sum / static_cast<double>(n), correction, symmetrize(diffusion));
}

Mat estimate_diffusion_tensor(const CoefficientEstimator& est, const Vec& x) {
    return 0.5 * est.estimate(x).diffusion_matrix;
}

Vec estimate_drift(const CoefficientEstimator& est, const Vec& x) { return est.estimate(x).drift; }

namespace {

void write_vec(std::ostream& out, const char* key, const Vec& v) {
    out << key;
    for (int i = 0; i < v.size(); ++i) out << ' ' << format_double(v[i]);
    out << '\n';
}

void write_mat(std::ostream& out, const char* key, const Mat& a) {
    out << key;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out << ' ' << format_double(a(i, j));
    out << '\n';
}

class LineReader {
public:
    explicit LineReader(const std::string& text) : in_(text) {}

    std::vector<std::string> expect(const std::string& key, std::size_t values) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line[0] != '#') break;
            line.clear();
        }
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) fail("expected '" + key + "', found '" + k + "'");
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) tokens.push_back(tok);
        if (values != kAny && tokens.size() != values) {
            fail("'" + key + "' needs " + std::to_string(values) + " values, found " + std::to_string(tokens.size()));
        }
        return tokens;
    }

    Vec vec(const std::string& key, int n) {
        const auto t = expect(key, static_cast<std::size_t>(n));
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = parse_double(t[static_cast<std::size_t>(i)]);
        return v;
    }

    Mat mat(const std::string& key, int d) {
        const auto t = expect(key, static_cast<std::size_t>(d * d));
        Mat a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = parse_double(t[static_cast<std::size_t>(i * d + j)]);
        return a;
    }

    long long integer(const std::string& key) { return std::stoll(expect(key, 1)[0]); }
    unsigned long long unsigned_integer(const std::string& key) { return std::stoull(expect(key, 1)[0]); }

    [[noreturn]] void fail(const std::string& msg) const {
        raise(ErrorCategory::Io, kModule, "read_coefficient_file", "line " + std::to_string(line_no_) + ": " + msg);
    }

    static constexpr std::size_t kAny = static_cast<std::size_t>(-1);

private:
    std::istringstream in_;
    int line_no_ = 0;
};

}  // namespace

std::string serialize_coefficients(const CoefficientTable& table) {
    std::ostringstream out;
    const int d = table.dim;
    out << kFileMagic << ' ' << kFileVersion << '\n';
    out << "dim " << d << '\n';
    out << "modes " << table.modes << '\n';
    out << "seed " << table.seed << '\n';
    out << "sample_count " << table.sample_count << '\n';
    out << "truncation_lag " << table.truncation_lag << '\n';
    out << "truncation_time " << format_double(table.truncation_time) << '\n';
    out << "domain " << (table.domain.periodic ? "periodic" : "bounded");
    for (double l : table.domain.lengths) out << ' ' << format_double(l);
    out << '\n';
    if (table.lattice) {
        const Lattice& lat = *table.lattice;
        out << "lattice " << (lat.periodic ? "periodic" : "bounded") << '\n';
        out << "counts";
        for (int c : lat.counts) out << ' ' << c;
        out << '\n';
        write_vec(out, "origin", lat.origin);
        write_vec(out, "spacing", lat.spacing);
    } else {
        out << "lattice none\n";
    }
    out << "probes " << table.probes.size() << '\n';
    for (std::size_t p = 0; p < table.probes.size(); ++p) {
        const auto& e = table.probes[p];
        out << "probe " << p << '\n';
        write_vec(out, "at", e.at);
        write_vec(out, "drift", e.drift);
        write_vec(out, "mean_velocity", e.mean_velocity);
        write_vec(out, "drift_correction", e.drift_correction);
        write_mat(out, "diffusion", e.diffusion_matrix);
        write_mat(out, "sigma", e.sigma);
        out << "clip " << format_double(e.clip) << '\n';
        out << "xi " << e.xi.size() << ' ' << e.dropped_xi << '\n';
        for (const auto& xi : e.xi) write_vec(out, "row", xi);
    }
    out << "end\n";
    return out.str();
}

CoefficientTable parse_coefficients(const std::string& text) {
    LineReader r(text);
    CoefficientTable t;
    const auto head = r.expect(kFileMagic, 1);
    if (std::stoi(head[0]) != kFileVersion) r.fail("unsupported coefficient file version " + head[0]);
    t.dim = static_cast<int>(r.integer("dim"));
    if (t.dim < 1 || t.dim > kMaxDim) r.fail("dim must be 1..3");
    const int d = t.dim;
    t.modes = static_cast<int>(r.integer("modes"));
    t.seed = r.unsigned_integer("seed");
    t.sample_count = r.integer("sample_count");
    t.truncation_lag = static_cast<int>(r.integer("truncation_lag"));
    t.truncation_time = parse_double(r.expect("truncation_time", 1)[0]);
    {
        const auto dom = r.expect("domain", static_cast<std::size_t>(d) + 1);
        t.domain.periodic = dom[0] == "periodic";
        for (int k = 0; k < d; ++k) t.domain.lengths.push_back(parse_double(dom[static_cast<std::size_t>(k) + 1]));
    }
    const auto lat = r.expect("lattice", 1);
    if (lat[0] != "none") {
        Lattice l;
        l.periodic = lat[0] == "periodic";
        for (const auto& c : r.expect("counts", static_cast<std::size_t>(d))) l.counts.push_back(std::stoi(c));
        l.origin = r.vec("origin", d);
        l.spacing = r.vec("spacing", d);
        t.lattice = l;
    }
    const long long n = r.integer("probes");
    if (n < 0) r.fail("negative probe count");
    for (long long p = 0; p < n; ++p) {
        r.expect("probe", 1);
        CoefficientEstimate e;
        e.at = r.vec("at", d);
        e.drift = r.vec("drift", d);
        e.mean_velocity = r.vec("mean_velocity", d);
        e.drift_correction = r.vec("drift_correction", d);
        e.diffusion_matrix = r.mat("diffusion", d);
        e.sigma = r.mat("sigma", d);
        e.clip = parse_double(r.expect("clip", 1)[0]);
        const auto xi = r.expect("xi", 2);
        const int kept = std::stoi(xi[0]);
        e.dropped_xi = std::stoi(xi[1]);
        for (int k = 0; k < kept; ++k) e.xi.push_back(r.vec("row", d));
        e.truncation_lag = t.truncation_lag;
        e.truncation_time = t.truncation_time;
        e.sample_count = t.sample_count;
        t.probes.push_back(std::move(e));
    }
    r.expect("end", 0);
    if (t.lattice && t.lattice->size() != static_cast<int>(t.probes.size())) {
        r.fail("probe count does not match lattice size");
    }
    return t;
}

void write_coefficient_file(const CoefficientTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorCategory::Io, kModule, "write_coefficient_file", "cannot open " + path);
    out << serialize_coefficients(table);
    if (!out) raise(ErrorCategory::Io, kModule, "write_coefficient_file", "write failed for " + path);
}

CoefficientTable read_coefficient_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCategory::Io, kModule, "read_coefficient_file", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_coefficients(ss.str());
}

SdeField interpolated_field(CoefficientTable table) {
    if (table.probes.empty()) raise(ErrorCategory::ConfigInvalid, kModule, "interpolated_field", "coefficient table has no probes");
    SdeField f;
    f.dim = table.dim;
    if (!table.lattice) {
        if (table.probes.size() != 1) {
            raise(ErrorCategory::ConfigInvalid, kModule, "interpolated_field",
                  "several probes without a lattice cannot be interpolated");
        }
        const Vec drift = table.probes[0].drift;
        const Mat sigma = table.probes[0].sigma;
        f.drift = [drift](const Vec&) { return drift; };
        f.sigma = [sigma](const Vec&) { return sigma; };
        const int d = table.dim;
        f.sigma_divergence = [d](const Vec&) { return Vec(Vec::Zero(d)); };
        f.drift_jacobian = [d](const Vec&) { return Mat(Mat::Zero(d, d)); };
        return f;
    }
    auto shared = std::make_shared<const CoefficientTable>(std::move(table));
    f.drift = [shared](const Vec& x) {
        Vec out = Vec::Zero(shared->dim);
        for (const auto& [idx, w] : shared->lattice->stencil(x)) out += w * shared->probes[static_cast<std::size_t>(idx)].drift;
        return out;
    };
    f.sigma = [shared](const Vec& x) {
        Mat out = Mat::Zero(shared->dim, shared->dim);
        for (const auto& [idx, w] : shared->lattice->stencil(x)) out += w * shared->probes[static_cast<std::size_t>(idx)].sigma;
        return out;
    };
    return f;
}

SdeField frozen_closed_form_field(const ModeBasis& basis, const MeanVelocityField& u, const Eigen::MatrixXd& g) {
    SdeField f;
    f.dim = basis.dim();
    f.drift = [basis, u, g](const Vec& x) { return Vec(u.value(x, 0.0) + frozen_drift_correction(basis, g, x)); };
    f.sigma = [basis, g](const Vec& x) { return factor_diffusion(2.0 * frozen_diffusion(basis, g, x)).sigma; };
    return f;
}

}  // namespace fastslow
