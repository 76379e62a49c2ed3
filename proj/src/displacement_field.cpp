#include "displacement_field.hpp"

#include "errors.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>

namespace fastslow {

namespace {

constexpr const char* kModule = "displacement_field";

double mode_angle(const TrigMode& m, const Vec& x) { return m.wavevector.dot(x) + m.phase; }

}  // namespace

ModeBasis::ModeBasis(Domain domain, std::vector<TrigMode> modes)
    : domain_(std::move(domain)), modes_(std::move(modes)) {
    const int d = domain_.dim();
    if (d < 1 || d > kMaxDim) {
        raise(ErrorCategory::ConfigInvalid, kModule, "ModeBasis",
              "domain dimension must be 1..3, got " + std::to_string(d));
    }
    for (std::size_t i = 0; i < modes_.size(); ++i) {
        auto& m = modes_[i];
        if (m.wavevector.size() != d || m.direction.size() != d) {
            raise(ErrorCategory::DimensionMismatch, kModule, "ModeBasis",
                  "mode " + std::to_string(i) + " wavevector/direction must have dimension " + std::to_string(d));
        }
        const double norm = m.direction.norm();
        if (!(norm > 0.0)) {
            raise(ErrorCategory::ConfigInvalid, kModule, "ModeBasis",
                  "mode " + std::to_string(i) + " has zero direction");
        }
        m.direction /= norm;
        if (domain_.periodic) {
            for (int k = 0; k < d; ++k) {
                const double n = m.wavevector[k] * domain_.lengths[static_cast<std::size_t>(k)] /
                                 (2.0 * std::numbers::pi);
                if (std::abs(n - std::round(n)) > 1e-9) {
                    raise(ErrorCategory::ConfigInvalid, kModule, "ModeBasis",
                          "mode " + std::to_string(i) + " wavevector is not commensurate with the periodic box");
                }
            }
        }
    }
}

ModeBasis ModeBasis::generate(Domain domain, int count, int max_wavenumber, double amplitude,
                              std::uint64_t seed) {
    const int d = domain.dim();
    if (count < 1 || max_wavenumber < 1) {
        raise(ErrorCategory::ConfigInvalid, kModule, "generate", "auto modes need count >= 1 and max_wavenumber >= 1");
    }
    // candidate integer wavenumbers, one representative per +/- pair
    std::vector<std::vector<int>> candidates;
    std::vector<int> n(static_cast<std::size_t>(d), -max_wavenumber);
    while (true) {
        bool zero = std::all_of(n.begin(), n.end(), [](int v) { return v == 0; });
        if (!zero) {
            auto first_nonzero = std::find_if(n.begin(), n.end(), [](int v) { return v != 0; });
            if (*first_nonzero > 0) candidates.push_back(n);
        }
        int k = 0;
        while (k < d && ++n[static_cast<std::size_t>(k)] > max_wavenumber) {
            n[static_cast<std::size_t>(k)] = -max_wavenumber;
            ++k;
        }
        if (k == d) break;
    }
    // low wavenumbers first
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        int na = 0, nb = 0;
        for (int v : a) na += v * v;
        for (int v : b) nb += v * v;
        return na < nb;
    });
    if (static_cast<int>(candidates.size()) < count) {
        raise(ErrorCategory::ConfigInvalid, kModule, "generate",
              "max_wavenumber too small for " + std::to_string(count) + " distinct modes");
    }
    RandomStream rng(seed, stream_tag::modes, 0);
    std::vector<TrigMode> modes;
    for (int i = 0; i < count; ++i) {
        // draw from the lowest remaining shell
        const auto& pick = candidates[static_cast<std::size_t>(i)];
        TrigMode m;
        m.wavevector = Vec(d);
        m.direction = Vec(d);
        for (int k = 0; k < d; ++k) {
            m.wavevector[k] = 2.0 * std::numbers::pi * pick[static_cast<std::size_t>(k)] /
                              domain.lengths[static_cast<std::size_t>(k)];
        }
        m.phase = 2.0 * std::numbers::pi * rng.uniform();
        m.amplitude = amplitude;
        do {
            for (int k = 0; k < d; ++k) m.direction[k] = rng.normal();
        } while (m.direction.norm() < 1e-6);
        modes.push_back(m);
    }
    return ModeBasis(std::move(domain), std::move(modes));
}

Vec ModeBasis::phi(int i, const Vec& x) const {
    const auto& m = modes_.at(static_cast<std::size_t>(i));
    return m.amplitude * std::cos(mode_angle(m, x)) * m.direction;
}

Mat ModeBasis::grad_phi(int i, const Vec& x) const {
    const auto& m = modes_.at(static_cast<std::size_t>(i));
    return (-m.amplitude * std::sin(mode_angle(m, x))) * m.direction * m.wavevector.transpose();
}

Mat ModeBasis::grad_phi_derivative(int i, const Vec& x, int j) const {
    const auto& m = modes_.at(static_cast<std::size_t>(i));
    return (-m.amplitude * std::cos(mode_angle(m, x)) * m.wavevector[j]) * m.direction *
           m.wavevector.transpose();
}

Vec ModeBasis::combine(const Vec& x, const Eigen::Ref<const Eigen::VectorXd>& w) const {
    if (w.size() != modes()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "combine",
              "expected " + std::to_string(modes()) + " weights, got " + std::to_string(w.size()));
    }
    Vec out = Vec::Zero(dim());
    for (int i = 0; i < modes(); ++i) {
        if (w[i] == 0.0) continue;
        const auto& m = modes_[static_cast<std::size_t>(i)];
        out += (w[i] * m.amplitude * std::cos(mode_angle(m, x))) * m.direction;
    }
    return out;
}

Mat ModeBasis::combine_grad(const Vec& x, const Eigen::Ref<const Eigen::VectorXd>& w) const {
    if (w.size() != modes()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "combine_grad",
              "expected " + std::to_string(modes()) + " weights, got " + std::to_string(w.size()));
    }
    Mat out = Mat::Zero(dim(), dim());
    for (int i = 0; i < modes(); ++i) {
        if (w[i] == 0.0) continue;
        const auto& m = modes_[static_cast<std::size_t>(i)];
        out.noalias() += (-w[i] * m.amplitude * std::sin(mode_angle(m, x))) * m.direction * m.wavevector.transpose();
    }
    return out;
}

Eigen::MatrixXd ModeBasis::phi_matrix(const Vec& x) const {
    Eigen::MatrixXd out(dim(), modes());
    for (int i = 0; i < modes(); ++i) out.col(i) = phi(i, x);
    return out;
}

double ModeBasis::sup_norm(int i) const { return std::abs(modes_.at(static_cast<std::size_t>(i)).amplitude); }

double ModeBasis::grad_sup_norm(int i) const {
    const auto& m = modes_.at(static_cast<std::size_t>(i));
    return std::abs(m.amplitude) * m.wavevector.norm();
}

double ModeBasis::orthogonality_defect() const {
    if (!domain_.periodic || modes() < 2) return 0.0;
    const int d = dim();
    int max_n = 0;
    for (const auto& m : modes_) {
        for (int k = 0; k < d; ++k) {
            const double n = m.wavevector[k] * domain_.lengths[static_cast<std::size_t>(k)] / (2.0 * std::numbers::pi);
            max_n = std::max(max_n, static_cast<int>(std::lround(std::abs(n))));
        }
    }
    // uniform grid integrates trigonometric polynomials of degree < points exactly
    const int points = 2 * max_n + 3;
    int total = 1;
    for (int k = 0; k < d; ++k) total *= points;
    const int m = modes();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    Vec x(d);
    for (int flat = 0; flat < total; ++flat) {
        int rem = flat;
        for (int k = 0; k < d; ++k) {
            x[k] = (rem % points) * domain_.lengths[static_cast<std::size_t>(k)] / points;
            rem /= points;
        }
        const Eigen::MatrixXd p = phi_matrix(x);
        gram.noalias() += p.transpose() * p;
    }
    gram /= total;
    double defect = 0.0;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            const double denom = std::sqrt(gram(i, i) * gram(j, j));
            if (denom > 0.0) defect = std::max(defect, std::abs(gram(i, j)) / denom);
        }
    }
    return defect;
}

Vec eval_zeta(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c, const Vec& x) {
    return basis.combine(x, c);
}

Vec dzeta_dt(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& lambda, const Vec& x) {
    return basis.combine(x, lambda);
}

MeanMapJacobian mean_map_jacobian(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c,
                                  const Vec& x) {
    MeanMapJacobian out;
    const int d = basis.dim();
    out.jacobian = Mat::Identity(d, d) + basis.combine_grad(x, c);
    Eigen::JacobiSVD<Mat> svd(out.jacobian);
    out.min_singular_value = svd.singularValues()[d - 1];
    if (!(out.min_singular_value >= kNearSingularThreshold)) {
        std::string where = "sigma_min(Id + grad zeta) = " + format_double(out.min_singular_value) + " at x = (";
        for (int k = 0; k < d; ++k) where += (k ? ", " : "") + format_double(x[k]);
        where += "), c = (";
        for (Eigen::Index i = 0; i < c.size(); ++i) where += (i ? ", " : "") + format_double(c[i]);
        where += ")";
        raise(ErrorCategory::NearSingular, kModule, "mean_map_jacobian", where);
    }
    out.inverse = out.jacobian.partialPivLu().solve(Mat::Identity(d, d));
    return out;
}

double grad_zeta_bound(const ModeBasis& basis, const std::vector<double>& caps) {
    if (static_cast<int>(caps.size()) != basis.modes()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "grad_zeta_bound",
              "need one amplitude cap per mode");
    }
    double bound = 0.0;
    for (int i = 0; i < basis.modes(); ++i) bound += std::abs(caps[static_cast<std::size_t>(i)]) * basis.grad_sup_norm(i);
    return bound;
}

void check_diffeomorphism(const ModeBasis& basis, const std::vector<double>& caps, double max_grad_norm) {
    const double bound = grad_zeta_bound(basis, caps);
    if (bound >= 1.0) {
        raise(ErrorCategory::NearSingular, kModule, "check_diffeomorphism",
              "sup |grad zeta| may reach " + format_double(bound) +
                  " >= 1, so Id + grad zeta can be singular");
    }
    if (bound > max_grad_norm) {
        raise(ErrorCategory::ConfigInvalid, kModule, "check_diffeomorphism",
              "sup |grad zeta| bound " + format_double(bound) + " exceeds amplitude cap " +
                  format_double(max_grad_norm));
    }
}

double min_singular_value_on_grid(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c,
                                  int points_per_dim) {
    const int d = basis.dim();
    int total = 1;
    for (int k = 0; k < d; ++k) total *= points_per_dim;
    double smin = std::numeric_limits<double>::infinity();
    Vec x(d);
    for (int flat = 0; flat < total; ++flat) {
        int rem = flat;
        for (int k = 0; k < d; ++k) {
            x[k] = (rem % points_per_dim + 0.5) * basis.domain().lengths[static_cast<std::size_t>(k)] / points_per_dim;
            rem /= points_per_dim;
        }
        const Mat j = Mat::Identity(d, d) + basis.combine_grad(x, c);
        Eigen::JacobiSVD<Mat> svd(j);
        smin = std::min(smin, svd.singularValues()[d - 1]);
    }
    return smin;
}

CenteringResidual centering_residual(const ModeBasis& basis, const Eigen::MatrixXd& lambda,
                                     const Eigen::MatrixXd& coeffs, const std::vector<Vec>& probes) {
    const bool frozen = coeffs.cols() == 0;
    if (lambda.cols() != basis.modes() || (!frozen && (coeffs.rows() != lambda.rows() || coeffs.cols() != lambda.cols()))) {
        raise(ErrorCategory::Misaligned, kModule, "centering_residual",
              "lambda and coefficient samples must be aligned with M = " + std::to_string(basis.modes()) + " columns");
    }
    if (lambda.rows() == 0) {
        raise(ErrorCategory::TooFewSamples, kModule, "centering_residual", "no samples");
    }
    CenteringResidual out;
    out.per_probe.reserve(probes.size());
    const double n = static_cast<double>(lambda.rows());
    for (std::size_t p = 0; p < probes.size(); ++p) {
        const Vec& x = probes[p];
        Vec mean;
        if (frozen) {
            // linear in lambda: average first
            const Eigen::VectorXd lam_mean = lambda.colwise().mean().transpose();
            mean = basis.combine(x, lam_mean);
        } else {
            mean = Vec::Zero(basis.dim());
            for (Eigen::Index s = 0; s < lambda.rows(); ++s) {
                const Eigen::VectorXd c = coeffs.row(s).transpose();
                const Eigen::VectorXd lam = lambda.row(s).transpose();
                const auto jac = mean_map_jacobian(basis, c, x);
                mean += jac.inverse * basis.combine(x, lam);
            }
            mean /= n;
        }
        const double r = mean.norm();
        out.per_probe.push_back(r);
        if (r > out.max_residual || p == 0) {
            out.max_residual = r;
            out.argmax = static_cast<int>(p);
        }
    }
    return out;
}

}  // namespace fastslow
