#pragma once

#include "types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fastslow {

/// phi(x) = amplitude * cos(wavevector . x + phase) * direction, |direction| = 1.
struct TrigMode {
    Vec wavevector;
    double phase = 0.0;
    double amplitude = 1.0;
    Vec direction;
};

/// Immutable set of M spatial modes on a box; safe to share across threads.
///
/// Gradients follow the Jacobian convention (grad f)_{ab} = d f_a / d x_b, so the
/// mean-map Jacobian is Id + grad zeta.
class ModeBasis {
public:
    ModeBasis() = default;
    ModeBasis(Domain domain, std::vector<TrigMode> modes);

    /// M modes with distinct (up to sign) nonzero integer wavenumbers
    /// |n_k| <= max_wavenumber, uniform phases and random unit directions.
    static ModeBasis generate(Domain domain, int count, int max_wavenumber, double amplitude,
                              std::uint64_t seed);

    int dim() const noexcept { return domain_.dim(); }
    int modes() const noexcept { return static_cast<int>(modes_.size()); }
    const Domain& domain() const noexcept { return domain_; }
    const std::vector<TrigMode>& mode_list() const noexcept { return modes_; }

    Vec phi(int i, const Vec& x) const;
    Mat grad_phi(int i, const Vec& x) const;
    /// d/dx_j of grad phi_i.
    Mat grad_phi_derivative(int i, const Vec& x, int j) const;

    /// sum_i w_i phi_i(x); shared kernel of zeta (w = c) and d zeta/dt (w = lambda).
    Vec combine(const Vec& x, const Eigen::Ref<const Eigen::VectorXd>& w) const;
    /// sum_i w_i grad phi_i(x)
    Mat combine_grad(const Vec& x, const Eigen::Ref<const Eigen::VectorXd>& w) const;

    /// d x M matrix whose columns are phi_i(x).
    Eigen::MatrixXd phi_matrix(const Vec& x) const;

    double sup_norm(int i) const;
    /// sup_x of the spectral norm of grad phi_i.
    double grad_sup_norm(int i) const;

    /// Largest |<phi_i, phi_j>| / (|phi_i| |phi_j|) over i != j, using an exact
    /// uniform-grid quadrature of the domain average (periodic domains only).
    double orthogonality_defect() const;

private:
    Domain domain_;
    std::vector<TrigMode> modes_;
};

/// zeta(x) = sum_i c_i phi_i(x)
Vec eval_zeta(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c, const Vec& x);

/// d zeta / dt = sum_i lambda_i phi_i(x)
Vec dzeta_dt(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& lambda, const Vec& x);

struct MeanMapJacobian {
    Mat jacobian;
    Mat inverse;
    double min_singular_value = 1.0;
};

/// J = Id + grad zeta(x) and its inverse; near-singular error if sigma_min(J) < 1e-6.
MeanMapJacobian mean_map_jacobian(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c,
                                  const Vec& x);

inline constexpr double kNearSingularThreshold = 1e-6;

/// Upper bound on sup_x |grad zeta(x)|_2 when |c_i| <= caps_i.
double grad_zeta_bound(const ModeBasis& basis, const std::vector<double>& caps);

/// Reject displacement settings that cannot keep Id + grad zeta invertible:
/// near-singular when the bound reaches 1, config-invalid above `max_grad_norm`.
void check_diffeomorphism(const ModeBasis& basis, const std::vector<double>& caps, double max_grad_norm);

/// Minimum over a uniform n^d grid of sigma_min(Id + grad zeta) for fixed c.
double min_singular_value_on_grid(const ModeBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c,
                                  int points_per_dim);

struct CenteringResidual {
    double max_residual = 0.0;
    int argmax = 0;
    std::vector<double> per_probe;
};

/// max over probes of | mean_n J(x, c_n)^{-1} sum_i lambda_{n,i} phi_i(x) |.
/// `coeffs` may have zero columns (frozen displacement, J = Id).
CenteringResidual centering_residual(const ModeBasis& basis, const Eigen::MatrixXd& lambda,
                                     const Eigen::MatrixXd& coeffs, const std::vector<Vec>& probes);

}  // namespace fastslow
