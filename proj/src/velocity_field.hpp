#pragma once

#include "types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace fastslow {

enum class VelocityKind { Zero, Uniform, Shear, Cellular, Rotation, Linear };

std::string_view velocity_kind_name(VelocityKind kind);
VelocityKind parse_velocity_kind(std::string_view name);

/// Analytic mean velocity u(x, t) from a small catalog.
///
///   zero
///   uniform   u = U
///   shear     u_a = U0 sin(k x_b)          (flow_axis a, gradient_axis b)
///   cellular  u_0 = U sin(k x_0) cos(k x_1), u_1 = -U cos(k x_0) sin(k x_1)
///   rotation  u_0 = -omega (x_1 - c_1), u_1 = omega (x_0 - c_0)
///   linear    u = A x
///
/// rotation and linear are unbounded on a periodic box and need a
/// non-periodic domain.
struct MeanVelocityField {
    VelocityKind kind = VelocityKind::Zero;
    int dim = 1;
    Vec uniform;                 // uniform: U
    double amplitude = 0.0;      // shear U0, cellular U, rotation omega
    double wavenumber = 1.0;     // shear, cellular
    int flow_axis = 0;           // shear
    int gradient_axis = 1;       // shear
    Vec center;                  // rotation
    Mat matrix;                  // linear

    static MeanVelocityField zero(int dim);
    static MeanVelocityField make_uniform(const Vec& u);
    static MeanVelocityField make_shear(int dim, double u0, double k, int flow_axis, int gradient_axis);
    static MeanVelocityField make_cellular(int dim, double u, double k);
    static MeanVelocityField make_rotation(int dim, double omega, const Vec& center);
    static MeanVelocityField make_linear(const Mat& a);

    Vec value(const Vec& x, double t) const;
    Mat jacobian(const Vec& x, double t) const;
    double divergence(const Vec& x, double t) const { return jacobian(x, t).trace(); }

    /// Throws config-invalid if the field is not compatible with the domain.
    void validate(const Domain& domain) const;
};

}  // namespace fastslow
