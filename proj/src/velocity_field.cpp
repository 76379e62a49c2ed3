#include "velocity_field.hpp"

#include "errors.hpp"

#include <cmath>
#include <numbers>

namespace fastslow {

namespace {
constexpr const char* kModule = "multiscale_integrator";

bool commensurate(double k, double length) {
    const double n = k * length / (2.0 * std::numbers::pi);
    return std::abs(n - std::round(n)) < 1e-9;
}
}  // namespace

std::string_view velocity_kind_name(VelocityKind kind) {
    switch (kind) {
        case VelocityKind::Zero: return "zero";
        case VelocityKind::Uniform: return "uniform";
        case VelocityKind::Shear: return "shear";
        case VelocityKind::Cellular: return "cellular";
        case VelocityKind::Rotation: return "rotation";
        case VelocityKind::Linear: return "linear";
    }
    return "unknown";
}

VelocityKind parse_velocity_kind(std::string_view name) {
    if (name == "zero") return VelocityKind::Zero;
    if (name == "uniform") return VelocityKind::Uniform;
    if (name == "shear") return VelocityKind::Shear;
    if (name == "cellular") return VelocityKind::Cellular;
    if (name == "rotation") return VelocityKind::Rotation;
    if (name == "linear") return VelocityKind::Linear;
    raise(ErrorCategory::ConfigInvalid, kModule, "parse_velocity_kind",
          "unknown velocity kind '" + std::string(name) + "'");
}

MeanVelocityField MeanVelocityField::zero(int dim) {
    MeanVelocityField f;
    f.kind = VelocityKind::Zero;
    f.dim = dim;
    return f;
}

MeanVelocityField MeanVelocityField::make_uniform(const Vec& u) {
    MeanVelocityField f;
    f.kind = VelocityKind::Uniform;
    f.dim = static_cast<int>(u.size());
    f.uniform = u;
    return f;
}

MeanVelocityField MeanVelocityField::make_shear(int dim, double u0, double k, int flow_axis, int gradient_axis) {
    MeanVelocityField f;
    f.kind = VelocityKind::Shear;
    f.dim = dim;
    f.amplitude = u0;
    f.wavenumber = k;
    f.flow_axis = flow_axis;
    f.gradient_axis = gradient_axis;
    return f;
}

MeanVelocityField MeanVelocityField::make_cellular(int dim, double u, double k) {
    MeanVelocityField f;
    f.kind = VelocityKind::Cellular;
    f.dim = dim;
    f.amplitude = u;
    f.wavenumber = k;
    return f;
}

MeanVelocityField MeanVelocityField::make_rotation(int dim, double omega, const Vec& center) {
    MeanVelocityField f;
    f.kind = VelocityKind::Rotation;
    f.dim = dim;
    f.amplitude = omega;
    f.center = center;
    return f;
}

MeanVelocityField MeanVelocityField::make_linear(const Mat& a) {
    MeanVelocityField f;
    f.kind = VelocityKind::Linear;
    f.dim = static_cast<int>(a.rows());
    f.matrix = a;
    return f;
}

Vec MeanVelocityField::value(const Vec& x, double /*t*/) const {
    Vec u = Vec::Zero(dim);
    switch (kind) {
        case VelocityKind::Zero: break;
        case VelocityKind::Uniform: u = uniform; break;
        case VelocityKind::Shear: u[flow_axis] = amplitude * std::sin(wavenumber * x[gradient_axis]); break;
        case VelocityKind::Cellular:
            u[0] = amplitude * std::sin(wavenumber * x[0]) * std::cos(wavenumber * x[1]);
            u[1] = -amplitude * std::cos(wavenumber * x[0]) * std::sin(wavenumber * x[1]);
            break;
        case VelocityKind::Rotation:
            u[0] = -amplitude * (x[1] - center[1]);
            u[1] = amplitude * (x[0] - center[0]);
            break;
        case VelocityKind::Linear: u = matrix * x; break;
    }
    return u;
}

Mat MeanVelocityField::jacobian(const Vec& x, double /*t*/) const {
    Mat j = Mat::Zero(dim, dim);
    switch (kind) {
        case VelocityKind::Zero:
        case VelocityKind::Uniform: break;
        case VelocityKind::Shear:
            j(flow_axis, gradient_axis) = amplitude * wavenumber * std::cos(wavenumber * x[gradient_axis]);
            break;
        case VelocityKind::Cellular: {
            const double k = wavenumber;
            const double s0 = std::sin(k * x[0]), c0 = std::cos(k * x[0]);
            const double s1 = std::sin(k * x[1]), c1 = std::cos(k * x[1]);
            j(0, 0) = amplitude * k * c0 * c1;
            j(0, 1) = -amplitude * k * s0 * s1;
            j(1, 0) = amplitude * k * s0 * s1;
            j(1, 1) = -amplitude * k * c0 * c1;
            break;
        }
        case VelocityKind::Rotation:
            j(0, 1) = -amplitude;
            j(1, 0) = amplitude;
            break;
        case VelocityKind::Linear: j = matrix; break;
    }
    return j;
}

void MeanVelocityField::validate(const Domain& domain) const {
    const auto fail = [](const std::string& msg) { raise(ErrorCategory::ConfigInvalid, kModule, "velocity", msg); };
    if (dim != domain.dim()) fail("velocity dimension does not match domain");
    switch (kind) {
        case VelocityKind::Zero: break;
        case VelocityKind::Uniform:
            if (uniform.size() != dim) fail("uniform velocity needs one component per dimension");
            break;
        case VelocityKind::Shear:
            if (flow_axis < 0 || flow_axis >= dim || gradient_axis < 0 || gradient_axis >= dim || flow_axis == gradient_axis) {
                if (!(dim == 1 && flow_axis == 0 && gradient_axis == 0)) fail("shear axes invalid for this dimension");
            }
            if (domain.periodic && !commensurate(wavenumber, domain.lengths[static_cast<std::size_t>(gradient_axis)])) {
                fail("shear wavenumber not commensurate with the periodic box");
            }
            break;
        case VelocityKind::Cellular:
            if (dim < 2) fail("cellular flow needs dimension >= 2");
            if (domain.periodic && (!commensurate(wavenumber, domain.lengths[0]) || !commensurate(wavenumber, domain.lengths[1]))) {
                fail("cellular wavenumber not commensurate with the periodic box");
            }
            break;
        case VelocityKind::Rotation:
            if (dim < 2) fail("rotation needs dimension >= 2");
            if (center.size() != dim) fail("rotation center needs one component per dimension");
            if (domain.periodic) fail("rotation is not periodic; use a non-periodic domain");
            break;
        case VelocityKind::Linear:
            if (matrix.rows() != dim || matrix.cols() != dim) fail("linear velocity matrix must be d x d");
            if (domain.periodic) fail("linear flow is not periodic; use a non-periodic domain");
            break;
    }
}

}  // namespace fastslow
