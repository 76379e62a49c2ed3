#pragma once

#include "types.hpp"

#include <functional>

namespace fastslow {

/// Drift b(x) and noise matrix S(x) of dX = b dt + S dW. Column i of S is the
/// i-th noise vector field; with a symmetric S it is also the i-th row.
struct SdeField {
    int dim = 1;
    std::function<Vec(const Vec&)> drift;
    std::function<Mat(const Vec&)> sigma;
    /// Optional analytic divergence of the noise fields, used for Jacobian transport.
    std::function<Vec(const Vec&)> sigma_divergence;
    /// Optional analytic drift Jacobian, used for Jacobian transport.
    std::function<Mat(const Vec&)> drift_jacobian;
};

}  // namespace fastslow
