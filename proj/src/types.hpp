#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace fastslow {

/// Spatial dimension of the slow particle is at most three. Spatial vectors and
/// matrices use inline storage so the integrator inner loops never allocate.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Rectangular box. When periodic, positions are identified modulo the side
/// lengths; otherwise the lengths are only used as a nominal extent.
struct Domain {
    std::vector<double> lengths;
    bool periodic = true;

    int dim() const { return static_cast<int>(lengths.size()); }

    /// Map a position into [0, L) along every periodic axis.
    Vec wrap(const Vec& x) const {
        if (!periodic) return x;
        Vec out = x;
        for (int k = 0; k < out.size(); ++k) {
            const double len = lengths[static_cast<std::size_t>(k)];
            double w = std::fmod(out[k], len);
            if (w < 0.0) w += len;
            if (w >= len) w -= len;
            out[k] = w;
        }
        return out;
    }

    /// Shortest periodic representative of a difference vector.
    Vec minimal_image(const Vec& delta) const {
        if (!periodic) return delta;
        Vec out = delta;
        for (int k = 0; k < out.size(); ++k) {
            const double len = lengths[static_cast<std::size_t>(k)];
            out[k] -= len * std::round(out[k] / len);
        }
        return out;
    }

    bool operator==(const Domain&) const = default;
};

inline Vec zeros(int d) { return Vec::Zero(d); }

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Parse a double written by format_double (or any decimal literal).
double parse_double(const std::string& text);

}  // namespace fastslow
