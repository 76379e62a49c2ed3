#include "lattice.hpp"

#include "errors.hpp"

#include <cmath>

namespace fastslow {

Lattice Lattice::over(const Domain& domain, const std::vector<int>& counts) {
    if (static_cast<int>(counts.size()) != domain.dim()) {
        raise(ErrorCategory::DimensionMismatch, "homogenization", "lattice",
              "probe counts need one entry per dimension");
    }
    Lattice lat;
    lat.counts = counts;
    lat.periodic = domain.periodic;
    lat.origin = Vec::Zero(domain.dim());
    lat.spacing = Vec::Zero(domain.dim());
    for (int k = 0; k < domain.dim(); ++k) {
        const int n = counts[static_cast<std::size_t>(k)];
        const double len = domain.lengths[static_cast<std::size_t>(k)];
        if (n < 1) raise(ErrorCategory::ConfigInvalid, "homogenization", "lattice", "probe counts must be >= 1");
        if (domain.periodic) {
            lat.spacing[k] = len / n;
        } else if (n == 1) {
            lat.origin[k] = 0.5 * len;
            lat.spacing[k] = 0.0;
        } else {
            lat.spacing[k] = len / (n - 1);
        }
    }
    return lat;
}

int Lattice::size() const {
    int n = 1;
    for (int c : counts) n *= c;
    return n;
}

Vec Lattice::node(int flat) const {
    Vec x(dim());
    for (int k = 0; k < dim(); ++k) {
        const int n = counts[static_cast<std::size_t>(k)];
        x[k] = origin[k] + (flat % n) * spacing[k];
        flat /= n;
    }
    return x;
}

std::vector<Vec> Lattice::nodes() const {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (int i = 0; i < size(); ++i) out.push_back(node(i));
    return out;
}

std::vector<std::pair<int, double>> Lattice::stencil(const Vec& x) const {
    const int d = dim();
    if (x.size() != d) {
        raise(ErrorCategory::DimensionMismatch, "homogenization", "interpolate",
              "position dimension does not match lattice");
    }
    std::vector<int> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
    std::vector<double> frac(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const int n = counts[ku];
        if (n == 1 || spacing[k] == 0.0) {
            if (!periodic && std::abs(x[k] - origin[k]) > 1e-12 * (1.0 + std::abs(origin[k]))) {
                raise(ErrorCategory::OutOfHull, "homogenization", "interpolate",
                      "position outside single-probe lattice axis " + std::to_string(k));
            }
            lo[ku] = hi[ku] = 0;
            frac[ku] = 0.0;
            continue;
        }
        double s = (x[k] - origin[k]) / spacing[k];
        if (periodic) {
            s = std::fmod(s, static_cast<double>(n));
            if (s < 0.0) s += n;
            int i0 = static_cast<int>(std::floor(s));
            if (i0 >= n) i0 = n - 1;
            lo[ku] = i0;
            hi[ku] = (i0 + 1) % n;
            frac[ku] = s - i0;
        } else {
            const double tol = 1e-12 * (n - 1);
            if (s < -tol || s > (n - 1) + tol) {
                raise(ErrorCategory::OutOfHull, "homogenization", "interpolate",
                      "position " + format_double(x[k]) + " outside probe hull on axis " + std::to_string(k));
            }
            s = std::clamp(s, 0.0, static_cast<double>(n - 1));
            int i0 = std::min(static_cast<int>(std::floor(s)), n - 2);
            lo[ku] = i0;
            hi[ku] = i0 + 1;
            frac[ku] = s - i0;
        }
    }
    std::vector<std::pair<int, double>> out;
    out.reserve(std::size_t{1} << d);
    for (int corner = 0; corner < (1 << d); ++corner) {
        int flat = 0;
        int stride = 1;
        double w = 1.0;
        for (int k = 0; k < d; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            const bool upper = (corner >> k) & 1;
            flat += (upper ? hi[ku] : lo[ku]) * stride;
            w *= upper ? frac[ku] : 1.0 - frac[ku];
            stride *= counts[ku];
        }
        if (w != 0.0) out.emplace_back(flat, w);
    }
    if (out.empty()) out.emplace_back(0, 1.0);
    return out;
}

}  // namespace fastslow
