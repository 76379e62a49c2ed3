#pragma once

#include "types.hpp"

#include <utility>
#include <vector>

namespace fastslow {

/// Regular lattice of probe nodes, node(i) = origin + i * spacing.
///
/// A periodic lattice covers one period exactly (counts[k] * spacing[k] = L_k)
/// and interpolation wraps around; a non-periodic lattice spans its hull only.
struct Lattice {
    Vec origin;
    Vec spacing;
    std::vector<int> counts;
    bool periodic = true;

    /// Nodes covering the domain: i * L / n when periodic, i * L / (n - 1) otherwise.
    static Lattice over(const Domain& domain, const std::vector<int>& counts);

    int dim() const { return static_cast<int>(counts.size()); }
    int size() const;
    Vec node(int flat) const;
    std::vector<Vec> nodes() const;

    /// Multilinear interpolation stencil: (node index, weight) pairs summing to 1.
    /// Positions outside a non-periodic lattice's hull are an out-of-hull error.
    std::vector<std::pair<int, double>> stencil(const Vec& x) const;
};

}  // namespace fastslow
