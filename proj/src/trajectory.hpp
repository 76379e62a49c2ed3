#pragma once

#include "types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fastslow {

/// n_traj trajectories of n_samples d-vectors on a uniform time grid.
struct TrajectoryBatch {
    int n_traj = 0;
    int n_samples = 0;
    int dim = 0;
    double dt = 1.0;
    double t0 = 0.0;
    Domain domain;
    std::vector<double> data;  ///< [traj][sample][component]

    TrajectoryBatch() = default;
    TrajectoryBatch(int n_traj, int n_samples, int dim, double dt, Domain domain);

    double& at(int traj, int sample, int k) {
        return data[(static_cast<std::size_t>(traj) * static_cast<std::size_t>(n_samples) + static_cast<std::size_t>(sample)) *
                        static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
    }
    double at(int traj, int sample, int k) const {
        return data[(static_cast<std::size_t>(traj) * static_cast<std::size_t>(n_samples) + static_cast<std::size_t>(sample)) *
                        static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
    }
    Vec position(int traj, int sample) const;
    void set_position(int traj, int sample, const Vec& x);

    bool aligned_with(const TrajectoryBatch& other) const;
};

/// CSV with header "traj_id,t,x1..xd".
void write_trajectory_csv(const TrajectoryBatch& batch, const std::string& path);
/// Reads CSV written by write_trajectory_csv; sampling must be uniform.
TrajectoryBatch read_trajectory_csv(const std::string& path, const Domain& domain);

/// Binary record: magic "FSTRJ001", int32 n_traj, n_samples, dim, uint8 periodic,
/// float64 dt, t0, lengths[dim], then data, little-endian.
void write_trajectory_binary(const TrajectoryBatch& batch, const std::string& path);
TrajectoryBatch read_trajectory_binary(const std::string& path);

}  // namespace fastslow
