#pragma once

#include "statistics.hpp"
#include "trajectory.hpp"
#include "types.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fastslow {

/// Undo periodic wrapping along each trajectory (consecutive samples are joined
/// by their minimal-image difference). Non-periodic batches are returned as is.
TrajectoryBatch unwrap(const TrajectoryBatch& batch);

/// Odd window length (in samples) for a cutoff period.
int filter_window(double dt, double cutoff_period);

/// Zero-phase centred moving average over `filter_window` samples. Near the ends
/// the window shrinks symmetrically, so affine signals pass unchanged. Periodic
/// batches are unwrapped first; the output lives on the lift.
TrajectoryBatch low_pass_filter(const TrajectoryBatch& batch, double cutoff_period);

struct DisplacementSeries {
    TrajectoryBatch zeta;                 ///< raw - filtered, minimal image when periodic
    TrajectoryBatch positions;            ///< filtered positions wrapped into the domain
    std::vector<double> interior_mean;    ///< |mean zeta| over interior samples, per trajectory
    double max_interior_mean = 0.0;
};

/// `margin` samples at each end are excluded from the interior means.
DisplacementSeries displacement_series(const TrajectoryBatch& raw, const TrajectoryBatch& filtered, int margin = 0);

/// Regular partition of the domain into counts[k] boxes along axis k.
struct BoxGrid {
    Domain domain;
    std::vector<int> counts;

    int size() const;
    /// Box containing x (wrapped first; clamped onto the edge boxes otherwise).
    int box_of(const Vec& x) const;
    Vec box_center(int box) const;
};

struct BoxStatistics {
    CovarianceAccumulator displacement;  ///< zeta samples
    CovarianceAccumulator increment;     ///< zeta(t + dt) - zeta(t), binned at t
    bool empty = true;                   ///< count below the configured minimum
};

std::vector<BoxStatistics> bin_and_covary(const DisplacementSeries& series, const BoxGrid& grid, int min_count);

struct Eof {
    Eigen::VectorXd values;   ///< all eigenvalues, nonincreasing
    Eigen::MatrixXd modes;    ///< d x k, orthonormal columns
    double retained_fraction = 0.0;
};

/// Spectral decomposition of a symmetric covariance keeping k modes. The
/// largest-magnitude entry of every mode is made positive.
Eof compute_eofs(const Eigen::MatrixXd& covariance, int k);

/// Principal angles (radians, ascending) between the column spans of a and b.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct BoxEof {
    int box = 0;
    std::int64_t count = 0;
    bool empty = true;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd increment_covariance;
    Eof eof;
};

struct EofResult {
    BoxGrid grid;
    int retained = 0;
    std::vector<BoxEof> boxes;
    BoxEof pooled;  ///< all samples together, box = -1
};

struct EofOptions {
    double cutoff_period = 1.0;
    std::vector<int> grid_counts;
    int min_count = 10;
    int retained = 1;
};

/// Full recipe: filter, displacements, binning, per-box and pooled EOFs.
EofResult run_eof_pipeline(const TrajectoryBatch& batch, const EofOptions& options);

std::string serialize_eofs(const EofResult& result);
void write_eof_file(const EofResult& result, const std::string& path);

}  // namespace fastslow
