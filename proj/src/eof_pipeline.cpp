#include "eof_pipeline.hpp"

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fastslow {

namespace {
constexpr const char* kModule = "eof_pipeline";

void require_finite(const TrajectoryBatch& b, const char* op) {
    for (double v : b.data) {
        if (!std::isfinite(v)) raise(ErrorCategory::NonFinite, kModule, op, "trajectory contains non-finite positions");
    }
}

void write_matrix(std::ostream& out, const char* key, const Eigen::MatrixXd& a) {
    out << key << ' ' << a.rows() << ' ' << a.cols();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out << ' ' << format_double(a(i, j));
    out << '\n';
}

BoxEof summarize_box(int box, const CovarianceAccumulator& disp, const CovarianceAccumulator& incr, bool empty, int k) {
    BoxEof b;
    b.box = box;
    b.count = disp.count();
    b.empty = empty;
    b.mean = disp.count() > 0 ? disp.mean() : Eigen::VectorXd::Zero(disp.dim());
    b.covariance = disp.covariance();
    b.increment_covariance = incr.covariance();
    if (!empty) b.eof = compute_eofs(b.covariance, k);
    return b;
}
}  // namespace

TrajectoryBatch unwrap(const TrajectoryBatch& batch) {
    if (!batch.domain.periodic) return batch;
    TrajectoryBatch out = batch;
    for (int i = 0; i < batch.n_traj; ++i) {
        for (int s = 1; s < batch.n_samples; ++s) {
            const Vec step = batch.domain.minimal_image(batch.position(i, s) - batch.position(i, s - 1));
            out.set_position(i, s, out.position(i, s - 1) + step);
        }
    }
    return out;
}

int filter_window(double dt, double cutoff_period) {
    if (!(dt > 0.0) || !(cutoff_period >= 4.0 * dt * (1.0 - 1e-12))) {
        raise(ErrorCategory::ConfigInvalid, kModule, "low_pass_filter", "cutoff_period must be at least 4 dt");
    }
    int w = static_cast<int>(std::lround(cutoff_period / dt));
    if (w % 2 == 0) ++w;
    return w;
}

TrajectoryBatch low_pass_filter(const TrajectoryBatch& batch, double cutoff_period) {
    const int w = filter_window(batch.dt, cutoff_period);
    if (batch.n_samples < w) {
        raise(ErrorCategory::TrajectoryTooShort, kModule, "low_pass_filter",
              "trajectory has " + std::to_string(batch.n_samples) + " samples, window needs " + std::to_string(w));
    }
    require_finite(batch, "low_pass_filter");
    const TrajectoryBatch lifted = unwrap(batch);
    TrajectoryBatch out = lifted;
    const int half = (w - 1) / 2;
    const int n = batch.n_samples;
    for (int i = 0; i < batch.n_traj; ++i) {
        for (int s = 0; s < n; ++s) {
            const int h = std::min({half, s, n - 1 - s});
            for (int k = 0; k < batch.dim; ++k) {
                double acc = 0.0;
                for (int j = s - h; j <= s + h; ++j) acc += lifted.at(i, j, k);
                out.at(i, s, k) = acc / static_cast<double>(2 * h + 1);
            }
        }
    }
    return out;
}

DisplacementSeries displacement_series(const TrajectoryBatch& raw, const TrajectoryBatch& filtered, int margin) {
    if (!raw.aligned_with(filtered)) {
        raise(ErrorCategory::Misaligned, kModule, "displacement_series", "raw and filtered batches are not aligned");
    }
    DisplacementSeries out;
    out.zeta = TrajectoryBatch(raw.n_traj, raw.n_samples, raw.dim, raw.dt, raw.domain);
    out.zeta.t0 = raw.t0;
    out.positions = out.zeta;
    const Domain& dom = raw.domain;
    for (int i = 0; i < raw.n_traj; ++i) {
        Vec sum = Vec::Zero(raw.dim);
        int interior = 0;
        for (int s = 0; s < raw.n_samples; ++s) {
            const Vec f = filtered.position(i, s);
            const Vec z = dom.minimal_image(raw.position(i, s) - f);
            out.zeta.set_position(i, s, z);
            out.positions.set_position(i, s, dom.wrap(f));
            if (s >= margin && s < raw.n_samples - margin) {
                sum += z;
                ++interior;
            }
        }
        const double m = interior > 0 ? sum.norm() / interior : 0.0;
        out.interior_mean.push_back(m);
        out.max_interior_mean = std::max(out.max_interior_mean, m);
    }
    return out;
}

int BoxGrid::size() const {
    int n = 1;
    for (int c : counts) n *= c;
    return n;
}

int BoxGrid::box_of(const Vec& x) const {
    const Vec y = domain.wrap(x);
    int flat = 0;
    for (int k = static_cast<int>(counts.size()) - 1; k >= 0; --k) {
        const double len = domain.lengths[static_cast<std::size_t>(k)];
        const int c = counts[static_cast<std::size_t>(k)];
        int idx = static_cast<int>(std::floor(y[k] / len * c));
        idx = std::clamp(idx, 0, c - 1);
        flat = flat * c + idx;
    }
    return flat;
}

Vec BoxGrid::box_center(int box) const {
    Vec x(static_cast<int>(counts.size()));
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const int idx = box % counts[k];
        box /= counts[k];
        x[static_cast<int>(k)] = (idx + 0.5) * domain.lengths[k] / counts[k];
    }
    return x;
}

std::vector<BoxStatistics> bin_and_covary(const DisplacementSeries& series, const BoxGrid& grid, int min_count) {
    if (static_cast<int>(grid.counts.size()) != series.zeta.dim) {
        raise(ErrorCategory::DimensionMismatch, kModule, "bin_and_covary", "grid dimension does not match trajectories");
    }
    for (int c : grid.counts) {
        if (c < 1) raise(ErrorCategory::ConfigInvalid, kModule, "bin_and_covary", "grid counts must be positive");
    }
    const int d = series.zeta.dim;
    std::vector<BoxStatistics> boxes(static_cast<std::size_t>(grid.size()));
    for (auto& b : boxes) {
        b.displacement = CovarianceAccumulator(d);
        b.increment = CovarianceAccumulator(d);
    }
    const auto& z = series.zeta;
    for (int i = 0; i < z.n_traj; ++i) {
        for (int s = 0; s < z.n_samples; ++s) {
            const Vec zi = z.position(i, s);
            auto& box = boxes[static_cast<std::size_t>(grid.box_of(series.positions.position(i, s)))];
            box.displacement.add(zi);
            if (s + 1 < z.n_samples) box.increment.add(z.position(i, s + 1) - zi);
        }
    }
    for (auto& b : boxes) b.empty = b.displacement.count() < std::max(min_count, 2);
    return boxes;
}

Eof compute_eofs(const Eigen::MatrixXd& covariance, int k) {
    const Eigen::Index d = covariance.rows();
    if (covariance.cols() != d) raise(ErrorCategory::DimensionMismatch, kModule, "compute_eofs", "covariance not square");
    if (k < 1 || k > d) {
        raise(ErrorCategory::ModeCountTooLarge, kModule, "compute_eofs",
              "cannot retain " + std::to_string(k) + " modes in dimension " + std::to_string(d));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (covariance + covariance.transpose()));
    Eof out;
    out.values = es.eigenvalues().reverse();
    const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    out.modes = vecs.leftCols(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index arg = 0;
        out.modes.col(j).cwiseAbs().maxCoeff(&arg);
        if (out.modes(arg, j) < 0.0) out.modes.col(j) *= -1.0;
    }
    const double total = out.values.cwiseMax(0.0).sum();
    out.retained_fraction = total > 0.0 ? std::clamp(out.values.head(k).cwiseMax(0.0).sum() / total, 0.0, 1.0) : 0.0;
    return out;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) raise(ErrorCategory::DimensionMismatch, kModule, "principal_angles", "subspaces live in different dimensions");
    const Eigen::MatrixXd qa = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    const Eigen::MatrixXd qb = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
    Eigen::VectorXd s = svd.singularValues();
    Eigen::VectorXd angles(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) angles[i] = std::acos(std::clamp(s[i], -1.0, 1.0));
    std::sort(angles.data(), angles.data() + angles.size());
    return angles;
}

EofResult run_eof_pipeline(const TrajectoryBatch& batch, const EofOptions& options) {
    const TrajectoryBatch filtered = low_pass_filter(batch, options.cutoff_period);
    const int margin = (filter_window(batch.dt, options.cutoff_period) - 1) / 2;
    const DisplacementSeries series = displacement_series(unwrap(batch), filtered, margin);
    EofResult result;
    result.grid = BoxGrid{batch.domain, options.grid_counts};
    result.retained = options.retained;
    const auto stats = bin_and_covary(series, result.grid, options.min_count);
    CovarianceAccumulator all_disp(batch.dim), all_incr(batch.dim);
    for (std::size_t b = 0; b < stats.size(); ++b) {
        result.boxes.push_back(summarize_box(static_cast<int>(b), stats[b].displacement, stats[b].increment, stats[b].empty,
                                             options.retained));
        all_disp.merge(stats[b].displacement);
        all_incr.merge(stats[b].increment);
    }
    result.pooled = summarize_box(-1, all_disp, all_incr, all_disp.count() < 2, options.retained);
    return result;
}

std::string serialize_eofs(const EofResult& r) {
    std::ostringstream out;
    out << "fastslow-eofs 1\n";
    out << "dim " << r.grid.domain.dim() << '\n';
    out << "domain " << (r.grid.domain.periodic ? "periodic" : "bounded");
    for (double l : r.grid.domain.lengths) out << ' ' << format_double(l);
    out << '\n';
    out << "grid";
    for (int c : r.grid.counts) out << ' ' << c;
    out << '\n';
    out << "retained " << r.retained << '\n';
    auto box = [&](const BoxEof& b) {
        out << "box " << b.box << " count " << b.count << (b.empty ? " empty" : " ok") << '\n';
        if (b.count > 0) write_matrix(out, "mean", b.mean);
        if (b.empty) return;
        write_matrix(out, "covariance", b.covariance);
        write_matrix(out, "increment_covariance", b.increment_covariance);
        write_matrix(out, "values", b.eof.values);
        write_matrix(out, "modes", b.eof.modes);
        out << "retained_fraction " << format_double(b.eof.retained_fraction) << '\n';
    };
    for (const auto& b : r.boxes) box(b);
    box(r.pooled);
    out << "end\n";
    return out.str();
}

void write_eof_file(const EofResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorCategory::Io, kModule, "write_eof_file", "cannot open " + path);
    out << serialize_eofs(result);
}

}  // namespace fastslow
