#include "trajectory.hpp"

#include "errors.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fastslow {

namespace {
constexpr const char* kModule = "eof_pipeline";
constexpr std::array<char, 8> kMagic{'F', 'S', 'T', 'R', 'J', '0', '0', '1'};

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) raise(ErrorCategory::Io, kModule, "read_trajectory_binary", "truncated file " + path);
    return v;
}
}  // namespace

TrajectoryBatch::TrajectoryBatch(int n_traj_, int n_samples_, int dim_, double dt_, Domain domain_)
    : n_traj(n_traj_), n_samples(n_samples_), dim(dim_), dt(dt_), domain(std::move(domain_)),
      data(static_cast<std::size_t>(n_traj_) * static_cast<std::size_t>(n_samples_) * static_cast<std::size_t>(dim_), 0.0) {}

Vec TrajectoryBatch::position(int traj, int sample) const {
    Vec x(dim);
    for (int k = 0; k < dim; ++k) x[k] = at(traj, sample, k);
    return x;
}

void TrajectoryBatch::set_position(int traj, int sample, const Vec& x) {
    for (int k = 0; k < dim; ++k) at(traj, sample, k) = x[k];
}

bool TrajectoryBatch::aligned_with(const TrajectoryBatch& other) const {
    return n_traj == other.n_traj && n_samples == other.n_samples && dim == other.dim &&
           std::abs(dt - other.dt) <= 1e-12 * std::abs(dt);
}

void write_trajectory_csv(const TrajectoryBatch& batch, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCategory::Io, kModule, "write_trajectory_csv", "cannot open " + path);
    out << "traj_id,t";
    for (int k = 0; k < batch.dim; ++k) out << ",x" << (k + 1);
    out << '\n';
    for (int i = 0; i < batch.n_traj; ++i) {
        for (int s = 0; s < batch.n_samples; ++s) {
            out << i << ',' << format_double(batch.t0 + s * batch.dt);
            for (int k = 0; k < batch.dim; ++k) out << ',' << format_double(batch.at(i, s, k));
            out << '\n';
        }
    }
}

TrajectoryBatch read_trajectory_csv(const std::string& path, const Domain& domain) {
    std::ifstream in(path);
    if (!in) raise(ErrorCategory::Io, kModule, "read_trajectory_csv", "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) raise(ErrorCategory::Io, kModule, "read_trajectory_csv", "empty file " + path);
    int dim = 0;
    {
        std::stringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) ++cols;
        dim = cols - 2;
    }
    if (dim < 1 || dim != domain.dim()) {
        raise(ErrorCategory::DimensionMismatch, kModule, "read_trajectory_csv",
              "trajectory columns do not match domain dimension");
    }
    std::map<long, std::vector<std::vector<double>>> rows;  // id -> [t, x...]
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        const long id = std::stol(cell);
        std::vector<double> r;
        while (std::getline(ss, cell, ',')) r.push_back(parse_double(cell));
        if (static_cast<int>(r.size()) != dim + 1) {
            raise(ErrorCategory::Io, kModule, "read_trajectory_csv", "ragged row in " + path);
        }
        rows[id].push_back(std::move(r));
    }
    if (rows.empty()) raise(ErrorCategory::Io, kModule, "read_trajectory_csv", "no samples in " + path);
    const int n_samples = static_cast<int>(rows.begin()->second.size());
    if (n_samples < 2) raise(ErrorCategory::TrajectoryTooShort, kModule, "read_trajectory_csv", "need >= 2 samples");
    const double dt = rows.begin()->second[1][0] - rows.begin()->second[0][0];
    TrajectoryBatch batch(static_cast<int>(rows.size()), n_samples, dim, dt, domain);
    batch.t0 = rows.begin()->second[0][0];
    int i = 0;
    for (const auto& [id, samples] : rows) {
        if (static_cast<int>(samples.size()) != n_samples) {
            raise(ErrorCategory::Misaligned, kModule, "read_trajectory_csv", "trajectories have different lengths");
        }
        for (int s = 0; s < n_samples; ++s) {
            const double expected = batch.t0 + s * dt;
            if (std::abs(samples[static_cast<std::size_t>(s)][0] - expected) > 1e-9 * (1.0 + std::abs(expected))) {
                raise(ErrorCategory::Misaligned, kModule, "read_trajectory_csv", "non-uniform sampling in trajectory " + std::to_string(id));
            }
            for (int k = 0; k < dim; ++k) batch.at(i, s, k) = samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(k) + 1];
        }
        ++i;
    }
    return batch;
}

void write_trajectory_binary(const TrajectoryBatch& batch, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorCategory::Io, kModule, "write_trajectory_binary", "cannot open " + path);
    out.write(kMagic.data(), kMagic.size());
    put<std::int32_t>(out, batch.n_traj);
    put<std::int32_t>(out, batch.n_samples);
    put<std::int32_t>(out, batch.dim);
    put<std::uint8_t>(out, batch.domain.periodic ? 1 : 0);
    put<double>(out, batch.dt);
    put<double>(out, batch.t0);
    for (double l : batch.domain.lengths) put<double>(out, l);
    out.write(reinterpret_cast<const char*>(batch.data.data()),
              static_cast<std::streamsize>(batch.data.size() * sizeof(double)));
}

TrajectoryBatch read_trajectory_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCategory::Io, kModule, "read_trajectory_binary", "cannot open " + path);
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) raise(ErrorCategory::Io, kModule, "read_trajectory_binary", "bad magic in " + path);
    const int n_traj = get<std::int32_t>(in, path);
    const int n_samples = get<std::int32_t>(in, path);
    const int dim = get<std::int32_t>(in, path);
    Domain domain;
    domain.periodic = get<std::uint8_t>(in, path) != 0;
    const double dt = get<double>(in, path);
    const double t0 = get<double>(in, path);
    if (dim < 1 || dim > kMaxDim || n_traj < 0 || n_samples < 0) {
        raise(ErrorCategory::Io, kModule, "read_trajectory_binary", "corrupt header in " + path);
    }
    for (int k = 0; k < dim; ++k) domain.lengths.push_back(get<double>(in, path));
    TrajectoryBatch batch(n_traj, n_samples, dim, dt, domain);
    batch.t0 = t0;
    in.read(reinterpret_cast<char*>(batch.data.data()), static_cast<std::streamsize>(batch.data.size() * sizeof(double)));
    if (!in) raise(ErrorCategory::Io, kModule, "read_trajectory_binary", "truncated data in " + path);
    return batch;
}

}  // namespace fastslow
