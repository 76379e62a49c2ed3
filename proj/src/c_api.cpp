#include "fastslow/fastslow.h"

#include "chaotic_drivers.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "homogenization.hpp"
#include "random.hpp"

#include <cstring>
#include <exception>
#include <new>
#include <string>

using namespace fastslow;

struct fs_experiment {
    ExperimentConfig config;
    std::string kind;
    std::vector<std::string> outputs;
};

struct fs_driver {
    FastDriver driver;
};

struct fs_coefficients {
    SdeField field;
};

namespace {

struct LastError {
    std::string message;
    std::string module;
    std::string operation;
};

thread_local LastError last_error;

fs_status record(ErrorCategory category, std::string module, std::string operation, std::string message) {
    last_error = {std::move(message), std::move(module), std::move(operation)};
    return static_cast<fs_status>(category);
}

template <class F>
fs_status guarded(F&& f) {
    try {
        f();
        return FS_OK;
    } catch (const Error& e) {
        return record(e.category(), e.module(), e.operation(), e.what());
    } catch (const std::bad_alloc&) {
        return record(ErrorCategory::Internal, "c_api", "", "out of memory");
    } catch (const std::exception& e) {
        return record(ErrorCategory::Internal, "c_api", "", e.what());
    } catch (...) {
        return record(ErrorCategory::Internal, "c_api", "", "unknown exception");
    }
}

fs_status null_argument(const char* op) {
    return record(ErrorCategory::InvalidArgument, "c_api", op, std::string("invalid-argument: null pointer passed to ") + op);
}

fs_status make_experiment(ExperimentConfig config, fs_experiment** out) {
    auto* e = new fs_experiment{std::move(config), {}, {}};
    e->kind = std::string(experiment_kind_name(e->config.kind));
    *out = e;
    return FS_OK;
}

}  // namespace

extern "C" {

const char* fs_version(void) {
    static const std::string v = version_string();
    return v.c_str();
}

const char* fs_status_name(fs_status status) {
    if (status == FS_OK) return "ok";
    if (status < FS_CONFIG_INVALID || status > FS_INTERNAL) return "unknown";
    return category_name(static_cast<ErrorCategory>(status)).data();
}

const char* fs_last_error_message(void) { return last_error.message.c_str(); }
const char* fs_last_error_module(void) { return last_error.module.c_str(); }
const char* fs_last_error_operation(void) { return last_error.operation.c_str(); }

fs_status fs_experiment_load(const char* path, fs_experiment** out) {
    if (!path || !out) return null_argument("fs_experiment_load");
    *out = nullptr;
    ExperimentConfig cfg;
    const fs_status s = guarded([&] { cfg = load_config(path); });
    return s == FS_OK ? guarded([&] { make_experiment(std::move(cfg), out); }) : s;
}

fs_status fs_experiment_parse(const char* yaml_text, fs_experiment** out) {
    if (!yaml_text || !out) return null_argument("fs_experiment_parse");
    *out = nullptr;
    ExperimentConfig cfg;
    const fs_status s = guarded([&] { cfg = parse_config(yaml_text); });
    return s == FS_OK ? guarded([&] { make_experiment(std::move(cfg), out); }) : s;
}

void fs_experiment_free(fs_experiment* experiment) { delete experiment; }

const char* fs_experiment_kind(const fs_experiment* experiment) {
    return experiment ? experiment->kind.c_str() : "";
}

fs_status fs_experiment_set_seed(fs_experiment* experiment, uint64_t seed) {
    if (!experiment) return null_argument("fs_experiment_set_seed");
    experiment->config.seed = seed;
    return FS_OK;
}

fs_status fs_experiment_set_threads(fs_experiment* experiment, int threads) {
    if (!experiment) return null_argument("fs_experiment_set_threads");
    if (threads < 1) return record(ErrorCategory::ConfigInvalid, "harness_cli", "set_threads", "config-invalid: threads must be >= 1");
    experiment->config.threads = threads;
    return FS_OK;
}

fs_status fs_experiment_set_output_dir(fs_experiment* experiment, const char* dir) {
    if (!experiment || !dir) return null_argument("fs_experiment_set_output_dir");
    experiment->config.output.dir = dir;
    return FS_OK;
}

fs_status fs_experiment_serialize(const fs_experiment* experiment, char* buffer, size_t capacity, size_t* needed) {
    if (!experiment) return null_argument("fs_experiment_serialize");
    return guarded([&] {
        const std::string text = serialize_config(experiment->config);
        if (needed) *needed = text.size() + 1;
        if (buffer && capacity > 0) {
            const size_t n = std::min(capacity - 1, text.size());
            std::memcpy(buffer, text.data(), n);
            buffer[n] = '\0';
        }
    });
}

fs_status fs_experiment_run(fs_experiment* experiment) {
    if (!experiment) return null_argument("fs_experiment_run");
    experiment->outputs.clear();
    return guarded([&] { experiment->outputs = run_experiment(experiment->config).files; });
}

size_t fs_experiment_output_count(const fs_experiment* experiment) {
    return experiment ? experiment->outputs.size() : 0;
}

const char* fs_experiment_output_name(const fs_experiment* experiment, size_t index) {
    if (!experiment || index >= experiment->outputs.size()) return nullptr;
    return experiment->outputs[index].c_str();
}

const char* fs_experiment_output_dir(const fs_experiment* experiment) {
    return experiment ? experiment->config.output.dir.c_str() : "";
}

fs_driver_params fs_driver_default_params(void) {
    const DriverParams p;
    return fs_driver_params{p.sigma, p.rho, p.beta, p.gamma, p.noise, p.ou_dimension};
}

fs_status fs_driver_create(fs_driver_kind kind, const fs_driver_params* params, uint64_t seed, uint64_t member,
                           fs_driver** out) {
    if (!out) return null_argument("fs_driver_create");
    *out = nullptr;
    DriverKind k;
    switch (kind) {
        case FS_DRIVER_LORENZ63: k = DriverKind::Lorenz63; break;
        case FS_DRIVER_DOUBLING_MAP: k = DriverKind::DoublingMap; break;
        case FS_DRIVER_OU: k = DriverKind::OuSurrogate; break;
        default:
            return record(ErrorCategory::InvalidArgument, "chaotic_drivers", "fs_driver_create", "invalid-argument: unknown driver kind");
    }
    DriverParams p;
    if (params) {
        p.sigma = params->sigma;
        p.rho = params->rho;
        p.beta = params->beta;
        p.gamma = params->gamma;
        p.noise = params->noise;
        p.ou_dimension = params->ou_dimension;
    }
    return guarded([&] {
        FastDriver d(k, p, RandomStream(seed, stream_tag::driver, member));
        d.randomize_state();
        *out = new fs_driver{std::move(d)};
    });
}

void fs_driver_free(fs_driver* driver) { delete driver; }

int fs_driver_dimension(const fs_driver* driver) { return driver ? driver->driver.dimension() : 0; }

fs_status fs_driver_set_state(fs_driver* driver, const double* state, int dim) {
    if (!driver || !state) return null_argument("fs_driver_set_state");
    return guarded([&] { driver->driver.set_state(Eigen::Map<const Eigen::VectorXd>(state, dim)); });
}

fs_status fs_driver_state(const fs_driver* driver, double* state, int dim) {
    if (!driver || !state) return null_argument("fs_driver_state");
    if (dim != driver->driver.dimension()) {
        return record(ErrorCategory::DimensionMismatch, "chaotic_drivers", "fs_driver_state", "dimension-mismatch: wrong buffer size");
    }
    Eigen::Map<Eigen::VectorXd>(state, dim) = driver->driver.state();
    return FS_OK;
}

fs_status fs_driver_advance(fs_driver* driver, double dt_fast, int64_t steps) {
    if (!driver) return null_argument("fs_driver_advance");
    if (steps < 0) return record(ErrorCategory::InvalidArgument, "chaotic_drivers", "fs_driver_advance", "invalid-argument: negative step count");
    return guarded([&] { driver->driver.advance(dt_fast, steps); });
}

fs_status fs_coefficients_load(const char* path, fs_coefficients** out) {
    if (!path || !out) return null_argument("fs_coefficients_load");
    *out = nullptr;
    return guarded([&] { *out = new fs_coefficients{interpolated_field(read_coefficient_file(path))}; });
}

void fs_coefficients_free(fs_coefficients* coefficients) { delete coefficients; }

int fs_coefficients_dimension(const fs_coefficients* coefficients) { return coefficients ? coefficients->field.dim : 0; }

fs_status fs_coefficients_eval(const fs_coefficients* coefficients, const double* x, int dim, double* drift, double* sigma) {
    if (!coefficients || !x || !drift || !sigma) return null_argument("fs_coefficients_eval");
    const int d = coefficients->field.dim;
    if (dim != d) return record(ErrorCategory::DimensionMismatch, "homogenization", "fs_coefficients_eval", "dimension-mismatch: wrong point dimension");
    return guarded([&] {
        Vec p(d);
        for (int k = 0; k < d; ++k) p[k] = x[k];
        const Vec b = coefficients->field.drift(p);
        const Mat s = coefficients->field.sigma(p);
        for (int k = 0; k < d; ++k) drift[k] = b[k];
        for (int a = 0; a < d; ++a)
            for (int c = 0; c < d; ++c) sigma[a * d + c] = s(a, c);
    });
}

}  // extern "C"
