#include <fastslow/fastslow.h>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

namespace {

int fail(fs_status status) {
    std::fprintf(stderr, "error: %s\n", fs_last_error_message());
    std::fprintf(stderr, "category: %s (exit %d)\n", fs_status_name(status), static_cast<int>(status));
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fast-slow homogenization experiments"};
    app.set_version_flag("--version", std::string(fs_version()));

    std::string kind;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    bool print_config = false;

    app.add_option("kind", kind, "Experiment kind")
        ->required()
        ->check(CLI::IsMember({"simulate-multiscale", "estimate-coefficients", "simulate-sde", "converge", "eof",
                               "centering-check"}));
    app.add_option("--config", config_path, "YAML configuration file")->required();
    app.add_option("--seed", seed, "Override the global seed");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(FS_CONFIG_INVALID);
    }

    fs_experiment* exp = nullptr;
    fs_status s = fs_experiment_load(config_path.c_str(), &exp);
    if (s != FS_OK) return fail(s);

    if (kind != fs_experiment_kind(exp)) {
        std::fprintf(stderr, "error: config-invalid: command '%s' does not match config key 'kind' = '%s'\n", kind.c_str(),
                     fs_experiment_kind(exp));
        std::fprintf(stderr, "category: %s (exit %d)\n", fs_status_name(FS_CONFIG_INVALID), static_cast<int>(FS_CONFIG_INVALID));
        fs_experiment_free(exp);
        return static_cast<int>(FS_CONFIG_INVALID);
    }
    if (seed) fs_experiment_set_seed(exp, *seed);
    if (threads && (s = fs_experiment_set_threads(exp, *threads)) != FS_OK) {
        fs_experiment_free(exp);
        return fail(s);
    }
    if (out_dir) fs_experiment_set_output_dir(exp, out_dir->c_str());

    if (print_config) {
        size_t needed = 0;
        fs_experiment_serialize(exp, nullptr, 0, &needed);
        std::string text(needed, '\0');
        s = fs_experiment_serialize(exp, text.data(), text.size(), nullptr);
        if (s == FS_OK) std::fputs(text.c_str(), stdout);
        fs_experiment_free(exp);
        return s == FS_OK ? 0 : fail(s);
    }

    s = fs_experiment_run(exp);
    if (s != FS_OK) {
        const int code = fail(s);
        fs_experiment_free(exp);
        return code;
    }
    std::printf("%s: wrote %zu files to %s\n", kind.c_str(), fs_experiment_output_count(exp), fs_experiment_output_dir(exp));
    for (size_t i = 0; i < fs_experiment_output_count(exp); ++i) std::printf("  %s\n", fs_experiment_output_name(exp, i));
    fs_experiment_free(exp);
    return 0;
}
