// Command-line front end over the convflat C API.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <convflat/convflat.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

namespace {

struct CommonFlags {
    long long seed = -1;
    long long jobs = 0;
    bool timing = false;
    bool verbose = false;
    std::string output;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& default_output) {
    cmd->add_option("--seed", flags.seed,
                    "Base seed; -1 keeps the config/protocol seed. The CONVFLAT_SEED "
                    "environment variable overrides this default when set.")
        ->capture_default_str();
    cmd->add_option("--jobs", flags.jobs, "Worker threads for independent runs; 0 = all cores")
        ->capture_default_str();
    cmd->add_flag("--timing", flags.timing,
                  "Write measured wall times into the output file (off by default so "
                  "identical seeds produce byte-identical files)");
    cmd->add_flag("-v,--verbose", flags.verbose, "Chattier progress output");
    if (!default_output.empty()) {
        flags.output = default_output;
        cmd->add_option("-o,--output", flags.output, "Output file path")->capture_default_str();
    }
}

convflat_run_options to_options(const CommonFlags& flags) {
    convflat_run_options o;
    o.seed_override = flags.seed;
    o.jobs = flags.jobs;
    o.timing = flags.timing ? 1 : 0;
    o.verbose = flags.verbose ? 1 : 0;
    return o;
}

int report_failure(const char* what) {
    std::fprintf(stderr, "error: %s: %s\n", what, convflat_last_error());
    return 1;
}

void print_summary(char* summary) {
    if (summary) {
        std::fputs(summary, stdout);
        convflat_string_free(summary);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// ---- bench ---------------------------------------------------------------

struct BenchCmd {
    CommonFlags flags;
    convflat_bench_config cfg{};
    long long cin = 3, hw = 10, ksize = 3, stride = 1, pad = 0;
    std::string weights = "ones";

    void add_to(CLI::App& app, long long env_seed) {
        convflat_bench_config_defaults(&cfg);
        flags.seed = env_seed < 0 ? 0 : env_seed;
        auto* cmd = app.add_subcommand("bench",
                                       "Benchmark trace/flatness methods and write the CSV");
        cmd->add_option("--cin", cin, "Input channels")->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--hw", hw, "Input height and width")->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--ksize", ksize, "Kernel height and width")->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--stride", stride, "Stride")->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--pad", pad, "Zero padding")->capture_default_str()
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--batches", cfg.batches, "Batch size per run")->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--kernels", cfg.spec.c_out, "Number of filters (classes)")
            ->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--runs", cfg.runs, "Independent runs")->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--probes", cfg.probes, "Hutchinson probes per sample")
            ->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--weights", weights, "Weight initialization: ones | random")
            ->capture_default_str()->check(CLI::IsMember({"ones", "random"}));
        cmd->add_option("--weight-scale", cfg.weight_scale, "Scale for random weights")
            ->capture_default_str();
        cmd->add_option("--dense-cap", cfg.dense_cap,
                        "Skip the dense analytic method above this c_out*d")
            ->capture_default_str();
        cmd->add_option("--fd-cap", cfg.fd_cap,
                        "Skip the finite-difference reference above this c_out*d")
            ->capture_default_str();
        add_common(cmd, flags, "bench.csv");
        this->cmd = cmd;
    }

    int run() {
        cfg.spec.c_in = static_cast<int32_t>(cin);
        cfg.spec.h = cfg.spec.w = static_cast<int32_t>(hw);
        cfg.spec.k_h = cfg.spec.k_w = static_cast<int32_t>(ksize);
        cfg.spec.stride = static_cast<int32_t>(stride);
        cfg.spec.padding = static_cast<int32_t>(pad);
        cfg.random_weights = weights == "random" ? 1 : 0;
        const convflat_run_options opts = to_options(flags);
        char* summary = nullptr;
        if (convflat_bench_run(&cfg, &opts, flags.output.c_str(), &summary) != CONVFLAT_OK)
            return report_failure("bench");
        print_summary(summary);
        if (flags.verbose) std::printf("wrote %s\n", flags.output.c_str());
        return 0;
    }

    CLI::App* cmd = nullptr;
};

// ---- train / sweep / stop-compare -----------------------------------------

using RunnerFn = int (*)(const char*, const convflat_run_options*, const char*, char**);

struct ConfigCmd {
    CommonFlags flags;
    std::string config_path;
    const char* name;
    RunnerFn fn;
    CLI::App* cmd = nullptr;

    void add_to(CLI::App& app, long long env_seed, const char* cmd_name, const char* help,
                const std::string& default_out, RunnerFn runner) {
        name = cmd_name;
        fn = runner;
        flags.seed = env_seed;
        cmd = app.add_subcommand(cmd_name, help);
        cmd->add_option("config", config_path, "JSON config file")
            ->required()
            ->check(CLI::ExistingFile);
        add_common(cmd, flags, default_out);
    }

    int run() {
        const std::string text = read_file(config_path);
        const convflat_run_options opts = to_options(flags);
        char* summary = nullptr;
        if (fn(text.c_str(), &opts, flags.output.c_str(), &summary) != CONVFLAT_OK)
            return report_failure(name);
        print_summary(summary);
        if (flags.verbose) std::printf("wrote %s\n", flags.output.c_str());
        return 0;
    }
};

// ---- correlate -------------------------------------------------------------

struct CorrelateCmd {
    CommonFlags flags;
    std::string input, x_col = "flatness", y_col = "gen_gap";
    CLI::App* cmd = nullptr;

    void add_to(CLI::App& app, long long env_seed) {
        flags.seed = env_seed;
        cmd = app.add_subcommand("correlate",
                                 "Correlate two columns of a CSV and write the stats JSON");
        cmd->add_option("-i,--input", input, "Input CSV (e.g. a sweep output)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("-x,--x", x_col, "X column name")->capture_default_str();
        cmd->add_option("-y,--y", y_col, "Y column name")->capture_default_str();
        add_common(cmd, flags, "correlate.json");
    }

    int run() {
        char* summary = nullptr;
        if (convflat_correlate_csv(input.c_str(), x_col.c_str(), y_col.c_str(),
                                   flags.output.c_str(), &summary) != CONVFLAT_OK)
            return report_failure("correlate");
        print_summary(summary);
        return 0;
    }
};

// ---- bound ------------------------------------------------------------------

struct BoundCmd {
    CommonFlags flags;
    double kappa = 0, c1 = 0, c2 = 0, delta = 0.05;
    long long samples = 0, feature_dim = 0;
    CLI::App* cmd = nullptr;

    void add_to(CLI::App& app, long long env_seed) {
        flags.seed = env_seed;
        cmd = app.add_subcommand("bound", "Evaluate the generalization bound envelope");
        cmd->add_option("--kappa", kappa, "Relative flatness value")->required();
        cmd->add_option("--samples", samples, "Training sample count |S|")
            ->required()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--m", feature_dim, "Feature dimension m")
            ->required()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--c1", c1, "Distributional constant C1")->capture_default_str();
        cmd->add_option("--c2", c2, "Distributional constant C2")->capture_default_str();
        cmd->add_option("--delta", delta, "Confidence parameter in (0, 1)")->capture_default_str();
        add_common(cmd, flags, "");
        cmd->add_option("-o,--output", flags.output, "Optional file to write the value to");
    }

    int run() {
        double value = 0;
        if (convflat_bound_envelope(kappa, samples, feature_dim, c1, c2, delta, &value) !=
            CONVFLAT_OK)
            return report_failure("bound");
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g\n", value);
        std::fputs(buf, stdout);
        if (!flags.output.empty()) {
            std::ofstream f(flags.output, std::ios::binary | std::ios::trunc);
            if (!f) {
                std::fprintf(stderr, "error: bound: cannot open %s\n", flags.output.c_str());
                return 1;
            }
            f << buf;
        }
        return 0;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"convflat: exact Hessian trace and relative flatness of a conv->GAP->softmax "
                 "head, with benchmarking, training and sweep tooling"};
    app.require_subcommand(1);

    long long env_seed = -1;
    if (const char* env = std::getenv("CONVFLAT_SEED")) env_seed = std::atoll(env);

    BenchCmd bench;
    bench.add_to(app, env_seed);

    ConfigCmd train;
    train.add_to(app, env_seed, "train",
                 "Train the head on synthetic blobs and write the per-epoch CSV", "train.csv",
                 convflat_train_run);
    ConfigCmd sweep;
    sweep.add_to(app, env_seed, "sweep", "Run a hyperparameter sweep and stream the per-run CSV",
                 "sweep.csv", convflat_sweep_run);
    ConfigCmd stop;
    stop.add_to(app, env_seed, "stop-compare",
                "Compare early-stopping strategies and write the summary CSV", "stop_compare.csv",
                convflat_stop_compare_run);
    stop.cmd->alias("stop_compare");

    CorrelateCmd correlate;
    correlate.add_to(app, env_seed);
    BoundCmd bound;
    bound.add_to(app, env_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (bench.cmd->parsed()) return bench.run();
    if (train.cmd->parsed()) return train.run();
    if (sweep.cmd->parsed()) return sweep.run();
    if (stop.cmd->parsed()) return stop.run();
    if (correlate.cmd->parsed()) return correlate.run();
    if (bound.cmd->parsed()) return bound.run();
    return 2;
}
