#include "convflat/convflat.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "csv.hpp"
#include "oracles.hpp"
#include "parallel.hpp"
#include "rng.hpp"

using namespace convflat;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
int wrap(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return CONVFLAT_OK;
    } catch (const geometry_error& e) {
        g_last_error = e.what();
        return CONVFLAT_ERR_GEOMETRY;
    } catch (const size_cap_error& e) {
        g_last_error = e.what();
        return CONVFLAT_ERR_SIZE_CAP;
    } catch (const validation_error& e) {
        g_last_error = e.what();
        return CONVFLAT_ERR_INVALID_ARGUMENT;
    } catch (const io_error& e) {
        g_last_error = e.what();
        return CONVFLAT_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CONVFLAT_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return CONVFLAT_ERR_RUNTIME;
    }
}

ConvSpec to_spec(const convflat_spec* spec) {
    if (!spec) throw validation_error("spec pointer is null");
    ConvSpec s;
    s.c_in = spec->c_in;
    s.c_out = spec->c_out;
    s.k_h = spec->k_h;
    s.k_w = spec->k_w;
    s.stride = spec->stride;
    s.padding = spec->padding;
    s.h = spec->h;
    s.w = spec->w;
    s.validate();
    return s;
}

convflat_run_options resolve_options(const convflat_run_options* options) {
    convflat_run_options o{-1, 0, 0, 0};
    if (options) o = *options;
    return o;
}

void require(bool ok, const char* msg) {
    if (!ok) throw validation_error(msg);
}

} // namespace

struct convflat_model {
    ConvSpec spec;
    KernelBank weights;
};

struct convflat_batch {
    ConvSpec spec;
    std::vector<PatchSummary> summaries;
    std::vector<int> labels;
};

extern "C" {

const char* convflat_version(void) { return "1.0.0"; }

const char* convflat_last_error(void) { return g_last_error.c_str(); }

convflat_model* convflat_model_create(const convflat_spec* spec, const double* weights) {
    convflat_model* out = nullptr;
    wrap([&] {
        require(weights != nullptr, "weights pointer is null");
        const ConvSpec s = to_spec(spec);
        std::vector<double> w(weights, weights + static_cast<std::size_t>(s.c_out) * s.flat_dim());
        out = new convflat_model{s, KernelBank(s.c_out, s.flat_dim(), std::move(w))};
    });
    return out;
}

convflat_model* convflat_model_create_ones(const convflat_spec* spec) {
    convflat_model* out = nullptr;
    wrap([&] {
        const ConvSpec s = to_spec(spec);
        out = new convflat_model{s, KernelBank::ones(s.c_out, s.flat_dim())};
    });
    return out;
}

convflat_model* convflat_model_create_random(const convflat_spec* spec, double scale, uint64_t seed) {
    convflat_model* out = nullptr;
    wrap([&] {
        const ConvSpec s = to_spec(spec);
        out = new convflat_model{s, KernelBank::random_scaled(s.c_out, s.flat_dim(), scale, seed)};
    });
    return out;
}

void convflat_model_free(convflat_model* model) { delete model; }

int64_t convflat_model_dim(const convflat_model* model) {
    return model ? model->spec.flat_dim() : -1;
}

int convflat_model_get_weights(const convflat_model* model, double* out) {
    return wrap([&] {
        require(model && out, "null argument");
        const auto& w = model->weights.weights();
        std::memcpy(out, w.data(), w.size() * sizeof(double));
    });
}

convflat_batch* convflat_batch_create(const convflat_spec* spec, int64_t batch, const double* inputs,
                                      const int32_t* labels) {
    convflat_batch* out = nullptr;
    wrap([&] {
        require(inputs != nullptr, "inputs pointer is null");
        require(batch >= 1, "batch must be positive");
        const ConvSpec s = to_spec(spec);
        auto b = std::make_unique<convflat_batch>();
        b->spec = s;
        const std::size_t stride = static_cast<std::size_t>(s.c_in) * s.h * s.w;
        for (int64_t i = 0; i < batch; ++i) {
            std::vector<double> data(inputs + i * stride, inputs + (i + 1) * stride);
            const Tensor3 x(s.c_in, s.h, s.w, std::move(data));
            b->summaries.push_back(average_patch(extract_patches(x, s)));
            const int label = labels ? labels[i] : 0;
            require(label >= 0 && label < s.c_out, "label out of range");
            b->labels.push_back(label);
        }
        out = b.release();
    });
    return out;
}

convflat_batch* convflat_batch_create_uniform(const convflat_spec* spec, int64_t batch, uint64_t seed) {
    convflat_batch* out = nullptr;
    wrap([&] {
        require(batch >= 1, "batch must be positive");
        const ConvSpec s = to_spec(spec);
        auto b = std::make_unique<convflat_batch>();
        b->spec = s;
        Rng rng(seed);
        for (int64_t i = 0; i < batch; ++i) {
            Tensor3 x(s.c_in, s.h, s.w);
            for (double& v : x.data()) v = rng.uniform01();
            b->summaries.push_back(average_patch(extract_patches(x, s)));
            b->labels.push_back(0);
        }
        out = b.release();
    });
    return out;
}

void convflat_batch_free(convflat_batch* batch) { delete batch; }

namespace {

void check_pair(const convflat_model* model, const convflat_batch* batch) {
    require(model && batch, "null model or batch");
    const ConvSpec& a = model->spec;
    const ConvSpec& b = batch->spec;
    require(a.c_in == b.c_in && a.c_out == b.c_out && a.k_h == b.k_h && a.k_w == b.k_w &&
                a.stride == b.stride && a.padding == b.padding && a.h == b.h && a.w == b.w,
            "model and batch geometry differ");
}

} // namespace

int convflat_measure(const convflat_model* model, const convflat_batch* batch,
                     convflat_measurement* out) {
    return wrap([&] {
        check_pair(model, batch);
        require(out != nullptr, "output pointer is null");
        const OneHot y = OneHot::from_indices(batch->labels, model->spec.c_out);
        const HeadOutput head = forward(batch->summaries, model->weights, y);

        out->mean_loss = head.mean_loss;
        int correct = 0;
        double alpha_sum = 0.0;
        for (int b = 0; b < head.batch; ++b) {
            const double* p = head.prob_row(b);
            int arg = 0;
            for (int j = 1; j < head.c_out; ++j)
                if (p[j] > p[arg]) arg = j;
            if (arg == batch->labels[b]) ++correct;
            alpha_sum += alpha({p, static_cast<std::size_t>(head.c_out)});
        }
        out->accuracy = static_cast<double>(correct) / head.batch;
        out->alpha_mean = alpha_sum / head.batch;
        out->trace = symbolic_trace_batch(head, batch->summaries);
        out->flatness_table =
            relative_flatness(head, batch->summaries, model->weights, FlatnessVariant::table);
        out->flatness_definition =
            relative_flatness(head, batch->summaries, model->weights, FlatnessVariant::definition);
        out->flatness_full = relative_flatness_full(head, batch->summaries, model->weights);
    });
}

int convflat_trace_fd(const convflat_model* model, const convflat_batch* batch, int64_t cap,
                      double* out) {
    return wrap([&] {
        check_pair(model, batch);
        require(out != nullptr, "output pointer is null");
        const OneHot y = OneHot::from_indices(batch->labels, model->spec.c_out);
        FdConfig cfg;
        if (cap > 0) cfg.cap = cap;
        *out = fd_trace([&](const KernelBank& k) { return forward(batch->summaries, k, y).mean_loss; },
                        model->weights, cfg);
    });
}

int convflat_trace_hutchinson(const convflat_model* model, const convflat_batch* batch,
                              int64_t probes, uint64_t seed, double* estimate, double* std_error) {
    return wrap([&] {
        check_pair(model, batch);
        require(estimate != nullptr, "output pointer is null");
        require(probes >= 1, "probes must be positive");
        const OneHot y = OneHot::from_indices(batch->labels, model->spec.c_out);
        const HeadOutput head = forward(batch->summaries, model->weights, y);
        const int dim = model->spec.c_out * model->spec.flat_dim();

        double est = 0.0, var = 0.0;
        for (int b = 0; b < head.batch; ++b) {
            auto hvp = [&](const double* v, double* hv) {
                analytic_hvp({head.prob_row(b), static_cast<std::size_t>(head.c_out)},
                             batch->summaries[b], {v, static_cast<std::size_t>(dim)},
                             {hv, static_cast<std::size_t>(dim)});
            };
            ProbeConfig pc;
            pc.probes = static_cast<int>(probes);
            pc.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(b));
            const HutchinsonResult r = hutchinson_trace(hvp, dim, pc);
            est += r.estimate;
            var += r.std_error * r.std_error;
        }
        *estimate = est / head.batch;
        if (std_error) *std_error = std::sqrt(var) / head.batch;
    });
}

int convflat_trace_dense(const convflat_model* model, const convflat_batch* batch, int64_t cap,
                         double* out) {
    return wrap([&] {
        check_pair(model, batch);
        require(out != nullptr, "output pointer is null");
        const OneHot y = OneHot::from_indices(batch->labels, model->spec.c_out);
        const HeadOutput head = forward(batch->summaries, model->weights, y);
        const int dim = model->spec.c_out * model->spec.flat_dim();
        const int effective_cap = cap > 0 ? static_cast<int>(cap) : 2048;

        double trace = 0.0;
        for (int b = 0; b < head.batch; ++b) {
            const auto h = dense_hessian({head.prob_row(b), static_cast<std::size_t>(head.c_out)},
                                         batch->summaries[b], effective_cap);
            for (int i = 0; i < dim; ++i) trace += h[static_cast<std::size_t>(i) * dim + i];
        }
        *out = trace / head.batch;
    });
}

int convflat_bound_envelope(double kappa, int64_t samples, int64_t feature_dim, double c1, double c2,
                            double delta, double* out) {
    return wrap([&] {
        require(out != nullptr, "output pointer is null");
        *out = bound_envelope(kappa, samples, feature_dim, c1, c2, delta);
    });
}

void convflat_bench_config_defaults(convflat_bench_config* config) {
    if (!config) return;
    config->spec = convflat_spec{3, 10, 3, 3, 1, 0, 10, 10};
    config->batches = 5;
    config->runs = 30;
    config->probes = 500;
    config->random_weights = 0;
    config->weight_scale = 1e-4;
    config->seed = 0;
    config->dense_cap = 2048;
    config->fd_cap = 5000;
}

int convflat_bench_run(const convflat_bench_config* config, const convflat_run_options* options,
                       const char* output_path, char** summary) {
    return wrap([&] {
        require(config != nullptr, "config pointer is null");
        const convflat_run_options opts = resolve_options(options);

        BenchProtocol protocol;
        protocol.spec = to_spec(&config->spec);
        require(config->batches >= 1, "batches must be positive");
        require(config->runs >= 1, "runs must be positive");
        require(config->probes >= 1, "probes must be positive");
        protocol.batches = static_cast<int>(config->batches);
        protocol.runs = static_cast<int>(config->runs);
        protocol.probes = static_cast<int>(config->probes);
        protocol.weights = config->random_weights ? BenchProtocol::Weights::random_scaled
                                                  : BenchProtocol::Weights::ones;
        protocol.weight_scale = config->weight_scale;
        protocol.seed = opts.seed_override >= 0 ? static_cast<std::uint64_t>(opts.seed_override)
                                                : config->seed;
        protocol.jobs = static_cast<int>(opts.jobs);
        protocol.dense_cap = static_cast<int>(config->dense_cap);
        protocol.fd_cap = config->fd_cap;

        const BenchResult result = benchmark_methods(protocol);
        if (output_path) write_file_atomic(output_path, bench_csv(result, opts.timing != 0));
        if (summary) *summary = dup_string(bench_table(result));
    });
}

namespace {

std::uint64_t seed_or(const convflat_run_options& opts, std::uint64_t fallback) {
    return opts.seed_override >= 0 ? static_cast<std::uint64_t>(opts.seed_override) : fallback;
}

} // namespace

int convflat_train_run(const char* config_json, const convflat_run_options* options,
                       const char* output_path, char** summary) {
    return wrap([&] {
        require(config_json != nullptr, "config text is null");
        const convflat_run_options opts = resolve_options(options);
        TrainSetup setup = parse_train_config(config_json);
        setup.base.optimizer.seed = seed_or(opts, setup.base.optimizer.seed);

        const Backbone backbone(setup.base.head, setup.base.backbone_kernel, setup.base.backbone_seed);
        const SyntheticDataset data = generate_blobs(setup.base.dataset);
        const TrainData features =
            build_features(data, backbone, setup.base.head, setup.noise_fraction,
                           derive_seed(setup.base.optimizer.seed, 0x001e));
        const TrainResult result =
            train(features, setup.base.optimizer, setup.base.early_stop, setup.base.options);

        if (output_path)
            write_file_atomic(output_path, run_records_csv(result.records, opts.timing != 0));
        if (summary) {
            std::ostringstream os;
            os << "epochs=" << result.records.size() << " stop=" << result.stop_reason;
            if (!result.records.empty()) {
                const RunRecord& last = result.records.back();
                os << " val_acc=" << fmt_sig4(last.val_acc) << " gen_gap=" << fmt_sig4(last.gen_gap)
                   << " flatness=" << fmt_sig4(last.flatness) << " trace=" << fmt_sig4(last.trace);
            }
            os << '\n';
            *summary = dup_string(os.str());
        }
    });
}

int convflat_sweep_run(const char* config_json, const convflat_run_options* options,
                       const char* output_path, char** summary) {
    return wrap([&] {
        require(config_json != nullptr, "config text is null");
        const convflat_run_options opts = resolve_options(options);
        SweepSetup setup = parse_sweep_config(config_json);
        setup.base.dataset.seed = seed_or(opts, setup.base.dataset.seed);

        std::ofstream out;
        if (output_path) {
            out.open(output_path, std::ios::binary | std::ios::trunc);
            if (!out) throw io_error(std::string("cannot open ") + output_path + " for writing");
            out << kSweepCsvHeader << '\n';
        }

        SweepResult result;
        try {
            // rows stream in grid order so partial sweeps stay usable
            result = run_sweep(setup.grid, setup.base.dataset, setup.base.head,
                               setup.base.backbone_kernel, setup.base.backbone_seed,
                               static_cast<int>(opts.jobs), [&](const SweepRow& row) {
                                   if (output_path) out << sweep_row_csv(row) << std::flush;
                               });
        } catch (...) {
            if (output_path) {
                out.close();
                std::remove(output_path);
            }
            throw;
        }

        if (summary) {
            std::ostringstream os;
            os << "runs=" << result.rows.size() << " diverged=" << result.diverged
               << " train_size=" << result.train_size << '\n';
            *summary = dup_string(os.str());
        }
    });
}

int convflat_stop_compare_run(const char* config_json, const convflat_run_options* options,
                              const char* output_path, char** summary) {
    return wrap([&] {
        require(config_json != nullptr, "config text is null");
        const convflat_run_options opts = resolve_options(options);
        StopCompareSetup setup = parse_stop_compare_config(config_json);
        setup.base.dataset.seed = seed_or(opts, setup.base.dataset.seed);

        const auto rows = stop_compare(setup.strategies, setup.seeds, setup.base.dataset,
                                       setup.base.head, setup.base.backbone_kernel,
                                       setup.base.backbone_seed, setup.base.optimizer,
                                       setup.base.early_stop, setup.base.options,
                                       static_cast<int>(opts.jobs));

        if (output_path) write_file_atomic(output_path, stop_compare_csv(rows, opts.timing != 0));
        if (summary) {
            std::ostringstream os;
            for (const StopCompareRow& r : rows)
                os << r.strategy << ": epochs=" << fmt_sig4(r.mean_epochs)
                   << " val_acc=" << fmt_sig4(r.mean_val_acc)
                   << " flatness=" << fmt_sig4(r.mean_final_flatness) << '\n';
            *summary = dup_string(os.str());
        }
    });
}

int convflat_correlate_csv(const char* input_csv, const char* x_column, const char* y_column,
                           const char* output_path, char** summary) {
    return wrap([&] {
        require(input_csv && x_column && y_column, "null argument");
        const CsvTable table = CsvTable::read_file(input_csv);
        const int xc = table.column(x_column);
        const int yc = table.column(y_column);
        int reason_col = -1;
        for (std::size_t i = 0; i < table.header.size(); ++i)
            if (table.header[i] == "stop_reason") reason_col = static_cast<int>(i);

        std::vector<double> xs, ys;
        int excluded = 0;
        for (const auto& row : table.rows) {
            if (reason_col >= 0 && row[reason_col] == "diverged") {
                ++excluded;
                continue;
            }
            const double x = std::strtod(row[xc].c_str(), nullptr);
            const double y = std::strtod(row[yc].c_str(), nullptr);
            if (!std::isfinite(x) || !std::isfinite(y)) {
                ++excluded;
                continue;
            }
            xs.push_back(x);
            ys.push_back(y);
        }

        const CorrelationStats stats = correlate(xs, ys);
        if (output_path) write_file_atomic(output_path, correlation_stats_json(stats));
        if (summary) {
            std::ostringstream os;
            os << "n=" << stats.n << " excluded=" << excluded
               << " pearson_r=" << fmt_sig4(stats.pearson_r)
               << " spearman_rho=" << fmt_sig4(stats.spearman_rho)
               << " slope=" << fmt_sig4(stats.slope) << " p=" << fmt_sig4(stats.spearman_p_value)
               << '\n';
            *summary = dup_string(os.str());
        }
    });
}

void convflat_string_free(char* s) { std::free(s); }

} // extern "C"
