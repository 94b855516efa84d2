#include "experiments.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace convflat {

void BlobParams::validate() const {
    if (classes < 2) throw validation_error("blobs: need at least 2 classes");
    if (samples_per_class < 1) throw validation_error("blobs: samples per class must be positive");
    if (dim < 1) throw validation_error("blobs: dimension must be positive");
    if (covariance_scale < 0.0) throw validation_error("blobs: covariance scale must be non-negative");
    if (separation < 0.0) throw validation_error("blobs: separation must be non-negative");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw validation_error("blobs: train fraction must be in (0, 1)");
    if (!means.empty() && means.size() != static_cast<std::size_t>(classes) * dim)
        throw validation_error("blobs: explicit means must be classes x dim");
}

SyntheticDataset generate_blobs(const BlobParams& params) {
    params.validate();

    SyntheticDataset data;
    data.classes = params.classes;
    data.dim = params.dim;
    const int n = params.classes * params.samples_per_class;
    data.samples.resize(static_cast<std::size_t>(n) * params.dim);
    data.labels.resize(n);

    Rng rng(derive_seed(params.seed, 0xb10b5));
    std::vector<double> means = params.means;
    if (means.empty()) {
        means.resize(static_cast<std::size_t>(params.classes) * params.dim);
        for (double& m : means) m = params.separation * rng.normal();
    }

    int row = 0;
    for (int c = 0; c < params.classes; ++c) {
        const double* mu = means.data() + static_cast<std::size_t>(c) * params.dim;
        for (int i = 0; i < params.samples_per_class; ++i, ++row) {
            data.labels[row] = c;
            double* x = data.samples.data() + static_cast<std::size_t>(row) * params.dim;
            for (int k = 0; k < params.dim; ++k)
                x[k] = mu[k] + params.covariance_scale * rng.normal();
        }
    }

    // stratified split: per class, seeded shuffle then train-fraction prefix
    Rng split_rng(derive_seed(params.seed, 0x59717));
    for (int c = 0; c < params.classes; ++c) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (data.labels[i] == c) idx.push_back(i);
        for (std::size_t i = idx.size() - 1; i > 0; --i) {
            const std::size_t j = split_rng.uniform_int(i + 1);
            std::swap(idx[i], idx[j]);
        }
        const std::size_t train_n =
            std::max<std::size_t>(1, static_cast<std::size_t>(params.train_fraction * idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < train_n ? data.train_idx : data.val_idx).push_back(idx[i]);
    }
    std::sort(data.train_idx.begin(), data.train_idx.end());
    std::sort(data.val_idx.begin(), data.val_idx.end());
    return data;
}

TrainData build_features(const SyntheticDataset& data, const Backbone& backbone,
                         const ConvSpec& spec, double noise_fraction, std::uint64_t noise_seed) {
    spec.validate();
    if (data.dim != backbone.input_dim())
        throw validation_error("features: dataset dimension does not match backbone input");

    TrainData out;
    out.classes = data.classes;
    out.spec = spec;

    auto fill = [&](const std::vector<int>& idx, FeatureSet& set) {
        set.summaries.reserve(idx.size());
        set.labels.reserve(idx.size());
        for (int i : idx) {
            const Tensor3 fm = backbone.features(data.sample(i));
            set.summaries.push_back(average_patch(extract_patches(fm, spec)));
            set.labels.push_back(data.labels[i]);
        }
    };
    fill(data.train_idx, out.train);
    fill(data.val_idx, out.val);

    if (noise_fraction > 0.0)
        out.train.labels = inject_label_noise(out.train.labels, data.classes, noise_fraction, noise_seed);
    return out;
}

const char* const kSweepCsvHeader =
    "seed,optimizer,lr,batch_size,noise_frac,epochs_run,val_acc,gen_gap,flatness,trace,stop_reason";

std::string sweep_row_csv(const SweepRow& r) {
    std::ostringstream os;
    write_csv_row(os, {std::to_string(r.seed), r.optimizer, fmt_full(r.lr),
                       std::to_string(r.batch_size), fmt_full(r.noise_frac),
                       std::to_string(r.epochs_run), fmt_full(r.val_acc), fmt_full(r.gen_gap),
                       fmt_full(r.flatness), fmt_full(r.trace), r.stop_reason});
    return os.str();
}

SweepResult run_sweep(const SweepGrid& grid, const BlobParams& blobs, const ConvSpec& spec,
                      int backbone_kernel, std::uint64_t backbone_seed, int jobs,
                      const std::function<void(const SweepRow&)>& emit) {
    if (grid.cells() < 1) throw validation_error("sweep: empty grid");
    grid.base.validate();
    grid.policy.validate();

    const Backbone backbone(spec, backbone_kernel, backbone_seed);
    const SyntheticDataset data = generate_blobs(blobs);

    struct Cell {
        OptimizerConfig opt;
        double noise = 0;
    };
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(grid.cells()));
    for (double noise : grid.noise_fractions)
        for (OptimizerConfig::Kind kind : grid.optimizers)
            for (double lr : grid.learning_rates)
                for (int bs : grid.batch_sizes)
                    for (std::uint64_t seed : grid.seeds) {
                        Cell c;
                        c.opt = grid.base;
                        c.opt.kind = kind;
                        c.opt.learning_rate = lr;
                        c.opt.batch_size = bs;
                        c.opt.seed = seed;
                        c.noise = noise;
                        cells.push_back(c);
                    }

    SweepResult result;
    result.rows.resize(cells.size());
    result.train_size = static_cast<int>(data.train_idx.size());

    parallel_for_ordered(
        static_cast<int>(cells.size()), jobs,
        [&](int i) {
            const Cell& cell = cells[i];
            const TrainData features = build_features(
                data, backbone, spec, cell.noise, derive_seed(cell.opt.seed, 0x001e));
            const TrainResult tr = train(features, cell.opt, grid.policy, grid.options);

            SweepRow row;
            row.seed = cell.opt.seed;
            row.optimizer = cell.opt.kind_name();
            row.lr = cell.opt.learning_rate;
            row.batch_size = cell.opt.batch_size;
            row.noise_frac = cell.noise;
            row.epochs_run = static_cast<int>(tr.records.size());
            if (!tr.records.empty()) {
                const RunRecord& last = tr.records.back();
                row.val_acc = last.val_acc;
                row.gen_gap = last.gen_gap;
                row.flatness = last.flatness;
                row.trace = last.trace;
            }
            row.stop_reason = tr.stop_reason;
            result.rows[i] = std::move(row);
        },
        [&](int i) {
            if (result.rows[i].stop_reason == "diverged") ++result.diverged;
            if (emit) emit(result.rows[i]);
        });
    return result;
}

double bound_envelope(double kappa, long long samples, long long feature_dim, double c1, double c2,
                      double delta) {
    if (samples < 1) throw validation_error("bound: sample count must be >= 1");
    if (feature_dim < 1) throw validation_error("bound: feature dimension must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw validation_error("bound: delta must be in (0, 1)");
    if (c1 < 0.0 || c2 < 0.0) throw validation_error("bound: constants must be non-negative");
    if (!std::isfinite(kappa)) throw validation_error("bound: kappa must be finite");

    const double m = static_cast<double>(feature_dim);
    const double rate = std::pow(static_cast<double>(samples), -2.0 / (4.0 + m));
    return rate * (kappa / (2.0 * m) + c1 + c2 / std::sqrt(delta));
}

EnvelopeCalibration calibrate_envelope(std::span<const double> kappa, std::span<const double> gap,
                                       long long samples, long long feature_dim, double delta) {
    if (kappa.size() != gap.size()) throw validation_error("calibrate: length mismatch");
    if (kappa.size() < 4) throw validation_error("calibrate: need at least 4 runs");

    const double m = static_cast<double>(feature_dim);
    const double rate = std::pow(static_cast<double>(samples), -2.0 / (4.0 + m));

    EnvelopeCalibration cal;
    cal.c2 = 0.0;
    cal.method = "even/odd split; minimal c1 covering the calibration half, c2 = 0";

    // calibration half: even indices; holdout: odd indices
    double c1 = 0.0;
    for (std::size_t i = 0; i < kappa.size(); i += 2) {
        const double needed = gap[i] / rate - kappa[i] / (2.0 * m);
        c1 = std::max(c1, needed);
        ++cal.calibration_n;
    }
    cal.c1 = c1;

    int covered = 0;
    for (std::size_t i = 1; i < kappa.size(); i += 2) {
        ++cal.holdout_n;
        if (bound_envelope(kappa[i], samples, feature_dim, c1, 0.0, delta) >= gap[i]) ++covered;
    }
    cal.coverage = cal.holdout_n > 0 ? static_cast<double>(covered) / cal.holdout_n : 1.0;
    return cal;
}

std::string correlation_stats_json(const CorrelationStats& s) {
    nlohmann::ordered_json j;
    j["slope"] = s.slope;
    j["intercept"] = s.intercept;
    j["slope_std_error"] = s.slope_std_error;
    j["slope_p_value"] = s.slope_p_value;
    j["r_squared"] = s.r_squared;
    j["pearson_r"] = s.pearson_r;
    j["pearson_ci_low"] = s.pearson_ci_low;
    j["pearson_ci_high"] = s.pearson_ci_high;
    j["pearson_p_value"] = s.pearson_p_value;
    j["spearman_rho"] = s.spearman_rho;
    j["spearman_p_value"] = s.spearman_p_value;
    j["n"] = s.n;
    return j.dump(2) + "\n";
}

const char* const kStopCompareCsvHeader =
    "strategy,mean_epochs,mean_val_acc,mean_final_flatness,mean_time_s";

std::string stop_compare_csv(const std::vector<StopCompareRow>& rows, bool with_times) {
    std::ostringstream os;
    os << kStopCompareCsvHeader << '\n';
    for (const StopCompareRow& r : rows)
        write_csv_row(os, {r.strategy, fmt_full(r.mean_epochs), fmt_full(r.mean_val_acc),
                           fmt_full(r.mean_final_flatness),
                           fmt_full(with_times ? r.mean_time_s : 0.0)});
    return os.str();
}

std::vector<StopCompareRow> stop_compare(const std::vector<EarlyStopPolicy::Kind>& strategies,
                                         const std::vector<std::uint64_t>& seeds,
                                         const BlobParams& blobs, const ConvSpec& spec,
                                         int backbone_kernel, std::uint64_t backbone_seed,
                                         const OptimizerConfig& base, const EarlyStopPolicy& policy,
                                         const TrainOptions& options, int jobs) {
    if (strategies.empty() || seeds.empty())
        throw validation_error("stop compare: empty strategy or seed list");

    const Backbone backbone(spec, backbone_kernel, backbone_seed);
    const SyntheticDataset data = generate_blobs(blobs);
    const TrainData features = build_features(data, backbone, spec);

    struct Cell {
        EarlyStopPolicy::Kind strategy;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (EarlyStopPolicy::Kind s : strategies)
        for (std::uint64_t seed : seeds) cells.push_back({s, seed});

    struct Outcome {
        int epochs = 0;
        double val_acc = 0, flatness = 0, time_s = 0;
    };
    std::vector<Outcome> outcomes(cells.size());
    parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
        OptimizerConfig opt = base;
        opt.seed = cells[i].seed;
        EarlyStopPolicy pol = policy;
        pol.kind = cells[i].strategy;
        const TrainResult tr = train(features, opt, pol, options);
        Outcome& o = outcomes[i];
        o.epochs = static_cast<int>(tr.records.size());
        if (!tr.records.empty()) {
            o.val_acc = tr.records.back().val_acc;
            o.flatness = tr.records.back().flatness;
            for (const RunRecord& r : tr.records) o.time_s += r.time_s;
        }
    });

    std::vector<StopCompareRow> rows;
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        StopCompareRow row;
        EarlyStopPolicy naming;
        naming.kind = strategies[s];
        row.strategy = naming.kind_name();
        const std::size_t base_idx = s * seeds.size();
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const Outcome& o = outcomes[base_idx + k];
            row.mean_epochs += o.epochs;
            row.mean_val_acc += o.val_acc;
            row.mean_final_flatness += o.flatness;
            row.mean_time_s += o.time_s;
        }
        const double inv = 1.0 / static_cast<double>(seeds.size());
        row.mean_epochs *= inv;
        row.mean_val_acc *= inv;
        row.mean_final_flatness *= inv;
        row.mean_time_s *= inv;
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace convflat
