#pragma once

#include <functional>

#include "stats.hpp"
#include "trainer.hpp"

namespace convflat {

/// Gaussian cluster generation parameters. If `means` is empty, class
/// means are drawn i.i.d. normal with standard deviation `separation`.
struct BlobParams {
    int classes = 3;
    int samples_per_class = 200;
    int dim = 144;
    double separation = 1.0;
    double covariance_scale = 0.5;
    double train_fraction = 0.5;
    std::vector<double> means; // optional, classes x dim row-major
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    int classes = 0;
    int dim = 0;
    std::vector<double> samples; // n x dim row-major
    std::vector<int> labels;
    std::vector<int> train_idx;
    std::vector<int> val_idx;

    int size() const { return static_cast<int>(labels.size()); }
    std::span<const double> sample(int i) const {
        return {samples.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

SyntheticDataset generate_blobs(const BlobParams& params);

/// Pushes the dataset through the frozen backbone and precomputes patch
/// summaries; label noise (if any) is injected into the training split only.
TrainData build_features(const SyntheticDataset& data, const Backbone& backbone,
                         const ConvSpec& spec, double noise_fraction = 0.0,
                         std::uint64_t noise_seed = 0);

struct SweepGrid {
    std::vector<OptimizerConfig::Kind> optimizers{OptimizerConfig::Kind::sgd_momentum,
                                                  OptimizerConfig::Kind::adamw};
    std::vector<double> learning_rates{0.001, 0.005, 0.01, 0.05};
    std::vector<int> batch_sizes{32, 64, 128};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<double> noise_fractions{0.0};
    OptimizerConfig base;    // momentum/adamw parameters and epoch budget
    EarlyStopPolicy policy;  // applied to every run
    TrainOptions options;

    long long cells() const {
        return static_cast<long long>(optimizers.size()) * learning_rates.size() *
               batch_sizes.size() * seeds.size() * noise_fractions.size();
    }
};

struct SweepRow {
    std::uint64_t seed = 0;
    std::string optimizer;
    double lr = 0;
    int batch_size = 0;
    double noise_frac = 0;
    int epochs_run = 0;
    double val_acc = 0;
    double gen_gap = 0;
    double flatness = 0;
    double trace = 0;
    std::string stop_reason;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    int diverged = 0;
    int train_size = 0; // |S| for the bound
};

extern const char* const kSweepCsvHeader;
std::string sweep_row_csv(const SweepRow& row);

/// Trains every grid cell against a dataset generated once from `blobs`.
/// Cells run in parallel; `emit`, when provided, receives rows in grid
/// order as soon as their prefix is complete, so streamed output is
/// identical for any job count.
SweepResult run_sweep(const SweepGrid& grid, const BlobParams& blobs, const ConvSpec& spec,
                      int backbone_kernel, std::uint64_t backbone_seed, int jobs,
                      const std::function<void(const SweepRow&)>& emit = nullptr);

/// Envelope of the generalization bound:
/// samples^{-2/(4+m)} * (kappa / (2m) + c1 + c2 / sqrt(delta)).
double bound_envelope(double kappa, long long samples, long long feature_dim, double c1, double c2,
                      double delta);

struct EnvelopeCalibration {
    double c1 = 0;
    double c2 = 0;
    double coverage = 0; // fraction of held-out gaps under the envelope
    int calibration_n = 0;
    int holdout_n = 0;
    std::string method;
};

/// Splits (kappa, gap) pairs into even/odd halves by index, picks the
/// minimal c1 (with c2 = 0) that covers every calibration gap, and reports
/// held-out coverage.
EnvelopeCalibration calibrate_envelope(std::span<const double> kappa, std::span<const double> gap,
                                       long long samples, long long feature_dim, double delta);

std::string correlation_stats_json(const CorrelationStats& stats);

struct StopCompareRow {
    std::string strategy;
    double mean_epochs = 0;
    double mean_val_acc = 0;
    double mean_final_flatness = 0;
    double mean_time_s = 0;
};

extern const char* const kStopCompareCsvHeader;
std::string stop_compare_csv(const std::vector<StopCompareRow>& rows, bool with_times);

/// Runs every strategy over the seed list with a shared dataset and
/// optimizer, averaging epochs, accuracy, final flatness and time.
std::vector<StopCompareRow> stop_compare(const std::vector<EarlyStopPolicy::Kind>& strategies,
                                         const std::vector<std::uint64_t>& seeds,
                                         const BlobParams& blobs, const ConvSpec& spec,
                                         int backbone_kernel, std::uint64_t backbone_seed,
                                         const OptimizerConfig& base, const EarlyStopPolicy& policy,
                                         const TrainOptions& options, int jobs);

} // namespace convflat
