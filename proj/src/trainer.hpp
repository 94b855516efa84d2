#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flatness.hpp"

namespace convflat {

/// Frozen random convolution + ReLU mapping raw input vectors to
/// c_in x h x w feature maps. Raw inputs are treated as single-channel
/// (h + kernel - 1) x (w + kernel - 1) images so the valid convolution
/// lands exactly on the head geometry. Deterministic given the seed.
class Backbone {
public:
    Backbone(const ConvSpec& head_spec, int kernel, std::uint64_t seed);

    int input_dim() const { return in_h_ * in_w_; }
    int kernel() const { return kernel_; }
    std::uint64_t seed() const { return seed_; }

    Tensor3 features(std::span<const double> raw) const;

private:
    int c_in_, h_, w_, kernel_, in_h_, in_w_;
    std::uint64_t seed_;
    std::vector<double> filters_; // c_in x kernel^2
};

struct OptimizerConfig {
    enum class Kind { sgd, sgd_momentum, adamw };
    Kind kind = Kind::sgd;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int batch_size = 32;
    int epochs = 50;
    std::uint64_t seed = 0;

    void validate() const;
    std::string kind_name() const;
    static Kind parse_kind(const std::string& name);
};

struct EarlyStopPolicy {
    enum class Kind { standard, flatness, combined };
    Kind kind = Kind::standard;
    int patience = 10;
    double threshold = 0.02; // relative flatness change
    int max_epochs = 0;      // 0: use the optimizer epoch budget

    void validate() const;
    std::string kind_name() const;
    static Kind parse_kind(const std::string& name);
};

/// One training epoch's metrics. gen_gap is val_loss - train_loss exactly.
struct RunRecord {
    std::uint64_t seed = 0;
    std::string optimizer;
    double lr = 0;
    int batch_size = 0;
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double gen_gap = 0;
    double trace = 0;
    double flatness = 0;
    double val_acc = 0;
    double time_s = 0;
    std::string stop_reason; // set on the final record only

    double alpha = 0; // in-memory only, not serialized
};

extern const char* const kRunRecordCsvHeader;
std::string run_records_csv(const std::vector<RunRecord>& records, bool with_times);

/// Plain SGD: k <- k - lr * g.
void step_sgd(std::span<double> weights, std::span<const double> grad, double lr);

struct MomentumState {
    std::vector<double> velocity;
};
/// v <- momentum * v + g; k <- k - lr * v.
void step_sgd_momentum(std::span<double> weights, std::span<const double> grad, double lr,
                       double momentum, MomentumState& state);

struct AdamWState {
    std::vector<double> m, v;
    long long step = 0;
};
/// Decoupled weight decay applied before the bias-corrected adaptive step.
void step_adamw(std::span<double> weights, std::span<const double> grad, const OptimizerConfig& cfg,
                AdamWState& state);

/// Reassigns exactly round(fraction * N) distinct labels to a uniformly
/// random different class. Seeded choice without replacement.
std::vector<int> inject_label_noise(std::vector<int> labels, int classes, double fraction,
                                    std::uint64_t seed);

struct StopHistory {
    std::vector<double> val_loss;
    std::vector<double> flatness;
};

struct StopDecision {
    bool stop = false;
    std::string reason;
};

StopDecision evaluate_stop(const StopHistory& history, const EarlyStopPolicy& policy);

/// Precomputed per-sample head inputs; the backbone is frozen, so patch
/// summaries are fixed for the whole run.
struct FeatureSet {
    std::vector<PatchSummary> summaries;
    std::vector<int> labels;

    int size() const { return static_cast<int>(summaries.size()); }
};

struct TrainData {
    FeatureSet train;
    FeatureSet val;
    int classes = 0;
    ConvSpec spec;
};

struct InitialMetrics {
    double trace = 0, flatness = 0, alpha = 0, val_loss = 0, val_acc = 0;
};

struct TrainResult {
    std::vector<RunRecord> records;
    InitialMetrics initial;
    std::string stop_reason;
    bool diverged = false;
    std::vector<double> final_weights;
};

struct TrainOptions {
    int eval_batch = 256; // flatness/trace evaluation batch (held out, fixed)
    FlatnessVariant variant = FlatnessVariant::table;
};

TrainResult train(const TrainData& data, const OptimizerConfig& opt, const EarlyStopPolicy& stop,
                  const TrainOptions& options = {});

} // namespace convflat
