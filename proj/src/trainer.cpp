#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "rng.hpp"

namespace convflat {

namespace {
constexpr double kDivergenceLimit = 1e6;

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}
} // namespace

Backbone::Backbone(const ConvSpec& head_spec, int kernel, std::uint64_t seed)
    : c_in_(head_spec.c_in), h_(head_spec.h), w_(head_spec.w), kernel_(kernel),
      in_h_(head_spec.h + kernel - 1), in_w_(head_spec.w + kernel - 1), seed_(seed) {
    if (kernel < 1) throw validation_error("backbone: kernel must be positive");
    filters_.resize(static_cast<std::size_t>(c_in_) * kernel * kernel);
    Rng rng(derive_seed(seed, 0xbacb0e));
    const double scale = 1.0 / kernel;
    for (double& f : filters_) f = rng.uniform(-scale, scale);
}

Tensor3 Backbone::features(std::span<const double> raw) const {
    if (static_cast<int>(raw.size()) != input_dim())
        throw validation_error("backbone: raw input length mismatch");
    Tensor3 out(c_in_, h_, w_);
    for (int c = 0; c < c_in_; ++c) {
        const double* f = filters_.data() + static_cast<std::size_t>(c) * kernel_ * kernel_;
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                double acc = 0.0;
                for (int ky = 0; ky < kernel_; ++ky)
                    for (int kx = 0; kx < kernel_; ++kx)
                        acc += f[ky * kernel_ + kx] * raw[(y + ky) * in_w_ + (x + kx)];
                out.at(c, y, x) = acc > 0.0 ? acc : 0.0; // ReLU
            }
        }
    }
    return out;
}

void OptimizerConfig::validate() const {
    // zero is allowed: a no-update run is a useful identity check
    if (learning_rate < 0.0) throw validation_error("optimizer: learning rate must be non-negative");
    if (momentum < 0.0) throw validation_error("optimizer: momentum must be non-negative");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw validation_error("optimizer: betas must be in (0, 1)");
    if (eps <= 0.0) throw validation_error("optimizer: eps must be positive");
    if (weight_decay < 0.0) throw validation_error("optimizer: weight decay must be non-negative");
    if (batch_size < 1) throw validation_error("optimizer: batch size must be positive");
    if (epochs < 1) throw validation_error("optimizer: epochs must be positive");
}

std::string OptimizerConfig::kind_name() const {
    switch (kind) {
        case Kind::sgd: return "sgd";
        case Kind::sgd_momentum: return "sgd_momentum";
        case Kind::adamw: return "adamw";
    }
    return "?";
}

OptimizerConfig::Kind OptimizerConfig::parse_kind(const std::string& name) {
    if (name == "sgd") return Kind::sgd;
    if (name == "sgd_momentum") return Kind::sgd_momentum;
    if (name == "adamw") return Kind::adamw;
    throw validation_error("unknown optimizer kind: " + name);
}

void EarlyStopPolicy::validate() const {
    if (patience < 1) throw validation_error("early stop: patience must be >= 1");
    if (threshold <= 0.0) throw validation_error("early stop: threshold must be positive");
    if (max_epochs < 0) throw validation_error("early stop: max epochs must be non-negative");
}

std::string EarlyStopPolicy::kind_name() const {
    switch (kind) {
        case Kind::standard: return "standard";
        case Kind::flatness: return "flatness";
        case Kind::combined: return "combined";
    }
    return "?";
}

EarlyStopPolicy::Kind EarlyStopPolicy::parse_kind(const std::string& name) {
    if (name == "standard") return Kind::standard;
    if (name == "flatness") return Kind::flatness;
    if (name == "combined") return Kind::combined;
    throw validation_error("unknown early stop kind: " + name);
}

const char* const kRunRecordCsvHeader =
    "seed,optimizer,lr,batch_size,epoch,train_loss,val_loss,gen_gap,trace,flatness,val_acc,"
    "time_s,stop_reason";

std::string run_records_csv(const std::vector<RunRecord>& records, bool with_times) {
    std::ostringstream os;
    os << kRunRecordCsvHeader << '\n';
    for (const RunRecord& r : records) {
        write_csv_row(os, {std::to_string(r.seed), r.optimizer, fmt_full(r.lr),
                           std::to_string(r.batch_size), std::to_string(r.epoch),
                           fmt_full(r.train_loss), fmt_full(r.val_loss), fmt_full(r.gen_gap),
                           fmt_full(r.trace), fmt_full(r.flatness), fmt_full(r.val_acc),
                           fmt_full(with_times ? r.time_s : 0.0), r.stop_reason});
    }
    return os.str();
}

void step_sgd(std::span<double> weights, std::span<const double> grad, double lr) {
    if (weights.size() != grad.size()) throw validation_error("sgd: shape mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] -= lr * grad[i];
}

void step_sgd_momentum(std::span<double> weights, std::span<const double> grad, double lr,
                       double momentum, MomentumState& state) {
    if (weights.size() != grad.size()) throw validation_error("sgd_momentum: shape mismatch");
    if (state.velocity.empty()) state.velocity.assign(weights.size(), 0.0);
    if (state.velocity.size() != weights.size())
        throw validation_error("sgd_momentum: state shape mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        state.velocity[i] = momentum * state.velocity[i] + grad[i];
        weights[i] -= lr * state.velocity[i];
    }
}

void step_adamw(std::span<double> weights, std::span<const double> grad, const OptimizerConfig& cfg,
                AdamWState& state) {
    if (weights.size() != grad.size()) throw validation_error("adamw: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(weights.size(), 0.0);
        state.v.assign(weights.size(), 0.0);
    }
    if (state.m.size() != weights.size()) throw validation_error("adamw: state shape mismatch");

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] -= cfg.learning_rate * cfg.weight_decay * weights[i]; // decoupled decay
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        weights[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

std::vector<int> inject_label_noise(std::vector<int> labels, int classes, double fraction,
                                    std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw validation_error("label noise: fraction must be in [0, 1]");
    if (classes < 2) throw validation_error("label noise: need at least 2 classes");
    const std::size_t n = labels.size();
    const std::size_t count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (count == 0) return labels;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 0x4015));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const int shift = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes - 1)));
        labels[idx[i]] = (labels[idx[i]] + shift) % classes;
    }
    return labels;
}

StopDecision evaluate_stop(const StopHistory& history, const EarlyStopPolicy& policy) {
    policy.validate();
    if (history.val_loss.empty()) throw validation_error("evaluate_stop: empty history");

    const int n = static_cast<int>(history.val_loss.size());

    auto standard_met = [&] {
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (history.val_loss[i] < history.val_loss[best]) best = i;
        return (n - 1) - best >= policy.patience;
    };

    auto flatness_met = [&] {
        const int m = static_cast<int>(history.flatness.size());
        if (m < policy.patience + 1) return false;
        for (int i = m - policy.patience; i < m; ++i) {
            const double prev = history.flatness[i - 1];
            const double change = std::fabs(history.flatness[i] - prev) / std::max(std::fabs(prev), 1e-12);
            if (change >= policy.threshold) return false;
        }
        return true;
    };

    StopDecision d;
    switch (policy.kind) {
        case EarlyStopPolicy::Kind::standard:
            d.stop = standard_met();
            if (d.stop) d.reason = "standard";
            break;
        case EarlyStopPolicy::Kind::flatness:
            d.stop = flatness_met();
            if (d.stop) d.reason = "flatness";
            break;
        case EarlyStopPolicy::Kind::combined:
            d.stop = standard_met() && flatness_met();
            if (d.stop) d.reason = "combined";
            break;
    }
    return d;
}

namespace {

struct EvalMetrics {
    double loss = 0, acc = 0;
};

EvalMetrics evaluate_split(const FeatureSet& set, const KernelBank& k, const OneHot& labels) {
    const HeadOutput out = forward(set.summaries, k, labels);
    int correct = 0;
    for (int b = 0; b < out.batch; ++b) {
        const double* p = out.prob_row(b);
        int arg = 0;
        for (int j = 1; j < out.c_out; ++j)
            if (p[j] > p[arg]) arg = j;
        if (arg == set.labels[b]) ++correct;
    }
    return {out.mean_loss, static_cast<double>(correct) / out.batch};
}

} // namespace

TrainResult train(const TrainData& data, const OptimizerConfig& opt, const EarlyStopPolicy& stop,
                  const TrainOptions& options) {
    opt.validate();
    stop.validate();
    if (data.train.size() < 1 || data.val.size() < 1)
        throw validation_error("train: empty train or validation split");
    if (data.classes != data.spec.c_out)
        throw validation_error("train: class count must equal c_out");
    if (options.eval_batch < 1) throw validation_error("train: eval batch must be positive");

    const int d = data.spec.flat_dim();
    const int classes = data.classes;
    KernelBank weights =
        KernelBank::uniform(classes, d, -1.0 / std::sqrt(d), 1.0 / std::sqrt(d),
                            derive_seed(opt.seed, 0x1417));

    const OneHot train_labels = OneHot::from_indices(data.train.labels, classes);
    const OneHot val_labels = OneHot::from_indices(data.val.labels, classes);

    // fixed held-out evaluation batch for the curvature series
    const int eval_n = std::min(options.eval_batch, data.val.size());
    FeatureSet eval_set;
    eval_set.summaries.assign(data.val.summaries.begin(), data.val.summaries.begin() + eval_n);
    eval_set.labels.assign(data.val.labels.begin(), data.val.labels.begin() + eval_n);
    const OneHot eval_labels = OneHot::from_indices(eval_set.labels, classes);

    auto measure = [&](const KernelBank& k) {
        const HeadOutput out = forward(eval_set.summaries, k, eval_labels);
        InitialMetrics m;
        m.trace = symbolic_trace_batch(out, eval_set.summaries);
        m.flatness = relative_flatness(out, eval_set.summaries, k, options.variant);
        double a = 0.0;
        for (int b = 0; b < out.batch; ++b)
            a += alpha({out.prob_row(b), static_cast<std::size_t>(out.c_out)});
        m.alpha = a / out.batch;
        return m;
    };

    TrainResult result;
    {
        const InitialMetrics pre = measure(weights);
        const EvalMetrics val0 = evaluate_split(data.val, weights, val_labels);
        result.initial = pre;
        result.initial.val_loss = val0.loss;
        result.initial.val_acc = val0.acc;
    }

    MomentumState momentum;
    AdamWState adamw;
    Rng shuffle_rng(derive_seed(opt.seed, 0x5487));
    std::vector<int> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    const int max_epochs = stop.max_epochs > 0 ? stop.max_epochs : opt.epochs;
    StopHistory history;
    const int n_train = data.train.size();

    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        const double t0 = now_seconds();

        // seeded shuffle, then full pass in mini-batches
        for (int i = n_train - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }

        bool diverged = false;
        for (int start = 0; start < n_train && !diverged; start += opt.batch_size) {
            const int stop_idx = std::min(start + opt.batch_size, n_train);
            std::vector<PatchSummary> batch;
            std::vector<int> batch_labels;
            batch.reserve(stop_idx - start);
            batch_labels.reserve(stop_idx - start);
            for (int i = start; i < stop_idx; ++i) {
                batch.push_back(data.train.summaries[order[i]]);
                batch_labels.push_back(data.train.labels[order[i]]);
            }
            const OneHot y = OneHot::from_indices(batch_labels, classes);
            const HeadOutput out = forward(batch, weights, y);
            if (!std::isfinite(out.mean_loss) || out.mean_loss > kDivergenceLimit) {
                diverged = true;
                break;
            }
            const std::vector<double> g = gradient(out, batch, y);
            switch (opt.kind) {
                case OptimizerConfig::Kind::sgd:
                    step_sgd(weights.weights(), g, opt.learning_rate);
                    break;
                case OptimizerConfig::Kind::sgd_momentum:
                    step_sgd_momentum(weights.weights(), g, opt.learning_rate, opt.momentum, momentum);
                    break;
                case OptimizerConfig::Kind::adamw:
                    step_adamw(weights.weights(), g, opt, adamw);
                    break;
            }
            for (double v : weights.weights())
                if (!std::isfinite(v)) {
                    diverged = true;
                    break;
                }
        }

        RunRecord rec;
        rec.seed = opt.seed;
        rec.optimizer = opt.kind_name();
        rec.lr = opt.learning_rate;
        rec.batch_size = opt.batch_size;
        rec.epoch = epoch;

        if (diverged) {
            rec.train_loss = std::numeric_limits<double>::quiet_NaN();
            rec.val_loss = std::numeric_limits<double>::quiet_NaN();
            rec.gen_gap = std::numeric_limits<double>::quiet_NaN();
            rec.trace = std::numeric_limits<double>::quiet_NaN();
            rec.flatness = std::numeric_limits<double>::quiet_NaN();
            rec.val_acc = 0.0;
            rec.time_s = now_seconds() - t0;
            rec.stop_reason = "diverged";
            result.records.push_back(std::move(rec));
            result.stop_reason = "diverged";
            result.diverged = true;
            result.final_weights = weights.weights();
            return result;
        }

        const EvalMetrics tr = evaluate_split(data.train, weights, train_labels);
        const EvalMetrics va = evaluate_split(data.val, weights, val_labels);
        const InitialMetrics cur = measure(weights);

        rec.train_loss = tr.loss;
        rec.val_loss = va.loss;
        rec.gen_gap = va.loss - tr.loss;
        rec.trace = cur.trace;
        rec.flatness = cur.flatness;
        rec.val_acc = va.acc;
        rec.alpha = cur.alpha;
        rec.time_s = now_seconds() - t0;

        if (!std::isfinite(tr.loss) || tr.loss > kDivergenceLimit || !std::isfinite(va.loss)) {
            rec.stop_reason = "diverged";
            result.records.push_back(std::move(rec));
            result.stop_reason = "diverged";
            result.diverged = true;
            result.final_weights = weights.weights();
            return result;
        }

        history.val_loss.push_back(va.loss);
        history.flatness.push_back(cur.flatness);

        const StopDecision decision = evaluate_stop(history, stop);
        if (decision.stop) {
            rec.stop_reason = decision.reason;
            result.records.push_back(std::move(rec));
            result.stop_reason = decision.reason;
            result.final_weights = weights.weights();
            return result;
        }
        if (epoch == max_epochs) {
            rec.stop_reason = "max_epochs";
            result.records.push_back(std::move(rec));
            result.stop_reason = "max_epochs";
            result.final_weights = weights.weights();
            return result;
        }
        result.records.push_back(std::move(rec));
    }

    // not reached; the loop always returns on the final epoch
    result.final_weights = weights.weights();
    return result;
}

} // namespace convflat
