#include "head.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace convflat {

namespace {
constexpr double kLogFloor = 1e-300;
}

KernelBank::KernelBank(int c_out, int d, std::vector<double> weights)
    : c_out_(c_out), d_(d), w_(std::move(weights)) {
    if (c_out < 1 || d < 1) throw validation_error("kernel bank: extents must be positive");
    if (w_.size() != static_cast<std::size_t>(c_out) * d)
        throw validation_error("kernel bank: weight length mismatch");
    for (double v : w_)
        if (!std::isfinite(v)) throw validation_error("kernel bank: non-finite weight");
}

KernelBank KernelBank::ones(int c_out, int d) {
    KernelBank k(c_out, d);
    std::fill(k.w_.begin(), k.w_.end(), 1.0);
    return k;
}

KernelBank KernelBank::uniform(int c_out, int d, double lo, double hi, std::uint64_t seed) {
    KernelBank k(c_out, d);
    Rng rng(seed);
    for (double& v : k.w_) v = rng.uniform(lo, hi);
    return k;
}

KernelBank KernelBank::random_scaled(int c_out, int d, double scale, std::uint64_t seed) {
    KernelBank k(c_out, d);
    Rng rng(seed);
    for (double& v : k.w_) v = rng.uniform01() * scale;
    return k;
}

double KernelBank::row_sq_norm(int t) const {
    const double* r = row(t);
    double s = 0.0;
    for (int i = 0; i < d_; ++i) s += r[i] * r[i];
    return s;
}

double KernelBank::sq_norm_sum() const {
    double s = 0.0;
    for (int t = 0; t < c_out_; ++t) s += row_sq_norm(t);
    return s;
}

OneHot OneHot::from_indices(const std::vector<int>& labels, int classes) {
    OneHot y;
    y.batch = static_cast<int>(labels.size());
    y.classes = classes;
    y.rows.assign(static_cast<std::size_t>(y.batch) * classes, 0.0);
    for (int b = 0; b < y.batch; ++b) {
        if (labels[b] < 0 || labels[b] >= classes)
            throw validation_error("one-hot: label out of range");
        y.rows[static_cast<std::size_t>(b) * classes + labels[b]] = 1.0;
    }
    return y;
}

void OneHot::validate() const {
    if (batch < 1 || classes < 1) throw validation_error("one-hot: empty label matrix");
    if (rows.size() != static_cast<std::size_t>(batch) * classes)
        throw validation_error("one-hot: size mismatch");
    for (int b = 0; b < batch; ++b) {
        int ones = 0;
        for (int j = 0; j < classes; ++j) {
            const double v = rows[static_cast<std::size_t>(b) * classes + j];
            if (v == 1.0)
                ++ones;
            else if (v != 0.0)
                throw validation_error("one-hot: row entries must be 0 or 1");
        }
        if (ones != 1) throw validation_error("one-hot: row must contain exactly one 1");
    }
}

int OneHot::index_of(int b) const {
    for (int j = 0; j < classes; ++j)
        if (rows[static_cast<std::size_t>(b) * classes + j] == 1.0) return j;
    throw validation_error("one-hot: row without a 1");
}

void softmax_inplace(std::span<double> z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

std::vector<PatchSummary> summarize_batch(const std::vector<Tensor3>& xs, const ConvSpec& spec) {
    std::vector<PatchSummary> out;
    out.reserve(xs.size());
    for (const Tensor3& x : xs) out.push_back(average_patch(extract_patches(x, spec)));
    return out;
}

HeadOutput forward(const std::vector<PatchSummary>& summaries, const KernelBank& k, const OneHot& labels) {
    if (summaries.empty()) throw validation_error("forward: empty batch");
    labels.validate();
    const int batch = static_cast<int>(summaries.size());
    const int c_out = k.c_out();
    if (labels.batch != batch || labels.classes != c_out)
        throw validation_error("forward: label shape mismatch");
    if (summaries.front().flat_dim() != k.dim())
        throw validation_error("forward: patch dimension does not match kernel bank");

    HeadOutput out;
    out.batch = batch;
    out.c_out = c_out;
    out.logits.resize(static_cast<std::size_t>(batch) * c_out);
    out.sample_loss.resize(batch);

    const int d = k.dim();
    for (int b = 0; b < batch; ++b) {
        const double* phi = summaries[b].avg.data();
        double* z = out.logits.data() + static_cast<std::size_t>(b) * c_out;
        for (int j = 0; j < c_out; ++j) {
            const double* kj = k.row(j);
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += phi[i] * kj[i];
            z[j] = dot;
        }
    }

    out.probs = out.logits;
    double total = 0.0;
    for (int b = 0; b < batch; ++b) {
        double* p = out.probs.data() + static_cast<std::size_t>(b) * c_out;
        softmax_inplace(std::span<double>(p, c_out));
        const int y = labels.index_of(b);
        double py = p[y];
        if (py < kLogFloor) {
            py = kLogFloor;
            ++out.saturated;
        }
        out.sample_loss[b] = -std::log(py);
        total += out.sample_loss[b];
    }
    out.mean_loss = total / batch;
    return out;
}

HeadOutput forward(const std::vector<Tensor3>& xs, const ConvSpec& spec, const KernelBank& k,
                   const OneHot& labels) {
    return forward(summarize_batch(xs, spec), k, labels);
}

std::vector<double> gradient(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                             const OneHot& labels) {
    if (static_cast<int>(summaries.size()) != out.batch)
        throw validation_error("gradient: batch mismatch");
    if (labels.batch != out.batch || labels.classes != out.c_out)
        throw validation_error("gradient: label shape mismatch");

    const int d = summaries.front().flat_dim();
    std::vector<double> g(static_cast<std::size_t>(out.c_out) * d, 0.0);
    const double inv_batch = 1.0 / out.batch;
    for (int b = 0; b < out.batch; ++b) {
        const double* p = out.prob_row(b);
        const double* y = labels.rows.data() + static_cast<std::size_t>(b) * out.c_out;
        const double* phi = summaries[b].avg.data();
        for (int j = 0; j < out.c_out; ++j) {
            const double coef = (p[j] - y[j]) * inv_batch;
            double* gj = g.data() + static_cast<std::size_t>(j) * d;
            for (int i = 0; i < d; ++i) gj[i] += coef * phi[i];
        }
    }
    return g;
}

std::vector<double> logit_hessian(std::span<const double> probs) {
    const int n = static_cast<int>(probs.size());
    std::vector<double> h(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l)
            h[static_cast<std::size_t>(j) * n + l] =
                (j == l) ? probs[j] * (1.0 - probs[j]) : -probs[j] * probs[l];
    return h;
}

} // namespace convflat
