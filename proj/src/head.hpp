#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace convflat {

/// Bank of vectorized filters, one row per output class.
/// Row layout matches PatchSummary: channel-major, row-major inside a window.
class KernelBank {
public:
    KernelBank(int c_out, int d) : c_out_(c_out), d_(d), w_(static_cast<std::size_t>(c_out) * d, 0.0) {
        if (c_out < 1 || d < 1) throw validation_error("kernel bank: extents must be positive");
    }
    KernelBank(int c_out, int d, std::vector<double> weights);

    static KernelBank ones(int c_out, int d);
    static KernelBank uniform(int c_out, int d, double lo, double hi, std::uint64_t seed);
    // uniform(0,1) entries scaled by `scale`
    static KernelBank random_scaled(int c_out, int d, double scale, std::uint64_t seed);

    int c_out() const { return c_out_; }
    int dim() const { return d_; }

    const double* row(int t) const { return w_.data() + static_cast<std::size_t>(t) * d_; }
    double* row(int t) { return w_.data() + static_cast<std::size_t>(t) * d_; }

    std::vector<double>& weights() { return w_; }
    const std::vector<double>& weights() const { return w_; }

    double row_sq_norm(int t) const;
    double sq_norm_sum() const; // sum over rows of <k_t, k_t>

private:
    int c_out_, d_;
    std::vector<double> w_;
};

/// One-hot label matrix; rows validate to exactly one 1 and zeros elsewhere.
struct OneHot {
    int batch = 0;
    int classes = 0;
    std::vector<double> rows; // batch x classes, row-major

    static OneHot from_indices(const std::vector<int>& labels, int classes);
    void validate() const;
    int index_of(int b) const;
};

/// Forward results of conv -> GAP -> softmax -> cross-entropy on a batch.
struct HeadOutput {
    int batch = 0;
    int c_out = 0;
    std::vector<double> logits; // batch x c_out
    std::vector<double> probs;  // batch x c_out
    std::vector<double> sample_loss;
    double mean_loss = 0.0;
    int saturated = 0; // how many log arguments were clamped

    const double* prob_row(int b) const { return probs.data() + static_cast<std::size_t>(b) * c_out; }
    const double* logit_row(int b) const { return logits.data() + static_cast<std::size_t>(b) * c_out; }
};

/// In-place softmax with max-logit subtraction.
void softmax_inplace(std::span<double> z);

std::vector<PatchSummary> summarize_batch(const std::vector<Tensor3>& xs, const ConvSpec& spec);

HeadOutput forward(const std::vector<PatchSummary>& summaries, const KernelBank& k, const OneHot& labels);
HeadOutput forward(const std::vector<Tensor3>& xs, const ConvSpec& spec, const KernelBank& k,
                   const OneHot& labels);

/// Batch-mean closed-form gradient, c_out x d row-major:
/// row j = mean_b (yhat_b(j) - y_b(j)) * avg_patch_b.
std::vector<double> gradient(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                             const OneHot& labels);

/// Hessian of the loss with respect to the logits for one sample:
/// diag p(1-p), off-diagonal -p_j p_l. Symmetric PSD with zero row sums.
std::vector<double> logit_hessian(std::span<const double> probs);

} // namespace convflat
