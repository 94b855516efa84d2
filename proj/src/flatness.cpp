#include "flatness.hpp"

#include <cmath>

namespace convflat {

FlatnessVariant parse_flatness_variant(const std::string& name) {
    if (name == "definition") return FlatnessVariant::definition;
    if (name == "table") return FlatnessVariant::table;
    throw validation_error("unknown flatness variant: " + name);
}

double alpha(std::span<const double> probs) {
    double a = 0.0;
    for (double p : probs) a += p * (1.0 - p);
    return a;
}

double symbolic_trace_single(std::span<const double> probs, const PatchSummary& summary) {
    return alpha(probs) * summary.sq_norm;
}

std::vector<double> per_sample_traces(const HeadOutput& out, const std::vector<PatchSummary>& summaries) {
    if (static_cast<int>(summaries.size()) != out.batch)
        throw validation_error("trace: batch mismatch between forward output and summaries");
    std::vector<double> traces(out.batch);
    for (int b = 0; b < out.batch; ++b)
        traces[b] = alpha({out.prob_row(b), static_cast<std::size_t>(out.c_out)}) * summaries[b].sq_norm;
    return traces;
}

double symbolic_trace_batch(const HeadOutput& out, const std::vector<PatchSummary>& summaries) {
    const std::vector<double> traces = per_sample_traces(out, summaries);
    double total = 0.0;
    for (double t : traces) total += t;
    return total / out.batch;
}

double hessian_block_trace(std::span<const double> probs, int j, int j2, const PatchSummary& summary) {
    const int n = static_cast<int>(probs.size());
    if (j < 0 || j >= n || j2 < 0 || j2 >= n)
        throw validation_error("hessian_block_trace: class index out of range");
    const double delta = (j == j2) ? 1.0 : 0.0;
    return probs[j] * (delta - probs[j2]) * summary.sq_norm;
}

double relative_flatness(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                         const KernelBank& k, FlatnessVariant variant) {
    if (static_cast<int>(summaries.size()) != out.batch)
        throw validation_error("relative_flatness: batch mismatch");
    if (k.c_out() != out.c_out) throw validation_error("relative_flatness: kernel bank mismatch");

    std::vector<double> row_norms(k.c_out());
    for (int t = 0; t < k.c_out(); ++t) row_norms[t] = k.row_sq_norm(t);
    double norm_sum = 0.0;
    for (double v : row_norms) norm_sum += v;

    double total = 0.0;
    for (int b = 0; b < out.batch; ++b) {
        const double* p = out.prob_row(b);
        double curvature = 0.0;
        if (variant == FlatnessVariant::definition) {
            for (int t = 0; t < k.c_out(); ++t) curvature += row_norms[t] * p[t] * (1.0 - p[t]);
        } else {
            curvature = norm_sum * alpha({p, static_cast<std::size_t>(out.c_out)});
        }
        total += curvature * summaries[b].sq_norm;
    }
    return total / out.batch;
}

double relative_flatness_full(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                              const KernelBank& k) {
    if (static_cast<int>(summaries.size()) != out.batch)
        throw validation_error("relative_flatness_full: batch mismatch");
    if (k.c_out() != out.c_out) throw validation_error("relative_flatness_full: kernel bank mismatch");

    const int n = k.c_out();
    const int d = k.dim();
    // Gram matrix of the kernel rows, computed once
    std::vector<double> gram(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const double* ki = k.row(i);
            const double* kj = k.row(j);
            double dot = 0.0;
            for (int a = 0; a < d; ++a) dot += ki[a] * kj[a];
            gram[static_cast<std::size_t>(i) * n + j] = dot;
            gram[static_cast<std::size_t>(j) * n + i] = dot;
        }
    }

    double total = 0.0;
    for (int b = 0; b < out.batch; ++b) {
        const std::span<const double> p{out.prob_row(b), static_cast<std::size_t>(n)};
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                acc += gram[static_cast<std::size_t>(i) * n + j] *
                       hessian_block_trace(p, i, j, summaries[b]);
        total += acc;
    }
    return total / out.batch;
}

double lipschitz_constant(const PatchSummary& summary, int c_out) {
    return c_out * std::pow(summary.sq_norm, 1.5);
}

std::vector<double> dense_hessian(std::span<const double> probs, const PatchSummary& summary, int cap) {
    const int c_out = static_cast<int>(probs.size());
    const int d = summary.flat_dim();
    const long long n = static_cast<long long>(c_out) * d;
    if (n > cap)
        throw size_cap_error("dense_hessian: dimension " + std::to_string(n) +
                             " exceeds cap " + std::to_string(cap));

    const double* phi = summary.avg.data();
    std::vector<double> h(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < c_out; ++j) {
        for (int l = 0; l < c_out; ++l) {
            const double coef = probs[j] * ((j == l ? 1.0 : 0.0) - probs[l]);
            for (int a = 0; a < d; ++a) {
                double* row = h.data() + (static_cast<std::size_t>(j) * d + a) * n +
                              static_cast<std::size_t>(l) * d;
                // coef * (phi_a * phi_b) keeps the matrix bitwise symmetric
                for (int bidx = 0; bidx < d; ++bidx) row[bidx] = coef * (phi[a] * phi[bidx]);
            }
        }
    }
    return h;
}

} // namespace convflat
