#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "head.hpp"

namespace convflat {

/// Which reading of the relative-flatness formula to evaluate.
/// `definition` weights each kernel norm by that class's own softmax
/// curvature term; `table` applies the total curvature mass to the summed
/// kernel norms and reproduces the published benchmark numbers. `table`
/// is the default everywhere.
enum class FlatnessVariant { definition, table };

FlatnessVariant parse_flatness_variant(const std::string& name);

/// One trace/flatness measurement produced by a benchmark run.
struct TraceReport {
    std::string method; // symbolic | finite_diff | hutchinson | dense_analytic
    double trace = 0.0;
    std::optional<double> flatness;
    std::optional<double> reference;
    std::optional<double> abs_error; // |trace - reference|
    double wall_time_s = 0.0;
};

/// Softmax curvature mass sum_j p_j (1 - p_j); in [0, 1 - 1/c_out].
double alpha(std::span<const double> probs);

/// Exact Hessian trace for a single sample: alpha * sum_s |avg_patch_s|^2.
double symbolic_trace_single(std::span<const double> probs, const PatchSummary& summary);

/// Batch-mean exact trace.
double symbolic_trace_batch(const HeadOutput& out, const std::vector<PatchSummary>& summaries);

/// Per-sample traces of the batch, for variance studies.
std::vector<double> per_sample_traces(const HeadOutput& out, const std::vector<PatchSummary>& summaries);

/// Trace of the (j, j2) Hessian block: p_j (delta - p_j2) * sum_s |avg_patch_s|^2.
double hessian_block_trace(std::span<const double> probs, int j, int j2, const PatchSummary& summary);

double relative_flatness(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                         const KernelBank& k, FlatnessVariant variant);

/// Full double sum over kernel pairs <k_i, k_j> * Tr(H_ij), batch mean.
double relative_flatness_full(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                              const KernelBank& k);

/// Explicit Lipschitz constant of the trace in the weights:
/// c_out * (sum_s |avg_patch_s|^2)^{3/2}.
double lipschitz_constant(const PatchSummary& summary, int c_out);

/// Dense analytic Hessian for one sample, (c_out*d)^2 row-major.
/// Block (j, l) is p_j (delta_jl - p_l) * outer(avg_patch, avg_patch).
/// Verification oracle only; throws size_cap_error above `cap`.
std::vector<double> dense_hessian(std::span<const double> probs, const PatchSummary& summary,
                                  int cap = 2048);

} // namespace convflat
