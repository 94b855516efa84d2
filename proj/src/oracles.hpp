#pragma once

#include <functional>
#include <optional>

#include "flatness.hpp"

namespace convflat {

/// Central second-difference configuration. The per-coordinate step is
/// eps^step_exponent * max(1, |k_i|) unless a fixed step is given.
struct FdConfig {
    double step_exponent = 0.25;
    std::optional<double> fixed_step;
    long long cap = 5000; // on c_out * d

    double step_for(double value) const;
};

/// Trace of the Hessian of `loss_fn` at `k` by central second differences:
/// sum_i (L(k + h e_i) - 2 L(k) + L(k - h e_i)) / h^2. Deterministic.
double fd_trace(const std::function<double(const KernelBank&)>& loss_fn, const KernelBank& k,
                const FdConfig& cfg = {});

/// Central first differences of `loss_fn`, same stepping rule with
/// eps^{1/3}; used by the gradient checks.
std::vector<double> fd_gradient(const std::function<double(const KernelBank&)>& loss_fn,
                                const KernelBank& k);

struct ProbeConfig {
    int probes = 500;
    std::uint64_t seed = 0;
};

struct HutchinsonResult {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Stochastic trace estimate (1/n) sum_p v_p' H v_p with seeded Rademacher
/// probes; hvp(v, out) writes H v into out. Deterministic given the seed.
HutchinsonResult hutchinson_trace(const std::function<void(const double*, double*)>& hvp, int dim,
                                  const ProbeConfig& cfg);

/// Exact Hessian-vector product of one sample in O(c_out * d), using the
/// rank structure of the blocks; never materializes the Hessian.
void analytic_hvp(std::span<const double> probs, const PatchSummary& summary,
                  std::span<const double> v, std::span<double> out);

/// Batch-mean HVP over the forward output.
void analytic_hvp_batch(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                        std::span<const double> v, std::span<double> hv);

/// Benchmark protocol mirroring the published trace/flatness comparison:
/// fresh uniform[0,1) inputs per run, fixed weights, all methods timed.
struct BenchProtocol {
    ConvSpec spec{3, 10, 3, 3, 1, 0, 10, 10}; // c_in=3, 10x10, 3x3, stride 1, no padding
    int batches = 5;
    int runs = 30;
    int probes = 500;
    enum class Weights { ones, random_scaled };
    Weights weights = Weights::ones;
    double weight_scale = 1e-4;
    std::uint64_t seed = 0;
    int jobs = 1;
    int dense_cap = 2048;
    long long fd_cap = 5000;
};

struct BenchRow {
    std::string method;
    int batches = 0;
    int kernels = 0;
    int runs = 0;
    bool skipped = false; // over its cap, mirrors the published OOM entries
    double trace_mean = 0, trace_std = 0;
    double abs_err_mean = 0, abs_err_std = 0;
    double flatness_mean = 0, flatness_std = 0;
    double time_mean_s = 0;
};

struct BenchResult {
    std::vector<BenchRow> rows; // finite_diff, symbolic, hutchinson, dense_analytic
};

BenchResult benchmark_methods(const BenchProtocol& protocol);

extern const char* const kBenchCsvHeader;

/// CSV in the fixed schema; measured times are written only when
/// `with_times` is set, otherwise the column holds 0 so identical seeds
/// produce identical files.
std::string bench_csv(const BenchResult& result, bool with_times);

/// Human-readable table: one column per method, rows Trace/Flatness/Time.
std::string bench_table(const BenchResult& result);

} // namespace convflat
