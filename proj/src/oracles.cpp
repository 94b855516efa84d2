#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "csv.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace convflat {

double FdConfig::step_for(double value) const {
    if (fixed_step) return *fixed_step;
    const double eps = std::numeric_limits<double>::epsilon();
    return std::pow(eps, step_exponent) * std::max(1.0, std::fabs(value));
}

double fd_trace(const std::function<double(const KernelBank&)>& loss_fn, const KernelBank& k,
                const FdConfig& cfg) {
    const long long n = static_cast<long long>(k.c_out()) * k.dim();
    if (n > cfg.cap)
        throw size_cap_error("fd_trace: dimension " + std::to_string(n) + " exceeds cap " +
                             std::to_string(cfg.cap));

    KernelBank work = k;
    const double base = loss_fn(work);
    if (!std::isfinite(base)) throw validation_error("fd_trace: non-finite loss at base point");

    double trace = 0.0;
    std::vector<double>& w = work.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double orig = w[i];
        double h = cfg.step_for(orig);
        // snap to an exactly representable step
        volatile double bumped = orig + h;
        h = bumped - orig;

        w[i] = orig + h;
        const double up = loss_fn(work);
        w[i] = orig - h;
        const double down = loss_fn(work);
        w[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw validation_error("fd_trace: non-finite loss at perturbed point");
        trace += (up - 2.0 * base + down) / (h * h);
    }
    return trace;
}

std::vector<double> fd_gradient(const std::function<double(const KernelBank&)>& loss_fn,
                                const KernelBank& k) {
    KernelBank work = k;
    std::vector<double>& w = work.weights();
    std::vector<double> grad(w.size());
    const double eps = std::numeric_limits<double>::epsilon();
    const double scale = std::cbrt(eps);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double orig = w[i];
        double h = scale * std::max(1.0, std::fabs(orig));
        volatile double bumped = orig + h;
        h = bumped - orig;

        w[i] = orig + h;
        const double up = loss_fn(work);
        w[i] = orig - h;
        const double down = loss_fn(work);
        w[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

HutchinsonResult hutchinson_trace(const std::function<void(const double*, double*)>& hvp, int dim,
                                  const ProbeConfig& cfg) {
    if (dim < 1) throw validation_error("hutchinson_trace: dimension must be positive");
    if (cfg.probes < 1) throw validation_error("hutchinson_trace: probe count must be positive");

    Rng rng(cfg.seed);
    std::vector<double> v(dim), hv(dim);
    double sum = 0.0, sum_sq = 0.0;
    for (int p = 0; p < cfg.probes; ++p) {
        for (double& x : v) x = rng.rademacher();
        hvp(v.data(), hv.data());
        double quad = 0.0;
        for (int i = 0; i < dim; ++i) quad += v[i] * hv[i];
        sum += quad;
        sum_sq += quad * quad;
    }
    HutchinsonResult r;
    r.estimate = sum / cfg.probes;
    if (cfg.probes > 1) {
        const double var = (sum_sq - sum * sum / cfg.probes) / (cfg.probes - 1);
        r.std_error = std::sqrt(std::max(var, 0.0) / cfg.probes);
    }
    return r;
}

void analytic_hvp(std::span<const double> probs, const PatchSummary& summary,
                  std::span<const double> v, std::span<double> out) {
    const int c_out = static_cast<int>(probs.size());
    const int d = summary.flat_dim();
    if (static_cast<int>(v.size()) != c_out * d || out.size() != v.size())
        throw validation_error("analytic_hvp: vector length mismatch");

    const double* phi = summary.avg.data();
    // t_j = <avg_patch, v_j>; (Hv)_j = p_j (t_j - sum_l p_l t_l) * avg_patch
    std::vector<double> t(c_out);
    double weighted = 0.0;
    for (int j = 0; j < c_out; ++j) {
        const double* vj = v.data() + static_cast<std::size_t>(j) * d;
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += phi[i] * vj[i];
        t[j] = dot;
        weighted += probs[j] * dot;
    }
    for (int j = 0; j < c_out; ++j) {
        const double coef = probs[j] * (t[j] - weighted);
        double* oj = out.data() + static_cast<std::size_t>(j) * d;
        for (int i = 0; i < d; ++i) oj[i] = coef * phi[i];
    }
}

void analytic_hvp_batch(const HeadOutput& out, const std::vector<PatchSummary>& summaries,
                        std::span<const double> v, std::span<double> hv) {
    const std::size_t n = v.size();
    if (hv.size() != n) throw validation_error("analytic_hvp_batch: vector length mismatch");
    std::vector<double> tmp(n);
    std::fill(hv.begin(), hv.end(), 0.0);
    const double inv_batch = 1.0 / out.batch;
    for (int b = 0; b < out.batch; ++b) {
        analytic_hvp({out.prob_row(b), static_cast<std::size_t>(out.c_out)}, summaries[b], v, tmp);
        for (std::size_t i = 0; i < n; ++i) hv[i] += inv_batch * tmp[i];
    }
}

namespace {

struct RunValues {
    double symbolic = 0, fd = 0, hutch = 0, dense = 0;
    double flat_scale = 0; // sum_t <k_t, k_t>
    double t_symbolic = 0, t_fd = 0, t_hutch = 0, t_dense = 0;
    bool has_fd = false, has_dense = false;
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::vector<Tensor3> make_inputs(const ConvSpec& spec, int batches, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor3> xs;
    xs.reserve(batches);
    for (int b = 0; b < batches; ++b) {
        Tensor3 x(spec.c_in, spec.h, spec.w);
        for (double& v : x.data()) v = rng.uniform01();
        xs.push_back(std::move(x));
    }
    return xs;
}

struct Agg {
    double mean = 0, stdev = 0;
};

Agg aggregate(const std::vector<double>& xs) {
    Agg a;
    if (xs.empty()) return a;
    double s = 0;
    for (double x : xs) s += x;
    a.mean = s / xs.size();
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - a.mean) * (x - a.mean);
        a.stdev = std::sqrt(ss / (xs.size() - 1));
    }
    return a;
}

} // namespace

BenchResult benchmark_methods(const BenchProtocol& protocol) {
    protocol.spec.validate();
    if (protocol.batches < 1 || protocol.runs < 1)
        throw validation_error("benchmark: batches and runs must be positive");

    const ConvSpec& spec = protocol.spec;
    const int d = spec.flat_dim();
    const long long dim = static_cast<long long>(spec.c_out) * d;

    const KernelBank weights =
        protocol.weights == BenchProtocol::Weights::ones
            ? KernelBank::ones(spec.c_out, d)
            : KernelBank::random_scaled(spec.c_out, d, protocol.weight_scale,
                                        derive_seed(protocol.seed, 0x77));
    const std::vector<int> zero_labels(protocol.batches, 0);
    const OneHot labels = OneHot::from_indices(zero_labels, spec.c_out);

    const bool run_fd = dim <= protocol.fd_cap;
    const bool run_dense = dim <= protocol.dense_cap;

    std::vector<RunValues> runs(protocol.runs);
    parallel_for(protocol.runs, protocol.jobs, [&](int r) {
        RunValues& rv = runs[r];
        const std::uint64_t run_seed = protocol.seed + static_cast<std::uint64_t>(r);
        const std::vector<Tensor3> xs = make_inputs(spec, protocol.batches, run_seed);
        rv.flat_scale = weights.sq_norm_sum();

        // symbolic: patch averaging + forward + closed-form trace
        double t0 = now_seconds();
        {
            const auto summaries = summarize_batch(xs, spec);
            const HeadOutput out = forward(summaries, weights, labels);
            rv.symbolic = symbolic_trace_batch(out, summaries);
        }
        rv.t_symbolic = now_seconds() - t0;

        const auto summaries = summarize_batch(xs, spec);
        const HeadOutput out = forward(summaries, weights, labels);

        if (run_fd) {
            t0 = now_seconds();
            const auto fd_summaries = summarize_batch(xs, spec);
            auto loss = [&](const KernelBank& k) { return forward(fd_summaries, k, labels).mean_loss; };
            FdConfig fd_cfg;
            fd_cfg.cap = protocol.fd_cap;
            rv.fd = fd_trace(loss, weights, fd_cfg);
            rv.t_fd = now_seconds() - t0;
            rv.has_fd = true;
        }

        // Hutchinson on the analytic per-sample HVPs, `probes` per sample
        t0 = now_seconds();
        {
            double est = 0.0;
            for (int b = 0; b < protocol.batches; ++b) {
                auto hvp = [&](const double* v, double* hv) {
                    analytic_hvp({out.prob_row(b), static_cast<std::size_t>(out.c_out)}, summaries[b],
                                 {v, static_cast<std::size_t>(dim)}, {hv, static_cast<std::size_t>(dim)});
                };
                ProbeConfig pc;
                pc.probes = protocol.probes;
                pc.seed = derive_seed(run_seed, 1000 + static_cast<std::uint64_t>(b));
                est += hutchinson_trace(hvp, static_cast<int>(dim), pc).estimate;
            }
            rv.hutch = est / protocol.batches;
        }
        rv.t_hutch = now_seconds() - t0;

        if (run_dense) {
            t0 = now_seconds();
            double tr = 0.0;
            for (int b = 0; b < protocol.batches; ++b) {
                const auto h = dense_hessian({out.prob_row(b), static_cast<std::size_t>(out.c_out)},
                                             summaries[b], protocol.dense_cap);
                for (long long i = 0; i < dim; ++i) tr += h[static_cast<std::size_t>(i) * dim + i];
            }
            rv.dense = tr / protocol.batches;
            rv.t_dense = now_seconds() - t0;
            rv.has_dense = true;
        }
    });

    auto collect = [&](auto getter) {
        std::vector<double> v;
        v.reserve(runs.size());
        for (const RunValues& rv : runs) v.push_back(getter(rv));
        return v;
    };

    const std::vector<double> sym = collect([](const RunValues& r) { return r.symbolic; });
    const std::vector<double> fd = collect([](const RunValues& r) { return r.fd; });
    const std::vector<double> hutch = collect([](const RunValues& r) { return r.hutch; });
    const std::vector<double> dense = collect([](const RunValues& r) { return r.dense; });
    const double flat_scale = runs.front().flat_scale;

    auto make_row = [&](const std::string& method, const std::vector<double>& values, bool present,
                        double time_mean) {
        BenchRow row;
        row.method = method;
        row.batches = protocol.batches;
        row.kernels = spec.c_out;
        row.runs = protocol.runs;
        row.skipped = !present;
        if (!present) return row;
        const Agg value = aggregate(values);
        row.trace_mean = value.mean;
        row.trace_std = value.stdev;
        // flatness is trace-scaled by the summed kernel norms
        std::vector<double> flat(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) flat[i] = flat_scale * values[i];
        const Agg fa = aggregate(flat);
        row.flatness_mean = fa.mean;
        row.flatness_std = fa.stdev;
        if (run_fd) {
            std::vector<double> err(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) err[i] = std::fabs(values[i] - fd[i]);
            const Agg ea = aggregate(err);
            row.abs_err_mean = ea.mean;
            row.abs_err_std = ea.stdev;
        } else {
            row.abs_err_mean = std::numeric_limits<double>::quiet_NaN();
            row.abs_err_std = std::numeric_limits<double>::quiet_NaN();
        }
        row.time_mean_s = time_mean;
        return row;
    };

    const Agg t_sym = aggregate(collect([](const RunValues& r) { return r.t_symbolic; }));
    const Agg t_fd = aggregate(collect([](const RunValues& r) { return r.t_fd; }));
    const Agg t_hutch = aggregate(collect([](const RunValues& r) { return r.t_hutch; }));
    const Agg t_dense = aggregate(collect([](const RunValues& r) { return r.t_dense; }));

    BenchResult result;
    result.rows.push_back(make_row("finite_diff", fd, run_fd, t_fd.mean));
    result.rows.push_back(make_row("symbolic", sym, true, t_sym.mean));
    result.rows.push_back(make_row("hutchinson", hutch, true, t_hutch.mean));
    result.rows.push_back(make_row("dense_analytic", dense, run_dense, t_dense.mean));
    return result;
}

const char* const kBenchCsvHeader =
    "method,batches,kernels,runs,trace_mean,trace_std,abs_err_mean,abs_err_std,"
    "flatness_mean,flatness_std,time_mean_s";

std::string bench_csv(const BenchResult& result, bool with_times) {
    std::ostringstream os;
    os << kBenchCsvHeader << '\n';
    for (const BenchRow& r : result.rows) {
        std::vector<std::string> cells{r.method, std::to_string(r.batches), std::to_string(r.kernels),
                                       std::to_string(r.runs)};
        auto cell = [&](double v) { cells.push_back(std::isnan(v) ? "" : fmt_full(v)); };
        if (r.skipped) {
            cells.insert(cells.end(), 7, "");
        } else {
            cell(r.trace_mean);
            cell(r.trace_std);
            cell(r.abs_err_mean);
            cell(r.abs_err_std);
            cell(r.flatness_mean);
            cell(r.flatness_std);
            cells.push_back(fmt_full(with_times ? r.time_mean_s : 0.0));
        }
        write_csv_row(os, cells);
    }
    return os.str();
}

std::string bench_table(const BenchResult& result) {
    std::ostringstream os;
    const BenchRow& first = result.rows.front();
    os << "batches=" << first.batches << " kernels=" << first.kernels << " runs=" << first.runs
       << "\n";

    auto pm = [](double m, double s) { return fmt_sig4(m) + " +/- " + fmt_sig4(s); };
    std::vector<std::string> head{"metric"}, trace{"trace"}, flat{"flatness"}, time{"time_s"};
    for (const BenchRow& r : result.rows) {
        head.push_back(r.method + (r.method == "finite_diff" ? " (ref)" : " (abs err)"));
        if (r.skipped) {
            trace.push_back("skipped");
            flat.push_back("skipped");
            time.push_back("-");
            continue;
        }
        if (r.method == "finite_diff") {
            trace.push_back(pm(r.trace_mean, r.trace_std));
            flat.push_back(pm(r.flatness_mean, r.flatness_std));
        } else if (std::isnan(r.abs_err_mean)) {
            trace.push_back(pm(r.trace_mean, r.trace_std) + " (no ref)");
            flat.push_back(pm(r.flatness_mean, r.flatness_std) + " (no ref)");
        } else {
            const double scale = r.trace_mean != 0.0 ? r.flatness_mean / r.trace_mean : 0.0;
            trace.push_back(pm(r.abs_err_mean, r.abs_err_std));
            flat.push_back(pm(scale * r.abs_err_mean, scale * r.abs_err_std));
        }
        time.push_back(fmt_sig4(r.time_mean_s));
    }

    std::vector<std::size_t> width(head.size(), 0);
    for (const auto* row : {&head, &trace, &flat, &time})
        for (std::size_t i = 0; i < row->size(); ++i) width[i] = std::max(width[i], (*row)[i].size());
    for (const auto* row : {&head, &trace, &flat, &time}) {
        for (std::size_t i = 0; i < row->size(); ++i) {
            os << (*row)[i];
            if (i + 1 < row->size()) os << std::string(width[i] - (*row)[i].size() + 2, ' ');
        }
        os << '\n';
    }
    return os.str();
}

} // namespace convflat
