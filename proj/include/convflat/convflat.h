/* convflat — exact Hessian trace and relative flatness of a conv->GAP->softmax
 * classification head, plus the benchmarking / training / sweep harness
 * built on it.
 *
 * C API over the C++ core: opaque handles, integer status codes, and a
 * thread-local error message. Every function returning `int` yields
 * CONVFLAT_OK (0) on success; on failure convflat_last_error() describes
 * the problem.
 */
#ifndef CONVFLAT_H
#define CONVFLAT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum convflat_status {
    CONVFLAT_OK = 0,
    CONVFLAT_ERR_INVALID_ARGUMENT = 1, /* bad values, shape mismatches */
    CONVFLAT_ERR_GEOMETRY = 2,         /* impossible conv geometry */
    CONVFLAT_ERR_SIZE_CAP = 3,         /* oracle asked above its size cap */
    CONVFLAT_ERR_IO = 4,               /* file read/write failure */
    CONVFLAT_ERR_RUNTIME = 5
};

const char* convflat_version(void);

/* Thread-local message for the most recent failure; empty string if none. */
const char* convflat_last_error(void);

/* Geometry of the final block. The flattened filter dimension is
 * d = c_in * k_h * k_w. */
typedef struct convflat_spec {
    int32_t c_in;
    int32_t c_out;
    int32_t k_h;
    int32_t k_w;
    int32_t stride;
    int32_t padding;
    int32_t h;
    int32_t w;
} convflat_spec;

/* ------------------------------------------------------------------ */
/* model: spec + kernel weights                                        */

typedef struct convflat_model convflat_model;

/* weights: c_out x d row-major; row t is filter t, channel-major and
 * row-major inside each window. NULL handles signal failure. */
convflat_model* convflat_model_create(const convflat_spec* spec, const double* weights);
convflat_model* convflat_model_create_ones(const convflat_spec* spec);
/* uniform(0,1) entries scaled by `scale`, seeded */
convflat_model* convflat_model_create_random(const convflat_spec* spec, double scale, uint64_t seed);
void convflat_model_free(convflat_model* model);

int64_t convflat_model_dim(const convflat_model* model); /* d */
int convflat_model_get_weights(const convflat_model* model, double* out /* c_out x d */);

/* ------------------------------------------------------------------ */
/* batch: inputs + labels                                              */

typedef struct convflat_batch convflat_batch;

/* inputs: batch x c_in x h x w row-major; labels: class indices, may be
 * NULL for all-zero labels (trace and flatness do not depend on them). */
convflat_batch* convflat_batch_create(const convflat_spec* spec, int64_t batch, const double* inputs,
                                      const int32_t* labels);
/* fresh uniform[0,1) inputs, the benchmark protocol's input model */
convflat_batch* convflat_batch_create_uniform(const convflat_spec* spec, int64_t batch, uint64_t seed);
void convflat_batch_free(convflat_batch* batch);

/* ------------------------------------------------------------------ */
/* measurements                                                        */

typedef struct convflat_measurement {
    double mean_loss;
    double accuracy;
    double trace;               /* exact batch-mean Hessian trace */
    double flatness_table;      /* default relative flatness */
    double flatness_definition; /* per-class curvature weighting */
    double flatness_full;       /* full kernel-pair double sum */
    double alpha_mean;          /* softmax curvature mass, batch mean */
} convflat_measurement;

int convflat_measure(const convflat_model* model, const convflat_batch* batch,
                     convflat_measurement* out);

/* central second differences of the batch loss (independent oracle) */
int convflat_trace_fd(const convflat_model* model, const convflat_batch* batch, int64_t cap,
                      double* out);
/* per-sample Hutchinson estimates on the analytic HVP, averaged */
int convflat_trace_hutchinson(const convflat_model* model, const convflat_batch* batch,
                              int64_t probes, uint64_t seed, double* estimate, double* std_error);
/* trace of the materialized dense analytic Hessian */
int convflat_trace_dense(const convflat_model* model, const convflat_batch* batch, int64_t cap,
                         double* out);

/* samples^{-2/(4+m)} * (kappa/(2m) + c1 + c2/sqrt(delta)) */
int convflat_bound_envelope(double kappa, int64_t samples, int64_t feature_dim, double c1, double c2,
                            double delta, double* out);

/* ------------------------------------------------------------------ */
/* orchestration: the CLI's work horses                                */

typedef struct convflat_run_options {
    int64_t seed_override; /* < 0: keep the seed from the config */
    int64_t jobs;          /* <= 0: all hardware threads */
    int32_t timing;        /* nonzero: write measured wall times into outputs */
    int32_t verbose;
} convflat_run_options;

typedef struct convflat_bench_config {
    convflat_spec spec;
    int64_t batches;
    int64_t runs;
    int64_t probes;
    int32_t random_weights; /* 0: all-ones weights, 1: uniform(0,1) * weight_scale */
    double weight_scale;
    uint64_t seed;
    int64_t dense_cap; /* methods above their cap are reported as skipped */
    int64_t fd_cap;
} convflat_bench_config;

/* Fills `config` with the published benchmark protocol defaults:
 * c_in=3, 10x10 inputs, 3x3 kernels, stride 1, no padding, batches=5,
 * runs=30, probes=500, ones weights. */
void convflat_bench_config_defaults(convflat_bench_config* config);

/* Each runner writes its CSV/JSON artifact to `output_path` and, when
 * `summary` is non-NULL, returns a human-readable summary string to free
 * with convflat_string_free. Config text is the documented JSON schema. */
int convflat_bench_run(const convflat_bench_config* config, const convflat_run_options* options,
                       const char* output_path, char** summary);
int convflat_train_run(const char* config_json, const convflat_run_options* options,
                       const char* output_path, char** summary);
int convflat_sweep_run(const char* config_json, const convflat_run_options* options,
                       const char* output_path, char** summary);
int convflat_stop_compare_run(const char* config_json, const convflat_run_options* options,
                              const char* output_path, char** summary);
/* Reads a CSV (e.g. a sweep output), drops rows with non-finite cells or
 * stop_reason=diverged, correlates two columns, writes the stats JSON. */
int convflat_correlate_csv(const char* input_csv, const char* x_column, const char* y_column,
                           const char* output_path, char** summary);

void convflat_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CONVFLAT_H */
