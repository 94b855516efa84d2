#pragma once

#include <string>

#include "experiments.hpp"

namespace convflat {

/// Shared pieces of the train/sweep/stop-compare JSON configs. The head
/// geometry defaults to the benchmark configuration (3 channels, 10x10
/// maps, 3x3 kernels, stride 1, no padding); the raw input dimension is
/// derived from the head and backbone geometry.
struct ExperimentBase {
    BlobParams dataset;
    int backbone_kernel = 3;
    std::uint64_t backbone_seed = 7;
    ConvSpec head{3, 1, 3, 3, 1, 0, 10, 10}; // c_out overwritten by dataset.classes
    OptimizerConfig optimizer;
    EarlyStopPolicy early_stop;
    TrainOptions options;
};

struct TrainSetup {
    ExperimentBase base;
    double noise_fraction = 0.0;
};

struct SweepSetup {
    ExperimentBase base;
    SweepGrid grid;
};

struct StopCompareSetup {
    ExperimentBase base;
    std::vector<EarlyStopPolicy::Kind> strategies{EarlyStopPolicy::Kind::standard,
                                                  EarlyStopPolicy::Kind::flatness,
                                                  EarlyStopPolicy::Kind::combined};
    std::vector<std::uint64_t> seeds;
};

/// Parsers validate block and field names and reject unknown keys.
/// Most fields are optional and fall back to the documented defaults.
TrainSetup parse_train_config(const std::string& json_text);
SweepSetup parse_sweep_config(const std::string& json_text);
StopCompareSetup parse_stop_compare_config(const std::string& json_text);

} // namespace convflat
