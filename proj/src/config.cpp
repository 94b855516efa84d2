#include "config.hpp"

#include <set>

#include <json.hpp>

namespace convflat {

namespace {

using nlohmann::json;

json parse_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw validation_error("config: invalid JSON");
    if (!j.is_object()) throw validation_error("config: top level must be an object");
    return j;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw validation_error("config: unknown field '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw validation_error("config: bad value for '" + key + "'");
    }
}

void parse_dataset(const json& j, BlobParams& p) {
    check_keys(j, {"classes", "samples_per_class", "separation", "covariance_scale",
                   "train_fraction", "seed"},
               "dataset");
    p.classes = get_or(j, "classes", p.classes);
    p.samples_per_class = get_or(j, "samples_per_class", p.samples_per_class);
    p.separation = get_or(j, "separation", p.separation);
    p.covariance_scale = get_or(j, "covariance_scale", p.covariance_scale);
    p.train_fraction = get_or(j, "train_fraction", p.train_fraction);
    p.seed = get_or(j, "seed", p.seed);
}

void parse_head(const json& j, ConvSpec& spec) {
    check_keys(j, {"c_in", "h", "w", "k_h", "k_w", "stride", "padding"}, "head");
    spec.c_in = get_or(j, "c_in", spec.c_in);
    spec.h = get_or(j, "h", spec.h);
    spec.w = get_or(j, "w", spec.w);
    spec.k_h = get_or(j, "k_h", spec.k_h);
    spec.k_w = get_or(j, "k_w", spec.k_w);
    spec.stride = get_or(j, "stride", spec.stride);
    spec.padding = get_or(j, "padding", spec.padding);
}

void parse_optimizer(const json& j, OptimizerConfig& opt) {
    check_keys(j, {"kind", "learning_rate", "momentum", "beta1", "beta2", "eps", "weight_decay",
                   "batch_size", "epochs", "seed"},
               "optimizer");
    if (j.contains("kind")) opt.kind = OptimizerConfig::parse_kind(j.at("kind").get<std::string>());
    opt.learning_rate = get_or(j, "learning_rate", opt.learning_rate);
    opt.momentum = get_or(j, "momentum", opt.momentum);
    opt.beta1 = get_or(j, "beta1", opt.beta1);
    opt.beta2 = get_or(j, "beta2", opt.beta2);
    opt.eps = get_or(j, "eps", opt.eps);
    opt.weight_decay = get_or(j, "weight_decay", opt.weight_decay);
    opt.batch_size = get_or(j, "batch_size", opt.batch_size);
    opt.epochs = get_or(j, "epochs", opt.epochs);
    opt.seed = get_or(j, "seed", opt.seed);
}

void parse_early_stop(const json& j, EarlyStopPolicy& p) {
    check_keys(j, {"kind", "patience", "threshold", "max_epochs"}, "early_stop");
    if (j.contains("kind")) p.kind = EarlyStopPolicy::parse_kind(j.at("kind").get<std::string>());
    p.patience = get_or(j, "patience", p.patience);
    p.threshold = get_or(j, "threshold", p.threshold);
    p.max_epochs = get_or(j, "max_epochs", p.max_epochs);
}

void parse_base(const json& j, ExperimentBase& base) {
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), base.dataset);
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        check_keys(b, {"kernel", "seed"}, "backbone");
        base.backbone_kernel = get_or(b, "kernel", base.backbone_kernel);
        base.backbone_seed = get_or(b, "seed", base.backbone_seed);
    }
    if (j.contains("head")) parse_head(j.at("head"), base.head);
    if (j.contains("optimizer")) parse_optimizer(j.at("optimizer"), base.optimizer);
    if (j.contains("early_stop")) parse_early_stop(j.at("early_stop"), base.early_stop);
    base.options.eval_batch = get_or(j, "eval_batch", base.options.eval_batch);
    if (j.contains("flatness_variant"))
        base.options.variant = parse_flatness_variant(j.at("flatness_variant").get<std::string>());

    base.head.c_out = base.dataset.classes;
    base.head.validate();
    base.dataset.dim = (base.head.h + base.backbone_kernel - 1) * (base.head.w + base.backbone_kernel - 1);
}

const std::set<std::string> kBaseKeys{"dataset",    "backbone",   "head",
                                      "optimizer",  "early_stop", "eval_batch",
                                      "flatness_variant"};

std::set<std::string> with_extra(std::set<std::string> keys, std::initializer_list<const char*> extra) {
    for (const char* k : extra) keys.insert(k);
    return keys;
}

} // namespace

TrainSetup parse_train_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    check_keys(j, with_extra(kBaseKeys, {"noise_fraction"}), "config");
    TrainSetup setup;
    parse_base(j, setup.base);
    setup.noise_fraction = get_or(j, "noise_fraction", 0.0);
    if (setup.noise_fraction < 0.0 || setup.noise_fraction > 1.0)
        throw validation_error("config: noise_fraction must be in [0, 1]");
    return setup;
}

SweepSetup parse_sweep_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    check_keys(j, with_extra(kBaseKeys, {"grid"}), "config");
    SweepSetup setup;
    parse_base(j, setup.base);

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        check_keys(g, {"optimizers", "learning_rates", "batch_sizes", "seeds", "noise_fractions"},
                   "grid");
        if (g.contains("optimizers")) {
            setup.grid.optimizers.clear();
            for (const auto& name : g.at("optimizers"))
                setup.grid.optimizers.push_back(OptimizerConfig::parse_kind(name.get<std::string>()));
        }
        if (g.contains("learning_rates"))
            setup.grid.learning_rates = g.at("learning_rates").get<std::vector<double>>();
        if (g.contains("batch_sizes"))
            setup.grid.batch_sizes = g.at("batch_sizes").get<std::vector<int>>();
        if (g.contains("seeds"))
            setup.grid.seeds = g.at("seeds").get<std::vector<std::uint64_t>>();
        if (g.contains("noise_fractions"))
            setup.grid.noise_fractions = g.at("noise_fractions").get<std::vector<double>>();
    }
    if (setup.grid.cells() < 1) throw validation_error("config: empty sweep grid");

    setup.grid.base = setup.base.optimizer;
    setup.grid.policy = setup.base.early_stop;
    setup.grid.options = setup.base.options;
    return setup;
}

StopCompareSetup parse_stop_compare_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    check_keys(j, with_extra(kBaseKeys, {"strategies", "seeds"}), "config");
    StopCompareSetup setup;
    parse_base(j, setup.base);

    if (j.contains("strategies")) {
        setup.strategies.clear();
        for (const auto& name : j.at("strategies"))
            setup.strategies.push_back(EarlyStopPolicy::parse_kind(name.get<std::string>()));
    }
    if (j.contains("seeds")) setup.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (setup.seeds.empty())
        for (std::uint64_t s = 0; s < 20; ++s) setup.seeds.push_back(s);
    if (setup.strategies.empty()) throw validation_error("config: empty strategy list");
    return setup;
}

} // namespace convflat
