#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "experiments.hpp"
#include "rng.hpp"
#include "trainer.hpp"

using namespace convflat;

namespace {

ConvSpec head_spec(int classes) {
    return ConvSpec{3, classes, 3, 3, 1, 0, 10, 10};
}

// well-separated 2-class task
TrainData separable_data(std::uint64_t seed, int classes = 2) {
    BlobParams params;
    params.classes = classes;
    params.samples_per_class = 60;
    params.separation = 1.0;
    params.covariance_scale = 0.2;
    params.seed = seed;
    const ConvSpec spec = head_spec(classes);
    const Backbone backbone(spec, 3, 7);
    params.dim = backbone.input_dim();
    return build_features(generate_blobs(params), backbone, spec);
}

} // namespace

TEST_CASE("backbone geometry and determinism") {
    const ConvSpec spec = head_spec(3);
    const Backbone a(spec, 3, 42);
    CHECK(a.input_dim() == 12 * 12);

    Rng rng(1);
    std::vector<double> raw(a.input_dim());
    for (double& v : raw) v = rng.uniform(-1, 1);

    const Backbone b(spec, 3, 42);
    const Tensor3 fa = a.features(raw);
    const Tensor3 fb = b.features(raw);
    CHECK(fa.data() == fb.data());
    CHECK(fa.channels() == 3);
    CHECK(fa.height() == 10);
    CHECK(fa.width() == 10);
    for (double v : fa.data()) CHECK(v >= 0.0); // ReLU

    const Backbone c(spec, 3, 43);
    CHECK(c.features(raw).data() != fa.data());
}

TEST_CASE("sgd with zero gradient leaves weights unchanged") {
    std::vector<double> w{1, 2, 3};
    const std::vector<double> g(3, 0.0);
    step_sgd(w, g, 0.5);
    CHECK(w == std::vector<double>{1, 2, 3});
}

TEST_CASE("momentum unrolls to k0 - lr (2 + mu) g after two constant steps") {
    const double lr = 0.1, mu = 0.9;
    std::vector<double> w{1.0, -2.0};
    const std::vector<double> g{0.5, 0.25};
    MomentumState state;
    step_sgd_momentum(w, g, lr, mu, state);
    step_sgd_momentum(w, g, lr, mu, state);
    CHECK(w[0] == doctest::Approx(1.0 - lr * (2 + mu) * 0.5).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(-2.0 - lr * (2 + mu) * 0.25).epsilon(1e-14));
}

TEST_CASE("adamw first step moves by roughly -lr sign(g) when decay is off") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::adamw;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.0;
    std::vector<double> w{1.0, 1.0, 1.0};
    const std::vector<double> g{0.5, -2.0, 1e-3};
    AdamWState state;
    step_adamw(w, g, cfg, state);
    CHECK(w[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(1.0 + 0.01).epsilon(1e-6));
    CHECK(w[2] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
}

TEST_CASE("adamw decoupled decay shrinks weights with zero gradient") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerConfig::Kind::adamw;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    std::vector<double> w{2.0};
    const std::vector<double> g{0.0};
    AdamWState state;
    step_adamw(w, g, cfg, state);
    CHECK(w[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-14));
}

TEST_CASE("label noise counts and determinism") {
    std::vector<int> labels(100);
    for (int i = 0; i < 100; ++i) labels[i] = i % 4;

    CHECK(inject_label_noise(labels, 4, 0.0, 1) == labels);

    const auto noisy = inject_label_noise(labels, 4, 0.2, 9);
    int changed = 0;
    for (int i = 0; i < 100; ++i) {
        CHECK(noisy[i] >= 0);
        CHECK(noisy[i] < 4);
        if (noisy[i] != labels[i]) ++changed;
    }
    CHECK(changed == 20);
    CHECK(inject_label_noise(labels, 4, 0.2, 9) == noisy);

    std::vector<int> binary(10, 0);
    const auto flipped = inject_label_noise(binary, 2, 1.0, 3);
    for (int v : flipped) CHECK(v == 1);
}

TEST_CASE("stop policy semantics") {
    EarlyStopPolicy policy;
    policy.patience = 10;

    SUBCASE("monotonically decreasing loss never stops") {
        StopHistory h;
        for (int i = 0; i < 60; ++i) {
            h.val_loss.push_back(1.0 / (i + 1));
            h.flatness.push_back(100.0 - i);
            CHECK(!evaluate_stop(h, policy).stop);
        }
    }

    SUBCASE("standard stops exactly patience epochs after the plateau") {
        StopHistory h;
        const int plateau = 5;
        for (int i = 1; i <= plateau; ++i) h.val_loss.push_back(1.0 / i);
        h.flatness.assign(h.val_loss.size(), 1.0);
        CHECK(!evaluate_stop(h, policy).stop);
        for (int extra = 1; extra <= 10; ++extra) {
            h.val_loss.push_back(1.0 / plateau); // ties are not improvements
            h.flatness.push_back(1.0);
            const StopDecision d = evaluate_stop(h, policy);
            if (extra < 10)
                CHECK(!d.stop);
            else {
                CHECK(d.stop);
                CHECK(d.reason == "standard");
                CHECK(h.val_loss.size() == static_cast<std::size_t>(plateau + 10));
            }
        }
    }

    SUBCASE("constant flatness triggers the flatness policy") {
        EarlyStopPolicy f = policy;
        f.kind = EarlyStopPolicy::Kind::flatness;
        StopHistory h;
        for (int i = 0; i < 11; ++i) {
            h.val_loss.push_back(1.0 / (i + 1)); // still improving
            h.flatness.push_back(42.0);
        }
        const StopDecision d = evaluate_stop(h, f);
        CHECK(d.stop);
        CHECK(d.reason == "flatness");
    }

    SUBCASE("combined waits for both signals") {
        EarlyStopPolicy c = policy;
        c.kind = EarlyStopPolicy::Kind::combined;
        StopHistory h;
        // val loss plateaus after epoch 5, flatness keeps moving 5% per epoch
        double flat = 100.0;
        for (int i = 1; i <= 25; ++i) {
            h.val_loss.push_back(i < 5 ? 1.0 / i : 0.2);
            flat *= 0.95;
            h.flatness.push_back(flat);
            CHECK(!evaluate_stop(h, c).stop);
        }
        // once flatness settles too, combined fires
        for (int i = 0; i < 11; ++i) {
            h.val_loss.push_back(0.2);
            h.flatness.push_back(flat);
        }
        const StopDecision d = evaluate_stop(h, c);
        CHECK(d.stop);
        CHECK(d.reason == "combined");
    }

    SUBCASE("empty history is rejected") {
        CHECK_THROWS_AS(evaluate_stop(StopHistory{}, policy), validation_error);
    }
}

TEST_CASE("training a separable task converges") {
    const TrainData data = separable_data(5);
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::sgd;
    opt.learning_rate = 0.1;
    opt.batch_size = 16;
    opt.epochs = 30;
    opt.seed = 0;
    EarlyStopPolicy stop;
    stop.max_epochs = 30;

    const TrainResult r = train(data, opt, stop, {});
    REQUIRE(!r.records.empty());
    CHECK(r.records.front().train_loss < std::log(2.0));
    CHECK(r.records.back().val_acc > 0.95);
    CHECK(!r.diverged);

    for (const RunRecord& rec : r.records) {
        CHECK(rec.gen_gap == rec.val_loss - rec.train_loss); // exact identity
        CHECK(rec.epoch >= 1);
    }

    // curvature mass falls as predictions sharpen
    CHECK(r.records.back().alpha < r.initial.alpha);
    CHECK(r.initial.alpha == doctest::Approx(0.5).epsilon(0.10)); // (c-1)/c for c = 2
}

TEST_CASE("zero learning rate freezes every metric") {
    const TrainData data = separable_data(6);
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::sgd;
    opt.learning_rate = 0.0;
    opt.batch_size = 16;
    opt.epochs = 4;
    EarlyStopPolicy stop;

    const TrainResult r = train(data, opt, stop, {});
    REQUIRE(r.records.size() == 4);
    for (const RunRecord& rec : r.records) {
        CHECK(rec.train_loss == r.records.front().train_loss);
        CHECK(rec.val_loss == r.records.front().val_loss);
        CHECK(rec.trace == r.records.front().trace);
        CHECK(rec.flatness == r.records.front().flatness);
    }
    CHECK(r.records.front().trace == doctest::Approx(r.initial.trace).epsilon(1e-15));
}

TEST_CASE("training is bit-deterministic") {
    const TrainData data = separable_data(7);
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::sgd_momentum;
    opt.learning_rate = 0.05;
    opt.batch_size = 8;
    opt.epochs = 6;
    opt.seed = 3;
    EarlyStopPolicy stop;

    const TrainResult a = train(data, opt, stop, {});
    const TrainResult b = train(data, opt, stop, {});
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].train_loss == b.records[i].train_loss);
        CHECK(a.records[i].val_loss == b.records[i].val_loss);
        CHECK(a.records[i].trace == b.records[i].trace);
        CHECK(a.records[i].flatness == b.records[i].flatness);
    }
    CHECK(a.final_weights == b.final_weights);
}

TEST_CASE("exploding updates abort with a diverged record") {
    const TrainData data = separable_data(8);
    OptimizerConfig opt;
    opt.kind = OptimizerConfig::Kind::sgd;
    opt.learning_rate = 1e300;
    opt.batch_size = 16;
    opt.epochs = 5;
    EarlyStopPolicy stop;

    const TrainResult r = train(data, opt, stop, {});
    CHECK(r.diverged);
    CHECK(r.stop_reason == "diverged");
    CHECK(r.records.back().stop_reason == "diverged");
}

TEST_CASE("run record csv schema") {
    RunRecord rec;
    rec.seed = 3;
    rec.optimizer = "sgd";
    rec.lr = 0.1;
    rec.batch_size = 16;
    rec.epoch = 1;
    rec.train_loss = 0.5;
    rec.val_loss = 0.75;
    rec.gen_gap = 0.25;
    rec.time_s = 123.0;
    rec.stop_reason = "max_epochs";
    const std::string csv = run_records_csv({rec}, false);
    CHECK(csv.rfind("seed,optimizer,lr,batch_size,epoch,train_loss,val_loss,gen_gap,trace,"
                    "flatness,val_acc,time_s,stop_reason\n",
                    0) == 0);
    CHECK(csv.find(",0,max_epochs") != std::string::npos);  // zeroed time by default
    CHECK(run_records_csv({rec}, true).find("123") != std::string::npos);
}

TEST_CASE("config validation") {
    OptimizerConfig opt;
    opt.learning_rate = -1;
    CHECK_THROWS_AS(opt.validate(), validation_error);
    opt.learning_rate = 0.1;
    opt.beta2 = 1.0;
    CHECK_THROWS_AS(opt.validate(), validation_error);

    EarlyStopPolicy policy;
    policy.patience = 0;
    CHECK_THROWS_AS(policy.validate(), validation_error);

    const TrainData data = separable_data(9);
    OptimizerConfig ok;
    EarlyStopPolicy stop;
    TrainData wrong = data;
    wrong.classes = 3; // head says 2
    CHECK_THROWS_AS(train(wrong, ok, stop, {}), validation_error);
}
