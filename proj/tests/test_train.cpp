#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "penguin/synth.hpp"
#include "penguin/train.hpp"
#include "test_util.hpp"

using namespace penguin;

namespace {

bool params_bitwise_equal(const ParamStore<float>& a, const ParamStore<float>& b) {
    if (a.count() != b.count()) return false;
    for (int i = 0; i < static_cast<int>(a.count()); ++i) {
        if (a.name(i) != b.name(i)) return false;
        const auto& va = a.value(i).data;
        const auto& vb = b.value(i).data;
        if (va.size() != vb.size()) return false;
        if (!va.empty() && std::memcmp(va.data(), vb.data(), va.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

} // namespace

TEST_CASE("param store: unique names, deterministic order") {
    ParamStore<float> store;
    store.add("a", Tensor<float>({2}));
    store.add("b", Tensor<float>({3}));
    CHECK_THROWS_AS(store.add("a", Tensor<float>({1})), std::invalid_argument);
    CHECK(store.count() == 2);
    CHECK(store.name(0) == "a");
    CHECK(store.name(1) == "b");
    CHECK(store.total_elements() == 5);
}

TEST_CASE("gradient: quadratic loss returns the parameter itself") {
    ParamStore<double> params;
    params.add("theta", Tensor<double>({4}, {0.5, -1.5, 2.0, 3.0}));
    auto [loss, grads] = gradient(params, [](Tape<double>& tape, ParamBinder<double>& binder) {
        // ||theta||^2 / 2
        return tape.mul_const(tape.sum_squares(binder.node("theta")), 0.5);
    });
    CHECK(loss == doctest::Approx(0.5 * (0.25 + 2.25 + 4.0 + 9.0)));
    REQUIRE(grads[0].size() == 4);
    CHECK(grads[0][0] == 0.5);
    CHECK(grads[0][1] == -1.5);
    CHECK(grads[0][2] == 2.0);
    CHECK(grads[0][3] == 3.0);
}

TEST_CASE("gradient: constant loss leaves every gradient zero") {
    ParamStore<double> params;
    params.add("theta", Tensor<double>({3}, {1.0, 2.0, 3.0}));
    auto [loss, grads] = gradient(params, [](Tape<double>& tape, ParamBinder<double>&) {
        Tensor<double> c({1});
        c[0] = 5.0;
        return tape.constant(std::move(c));
    });
    CHECK(loss == 5.0);
    // parameter never bound -> empty grad, meaning zero
    CHECK(grads[0].data.empty());
}

TEST_CASE("gradcheck: tiny model passes the finite-difference contract") {
    GradCheckReport report = gradcheck_tiny_model(0);
    CHECK(report.pass);
    CHECK(report.probes.size() >= 50);
    CHECK(report.family_max.size() >= 7);
    // every architectural family must be probed
    for (const char* family :
         {"conv", "film_gen", "scale_gen", "lambda", "delta", "B", "C", "D", "ffn", "head",
          "cond_proj"})
        CHECK(report.family_max.count(family) == 1);
    CHECK(report.worst.rel_err <= 1e-3);
}

TEST_CASE("gradcheck: sabotage is caught") {
    GradCheckReport report = gradcheck_tiny_model(0, true);
    CHECK(!report.pass);
}

TEST_CASE("adamw: hand-evaluated first step") {
    ParamStore<double> params;
    params.add("theta", Tensor<double>({1}, {1.0}));
    AdamWParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.0;
    AdamW<double> opt(params, hp);
    GradMap<double> grads(1);
    grads[0] = Tensor<double>({1}, {1.0});
    opt.step(params, grads);
    // m_hat = 1, v_hat = 1 -> theta = 1 - 0.1 * 1/(1 + 1e-8)
    CHECK(params.value(0)[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adamw: zero gradient leaves only the decay term") {
    ParamStore<double> params;
    params.add("theta", Tensor<double>({1}, {2.0}));
    AdamWParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.01;
    AdamW<double> opt(params, hp);
    GradMap<double> grads(1);
    grads[0] = Tensor<double>({1}, {0.0});
    opt.step(params, grads);
    CHECK(params.value(0)[0] == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0).epsilon(1e-12));
}

TEST_CASE("adamw: first step moves by -lr * sign(g) when decay is off") {
    Rng rng(3);
    ParamStore<double> params;
    Tensor<double> t({16});
    for (auto& v : t.data) v = rng.normal();
    params.add("theta", t);
    Tensor<double> before = params.value(0);

    AdamWParams hp;
    hp.lr = 0.05;
    hp.weight_decay = 0.0;
    AdamW<double> opt(params, hp);
    GradMap<double> grads(1);
    grads[0] = Tensor<double>({16});
    for (auto& g : grads[0].data) g = rng.normal() * 10.0;
    opt.step(params, grads);
    for (std::size_t i = 0; i < 16; ++i) {
        double moved = params.value(0)[i] - before[i];
        double expected = -0.05 * (grads[0][i] > 0 ? 1.0 : -1.0);
        CHECK(std::abs(moved - expected) <= 1e-6);
    }
}

TEST_CASE("adamw: identical runs are bitwise identical") {
    auto run = [] {
        ParamStore<float> params;
        Rng rng(9);
        Tensor<float> t({32});
        for (auto& v : t.data) v = static_cast<float>(rng.normal());
        params.add("theta", t);
        AdamWParams hp;
        AdamW<float> opt(params, hp);
        for (int step = 0; step < 10; ++step) {
            GradMap<float> grads(1);
            grads[0] = Tensor<float>({32});
            Rng grng(100 + step);
            for (auto& g : grads[0].data) g = static_cast<float>(grng.normal());
            opt.step(params, grads);
        }
        return params;
    };
    CHECK(params_bitwise_equal(run(), run()));
}

TEST_CASE("early stopping: strict improvement runs to the end") {
    EarlyStopper stop(10);
    for (int epoch = 1; epoch <= 40; ++epoch)
        CHECK(!stop.observe(epoch, 1.0 / epoch));
    CHECK(stop.best_epoch() == 40);
}

TEST_CASE("early stopping: flat tail stops after patience epochs") {
    EarlyStopper stop(10);
    std::vector<double> vals = {0.9, 0.8, 0.7};
    int stopped_at = 0;
    for (int epoch = 1; epoch <= 100; ++epoch) {
        double v = epoch <= 3 ? vals[static_cast<std::size_t>(epoch - 1)] : 0.7;
        if (stop.observe(epoch, v)) {
            stopped_at = epoch;
            break;
        }
    }
    CHECK(stopped_at == 13);
    CHECK(stop.best_epoch() == 3);
}

TEST_CASE("ablation_variants: one flag off per variant") {
    TrainConfig base;
    auto variants = ablation_variants(base);
    REQUIRE(variants.size() == 4);
    CHECK((variants[0].use_film && variants[0].use_scale && variants[0].use_ppg_cond));
    CHECK((!variants[1].use_film && variants[1].use_scale && variants[1].use_ppg_cond));
    CHECK((variants[2].use_film && !variants[2].use_scale && variants[2].use_ppg_cond));
    CHECK((variants[3].use_film && variants[3].use_scale && !variants[3].use_ppg_cond));
}

namespace {

std::vector<WindowPair> synthetic_pairs(int count, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WindowPair> pairs(static_cast<std::size_t>(count));
    for (auto& p : pairs) {
        p.subject_id = "s";
        p.ppg.resize(k);
        p.target.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            p.ppg[i] = static_cast<float>(rng.normal());
            // target correlated with the conditioning so learning has signal
            p.target[i] = 0.8f * p.ppg[i] + 0.1f * static_cast<float>(rng.normal());
        }
    }
    return pairs;
}

TrainConfig toy_train_config() {
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.patience = 10;
    cfg.seed = 5;
    cfg.threads = 1;
    return cfg;
}

ModelConfig toy_model_config() {
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.embed_dim = 8;
    cfg.state_dim = 8;
    cfg.window = 32;
    cfg.temb_dim = 8;
    return cfg;
}

} // namespace

TEST_CASE("train: two identical runs are bitwise identical") {
    auto run = [] {
        PenguinModel<float> model = build_model<float>(toy_model_config(), 42);
        auto train_pairs = synthetic_pairs(16, 32, 1);
        auto val_pairs = synthetic_pairs(4, 32, 2);
        return train(model, train_pairs, val_pairs, toy_train_config());
    };
    TrainResult<float> a = run();
    TrainResult<float> b = run();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_loss == b.history[i].val_loss);
    }
    CHECK(params_bitwise_equal(a.best_params, b.best_params));
}

TEST_CASE("train: best checkpoint never has a worse val loss than any epoch") {
    PenguinModel<float> model = build_model<float>(toy_model_config(), 43);
    auto train_pairs = synthetic_pairs(16, 32, 3);
    auto val_pairs = synthetic_pairs(4, 32, 4);
    TrainConfig cfg = toy_train_config();
    cfg.max_epochs = 6;
    TrainResult<float> result = train(model, train_pairs, val_pairs, cfg);
    double best = result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_loss;
    for (const auto& e : result.history) CHECK(best <= e.val_loss + 1e-12);
}

TEST_CASE("train: loss decreases on synthetic cardiac data") {
    SynthConfig synth;
    synth.task = Task::ECG;
    synth.seconds_per_subject = 40.0;
    synth.seed = 7;
    WaveformRecord rec0 = gen_cardiac(synth, 0);
    WaveformRecord rec1 = gen_cardiac(synth, 1);

    std::size_t k = 256;
    auto train_pairs = window_pairs(rec0, "ppg", "ecg", k, k / 2);
    auto val_pairs = window_pairs(rec1, "ppg", "ecg", k, k);

    ModelConfig mc;
    mc.depth = 1;
    mc.embed_dim = 8;
    mc.state_dim = 16;
    mc.window = static_cast<int>(k);
    mc.temb_dim = 8;
    PenguinModel<float> model = build_model<float>(mc, 44);

    TrainConfig cfg = toy_train_config();
    cfg.max_epochs = 4;
    cfg.batch_size = 16;
    TrainResult<float> result = train(model, train_pairs, val_pairs, cfg);
    REQUIRE(result.history.size() == 4);
    CHECK(result.history[3].train_loss < result.history[0].train_loss);
}

TEST_CASE("train: ablation variant (iv) ignores the conditioning signal") {
    PenguinModel<float> model = build_model<float>(toy_model_config(), 45);
    auto train_pairs = synthetic_pairs(8, 32, 5);
    auto val_pairs = synthetic_pairs(2, 32, 6);
    TrainConfig cfg = ablation_variants(toy_train_config())[3];
    cfg.max_epochs = 1;
    TrainResult<float> result = train(model, train_pairs, val_pairs, cfg);

    PenguinModel<float> trained;
    trained.cfg = toy_model_config();
    trained.cfg.use_ppg_cond = false;
    trained.params = result.best_params;
    std::vector<float> x(32), z1(32), z2(32);
    Rng rng(46);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    for (auto& v : z1) v = static_cast<float>(rng.normal());
    for (auto& v : z2) v = static_cast<float>(rng.normal());
    auto out1 = model_forward(trained, x, z1, 0.5);
    auto out2 = model_forward(trained, x, z2, 0.5);
    CHECK(std::memcmp(out1.data(), out2.data(), out1.size() * sizeof(float)) == 0);
}

TEST_CASE("train: errors on empty inputs") {
    PenguinModel<float> model = build_model<float>(toy_model_config(), 47);
    auto pairs = synthetic_pairs(4, 32, 7);
    CHECK_THROWS_AS(train(model, {}, pairs, toy_train_config()), std::invalid_argument);
    CHECK_THROWS_AS(train(model, pairs, {}, toy_train_config()), std::invalid_argument);
}

TEST_CASE("checkpoint: round trip preserves tensors and config text") {
    testutil::TempDir tmp("ckpt");
    PenguinModel<float> model = build_model<float>(toy_model_config(), 48);
    std::string config_text = "model.depth = 1\ntrain.lr = 0.001\n";
    save_checkpoint(tmp.file("m.pgw"), model.params, config_text);
    auto [loaded, text] = load_checkpoint(tmp.file("m.pgw"));
    CHECK(text == config_text);
    CHECK(params_bitwise_equal(model.params, loaded));
}

TEST_CASE("checkpoint: rejects foreign files") {
    testutil::TempDir tmp("ckpt_bad");
    testutil::spit(tmp.file("junk.pgw"), "VSR1not a checkpoint");
    CHECK_THROWS_AS(load_checkpoint(tmp.file("junk.pgw")), FormatError);
}

TEST_CASE("history csv: header and one row per epoch") {
    std::vector<EpochStats> history = {{1, 0.5, 0.6, 1e-3, 2.0}, {2, 0.4, 0.55, 1e-3, 2.1}};
    std::string csv = history_to_csv(history);
    CHECK(csv.find("epoch,train_loss,val_loss,lr,seconds\n") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
