#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "penguin/flow.hpp"

using namespace penguin;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("flow sample: path endpoints are exact") {
    std::vector<double> x1 = random_vec(32, 1);
    Rng rng(2);
    FlowSample<double> at0 = make_flow_sample_at(x1, 0.0, rng);
    for (std::size_t i = 0; i < x1.size(); ++i) CHECK(at0.xt[i] == at0.x0[i]);

    FlowSample<double> at1 = make_flow_sample_at(x1, 1.0, rng);
    for (std::size_t i = 0; i < x1.size(); ++i) CHECK(at1.xt[i] == x1[i]);
}

TEST_CASE("flow sample: midpoint arithmetic and velocity target") {
    std::vector<double> x1(16, 2.0);
    Rng rng(3);
    FlowSample<double> s = make_flow_sample_at(x1, 0.5, rng);
    for (std::size_t i = 0; i < x1.size(); ++i) {
        CHECK(s.xt[i] == doctest::Approx(0.5 * s.x0[i] + 1.0));
        CHECK(s.u_target[i] == doctest::Approx(2.0 - s.x0[i]));
    }
}

TEST_CASE("flow sample: invariants hold for random draws") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x1 = random_vec(24, 100 + trial);
        FlowSample<double> s = make_flow_sample(x1, rng);
        CHECK(s.t >= 0.0);
        CHECK(s.t < 1.0);
        for (std::size_t i = 0; i < x1.size(); ++i) {
            CHECK(s.xt[i] == doctest::Approx((1.0 - s.t) * s.x0[i] + s.t * x1[i]));
            CHECK(s.u_target[i] == doctest::Approx(x1[i] - s.x0[i]));
        }
    }
}

TEST_CASE("cfm_loss: oracle velocity gives zero loss") {
    // with z = x1, u = (z - xt)/(1 - t) equals x1 - x0 identically on the path
    VelocityFn<double> oracle = [](const std::vector<double>& xt, const std::vector<double>& z,
                                   double t) {
        std::vector<double> u(xt.size());
        for (std::size_t i = 0; i < xt.size(); ++i) u[i] = (z[i] - xt[i]) / (1.0 - t);
        return u;
    };
    std::vector<std::pair<std::vector<double>, std::vector<double>>> batch;
    for (int e = 0; e < 8; ++e) {
        std::vector<double> x1 = random_vec(64, 200 + e);
        batch.emplace_back(x1, x1); // condition on the target itself
    }
    Rng rng(5);
    CHECK(cfm_loss(oracle, batch, rng) <= 1e-16);
}

TEST_CASE("cfm_loss: zero model against zero targets estimates unit variance") {
    VelocityFn<double> zero = [](const std::vector<double>& xt, const std::vector<double>&,
                                 double) { return std::vector<double>(xt.size(), 0.0); };
    std::vector<std::pair<std::vector<double>, std::vector<double>>> batch(
        100, {std::vector<double>(100, 0.0), std::vector<double>(100, 0.0)});
    Rng rng(6);
    double loss = cfm_loss(zero, batch, rng); // E|x0|^2 over 1e4 draws
    CHECK(loss == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("cfm_loss: mean reduction is order-invariant for identical elements") {
    VelocityFn<double> stub = [](const std::vector<double>& xt, const std::vector<double>&,
                                 double) { return std::vector<double>(xt.size(), 0.25); };
    std::vector<double> x1 = random_vec(32, 7);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> batch(4, {x1, x1});
    Rng rng_a(8), rng_b(8);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> reversed(batch.rbegin(),
                                                                              batch.rend());
    CHECK(cfm_loss(stub, batch, rng_a) == cfm_loss(stub, reversed, rng_b));
    CHECK_THROWS_AS(cfm_loss(stub, {}, rng_a), std::invalid_argument);
}

TEST_CASE("heun: exact for constant fields at any step count") {
    std::vector<double> z(16, 0.0);
    VelocityFn<double> constant = [](const std::vector<double>& x, const std::vector<double>&,
                                     double) { return std::vector<double>(x.size(), 0.75); };
    for (int steps : {1, 3, 25}) {
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.seed = 0;
        Rng rng(9);
        std::vector<double> x0;
        {
            Rng copy(9);
            x0.resize(z.size());
            for (auto& v : x0) v = copy.normal();
        }
        std::vector<double> out = heun_sample(constant, z, cfg, rng);
        for (std::size_t i = 0; i < out.size(); ++i)
            CHECK(out[i] == doctest::Approx(x0[i] + 0.75).epsilon(1e-12));
    }
}

TEST_CASE("heun: exact for fields linear in t") {
    std::vector<double> z(8, 0.0);
    VelocityFn<double> linear_t = [](const std::vector<double>& x, const std::vector<double>&,
                                     double t) { return std::vector<double>(x.size(), 2.0 * t); };
    SamplerConfig cfg;
    cfg.steps = 25;
    Rng rng(10);
    std::vector<double> x0;
    {
        Rng copy(10);
        x0.resize(z.size());
        for (auto& v : x0) v = copy.normal();
    }
    std::vector<double> out = heun_sample(linear_t, z, cfg, rng);
    // integral of 2t over [0,1] is exactly 1
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::abs(out[i] - (x0[i] + 1.0)) <= 1e-6);
}

TEST_CASE("heun: second-order convergence on u(t,x) = x") {
    VelocityFn<double> field = [](const std::vector<double>& x, const std::vector<double>&,
                                  double) { return x; };
    std::vector<double> z(4, 0.0);
    auto error_at = [&](int steps) {
        SamplerConfig cfg;
        cfg.steps = steps;
        Rng rng(11);
        std::vector<double> x0;
        {
            Rng copy(11);
            x0.resize(z.size());
            for (auto& v : x0) v = copy.normal();
        }
        std::vector<double> out = heun_sample(field, z, cfg, rng);
        double err = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i)
            err = std::max(err, std::abs(out[i] - x0[i] * std::exp(1.0)));
        return err;
    };
    double e10 = error_at(10);
    double e20 = error_at(20);
    CHECK(e10 / e20 >= 3.0);
}

TEST_CASE("heun: determinism in the seed") {
    VelocityFn<double> field = [](const std::vector<double>& x, const std::vector<double>&,
                                  double) {
        std::vector<double> u(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = std::sin(x[i]);
        return u;
    };
    std::vector<double> z(16, 0.0);
    SamplerConfig cfg;
    Rng a(77), b(77), c(78);
    auto out_a = heun_sample(field, z, cfg, a);
    auto out_b = heun_sample(field, z, cfg, b);
    auto out_c = heun_sample(field, z, cfg, c);
    CHECK(bitwise_equal(out_a, out_b));
    CHECK(!bitwise_equal(out_a, out_c));
}

TEST_CASE("heun: aborts with the step index on non-finite state") {
    VelocityFn<double> blowup = [](const std::vector<double>& x, const std::vector<double>&,
                                   double t) {
        return std::vector<double>(x.size(), t > 0.5 ? std::numeric_limits<double>::infinity()
                                                     : 0.0);
    };
    std::vector<double> z(4, 0.0);
    SamplerConfig cfg;
    cfg.steps = 10;
    Rng rng(12);
    try {
        heun_sample(blowup, z, cfg, rng);
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("heun: target affine maps the output back to data units") {
    VelocityFn<double> zero = [](const std::vector<double>& x, const std::vector<double>&,
                                 double) { return std::vector<double>(x.size(), 0.0); };
    std::vector<double> z(8, 0.0);
    SamplerConfig cfg;
    cfg.target_affine = {50.0, 130.0};
    Rng rng(13);
    std::vector<double> x0;
    {
        Rng copy(13);
        x0.resize(z.size());
        for (auto& v : x0) v = copy.normal();
    }
    auto out = heun_sample(zero, z, cfg, rng);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(50.0 * x0[i] + 130.0));
    // and the affine inverts its own to_model map
    TargetAffine affine{50.0, 130.0};
    CHECK(affine.from_model(affine.to_model(117.0)) == doctest::Approx(117.0));
}

TEST_CASE("reconstruct_windows: empty input, derived seeds, permutation") {
    VelocityFn<double> field = [](const std::vector<double>& x, const std::vector<double>& z,
                                  double) {
        std::vector<double> u(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = z[i] - x[i];
        return u;
    };
    SamplerConfig cfg;
    cfg.seed = 99;

    CHECK(reconstruct_windows(field, {}, cfg).empty());

    std::vector<std::vector<double>> windows = {random_vec(32, 301), random_vec(32, 302),
                                                random_vec(32, 303)};
    auto outs = reconstruct_windows(field, windows, cfg);
    REQUIRE(outs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        Rng rng(cfg.seed + i);
        auto direct = heun_sample(field, windows[i], cfg, rng);
        CHECK(bitwise_equal(outs[i], direct));
    }

    // reordering inputs reorders outputs identically (index-derived seeds)
    std::vector<std::vector<double>> swapped = {windows[2], windows[0], windows[1]};
    auto outs2 = reconstruct_windows(field, swapped, cfg);
    Rng rng0(cfg.seed + 0);
    auto direct_sw = heun_sample(field, windows[2], cfg, rng0);
    CHECK(bitwise_equal(outs2[0], direct_sw));
}
