#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lmforge/optim.hpp"

using namespace lmforge;

namespace {

Tensor scalar(double v) { return Tensor::from(1, 1, {static_cast<real>(v)}); }

void set_grad(Tensor& t, double g) {
    t.grad();
    t.grad()[0] = static_cast<real>(g);
}

}  // namespace

TEST_CASE("sgd leaves the parameter alone when the gradient is zero") {
    Tensor p = scalar(1.0);
    set_grad(p, 0.0);
    sgd_step(p, 0.5);
    CHECK(p.item() == 1.0);
}

TEST_CASE("sgd arithmetic") {
    Tensor p = scalar(1.0);
    set_grad(p, 2.0);
    sgd_step(p, 0.1);
    CHECK(p.item() == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sgd on a quadratic bowl contracts for lr < 2") {
    // Oracle: x <- x (1 - lr) for loss x^2/2, |1 - lr| < 1 iff lr < 2.
    for (double lr : {0.5, 1.0, 1.9}) {
        Tensor x = scalar(1.0);
        for (int i = 0; i < 400; ++i) {
            set_grad(x, x.item());
            sgd_step(x, lr);
        }
        CHECK(std::abs(x.item()) < 1e-6);
    }
    Tensor x = scalar(1.0);
    for (int i = 0; i < 50; ++i) {
        set_grad(x, x.item());
        sgd_step(x, 2.5);
    }
    CHECK(std::abs(x.item()) > 1.0);  // diverges past the stability bound
}

TEST_CASE("adam never moves with zero gradients") {
    Tensor p = scalar(3.0);
    AdamState s;
    for (int i = 0; i < 10; ++i) {
        set_grad(p, 0.0);
        adam_step(p, s, 0.1);
    }
    CHECK(p.item() == 3.0);
}

TEST_CASE("adam first step is approximately -lr * sign(g)") {
    // Oracle at t=1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
    for (double g : {0.5, -2.0, 1e-3}) {
        Tensor p = scalar(0.0);
        AdamState s;
        set_grad(p, g);
        adam_step(p, s, 0.01);
        const double expected = -0.01 * g / (std::abs(g) + 1e-8);
        CHECK(p.item() == doctest::Approx(expected).epsilon(1e-9));
        CHECK(std::abs(p.item()) <= 0.01 * (1 + 1e-6));  // step bound at t=1
    }
}

TEST_CASE("adam matches a scalar hand computation over three steps") {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double grads[3] = {1.0, -0.5, 0.25};
    // Oracle: the update equations traced with plain doubles.
    double x = 2.0, m = 0, v = 0;
    for (int t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double m_hat = m / (1 - std::pow(b1, t));
        const double v_hat = v / (1 - std::pow(b2, t));
        x -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }

    Tensor p = scalar(2.0);
    AdamState s;
    for (double g : grads) {
        set_grad(p, g);
        adam_step(p, s, lr, b1, b2, eps);
    }
    CHECK(p.item() == doctest::Approx(x).epsilon(1e-14));
}

TEST_CASE("weight decay arithmetic and identity") {
    Tensor p = scalar(1.0);
    apply_weight_decay(p, 0.1, 0.1);
    CHECK(p.item() == doctest::Approx(0.99).epsilon(1e-15));

    Tensor q = scalar(0.7);
    apply_weight_decay(q, 0.5, 0.0);
    CHECK(q.item() == 0.7);
}

TEST_CASE("repeated decays compound as a power") {
    const double lr = 0.05, wd = 0.2;
    const int n = 37;
    Tensor p = scalar(1.0);
    for (int i = 0; i < n; ++i) apply_weight_decay(p, lr, wd);
    CHECK(p.item() == doctest::Approx(std::pow(1.0 - lr * wd, n)).epsilon(1e-12));
}

TEST_CASE("nt-asgd does not trigger without enough history") {
    NtAsgdMonitor m(5);
    for (double loss : {5.0, 4.0, 3.0}) m.observe(loss);
    CHECK_FALSE(m.triggered());
}

TEST_CASE("nt-asgd never triggers on strictly decreasing losses") {
    NtAsgdMonitor m(2);
    double loss = 10.0;
    for (int i = 0; i < 100; ++i) {
        m.observe(loss);
        loss *= 0.99;
        CHECK_FALSE(m.triggered());
    }
}

TEST_CASE("nt-asgd triggers at the derived index on the crafted sequence") {
    // Oracle, n=2: at index 4 the loss 3.6 exceeds min(5,4,3)=3, the best
    // value seen excluding the last two observations.
    NtAsgdMonitor m(2);
    const double losses[] = {5, 4, 3, 3.5, 3.6};
    for (int i = 0; i < 5; ++i) {
        m.observe(losses[i]);
        if (i < 4) CHECK_FALSE(m.triggered());
    }
    CHECK(m.triggered());
    CHECK(m.trigger_step() == 4);
}

TEST_CASE("nt-asgd stays triggered") {
    NtAsgdMonitor m(1);
    for (double loss : {1.0, 2.0}) m.observe(loss);
    REQUIRE(m.triggered());
    const auto step = m.trigger_step();
    for (double loss : {0.1, 0.01, 0.001}) m.observe(loss);
    CHECK(m.triggered());
    CHECK(m.trigger_step() == step);
}

TEST_CASE("asgd averaging") {
    std::vector<Tensor> params{scalar(1.0)};
    const std::vector<int> groups{0};
    const std::vector<double> lrs{1.0};
    const std::vector<bool> frozen{false};
    Optimizer opt(OptimizerKind::sgd, 1);

    CHECK_THROWS_AS(opt.averaged_params(), NotTriggered);

    SUBCASE("a single post-trigger iterate averages to itself") {
        opt.start_averaging(params);
        CHECK(opt.averaged_params()[0][0] == 1.0);
    }

    SUBCASE("two iterates average to their mean") {
        opt.start_averaging(params);  // records 1.0
        set_grad(params[0], -2.0);    // 1.0 - 1.0 * (-2.0) = 3.0
        opt.step(params, groups, lrs, frozen, 0.0);
        CHECK(params[0].item() == doctest::Approx(3.0));
        CHECK(opt.averaged_params()[0][0] == doctest::Approx(2.0));
    }

    SUBCASE("incremental mean equals the recomputed batch mean") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> dist(-1, 1);
        opt.start_averaging(params);
        std::vector<double> iterates{params[0].item()};
        for (int k = 0; k < 57; ++k) {
            set_grad(params[0], dist(rng));
            opt.step(params, groups, lrs, frozen, 0.0);
            iterates.push_back(params[0].item());
        }
        double mean = 0;
        for (double v : iterates) mean += v;
        mean /= static_cast<double>(iterates.size());
        CHECK(std::abs(opt.averaged_params()[0][0] - mean) < 1e-12);
    }
}

TEST_CASE("frozen groups are bitwise invariant under optimizer steps") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> dist(-1, 1);
    std::vector<Tensor> params;
    for (int i = 0; i < 4; ++i) {
        Tensor t(3, 3);
        for (auto& v : t.values()) v = dist(rng);
        params.push_back(t);
    }
    const std::vector<int> groups{0, 0, 1, 1};
    const std::vector<double> lrs{0.1, 0.1};
    const std::vector<bool> frozen{true, false};
    const auto frozen_before = params[0].values();

    Optimizer opt(OptimizerKind::adam, params.size());
    for (int step = 0; step < 20; ++step) {
        for (auto& p : params) {
            p.grad();
            for (auto& g : p.grad()) g = dist(rng);
        }
        opt.step(params, groups, lrs, frozen, 0.1);
    }
    CHECK(params[0].values() == frozen_before);       // frozen: untouched
    CHECK(params[2].values() != std::vector<real>());  // sanity
    bool moved = false;
    for (std::int64_t i = 0; i < params[2].size(); ++i)
        if (params[2].data()[i] != params[3].data()[i]) moved = true;
    CHECK(moved);
}

TEST_CASE("weight decay of zero never changes parameters in a step") {
    std::vector<Tensor> params{scalar(0.37)};
    Optimizer opt(OptimizerKind::sgd, 1);
    set_grad(params[0], 0.0);
    opt.step(params, {0}, {0.5}, {false}, 0.0);
    CHECK(params[0].item() == 0.37);
}

TEST_CASE("clip_grad_norm rescales to the requested norm") {
    std::vector<Tensor> params{Tensor::from(1, 2, {3, 4})};
    params[0].grad() = {3, 4};  // norm 5
    clip_grad_norm(params, 1.0);
    const double norm = std::hypot(params[0].grad()[0], params[0].grad()[1]);
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));

    params[0].grad() = {0.3, 0.4};  // norm 0.5, under the cap: untouched
    clip_grad_norm(params, 1.0);
    CHECK(params[0].grad()[0] == doctest::Approx(0.3));
}

TEST_CASE("optimizer_kind_from rejects unknown names") {
    CHECK(optimizer_kind_from("adam") == OptimizerKind::adam);
    CHECK_THROWS_AS(optimizer_kind_from("rmsprop"), ConfigError);
}
