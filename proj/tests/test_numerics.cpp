#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "jtsp/numerics.hpp"

using namespace jtsp;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

} // namespace

TEST_CASE("softmax basics") {
    Vec uniform = softmax({0.0, 0.0, 0.0});
    CHECK(uniform[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(uniform[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(uniform[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Vec forced = softmax({std::log(2.0), 0.0, 0.0});
    CHECK(forced[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(forced[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(forced[2] == doctest::Approx(0.25).epsilon(1e-12));

    Vec stable = softmax({100.0, 0.0, 0.0});
    CHECK(all_finite(stable));
    CHECK(stable[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stable[1] < 1e-40);

    CHECK_THROWS_AS(softmax({}), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, std::numeric_limits<double>::infinity()}), std::invalid_argument);
}

TEST_CASE("softmax properties: sums to one, shift invariant") {
    RandomStream rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 2 + rng.next_index(6);
        Vec logits(n);
        for (double& x : logits) x = rng.uniform(-30.0, 30.0);
        Vec p = softmax(logits);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);

        double shift = rng.uniform(-50.0, 50.0);
        Vec shifted = logits;
        for (double& x : shifted) x += shift;
        Vec q = softmax(shifted);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
}

TEST_CASE("cross entropy values and gradient") {
    CHECK(cross_entropy({1.0, 0.0, 0.0}, 0) == 0.0);
    CHECK(cross_entropy({1.0 / 3, 1.0 / 3, 1.0 / 3}, 2) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Vec g = cross_entropy_grad({0.5, 0.25, 0.25}, 0);
    CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(g[2] == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, 2), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, -1), std::invalid_argument);

    // Non-negative, zero only at a perfect prediction.
    RandomStream rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Vec p = softmax({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
        int target = int(rng.next_index(3));
        double ce = cross_entropy(p, target);
        CHECK(ce >= 0.0);
        CHECK((ce == 0.0) == (p[std::size_t(target)] == 1.0));
    }
}

TEST_CASE("argmax ties go to the lowest index") {
    CHECK(argmax({0.2, 0.5, 0.3}) == 1);
    CHECK(argmax({0.5, 0.5}) == 0);
    CHECK(argmax({1.0, 1.0, 1.0}) == 0);
    CHECK_THROWS_AS(argmax({}), std::invalid_argument);
}

TEST_CASE("dense forward rules") {
    DenseLayer identity(2, 2, Activation::kIdentity);
    identity.W(0, 0) = 1.0;
    identity.W(1, 1) = 1.0;
    Vec y = identity.forward({3.0, -4.0});
    CHECK(y[0] == 3.0);
    CHECK(y[1] == -4.0);

    DenseLayer bias_only(3, 2, Activation::kTanh);
    bias_only.b = {0.5, -0.25};
    Vec z = bias_only.forward({1.0, 2.0, 3.0});
    CHECK(z[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
    CHECK(z[1] == doctest::Approx(std::tanh(-0.25)).epsilon(1e-15));

    // Hand matrix arithmetic: [[1,2],[3,4]] * [1,1] = [3,7], relu keeps both.
    DenseLayer relu(2, 2, Activation::kRelu);
    relu.W(0, 0) = 1.0;
    relu.W(0, 1) = 2.0;
    relu.W(1, 0) = 3.0;
    relu.W(1, 1) = 4.0;
    Vec r = relu.forward({1.0, 1.0});
    CHECK(r[0] == 3.0);
    CHECK(r[1] == 7.0);

    CHECK_THROWS_AS(relu.forward(Vec{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("dense backward: chain rule identities") {
    DenseLayer layer(3, 2, Activation::kIdentity);
    RandomStream rng(5);
    layer.init_glorot(rng);
    Vec x = {0.3, -1.2, 2.0};
    DenseCache cache;
    layer.forward(x, cache);
    layer.zero_grad();
    Vec g = {0.7, -0.4};
    Vec dx = layer.backward(cache, g);

    // grad_x = W^T g, grad_W = g x^T, grad_b = g
    for (std::size_t i = 0; i < 3; ++i) {
        double want = layer.W(0, i) * g[0] + layer.W(1, i) * g[1];
        CHECK(dx[i] == doctest::Approx(want).epsilon(1e-15));
    }
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(layer.grad_b[j] == g[j]);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(layer.grad_W(j, i) == doctest::Approx(g[j] * x[i]).epsilon(1e-15));
        }
    }

    // relu with all-negative pre-activations: everything stops.
    DenseLayer dead(2, 2, Activation::kRelu);
    dead.b = {-5.0, -3.0};
    DenseCache dc;
    dead.forward(Vec{0.1, 0.1}, dc);
    dead.zero_grad();
    Vec ddx = dead.backward(dc, {1.0, 1.0});
    CHECK(ddx == Vec{0.0, 0.0});
    for (double v : dead.grad_W.data) CHECK(v == 0.0);
    for (double v : dead.grad_b) CHECK(v == 0.0);

    DenseCache missing;
    CHECK_THROWS_AS(dead.backward(missing, {1.0, 1.0}), std::logic_error);
}

TEST_CASE("dense backward matches finite differences for every activation") {
    for (Activation act : {Activation::kIdentity, Activation::kRelu, Activation::kTanh}) {
        DenseLayer layer(4, 3, act);
        RandomStream rng(17 + int(act));
        layer.init_glorot(rng);
        for (double& v : layer.b) v = rng.uniform(-0.5, 0.5);
        Vec x(4);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        Vec upstream(3);
        for (double& v : upstream) v = rng.uniform(-1.0, 1.0);

        // Scalar objective: dot(upstream, forward(x)).
        auto loss_of_params = [&](const Vec& flat) {
            DenseLayer probe = layer;
            std::vector<TensorRef> refs = {{"W", &probe.W.data, &probe.grad_W.data, false},
                                           {"b", &probe.b, &probe.grad_b, false}};
            assign_values(refs, flat);
            Vec y = probe.forward(x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
            return s;
        };

        std::vector<TensorRef> refs = {{"W", &layer.W.data, &layer.grad_W.data, false},
                                       {"b", &layer.b, &layer.grad_b, false}};
        Vec flat = flatten_values(refs);
        Vec fd = finite_diff_gradient(loss_of_params, flat, 1e-5);

        DenseCache cache;
        layer.forward(x, cache);
        layer.zero_grad();
        Vec dx = layer.backward(cache, upstream);
        Vec analytic = flatten_grads(refs);

        std::size_t ok = 0;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            if (rel_err(analytic[i], fd[i]) < 1e-4) ++ok;
        }
        CHECK(ok == fd.size());

        auto loss_of_x = [&](const Vec& probe_x) {
            Vec y = layer.forward(probe_x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
            return s;
        };
        Vec fdx = finite_diff_gradient(loss_of_x, x, 1e-5);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(rel_err(dx[i], fdx[i]) < 1e-4);
    }
}

TEST_CASE("sparse forward/backward agrees with dense") {
    DenseLayer layer(16, 4, Activation::kTanh);
    RandomStream rng(23);
    layer.init_glorot(rng);
    Vec dense(16, 0.0);
    dense[1] = 0.6;
    dense[7] = -0.3;
    dense[15] = 1.1;
    SparseVec sparse = SparseVec::from_dense(dense);
    CHECK(sparse.entries.size() == 3);
    CHECK(sparse.to_dense() == dense);

    DenseCache dc, sc;
    Vec yd = layer.forward(dense, dc);
    Vec ys = layer.forward(sparse, sc);
    CHECK(yd == ys);

    DenseLayer a = layer, b = layer;
    a.zero_grad();
    b.zero_grad();
    Vec upstream = {0.2, -0.7, 0.4, 1.0};
    a.backward(dc, upstream);
    Vec empty = b.backward(sc, upstream);
    CHECK(empty.empty());
    CHECK(a.grad_W.data == b.grad_W.data);
    CHECK(a.grad_b == b.grad_b);
}

TEST_CASE("optimizer: zero gradient, first step, convergence") {
    Vec params = {1.5, -2.0};
    Vec grads = {0.0, 0.0};
    std::vector<TensorRef> refs = {{"p", &params, &grads, false}};
    AdamOptimizer opt(AdamConfig{0.05, 0.9, 0.999, 1e-8});
    opt.step(refs);
    CHECK(params == Vec{1.5, -2.0});
    CHECK(opt.step_count() == 1);

    // First step with a fresh optimizer: displacement ~ -lr * sign(g).
    Vec p2 = {0.0, 0.0, 0.0};
    Vec g2 = {0.3, -4.0, 1e-3};
    std::vector<TensorRef> refs2 = {{"p", &p2, &g2, false}};
    AdamOptimizer opt2(AdamConfig{0.05, 0.9, 0.999, 1e-8});
    opt2.step(refs2);
    CHECK(p2[0] == doctest::Approx(-0.05).epsilon(1e-6));
    CHECK(p2[1] == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(p2[2] == doctest::Approx(-0.05).epsilon(1e-4));

    // f(x) = x^2 from x = 3 reaches |x| < 1e-3 within 500 steps at lr 0.05.
    Vec x = {3.0};
    Vec gx = {0.0};
    std::vector<TensorRef> refs3 = {{"x", &x, &gx, false}};
    AdamOptimizer opt3(AdamConfig{0.05, 0.9, 0.999, 1e-8});
    int steps = 0;
    for (; steps < 500 && std::abs(x[0]) >= 1e-3; ++steps) {
        gx[0] = 2.0 * x[0];
        opt3.step(refs3);
    }
    CHECK(std::abs(x[0]) < 1e-3);

    Vec bad = {std::nan("")};
    std::vector<TensorRef> refs4 = {{"x", &x, &bad, false}};
    CHECK_THROWS_AS(opt3.step(refs4), TrainingError);
}

TEST_CASE("optimizer skips frozen tensors bit-exactly") {
    Vec frozen_p = {0.25, -0.5};
    Vec live_p = {0.25, -0.5};
    Vec g = {1.0, -1.0};
    std::vector<TensorRef> refs = {{"frozen", &frozen_p, &g, true}, {"live", &live_p, &g, false}};
    AdamOptimizer opt;
    for (int i = 0; i < 100; ++i) opt.step(refs);
    CHECK(frozen_p == Vec{0.25, -0.5});
    CHECK(live_p != Vec{0.25, -0.5});
}

TEST_CASE("finite differences on simple functions") {
    auto square = [](const Vec& v) { return v[0] * v[0]; };
    Vec g = finite_diff_gradient(square, {3.0}, 1e-5);
    CHECK(std::abs(g[0] - 6.0) < 1e-4);

    auto constant = [](const Vec&) { return 42.0; };
    Vec zero = finite_diff_gradient(constant, {1.0, 2.0, 3.0}, 1e-5);
    CHECK(zero == Vec{0.0, 0.0, 0.0});
}

TEST_CASE("random stream: reproducible and uniform-ish") {
    RandomStream a(1234567), b(1234567);
    for (int i = 0; i < 1000000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }

    RandomStream c(99);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double v = c.next_double();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        sum += v;
    }
    CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.05));

    // Different seeds diverge.
    RandomStream d(1), e(2);
    CHECK(d.next_u64() != e.next_u64());

    // Shuffle is a permutation and is seed-stable.
    std::vector<int> v1 = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> v2 = v1;
    RandomStream s1(42), s2(42);
    s1.shuffle(v1);
    s2.shuffle(v2);
    CHECK(v1 == v2);
    std::vector<int> sorted = v1;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("glorot init stays inside the fan bound and is seed-deterministic") {
    DenseLayer l1(10, 6, Activation::kTanh), l2(10, 6, Activation::kTanh);
    RandomStream r1(7), r2(7);
    l1.init_glorot(r1);
    l2.init_glorot(r2);
    CHECK(l1.W.data == l2.W.data);
    double limit = std::sqrt(6.0 / 16.0);
    for (double w : l1.W.data) CHECK(std::abs(w) <= limit);
    for (double bias : l1.b) CHECK(bias == 0.0);
}
