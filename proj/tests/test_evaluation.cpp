#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jtsp/evaluation.hpp"
#include "jtsp/numerics.hpp"

using namespace jtsp;

TEST_CASE("outcome matrix cells") {
    // All correct, never defer.
    std::vector<int> gold = {0, 1, 2, 0, 1};
    OutcomeCounts c = outcome_matrix(gold, gold, std::vector<int>(5, 0));
    CHECK(c.keep_correct == 5);
    CHECK(c.total() == 5);

    // All incorrect, always defer.
    std::vector<int> wrong = {1, 2, 0, 1, 2};
    c = outcome_matrix(wrong, gold, std::vector<int>(5, 1));
    CHECK(c.defer_incorrect == 5);

    // Hand count: 7 correct kept, 3 incorrect of which 2 deferred.
    std::vector<int> g(10, 0), p(10, 0), a(10, 0);
    p[7] = p[8] = p[9] = 1; // three misses
    a[8] = a[9] = 1;        // two of them deferred
    c = outcome_matrix(p, g, a);
    CHECK(c.keep_correct == 7);
    CHECK(c.defer_correct == 0);
    CHECK(c.keep_incorrect == 1);
    CHECK(c.defer_incorrect == 2);

    CHECK_THROWS_AS(outcome_matrix({0}, {0, 1}, {0, 0}), std::invalid_argument);
}

TEST_CASE("compute_metrics on the hand-counted case") {
    std::vector<int> g(10, 0), p(10, 0), a(10, 0);
    p[7] = p[8] = p[9] = 1;
    a[8] = a[9] = 1;
    MetricsRecord m = compute_metrics(p, g, a, 3);
    CHECK(m.deferral_rate == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(m.cl_acc == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(m.dp_acc == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.sp_acc == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.n == 10);

    CHECK_THROWS_AS(compute_metrics({}, {}, {}, 3), std::invalid_argument);
}

TEST_CASE("never defer / always defer boundaries") {
    std::vector<int> gold = {0, 1, 2, 1, 0, 2};
    std::vector<int> preds = {0, 1, 0, 1, 1, 2}; // 4 of 6 correct

    MetricsRecord keep_all = compute_metrics(preds, gold, std::vector<int>(6, 0), 3);
    CHECK(keep_all.sp_acc == doctest::Approx(keep_all.cl_acc).epsilon(1e-12));
    CHECK(keep_all.dp_acc == doctest::Approx(keep_all.cl_acc).epsilon(1e-12));
    CHECK(keep_all.deferral_rate == 0.0);

    // The degenerate always-defer outcome: perfect accuracy at full human effort.
    MetricsRecord defer_all = compute_metrics(preds, gold, std::vector<int>(6, 1), 3);
    CHECK(defer_all.sp_acc == 1.0);
    CHECK(defer_all.deferral_rate == 1.0);
}

TEST_CASE("metric identities hold exactly on random triples") {
    RandomStream rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t n = 1 + rng.next_index(30);
        std::vector<int> gold(n), preds(n), actions(n);
        // Mix in forced boundary cases: all-keep and all-defer.
        int mode = trial % 4;
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = int(rng.next_index(3));
            preds[i] = int(rng.next_index(3));
            actions[i] = mode == 0 ? 0 : mode == 1 ? 1 : int(rng.next_index(2));
        }
        MetricsRecord m = compute_metrics(preds, gold, actions, 3);
        const auto& c = m.counts;
        double N = double(n);

        REQUIRE(m.sp_acc == m.cl_acc + double(c.defer_incorrect) / N);
        REQUIRE(m.dp_acc == 1.0 - double(c.defer_correct + c.keep_incorrect) / N);
        if (m.deferral_rate == 0.0) REQUIRE(m.sp_acc == m.cl_acc);
        if (m.deferral_rate == 1.0) REQUIRE(m.sp_acc == 1.0);

        // Posts hold to rounding.
        REQUIRE(std::abs(m.cl_acc - double(c.keep_correct + c.defer_correct) / N) < 1e-12);
        REQUIRE(std::abs(m.sp_acc -
                         double(c.keep_correct + c.defer_correct + c.defer_incorrect) / N) < 1e-12);
        REQUIRE(c.total() == n);
    }
}

TEST_CASE("compute_metrics is invariant to example order") {
    RandomStream rng(13);
    std::size_t n = 50;
    std::vector<int> gold(n), preds(n), actions(n);
    for (std::size_t i = 0; i < n; ++i) {
        gold[i] = int(rng.next_index(3));
        preds[i] = int(rng.next_index(3));
        actions[i] = int(rng.next_index(2));
    }
    MetricsRecord a = compute_metrics(preds, gold, actions, 3);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<int> g2(n), p2(n), a2(n);
    for (std::size_t i = 0; i < n; ++i) {
        g2[i] = gold[perm[i]];
        p2[i] = preds[perm[i]];
        a2[i] = actions[perm[i]];
    }
    MetricsRecord b = compute_metrics(p2, g2, a2, 3);
    CHECK(a.cl_acc == b.cl_acc);
    CHECK(a.sp_acc == b.sp_acc);
    CHECK(a.dp_acc == b.dp_acc);
    CHECK(a.cl_f1 == b.cl_f1);
    CHECK(a.sp_f1 == b.sp_f1);
    CHECK(a.dp_f1 == b.dp_f1);
    CHECK(a.deferral_rate == b.deferral_rate);
}

TEST_CASE("macro F1 hand cases") {
    // Perfect predictions.
    CHECK(macro_f1({0, 1, 2, 1}, {0, 1, 2, 1}, 3) == 1.0);

    // Balanced binary gold, everything predicted class 0:
    // class 0 F1 = 2/3, class 1 F1 = 0, macro = 1/3.
    std::vector<int> gold = {0, 0, 1, 1};
    std::vector<int> preds = {0, 0, 0, 0};
    CHECK(macro_f1(preds, gold, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Single-class gold predicted perfectly: classes absent from gold are
    // excluded from the mean.
    CHECK(macro_f1({1, 1, 1}, {1, 1, 1}, 3) == 1.0);

    CHECK_THROWS_AS(macro_f1({3}, {0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(macro_f1({0}, {5}, 3), std::invalid_argument);
}

TEST_CASE("deferral F1 is the F1 of the defer class") {
    // a=3 kept-correct, b=1 deferred-correct, c=1 kept-incorrect, d=1 deferred-incorrect.
    std::vector<int> gold = {0, 0, 0, 0, 0, 0};
    std::vector<int> preds = {0, 0, 0, 0, 1, 1};
    std::vector<int> acts = {0, 0, 0, 1, 0, 1};
    MetricsRecord m = compute_metrics(preds, gold, acts, 3);
    // tp=d=1, fp=b=1, fn=c=1.
    CHECK(m.dp_f1 == doctest::Approx(2.0 * 1.0 / (2.0 + 1.0 + 1.0)).epsilon(1e-12));
    // Macro over keep/defer is logged too and differs here: keep F1 = 0.75.
    CHECK(m.dp_f1_macro == doctest::Approx((0.75 + 0.5) / 2.0).epsilon(1e-12));
    CHECK(m.dp_f1_macro != m.dp_f1);
}

TEST_CASE("sp F1 uses the substituted labels") {
    std::vector<int> gold = {0, 1, 2};
    std::vector<int> preds = {1, 1, 0};
    std::vector<int> acts = {1, 0, 1}; // both misses deferred
    MetricsRecord m = compute_metrics(preds, gold, acts, 3);
    CHECK(m.sp_acc == 1.0);
    CHECK(m.sp_f1 == 1.0);
}
