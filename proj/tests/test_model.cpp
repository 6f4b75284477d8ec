#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "jtsp/model.hpp"

using namespace jtsp;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.feature_dim = 6;
    cfg.hidden_cl = 4;
    cfg.hidden_dp = 5;
    cfg.num_classes = 3;
    return cfg;
}

SelectiveModel tiny_model(std::uint64_t seed = 21) {
    RandomStream rng(seed);
    return SelectiveModel(tiny_config(), rng);
}

Vec random_input(RandomStream& rng, std::size_t dim) {
    Vec x(dim);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

} // namespace

TEST_CASE("predict and decide tie-breaking") {
    CHECK(predict({0.2, 0.5, 0.3}) == 1);
    CHECK(predict({0.4, 0.4, 0.2}) == 0);
    CHECK(decide({0.5, 0.5}) == 0); // tie keeps
    CHECK(decide({0.3, 0.7}) == 1);
    CHECK(decide({0.7, 0.3}) == 0);
    CHECK_THROWS_AS(decide({0.2, 0.3, 0.5}), std::invalid_argument);
}

TEST_CASE("zero-weight forwards give uniform distributions") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(3);
    SelectiveModel m(cfg, rng);
    for (double& w : m.cl_encoder.W.data) w = 0.0;
    for (double& w : m.cl_head.W.data) w = 0.0;
    for (double& w : m.dp_head.W.data) w = 0.0;

    Vec x = {1.0, -0.5, 0.25, 0.0, 2.0, -1.0};
    auto cl = m.cl_forward(x);
    CHECK(cl.p_c[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(cl.p_c[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(cl.p_c[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    auto dp = m.dp_forward(x, cl.h_c);
    CHECK(dp.p_d[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dp.p_d[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward passes are pure") {
    SelectiveModel m = tiny_model();
    RandomStream rng(8);
    Vec x = random_input(rng, 6);
    auto a = m.cl_forward(x);
    auto b = m.cl_forward(x);
    CHECK(a.p_c == b.p_c);
    CHECK(a.h_c == b.h_c);
    auto da = m.dp_forward(x, a.h_c);
    auto db = m.dp_forward(x, b.h_c);
    CHECK(da.p_d == db.p_d);

    CHECK_THROWS_AS(m.cl_forward(Vec{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("deferral head consumes [h_c, h_dp] in that order") {
    SelectiveModel m = tiny_model(5);
    RandomStream rng(9);
    Vec x = random_input(rng, 6);
    auto cl = m.cl_forward(x);
    auto dp = m.dp_forward(x, cl.h_c);

    // Recompute by hand with the documented order.
    Vec h_dp = m.dp_encoder.forward(x);
    Vec concat;
    concat.insert(concat.end(), cl.h_c.begin(), cl.h_c.end());
    concat.insert(concat.end(), h_dp.begin(), h_dp.end());
    Vec logits = m.dp_head.forward(concat);
    Vec want = softmax(logits);
    CHECK(dp.p_d == want);

    // Swapping the halves changes the output, so the order is contractual.
    // Equal widths here so the swapped concat stays dimension-valid.
    ModelConfig eq = tiny_config();
    eq.hidden_dp = eq.hidden_cl;
    RandomStream rng2(31);
    SelectiveModel m2(eq, rng2);
    auto cl2 = m2.cl_forward(x);
    Vec h_dp2 = m2.dp_encoder.forward(x);
    Vec c1, c2;
    c1.insert(c1.end(), cl2.h_c.begin(), cl2.h_c.end());
    c1.insert(c1.end(), h_dp2.begin(), h_dp2.end());
    c2.insert(c2.end(), h_dp2.begin(), h_dp2.end());
    c2.insert(c2.end(), cl2.h_c.begin(), cl2.h_c.end());
    CHECK(softmax(m2.dp_head.forward(c1)) != softmax(m2.dp_head.forward(c2)));
    CHECK(m2.dp_forward(x, cl2.h_c).p_d == softmax(m2.dp_head.forward(c1)));
}

TEST_CASE("classifier gradients match finite differences") {
    SelectiveModel model = tiny_model(11);
    RandomStream rng(12);
    Vec x = random_input(rng, 6);
    SparseVec xs = SparseVec::from_dense(x);
    int gold = 1;

    auto loss_of = [&](const Vec& flat) {
        SelectiveModel probe = model;
        assign_values(probe.tensors(), flat);
        return cross_entropy(probe.cl_forward(xs).p_c, gold);
    };
    Vec flat = flatten_values(model.tensors());
    Vec fd = finite_diff_gradient(loss_of, flat, 1e-5);

    SelectiveModel::Caches c;
    model.cl_forward_train(xs, c);
    model.zero_grad();
    model.backward_example(c, cross_entropy_grad(c.p_c, gold), {}, false);
    Vec analytic = flatten_grads(model.tensors());

    REQUIRE(analytic.size() == fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
        CHECK(rel_err(analytic[i], fd[i]) < 1e-4);
    }
}

TEST_CASE("deferral gradients reach both parameter sets through h_c") {
    SelectiveModel model = tiny_model(14);
    RandomStream rng(15);
    Vec x = random_input(rng, 6);
    SparseVec xs = SparseVec::from_dense(x);
    int defer_label = 1;

    auto loss_of = [&](const Vec& flat) {
        SelectiveModel probe = model;
        assign_values(probe.tensors(), flat);
        SelectiveModel::Caches c;
        probe.cl_forward_train(xs, c);
        probe.dp_forward_train(xs, c);
        return cross_entropy(c.p_d, defer_label);
    };
    Vec flat = flatten_values(model.tensors());
    Vec fd = finite_diff_gradient(loss_of, flat, 1e-5);

    SelectiveModel::Caches c;
    model.cl_forward_train(xs, c);
    model.dp_forward_train(xs, c);
    model.zero_grad();
    Vec zero_c(c.p_c.size(), 0.0);
    model.backward_example(c, zero_c, cross_entropy_grad(c.p_d, defer_label), true);
    Vec analytic = flatten_grads(model.tensors());

    std::size_t bad = 0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        if (rel_err(analytic[i], fd[i]) >= 1e-4) ++bad;
    }
    CHECK(bad == 0);

    // The classifier encoder really does receive gradient through h_c.
    auto refs = model.tensors();
    double cl_grad_norm = 0.0;
    for (double g : *refs[0].grad) cl_grad_norm += g * g;
    CHECK(cl_grad_norm > 0.0);

    // With the flow switched off, theta gradients vanish.
    model.zero_grad();
    model.backward_example(c, zero_c, cross_entropy_grad(c.p_d, defer_label), false);
    for (int t = 0; t < 4; ++t) {
        for (double g : *model.tensors()[std::size_t(t)].grad) CHECK(g == 0.0);
    }
}

TEST_CASE("the deferral decision depends on the classifier parameters") {
    SelectiveModel m = tiny_model(17);
    RandomStream rng(18);
    Vec x = random_input(rng, 6);
    auto before = m.dp_forward(x, m.cl_forward(x).h_c);

    m.cl_encoder.W(0, 0) += 0.25; // phi untouched
    auto after = m.dp_forward(x, m.cl_forward(x).h_c);
    CHECK(before.p_d != after.p_d);
}

TEST_CASE("dp_forward_train without a classifier pass is an error") {
    SelectiveModel m = tiny_model();
    SelectiveModel::Caches c;
    SparseVec x = SparseVec::from_dense(Vec(6, 0.1));
    CHECK_THROWS_AS(m.dp_forward_train(x, c), std::logic_error);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    SelectiveModel m = tiny_model(23);
    RandomStream rng(24);
    Vec x = random_input(rng, 6);
    auto before_cl = m.cl_forward(x);
    auto before_dp = m.dp_forward(x, before_cl.h_c);

    Checkpoint ckpt;
    ckpt.model = m;
    ckpt.phase = "joint";
    ckpt.epoch = 12;
    ckpt.config_hash = "deadbeef00000000";
    ckpt.hash_bits = 4;
    ckpt.class_names = {"Correct", "Incorrect", "Contradictory"};
    MetricsRecord val;
    val.sp_acc = 0.875;
    val.deferral_rate = 0.125;
    val.n = 8;
    ckpt.val_metrics = val;

    std::string path = (fs::temp_directory_path() / "jtsp_model_test.ckpt").string();
    save_checkpoint(ckpt, path);
    Checkpoint loaded = load_checkpoint(path);

    auto after_cl = loaded.model.cl_forward(x);
    auto after_dp = loaded.model.dp_forward(x, after_cl.h_c);
    CHECK(after_cl.p_c == before_cl.p_c); // 0 ULP
    CHECK(after_cl.h_c == before_cl.h_c);
    CHECK(after_dp.p_d == before_dp.p_d);
    CHECK(loaded.phase == "joint");
    CHECK(loaded.epoch == 12);
    CHECK(loaded.config_hash == "deadbeef00000000");
    CHECK(loaded.hash_bits == 4);
    CHECK(loaded.class_names == ckpt.class_names);
    REQUIRE(loaded.val_metrics.has_value());
    CHECK(loaded.val_metrics->sp_acc == 0.875);

    // Same tensors byte for byte when saved again.
    std::string path2 = (fs::temp_directory_path() / "jtsp_model_test2.ckpt").string();
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint load failures") {
    SelectiveModel m = tiny_model(29);
    Checkpoint ckpt;
    ckpt.model = m;
    ckpt.phase = "cl_warmup";
    ckpt.class_names = {"a", "b", "c"};
    std::string path = (fs::temp_directory_path() / "jtsp_model_test3.ckpt").string();
    save_checkpoint(ckpt, path);

    // Mismatched feature_dim must be an explicit error.
    CHECK_THROWS_AS(load_checkpoint(path, 32), CheckpointError);
    CHECK_NOTHROW(load_checkpoint(path, 6));

    // Corrupt magic.
    std::string bad = (fs::temp_directory_path() / "jtsp_model_bad.ckpt").string();
    {
        std::ofstream out(bad, std::ios::binary);
        out << "NOPE this is not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);

    // Truncated payload.
    {
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(bad, std::ios::binary);
        out << all.substr(0, all.size() - 16);
    }
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);

    CHECK_THROWS_AS(load_checkpoint((fs::temp_directory_path() / "missing.ckpt").string()),
                    CheckpointError);

    // Phase tags are constrained.
    Checkpoint weird = ckpt;
    weird.phase = "afterparty";
    CHECK_THROWS_AS(save_checkpoint(weird, path), CheckpointError);
}

TEST_CASE("freeze flags land in the tensor refs") {
    SelectiveModel m = tiny_model(33);
    m.set_cl_frozen(true);
    auto refs = m.tensors();
    for (int i = 0; i < 4; ++i) CHECK(refs[std::size_t(i)].frozen);
    for (int i = 4; i < 8; ++i) CHECK(!refs[std::size_t(i)].frozen);

    // Frozen parameters receive zero update across 100 optimizer steps.
    Vec theta_before = flatten_values({refs.begin(), refs.begin() + 4});
    AdamOptimizer opt;
    RandomStream rng(34);
    for (int step = 0; step < 100; ++step) {
        auto ts = m.tensors();
        for (auto& t : ts) {
            for (double& g : *t.grad) g = rng.uniform(-1.0, 1.0);
        }
        opt.step(ts);
    }
    auto refs_after = m.tensors();
    Vec theta_after = flatten_values({refs_after.begin(), refs_after.begin() + 4});
    CHECK(theta_before == theta_after);
    m.set_cl_frozen(false);
}
