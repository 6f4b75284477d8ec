#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jtsp/evaluation.hpp"
#include "jtsp/numerics.hpp"

namespace jtsp {

struct ModelConfig {
    std::size_t feature_dim = 0;
    std::size_t hidden_cl = 64; // H_C
    std::size_t hidden_dp = 64; // H_D
    int num_classes = 3;
};

// argmax class, lowest index on ties.
int predict(const Vec& p_c);

// 0 = keep, 1 = defer; ties keep.
int decide(const Vec& p_d);

// Classifier: encoder (tanh) -> h_c, head -> 3-way distribution.
// Deferral policy: its own encoder (tanh) -> h_dp, head over [h_c, h_dp]
// (in that fixed order) -> keep/defer distribution.
class SelectiveModel {
public:
    SelectiveModel() = default;
    SelectiveModel(const ModelConfig& cfg, RandomStream& rng);

    const ModelConfig& config() const { return cfg_; }

    struct ClOut {
        Vec h_c;
        Vec p_c;
    };
    struct DpOut {
        Vec h_dp;
        Vec p_d;
    };

    ClOut cl_forward(const SparseVec& x) const;
    ClOut cl_forward(const Vec& x) const;
    DpOut dp_forward(const SparseVec& x, const Vec& h_c) const;
    DpOut dp_forward(const Vec& x, const Vec& h_c) const;

    struct Caches {
        DenseCache cl_enc, cl_head, dp_enc, dp_head;
        Vec h_c, h_dp, p_c, p_d;
    };

    void cl_forward_train(const SparseVec& x, Caches& c) const;
    // Needs cl_forward_train to have filled c.h_c first.
    void dp_forward_train(const SparseVec& x, Caches& c) const;

    // Chain rule from gradients at the two heads' logits. Pass an empty
    // dlogits_d to skip the deferral branch (classifier warmup). When
    // dp_grad_into_cl is false the deferral loss does not reach the
    // classifier encoder through h_c.
    void backward_example(const Caches& c, const Vec& dlogits_c, const Vec& dlogits_d,
                          bool dp_grad_into_cl);

    void zero_grad();
    std::vector<TensorRef> tensors(); // declaration order, stable
    std::vector<std::pair<std::string, const Vec*>> tensor_values() const;

    void set_cl_frozen(bool frozen);
    void set_dp_frozen(bool frozen);
    bool cl_frozen() const { return frozen_[0]; }
    bool dp_frozen() const { return frozen_[4]; }

    DenseLayer cl_encoder;
    DenseLayer cl_head;
    DenseLayer dp_encoder;
    DenseLayer dp_head;

private:
    ModelConfig cfg_;
    bool frozen_[8] = {};
};

struct Checkpoint {
    SelectiveModel model;
    std::string phase = "joint"; // cl_warmup | dp_warmup | joint
    int epoch = 0;
    std::string config_hash;
    int hash_bits = 0;
    std::vector<std::string> class_names;
    std::optional<MetricsRecord> val_metrics;
    std::string extra_json; // optional policy payload, JSON object text
};

// Versioned binary container: magic + version, JSON header (shapes and
// metadata), then the tensors as little-endian 64-bit floats in declaration
// order. Round trips are bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path,
                           std::optional<std::size_t> expect_feature_dim = std::nullopt);

} // namespace jtsp
