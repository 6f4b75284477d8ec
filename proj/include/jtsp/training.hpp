#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jtsp/dataset.hpp"
#include "jtsp/evaluation.hpp"
#include "jtsp/model.hpp"
#include "jtsp/reward.hpp"

namespace jtsp {

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
};

struct TrainConfig {
    int warmup_cl_epochs = 10; // n
    int warmup_dp_epochs = 10; // m
    int joint_epochs = 30;     // T
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
    LossWeights weights;
    RewardSignal reward;
    std::string checkpoint_dir;  // empty: keep the running best in memory only
    bool dp_grad_into_cl = true; // let the deferral loss reach theta through h_c
    bool dp_label_holdout = false;
};

struct EpochRecord {
    int epoch = 0;
    std::string phase; // cl_warmup | dp_warmup | joint
    double loss_cl_ce = 0.0;
    double loss_dp_ce = 0.0;
    double reward = 0.0;
    double loss_total = 0.0;
    MetricsRecord val;
};

// Defer label per example: 1 exactly when the classifier's argmax misses gold.
std::vector<int> dp_labels(const SelectiveModel& model, const std::vector<FeaturizedExample>& data);

// Per-example joint objective: alpha*CE(p_c, gold) + beta*CE(p_d, defer) - gamma*R.
double joint_loss(const Vec& p_c, int gold, const Vec& p_d, int defer_label, bool cl_correct,
                  const LossWeights& weights, const RewardSignal& signal);

// Test/val evaluation of the two-decision system on featurized data.
MetricsRecord evaluate_model(const SelectiveModel& model, const std::vector<FeaturizedExample>& data);

// Fixed-label batch item: correctness and the defer label are constants here,
// which is also what makes the loss differentiable for gradient checks.
struct JointBatchItem {
    SparseVec x;
    int gold = 0;
    int defer_label = 0;
    bool cl_correct = false;
};

double joint_loss_batch(const SelectiveModel& model, const std::vector<JointBatchItem>& batch,
                        const LossWeights& weights, const RewardSignal& signal);

// zero_grad + accumulate gradients of joint_loss_batch into the model buffers.
void joint_backward_batch(SelectiveModel& model, const std::vector<JointBatchItem>& batch,
                          const LossWeights& weights, const RewardSignal& signal,
                          bool dp_grad_into_cl = true);

// Metadata stamped into checkpoints (config hash, featurizer, label names).
struct CheckpointMeta {
    std::string config_hash;
    int hash_bits = 0;
    std::vector<std::string> class_names;
};

// Checkpoint selection: maximize validation SP accuracy, ties broken by lower
// deferral rate, then earlier epoch.
struct CheckpointChoice {
    double sp_acc = 0.0;
    double deferral_rate = 0.0;
    int epoch = 0;
};
std::size_t select_checkpoint_index(const std::vector<CheckpointChoice>& choices);

// The three-phase regimen. Phase order is enforced: the joint phase requires
// both warmups, and the deferral warmup requires a classifier warmup of at
// least one epoch.
class Trainer {
public:
    Trainer(SelectiveModel model, TrainConfig cfg, std::vector<FeaturizedExample> train_data,
            std::vector<FeaturizedExample> val_data);

    void warmup_cl() { warmup_cl(cfg_.warmup_cl_epochs); }
    void warmup_cl(int epochs);
    void warmup_dp(int epochs, bool take_checkpoints);
    void warmup_dp() { warmup_dp(cfg_.warmup_dp_epochs, false); }
    void joint_train() { joint_train(cfg_.joint_epochs); }
    void joint_train(int epochs);
    void run_all();

    SelectiveModel& model() { return model_; }
    const SelectiveModel& model() const { return model_; }
    const std::vector<EpochRecord>& records() const { return records_; }
    const TrainConfig& config() const { return cfg_; }

    bool has_selected() const { return best_.has_value(); }
    const Checkpoint& selected() const;

    // Metadata stamped into every checkpoint this trainer writes.
    void set_checkpoint_meta(CheckpointMeta meta);

private:
    enum class Phase { kClWarmup, kDpWarmup, kJoint };

    struct BatchStats {
        double ce_c = 0.0;
        double ce_d = 0.0;
        double r = 0.0;
    };

    void run_phase(Phase phase, int epochs, bool take_checkpoints);
    BatchStats run_batch(Phase phase, const std::vector<std::size_t>& order, std::size_t start,
                         std::size_t end);
    void take_checkpoint(const std::string& phase, int epoch, const MetricsRecord& val);
    std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& pool);

    SelectiveModel model_;
    TrainConfig cfg_;
    std::vector<FeaturizedExample> train_;
    std::vector<FeaturizedExample> val_;
    RandomStream shuffle_rng_;
    AdamOptimizer opt_;
    std::vector<EpochRecord> records_;
    std::optional<Checkpoint> best_;
    std::string last_checkpoint_path_;

    std::vector<std::size_t> cl_fold_; // classifier warmup pool
    std::vector<std::size_t> dp_fold_; // deferral warmup pool
    std::vector<int> dp_warmup_labels_;

    CheckpointMeta meta_;

    bool cl_warmed_ = false;
    bool dp_warmed_ = false;
};

} // namespace jtsp
