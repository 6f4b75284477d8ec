#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "jtsp/training.hpp"

namespace jtsp {

// Defer exactly when the top softmax probability falls below tau.
struct ThresholdPolicy {
    double tau = 1.0;
};

int threshold_decide(const ThresholdPolicy& policy, const Vec& p_c);

// Grid search over tau in {0.05, 0.10, ..., 1.00} on validation outputs.
// Among thresholds whose SP accuracy beats cl_acc, the one with the lowest
// deferral rate wins (ties: lower tau); if none qualifies, the tau with the
// best SP accuracy.
double select_threshold(const std::vector<Vec>& val_probs, const std::vector<int>& val_gold,
                        double cl_acc);

// [onehot(predicted_class), p_c, question_accuracy] -> length 2k+1.
Vec lr_features(const Vec& p_c, int predicted_class, double question_acc);

struct LRPolicy {
    Vec weights; // 2k+1 entries
    double bias = 0.0;
    int num_classes = 3;
};

double lr_prob(const LRPolicy& policy, const Vec& features);
int lr_decide(const LRPolicy& policy, const Vec& features); // 1 = defer when prob > 0.5

// Full-batch gradient descent on the logistic loss, weights starting at zero.
LRPolicy train_lr(const std::vector<Vec>& features, const std::vector<int>& defer_labels, int epochs,
                  double learning_rate);

// Classifier training accuracy per question; unseen ids fall back to the
// global training accuracy.
struct QuestionAccuracyTable {
    std::unordered_map<std::string, double> per_question;
    double global_accuracy = 0.0;

    double lookup(const std::string& question_id) const;
};

QuestionAccuracyTable question_accuracy(const SelectiveModel& model,
                                        const std::vector<FeaturizedExample>& train_data);

// The independently trained condition: classifier alone for n+T epochs, then
// the deferral policy alone (classifier frozen) for m+T epochs, cross entropy
// only. Checkpoints are taken per deferral epoch and selected by validation
// SP accuracy.
struct PolicyConditionResult {
    SelectiveModel final_model;
    std::optional<Checkpoint> selected;
    std::vector<EpochRecord> records;
};

PolicyConditionResult policy_condition(const ModelConfig& model_cfg, const TrainConfig& cfg,
                                       const std::vector<FeaturizedExample>& train_data,
                                       const std::vector<FeaturizedExample>& val_data,
                                       const CheckpointMeta* meta = nullptr);

} // namespace jtsp
