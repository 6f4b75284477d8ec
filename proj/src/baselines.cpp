#include "jtsp/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace jtsp {

int threshold_decide(const ThresholdPolicy& policy, const Vec& p_c) {
    double mx = *std::max_element(p_c.begin(), p_c.end());
    return mx < policy.tau ? 1 : 0;
}

double select_threshold(const std::vector<Vec>& val_probs, const std::vector<int>& val_gold,
                        double cl_acc) {
    if (val_probs.empty() || val_probs.size() != val_gold.size()) {
        throw std::invalid_argument("select_threshold: empty or mismatched validation set");
    }
    std::vector<int> preds(val_probs.size());
    for (std::size_t i = 0; i < val_probs.size(); ++i) preds[i] = argmax(val_probs[i]);
    int num_classes = 0;
    for (int g : val_gold) num_classes = std::max(num_classes, g + 1);
    for (int p : preds) num_classes = std::max(num_classes, p + 1);

    struct Candidate {
        double tau, sp_acc, dr;
    };
    std::vector<Candidate> grid;
    for (int k = 1; k <= 20; ++k) {
        ThresholdPolicy pol{double(k) * 0.05};
        std::vector<int> actions(val_probs.size());
        for (std::size_t i = 0; i < val_probs.size(); ++i) {
            actions[i] = threshold_decide(pol, val_probs[i]);
        }
        MetricsRecord m = compute_metrics(preds, val_gold, actions, num_classes);
        grid.push_back({pol.tau, m.sp_acc, m.deferral_rate});
    }

    const Candidate* best = nullptr;
    for (const Candidate& c : grid) {
        if (c.sp_acc <= cl_acc) continue;
        if (!best || c.dr < best->dr || (c.dr == best->dr && c.tau < best->tau)) best = &c;
    }
    if (!best) {
        for (const Candidate& c : grid) {
            if (!best || c.sp_acc > best->sp_acc ||
                (c.sp_acc == best->sp_acc &&
                 (c.dr < best->dr || (c.dr == best->dr && c.tau < best->tau)))) {
                best = &c;
            }
        }
    }
    return best->tau;
}

Vec lr_features(const Vec& p_c, int predicted_class, double question_acc) {
    if (predicted_class < 0 || std::size_t(predicted_class) >= p_c.size()) {
        throw std::invalid_argument("lr_features: predicted class out of range");
    }
    Vec f(2 * p_c.size() + 1, 0.0);
    f[std::size_t(predicted_class)] = 1.0;
    for (std::size_t i = 0; i < p_c.size(); ++i) f[p_c.size() + i] = p_c[i];
    f.back() = question_acc;
    return f;
}

double lr_prob(const LRPolicy& policy, const Vec& features) {
    if (features.size() != policy.weights.size()) {
        throw std::invalid_argument("lr_prob: feature layout mismatch (got " +
                                    std::to_string(features.size()) + ", policy expects " +
                                    std::to_string(policy.weights.size()) + ")");
    }
    double z = policy.bias;
    for (std::size_t i = 0; i < features.size(); ++i) z += policy.weights[i] * features[i];
    return 1.0 / (1.0 + std::exp(-z));
}

int lr_decide(const LRPolicy& policy, const Vec& features) {
    return lr_prob(policy, features) > 0.5 ? 1 : 0;
}

LRPolicy train_lr(const std::vector<Vec>& features, const std::vector<int>& defer_labels, int epochs,
                  double learning_rate) {
    if (features.empty() || features.size() != defer_labels.size()) {
        throw std::invalid_argument("train_lr: empty or mismatched training data");
    }
    LRPolicy policy;
    policy.weights.assign(features[0].size(), 0.0);
    policy.num_classes = int((features[0].size() - 1) / 2);
    double n = double(features.size());

    Vec grad_w(policy.weights.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            double err = lr_prob(policy, features[i]) - double(defer_labels[i]);
            for (std::size_t k = 0; k < grad_w.size(); ++k) grad_w[k] += err * features[i][k];
            grad_b += err;
        }
        for (std::size_t k = 0; k < grad_w.size(); ++k) {
            policy.weights[k] -= learning_rate * grad_w[k] / n;
            if (!std::isfinite(policy.weights[k])) {
                throw TrainingError("train_lr: weights diverged at epoch " + std::to_string(epoch));
            }
        }
        policy.bias -= learning_rate * grad_b / n;
    }
    return policy;
}

double QuestionAccuracyTable::lookup(const std::string& question_id) const {
    auto it = per_question.find(question_id);
    return it != per_question.end() ? it->second : global_accuracy;
}

QuestionAccuracyTable question_accuracy(const SelectiveModel& model,
                                        const std::vector<FeaturizedExample>& train_data) {
    QuestionAccuracyTable table;
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> counts; // correct, total
    std::size_t correct_total = 0;
    for (const FeaturizedExample& ex : train_data) {
        auto out = model.cl_forward(ex.features);
        bool correct = predict(out.p_c) == ex.example.gold_label;
        auto& [c, t] = counts[ex.example.question_id];
        c += correct ? 1 : 0;
        ++t;
        correct_total += correct ? 1 : 0;
    }
    for (const auto& [qid, ct] : counts) {
        table.per_question[qid] = double(ct.first) / double(ct.second);
    }
    table.global_accuracy = train_data.empty() ? 0.0 : double(correct_total) / double(train_data.size());
    return table;
}

PolicyConditionResult policy_condition(const ModelConfig& model_cfg, const TrainConfig& cfg,
                                       const std::vector<FeaturizedExample>& train_data,
                                       const std::vector<FeaturizedExample>& val_data,
                                       const CheckpointMeta* meta) {
    RandomStream rng(cfg.seed);
    SelectiveModel model(model_cfg, rng);
    Trainer trainer(std::move(model), cfg, train_data, val_data);
    if (meta) trainer.set_checkpoint_meta(*meta);
    trainer.warmup_cl(cfg.warmup_cl_epochs + cfg.joint_epochs);
    trainer.warmup_dp(cfg.warmup_dp_epochs + cfg.joint_epochs, true);
    PolicyConditionResult result;
    result.final_model = trainer.model();
    if (trainer.has_selected()) result.selected = trainer.selected();
    result.records = trainer.records();
    return result;
}

} // namespace jtsp
