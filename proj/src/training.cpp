#include "jtsp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace jtsp {

std::vector<int> dp_labels(const SelectiveModel& model, const std::vector<FeaturizedExample>& data) {
    std::vector<int> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto out = model.cl_forward(data[i].features);
        labels[i] = predict(out.p_c) == data[i].example.gold_label ? 0 : 1;
    }
    return labels;
}

double joint_loss(const Vec& p_c, int gold, const Vec& p_d, int defer_label, bool cl_correct,
                  const LossWeights& weights, const RewardSignal& signal) {
    return weights.alpha * cross_entropy(p_c, gold) + weights.beta * cross_entropy(p_d, defer_label) -
           weights.gamma * per_example_reward(p_d, cl_correct, signal);
}

MetricsRecord evaluate_model(const SelectiveModel& model, const std::vector<FeaturizedExample>& data) {
    std::vector<int> preds(data.size()), gold(data.size()), actions(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto cl = model.cl_forward(data[i].features);
        auto dp = model.dp_forward(data[i].features, cl.h_c);
        preds[i] = predict(cl.p_c);
        gold[i] = data[i].example.gold_label;
        actions[i] = decide(dp.p_d);
    }
    return compute_metrics(preds, gold, actions, model.config().num_classes);
}

double joint_loss_batch(const SelectiveModel& model, const std::vector<JointBatchItem>& batch,
                        const LossWeights& weights, const RewardSignal& signal) {
    if (batch.empty()) throw std::invalid_argument("joint_loss_batch: empty batch");
    double ce_c = 0.0, ce_d = 0.0, r = 0.0;
    for (const JointBatchItem& item : batch) {
        SelectiveModel::Caches c;
        model.cl_forward_train(item.x, c);
        model.dp_forward_train(item.x, c);
        ce_c += cross_entropy(c.p_c, item.gold);
        ce_d += cross_entropy(c.p_d, item.defer_label);
        r += per_example_reward(c.p_d, item.cl_correct, signal);
    }
    double n = double(batch.size());
    return weights.alpha * (ce_c / n) + weights.beta * (ce_d / n) - weights.gamma * (r / n);
}

namespace {

// d(-gamma * R)/dlogits_d for one example: R is affine in p_d, so through the
// softmax the component j picks up p_d[j] * (r_j - R).
void add_reward_grad(Vec& dlogits_d, const Vec& p_d, bool cl_correct, const RewardSignal& s,
                     double gamma_over_n) {
    double keep_r = cl_correct ? s.keep_correct : s.keep_incorrect;
    double defer_r = cl_correct ? s.defer_correct : s.defer_incorrect;
    double r = p_d[0] * keep_r + p_d[1] * defer_r;
    dlogits_d[0] -= gamma_over_n * p_d[0] * (keep_r - r);
    dlogits_d[1] -= gamma_over_n * p_d[1] * (defer_r - r);
}

} // namespace

void joint_backward_batch(SelectiveModel& model, const std::vector<JointBatchItem>& batch,
                          const LossWeights& weights, const RewardSignal& signal,
                          bool dp_grad_into_cl) {
    if (batch.empty()) throw std::invalid_argument("joint_backward_batch: empty batch");
    model.zero_grad();
    double n = double(batch.size());
    for (const JointBatchItem& item : batch) {
        SelectiveModel::Caches c;
        model.cl_forward_train(item.x, c);
        model.dp_forward_train(item.x, c);

        Vec dlogits_c = cross_entropy_grad(c.p_c, item.gold);
        for (double& g : dlogits_c) g *= weights.alpha / n;

        Vec dlogits_d = cross_entropy_grad(c.p_d, item.defer_label);
        for (double& g : dlogits_d) g *= weights.beta / n;
        add_reward_grad(dlogits_d, c.p_d, item.cl_correct, signal, weights.gamma / n);

        model.backward_example(c, dlogits_c, dlogits_d, dp_grad_into_cl);
    }
}

std::size_t select_checkpoint_index(const std::vector<CheckpointChoice>& choices) {
    if (choices.empty()) throw std::invalid_argument("select_checkpoint: no checkpoints");
    std::size_t best = 0;
    for (std::size_t i = 1; i < choices.size(); ++i) {
        const CheckpointChoice& c = choices[i];
        const CheckpointChoice& b = choices[best];
        if (c.sp_acc > b.sp_acc ||
            (c.sp_acc == b.sp_acc && (c.deferral_rate < b.deferral_rate ||
                                      (c.deferral_rate == b.deferral_rate && c.epoch < b.epoch)))) {
            best = i;
        }
    }
    return best;
}

Trainer::Trainer(SelectiveModel model, TrainConfig cfg, std::vector<FeaturizedExample> train_data,
                 std::vector<FeaturizedExample> val_data)
    : model_(std::move(model)), cfg_(std::move(cfg)), train_(std::move(train_data)),
      val_(std::move(val_data)), shuffle_rng_(cfg_.seed ^ 0x5d2e1f3ac4b09687ULL),
      opt_(AdamConfig{cfg_.learning_rate, 0.9, 0.999, 1e-8}) {
    if (cfg_.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg_.warmup_cl_epochs < 0 || cfg_.warmup_dp_epochs < 0 || cfg_.joint_epochs < 0) {
        throw ConfigError("train: epoch counts must be >= 0");
    }
    if (!(cfg_.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (train_.empty()) throw ConfigError("train: no training examples");
    validate_signal(cfg_.reward);
    if (cfg_.weights.alpha < 0 || cfg_.weights.beta < 0 || cfg_.weights.gamma < 0) {
        throw ConfigError("train: loss weights must be >= 0");
    }
    if (cfg_.weights.alpha == 0 && cfg_.weights.beta == 0 && cfg_.weights.gamma == 0) {
        throw ConfigError("train: loss weights must not all be zero");
    }

    cl_fold_.resize(train_.size());
    for (std::size_t i = 0; i < train_.size(); ++i) cl_fold_[i] = i;
    if (cfg_.dp_label_holdout && train_.size() >= 5) {
        // Hold out ~20% of the training data: the classifier never trains on
        // it, and the deferral warmup labels come from there.
        std::vector<std::size_t> pool = cl_fold_;
        RandomStream fold_rng(cfg_.seed ^ 0x9cf1d3b26a84e075ULL);
        fold_rng.shuffle(pool);
        std::size_t holdout = pool.size() / 5;
        dp_fold_.assign(pool.end() - long(holdout), pool.end());
        cl_fold_.assign(pool.begin(), pool.end() - long(holdout));
        std::sort(cl_fold_.begin(), cl_fold_.end());
        std::sort(dp_fold_.begin(), dp_fold_.end());
    } else {
        dp_fold_ = cl_fold_;
    }
}

const Checkpoint& Trainer::selected() const {
    if (!best_) throw std::logic_error("Trainer: no checkpoints were taken");
    return *best_;
}

void Trainer::set_checkpoint_meta(CheckpointMeta meta) {
    meta_ = std::move(meta);
}

std::vector<std::size_t> Trainer::epoch_order(const std::vector<std::size_t>& pool) {
    std::vector<std::size_t> order = pool;
    shuffle_rng_.shuffle(order);
    return order;
}

void Trainer::take_checkpoint(const std::string& phase, int epoch, const MetricsRecord& val) {
    Checkpoint ckpt;
    ckpt.model = model_;
    ckpt.phase = phase;
    ckpt.epoch = epoch;
    ckpt.config_hash = meta_.config_hash;
    ckpt.hash_bits = meta_.hash_bits;
    ckpt.class_names = meta_.class_names;
    ckpt.val_metrics = val;
    if (!cfg_.checkpoint_dir.empty()) {
        std::filesystem::create_directories(cfg_.checkpoint_dir);
        char name[64];
        std::snprintf(name, sizeof(name), "%s_e%03d.ckpt", phase.c_str(), epoch);
        last_checkpoint_path_ = (std::filesystem::path(cfg_.checkpoint_dir) / name).string();
        save_checkpoint(ckpt, last_checkpoint_path_);
    }
    if (!best_ || val.sp_acc > best_->val_metrics->sp_acc ||
        (val.sp_acc == best_->val_metrics->sp_acc &&
         val.deferral_rate < best_->val_metrics->deferral_rate)) {
        best_ = std::move(ckpt);
    }
}

void Trainer::warmup_cl(int epochs) {
    run_phase(Phase::kClWarmup, epochs, false);
    if (epochs >= 1) cl_warmed_ = true;
}

void Trainer::warmup_dp(int epochs, bool take_checkpoints) {
    if (!cl_warmed_) {
        throw std::logic_error("warmup_dp: the classifier warmup must run first (n >= 1)");
    }
    run_phase(Phase::kDpWarmup, epochs, take_checkpoints);
    dp_warmed_ = true;
}

void Trainer::joint_train(int epochs) {
    if (!cl_warmed_ || !dp_warmed_) {
        throw std::logic_error("joint_train: both warmup phases must run first");
    }
    run_phase(Phase::kJoint, epochs, true);
}

void Trainer::run_all() {
    warmup_cl();
    warmup_dp();
    joint_train();
}

void Trainer::run_phase(Phase phase, int epochs, bool take_checkpoints) {
    if (epochs <= 0) return;

    const char* phase_name = phase == Phase::kClWarmup ? "cl_warmup"
                             : phase == Phase::kDpWarmup ? "dp_warmup"
                                                         : "joint";
    model_.set_cl_frozen(phase == Phase::kDpWarmup);
    model_.set_dp_frozen(phase == Phase::kClWarmup);

    const std::vector<std::size_t>& pool = phase == Phase::kClWarmup ? cl_fold_
                                           : phase == Phase::kDpWarmup ? dp_fold_
                                                                       : cl_fold_;
    std::vector<std::size_t> joint_pool;
    if (phase == Phase::kJoint) {
        // The joint phase trains on everything, holdout fold included.
        joint_pool.resize(train_.size());
        for (std::size_t i = 0; i < train_.size(); ++i) joint_pool[i] = i;
    }
    const std::vector<std::size_t>& phase_pool = phase == Phase::kJoint ? joint_pool : pool;

    if (phase == Phase::kDpWarmup) {
        // Labels are fixed once from the frozen classifier.
        dp_warmup_labels_.assign(train_.size(), 0);
        for (std::size_t idx : dp_fold_) {
            auto out = model_.cl_forward(train_[idx].features);
            dp_warmup_labels_[idx] = predict(out.p_c) == train_[idx].example.gold_label ? 0 : 1;
        }
    }

    const double alpha = cfg_.weights.alpha;
    const double beta = cfg_.weights.beta;
    const double gamma = cfg_.weights.gamma;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::vector<std::size_t> order = epoch_order(phase_pool);
        double sum_ce_c = 0.0, sum_ce_d = 0.0, sum_r = 0.0;
        std::size_t seen = 0;

        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg_.batch_size)) {
            std::size_t end = std::min(order.size(), start + std::size_t(cfg_.batch_size));
            BatchStats stats;
            try {
                stats = run_batch(phase, order, start, end);
            } catch (const std::invalid_argument& e) {
                // A forward pass hit non-finite values: the run diverged.
                throw TrainingError(std::string(phase_name) + " epoch " + std::to_string(epoch) +
                                    ": " + e.what());
            }

            double n = double(end - start);
            double batch_loss;
            if (phase == Phase::kClWarmup) {
                batch_loss = stats.ce_c / n;
            } else if (phase == Phase::kDpWarmup) {
                batch_loss = stats.ce_d / n;
            } else {
                batch_loss = alpha * stats.ce_c / n + beta * stats.ce_d / n - gamma * stats.r / n;
            }
            if (!std::isfinite(batch_loss)) {
                std::string note = last_checkpoint_path_.empty()
                                       ? std::string("no checkpoint has been written yet")
                                       : "last good checkpoint: " + last_checkpoint_path_;
                throw TrainingError(std::string(phase_name) + " epoch " + std::to_string(epoch) +
                                    ": non-finite training loss; " + note);
            }

            opt_.step(model_.tensors());
            sum_ce_c += stats.ce_c;
            sum_ce_d += stats.ce_d;
            sum_r += stats.r;
            seen += end - start;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.phase = phase_name;
        double n_seen = double(seen);
        double mean_ce_c = sum_ce_c / n_seen;
        double mean_ce_d = sum_ce_d / n_seen;
        double mean_r = sum_r / n_seen;
        if (phase == Phase::kClWarmup) {
            rec.loss_cl_ce = mean_ce_c;
            rec.loss_total = mean_ce_c;
        } else if (phase == Phase::kDpWarmup) {
            rec.loss_dp_ce = mean_ce_d;
            rec.loss_total = mean_ce_d;
        } else {
            rec.loss_cl_ce = mean_ce_c;
            rec.loss_dp_ce = mean_ce_d;
            rec.reward = mean_r;
            rec.loss_total = alpha * mean_ce_c + beta * mean_ce_d - gamma * mean_r;
        }
        rec.val = val_.empty() ? MetricsRecord{} : evaluate_model(model_, val_);
        records_.push_back(rec);

        if (take_checkpoints) take_checkpoint(phase_name, epoch, rec.val);
    }

    model_.set_cl_frozen(false);
    model_.set_dp_frozen(false);
}

Trainer::BatchStats Trainer::run_batch(Phase phase, const std::vector<std::size_t>& order,
                                       std::size_t start, std::size_t end) {
    const double alpha = cfg_.weights.alpha;
    const double beta = cfg_.weights.beta;
    const double gamma = cfg_.weights.gamma;
    const double n = double(end - start);
    model_.zero_grad();
    BatchStats stats;

    for (std::size_t k = start; k < end; ++k) {
        const FeaturizedExample& ex = train_[order[k]];
        SelectiveModel::Caches c;
        model_.cl_forward_train(ex.features, c);
        stats.ce_c += cross_entropy(c.p_c, ex.example.gold_label);

        if (phase == Phase::kClWarmup) {
            Vec dlogits_c = cross_entropy_grad(c.p_c, ex.example.gold_label);
            for (double& g : dlogits_c) g /= n;
            model_.backward_example(c, dlogits_c, {}, false);
            continue;
        }

        model_.dp_forward_train(ex.features, c);
        bool correct;
        int defer_label;
        if (phase == Phase::kDpWarmup) {
            defer_label = dp_warmup_labels_[order[k]];
            correct = defer_label == 0;
        } else {
            correct = predict(c.p_c) == ex.example.gold_label;
            defer_label = correct ? 0 : 1;
        }
        stats.ce_d += cross_entropy(c.p_d, defer_label);
        stats.r += per_example_reward(c.p_d, correct, cfg_.reward);

        if (phase == Phase::kDpWarmup) {
            Vec dlogits_d = cross_entropy_grad(c.p_d, defer_label);
            for (double& g : dlogits_d) g /= n;
            Vec dlogits_c(c.p_c.size(), 0.0);
            model_.backward_example(c, dlogits_c, dlogits_d, false);
        } else {
            Vec dlogits_c = cross_entropy_grad(c.p_c, ex.example.gold_label);
            for (double& g : dlogits_c) g *= alpha / n;
            Vec dlogits_d = cross_entropy_grad(c.p_d, defer_label);
            for (double& g : dlogits_d) g *= beta / n;
            add_reward_grad(dlogits_d, c.p_d, correct, cfg_.reward, gamma / n);
            model_.backward_example(c, dlogits_c, dlogits_d, cfg_.dp_grad_into_cl);
        }
    }
    return stats;
}

} // namespace jtsp
