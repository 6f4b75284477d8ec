#include "jtsp/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "metrics_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace jtsp {

const std::vector<std::string> kConditions = {"thresh", "lr", "policy", "jtsp_ce", "jtsp"};

namespace {

// Published per-dataset loss-weight settings, selectable by name.
const std::map<std::string, LossWeights> kWeightPresets = {
    {"beetle", {0.01, 0.01, 15.0}},
    {"scients", {0.1, 0.1, 10.0}},
    {"midphys", {0.1, 0.1, 1.0}},
    {"istudio", {1.0, 1.0, 1.0}},
};

std::string fmt_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
    if (!out) throw ConfigError("write failed for " + path);
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& j, const char* what) {
    if (!j.is_number()) throw ConfigError(std::string(what) + " must be a number");
    return j.get<double>();
}

int get_int(const json& j, const char* what) {
    if (!j.is_number_integer()) throw ConfigError(std::string(what) + " must be an integer");
    return j.get<int>();
}

bool get_bool(const json& j, const char* what) {
    if (!j.is_boolean()) throw ConfigError(std::string(what) + " must be a boolean");
    return j.get<bool>();
}

std::string get_str(const json& j, const char* what) {
    if (!j.is_string()) throw ConfigError(std::string(what) + " must be a string");
    return j.get<std::string>();
}

} // namespace

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.feature_dim = std::size_t(1) << hash_bits;
    mc.hidden_cl = hidden_cl;
    mc.hidden_dp = hidden_dp;
    mc.num_classes = labels.num_classes();
    return mc;
}

CheckpointMeta RunConfig::checkpoint_meta() const {
    return {config_hash, hash_bits, labels.names};
}

namespace {

// True when the config document carries an explicit reward signal; the jtsp
// condition demands one.
bool parse_into(RunConfig& cfg, const json& root) {
    bool reward_specified = false;
    if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");

    if (const json* j = find(root, "condition")) {
        cfg.condition = get_str(*j, "condition");
        if (std::find(kConditions.begin(), kConditions.end(), cfg.condition) == kConditions.end()) {
            throw ConfigError("config: unknown condition '" + cfg.condition + "'");
        }
    }
    if (const json* j = find(root, "output_dir")) cfg.output_dir = get_str(*j, "output_dir");
    if (const json* j = find(root, "threads")) {
        cfg.threads = get_int(*j, "threads");
        if (cfg.threads < 1) throw ConfigError("config: threads must be >= 1");
    }

    if (const json* data = find(root, "data")) {
        std::string source = "synthetic";
        if (const json* j = find(*data, "source")) source = get_str(*j, "data.source");
        if (source == "synthetic") {
            cfg.synthetic = true;
        } else if (source == "files") {
            cfg.synthetic = false;
        } else {
            throw ConfigError("config: data.source must be synthetic or files");
        }
        if (const json* j = find(*data, "format")) cfg.format = parse_format(get_str(*j, "data.format"));
        if (const json* j = find(*data, "class_names")) {
            if (!j->is_array() || j->empty()) throw ConfigError("config: class_names must be a non-empty array");
            cfg.labels.names.clear();
            for (const auto& name : *j) cfg.labels.names.push_back(get_str(name, "class name"));
        }
        if (const json* j = find(*data, "path")) cfg.data_path = get_str(*j, "data.path");
        if (const json* j = find(*data, "train")) cfg.train_path = get_str(*j, "data.train");
        if (const json* j = find(*data, "val")) cfg.val_path = get_str(*j, "data.val");
        if (const json* j = find(*data, "test")) cfg.test_path = get_str(*j, "data.test");

        if (const json* synth = find(*data, "synthetic")) {
            if (const json* j = find(*synth, "num_questions")) {
                cfg.synth.num_questions = std::size_t(get_int(*j, "synthetic.num_questions"));
            }
            if (const json* j = find(*synth, "examples_per_question")) {
                cfg.synth.examples_per_question = std::size_t(get_int(*j, "synthetic.examples_per_question"));
            }
            if (const json* j = find(*synth, "num_classes")) {
                cfg.synth.num_classes = get_int(*j, "synthetic.num_classes");
            }
            if (const json* j = find(*synth, "seed")) {
                cfg.synth.seed = std::uint64_t(get_int(*j, "synthetic.seed"));
            }
            if (const json* j = find(*synth, "noise")) {
                if (!j->is_array()) throw ConfigError("config: synthetic.noise must be an array");
                cfg.synth.per_question_noise.clear();
                for (const auto& v : *j) {
                    cfg.synth.per_question_noise.push_back(get_num(v, "noise entry"));
                }
            } else if (const json* j2 = find(*synth, "noise_max")) {
                cfg.synth.per_question_noise =
                    noise_ramp(cfg.synth.num_questions, get_num(*j2, "synthetic.noise_max"));
            }
        }
        if (const json* split = find(*data, "split")) {
            if (const json* j = find(*split, "ratios")) {
                if (!j->is_array() || j->size() != 3) {
                    throw ConfigError("config: split.ratios must be [train, val, test]");
                }
                cfg.ratios = {get_num((*j)[0], "ratio"), get_num((*j)[1], "ratio"), get_num((*j)[2], "ratio")};
            }
            if (const json* j = find(*split, "seed")) cfg.split_seed = std::uint64_t(get_int(*j, "split.seed"));
            if (const json* j = find(*split, "by_question")) {
                cfg.split_by_question = get_bool(*j, "split.by_question");
            }
        }
    }

    if (const json* feat = find(root, "featurizer")) {
        if (const json* j = find(*feat, "hash_bits")) {
            cfg.hash_bits = get_int(*j, "featurizer.hash_bits");
            if (cfg.hash_bits < 2 || cfg.hash_bits > 24) {
                throw ConfigError("config: featurizer.hash_bits must lie in [2, 24]");
            }
        }
    }

    if (const json* model = find(root, "model")) {
        if (const json* j = find(*model, "hidden_cl")) {
            int v = get_int(*j, "model.hidden_cl");
            if (v < 1) throw ConfigError("config: model.hidden_cl must be >= 1");
            cfg.hidden_cl = std::size_t(v);
        }
        if (const json* j = find(*model, "hidden_dp")) {
            int v = get_int(*j, "model.hidden_dp");
            if (v < 1) throw ConfigError("config: model.hidden_dp must be >= 1");
            cfg.hidden_dp = std::size_t(v);
        }
    }

    bool gamma_specified = false;
    if (const json* train = find(root, "train")) {
        if (const json* j = find(*train, "warmup_cl_epochs")) cfg.train.warmup_cl_epochs = get_int(*j, "warmup_cl_epochs");
        if (const json* j = find(*train, "warmup_dp_epochs")) cfg.train.warmup_dp_epochs = get_int(*j, "warmup_dp_epochs");
        if (const json* j = find(*train, "joint_epochs")) cfg.train.joint_epochs = get_int(*j, "joint_epochs");
        if (const json* j = find(*train, "batch_size")) cfg.train.batch_size = get_int(*j, "batch_size");
        if (const json* j = find(*train, "learning_rate")) cfg.train.learning_rate = get_num(*j, "learning_rate");
        if (const json* j = find(*train, "seed")) cfg.train.seed = std::uint64_t(get_int(*j, "train.seed"));
        if (const json* j = find(*train, "dp_grad_into_cl")) cfg.train.dp_grad_into_cl = get_bool(*j, "dp_grad_into_cl");
        if (const json* j = find(*train, "dp_label_holdout")) cfg.train.dp_label_holdout = get_bool(*j, "dp_label_holdout");

        const json* weights = find(*train, "loss_weights");
        const json* preset = find(*train, "loss_weights_preset");
        if (weights && preset) throw ConfigError("config: give loss_weights or loss_weights_preset, not both");
        if (preset) {
            auto it = kWeightPresets.find(get_str(*preset, "loss_weights_preset"));
            if (it == kWeightPresets.end()) {
                throw ConfigError("config: unknown loss_weights_preset (use beetle, scients, midphys or istudio)");
            }
            cfg.train.weights = it->second;
            gamma_specified = true;
        } else if (weights) {
            if (!weights->is_array() || weights->size() != 3) {
                throw ConfigError("config: loss_weights must be [alpha, beta, gamma]");
            }
            cfg.train.weights = {get_num((*weights)[0], "alpha"), get_num((*weights)[1], "beta"),
                                 get_num((*weights)[2], "gamma")};
            gamma_specified = true;
        }

        if (const json* j = find(*train, "reward")) {
            if (!j->is_array() || j->size() != 4) {
                throw ConfigError("config: reward must be [a, b, c, d]");
            }
            cfg.train.reward = RewardSignal{get_num((*j)[0], "a"), get_num((*j)[1], "b"),
                                            get_num((*j)[2], "c"), get_num((*j)[3], "d")};
            validate_signal(cfg.train.reward);
            reward_specified = true;
        }
    }

    if (const json* cmp = find(root, "compare")) {
        if (const json* j = find(*cmp, "conditions")) {
            if (!j->is_array() || j->empty()) throw ConfigError("config: compare.conditions must be a non-empty array");
            cfg.compare_conditions.clear();
            for (const auto& c : *j) {
                std::string name = get_str(c, "condition name");
                if (std::find(kConditions.begin(), kConditions.end(), name) == kConditions.end()) {
                    throw ConfigError("config: unknown condition '" + name + "' in compare.conditions");
                }
                cfg.compare_conditions.push_back(name);
            }
        }
    }

    if (const json* sweep = find(root, "sweep")) {
        const json* values = find(*sweep, "d_values");
        const json* step = find(*sweep, "step");
        if (values && step) throw ConfigError("config: give sweep.d_values or sweep.step, not both");
        if (values) {
            if (!values->is_array() || values->empty()) {
                throw ConfigError("config: sweep.d_values must be a non-empty array");
            }
            cfg.sweep_values.clear();
            for (const auto& v : *values) cfg.sweep_values.push_back(get_num(v, "d value"));
        } else if (step) {
            double s = get_num(*step, "sweep.step");
            if (!(s > 0.0 && s <= 1.0)) throw ConfigError("config: sweep.step must lie in (0, 1]");
            cfg.sweep_values.clear();
            for (double d = 0.0; d <= 1.0 + 1e-12; d += s) cfg.sweep_values.push_back(std::min(d, 1.0));
        }
        for (double d : cfg.sweep_values) {
            if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("config: sweep d values must lie in [0, 1]");
        }
    }

    // jtsp_ce is joint training without the policy term.
    if (cfg.condition == "jtsp_ce") {
        if (gamma_specified && cfg.train.weights.gamma != 0.0) {
            throw ConfigError("config: the jtsp_ce condition requires gamma = 0");
        }
        cfg.train.weights.gamma = 0.0;
    }

    if (!cfg.synthetic && cfg.data_path.empty() &&
        (cfg.train_path.empty() || cfg.val_path.empty() || cfg.test_path.empty())) {
        throw ConfigError("config: files mode needs data.path or all of data.train/val/test");
    }
    if (cfg.synthetic && cfg.synth.num_classes != cfg.labels.num_classes()) {
        throw ConfigError("config: synthetic.num_classes must match the class_names list");
    }

    return reward_specified;
}

json resolve_snapshot(const RunConfig& cfg, bool reward_specified) {
    json root;
    root["condition"] = cfg.condition;
    root["output_dir"] = cfg.output_dir;
    root["threads"] = cfg.threads;
    json data;
    data["source"] = cfg.synthetic ? "synthetic" : "files";
    data["format"] = format_name(cfg.format);
    data["class_names"] = cfg.labels.names;
    if (cfg.synthetic) {
        std::vector<double> noise = cfg.synth.per_question_noise.empty()
                                        ? noise_ramp(cfg.synth.num_questions, 0.45)
                                        : cfg.synth.per_question_noise;
        data["synthetic"] = {{"num_questions", cfg.synth.num_questions},
                             {"examples_per_question", cfg.synth.examples_per_question},
                             {"num_classes", cfg.synth.num_classes},
                             {"noise", noise},
                             {"seed", cfg.synth.seed}};
    } else {
        if (!cfg.data_path.empty()) data["path"] = cfg.data_path;
        if (!cfg.train_path.empty()) {
            data["train"] = cfg.train_path;
            data["val"] = cfg.val_path;
            data["test"] = cfg.test_path;
        }
    }
    data["split"] = {{"ratios", {cfg.ratios.train, cfg.ratios.val, cfg.ratios.test}},
                     {"seed", cfg.split_seed},
                     {"by_question", cfg.split_by_question}};
    root["data"] = data;
    root["featurizer"] = {{"hash_bits", cfg.hash_bits}};
    root["model"] = {{"hidden_cl", cfg.hidden_cl}, {"hidden_dp", cfg.hidden_dp}};
    root["train"] = {{"warmup_cl_epochs", cfg.train.warmup_cl_epochs},
                     {"warmup_dp_epochs", cfg.train.warmup_dp_epochs},
                     {"joint_epochs", cfg.train.joint_epochs},
                     {"batch_size", cfg.train.batch_size},
                     {"learning_rate", cfg.train.learning_rate},
                     {"seed", cfg.train.seed},
                     {"loss_weights",
                      {cfg.train.weights.alpha, cfg.train.weights.beta, cfg.train.weights.gamma}},
                     {"reward",
                      {cfg.train.reward.keep_correct, cfg.train.reward.defer_correct,
                       cfg.train.reward.keep_incorrect, cfg.train.reward.defer_incorrect}},
                     {"reward_specified", reward_specified},
                     {"dp_grad_into_cl", cfg.train.dp_grad_into_cl},
                     {"dp_label_holdout", cfg.train.dp_label_holdout}};
    if (!cfg.compare_conditions.empty()) root["compare"] = {{"conditions", cfg.compare_conditions}};
    if (!cfg.sweep_values.empty()) root["sweep"] = {{"d_values", cfg.sweep_values}};
    return root;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text, const CliOverrides& overrides) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    bool reward_specified = parse_into(cfg, root);
    if (overrides.seed) cfg.train.seed = *overrides.seed;
    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    if (overrides.threads) {
        if (*overrides.threads < 1) throw ConfigError("config: threads must be >= 1");
        cfg.threads = *overrides.threads;
    }
    json snapshot = resolve_snapshot(cfg, reward_specified);
    cfg.resolved_json = snapshot.dump(2) + "\n";
    cfg.config_hash = hash_hex(fnv1a64(cfg.resolved_json));
    return cfg;
}

RunConfig load_run_config(const std::string& path, const CliOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text, overrides);
}

PreparedData prepare_data(const RunConfig& cfg) {
    std::vector<Example> train, val, test;
    if (cfg.synthetic) {
        DatasetSplit split =
            split_examples(gen_synthetic(cfg.synth), cfg.ratios, cfg.split_seed, cfg.split_by_question);
        train = std::move(split.train);
        val = std::move(split.val);
        test = std::move(split.test);
    } else if (!cfg.train_path.empty()) {
        train = load_examples(cfg.train_path, cfg.format, cfg.labels);
        val = load_examples(cfg.val_path, cfg.format, cfg.labels);
        test = load_examples(cfg.test_path, cfg.format, cfg.labels);
    } else {
        DatasetSplit split = split_examples(load_examples(cfg.data_path, cfg.format, cfg.labels),
                                            cfg.ratios, cfg.split_seed, cfg.split_by_question);
        train = std::move(split.train);
        val = std::move(split.val);
        test = std::move(split.test);
    }

    std::string blob;
    for (const Example& ex : test) {
        blob += ex.question_id;
        blob += '\x1f';
        blob += ex.answer_text;
        blob += '\x1f';
        blob += std::to_string(ex.gold_label);
        blob += '\x1e';
    }
    PreparedData data;
    data.test_split_hash = hash_hex(fnv1a64(blob));
    data.train = featurize_examples(train, cfg.hash_bits);
    data.val = featurize_examples(val, cfg.hash_bits);
    data.test = featurize_examples(test, cfg.hash_bits);
    return data;
}

namespace {

Checkpoint final_checkpoint(const Trainer& trainer, const CheckpointMeta& meta,
                            const std::string& fallback_phase,
                            const std::vector<FeaturizedExample>& val) {
    if (trainer.has_selected()) return trainer.selected();
    Checkpoint ckpt;
    ckpt.model = trainer.model();
    ckpt.phase = fallback_phase;
    ckpt.epoch = trainer.records().empty() ? 0 : trainer.records().back().epoch;
    ckpt.config_hash = meta.config_hash;
    ckpt.hash_bits = meta.hash_bits;
    ckpt.class_names = meta.class_names;
    if (!val.empty()) ckpt.val_metrics = evaluate_model(trainer.model(), val);
    return ckpt;
}

ConditionRun run_jtsp(const std::string& condition, const RunConfig& cfg, const PreparedData& data) {
    TrainConfig tc = cfg.train;
    if (condition == "jtsp_ce") tc.weights.gamma = 0.0;
    RandomStream rng(tc.seed);
    SelectiveModel model(cfg.model_config(), rng);
    Trainer trainer(std::move(model), tc, data.train, data.val);
    CheckpointMeta meta = cfg.checkpoint_meta();
    trainer.set_checkpoint_meta(meta);
    trainer.run_all();

    ConditionRun run;
    run.condition = condition;
    run.artifact =
        final_checkpoint(trainer, meta, tc.joint_epochs > 0 ? "joint" : "dp_warmup", data.val);
    run.records = trainer.records();
    run.test_metrics = evaluate_model(run.artifact.model, data.test);
    return run;
}

ConditionRun run_policy(const RunConfig& cfg, const PreparedData& data) {
    CheckpointMeta meta = cfg.checkpoint_meta();
    PolicyConditionResult res =
        policy_condition(cfg.model_config(), cfg.train, data.train, data.val, &meta);
    ConditionRun run;
    run.condition = "policy";
    if (res.selected) {
        run.artifact = *res.selected;
    } else {
        run.artifact.model = res.final_model;
        run.artifact.phase = "dp_warmup";
        run.artifact.config_hash = meta.config_hash;
        run.artifact.hash_bits = meta.hash_bits;
        run.artifact.class_names = meta.class_names;
    }
    run.records = std::move(res.records);
    run.test_metrics = evaluate_model(run.artifact.model, data.test);
    return run;
}

// Classifier trained alone for n+T epochs; shared by thresh and lr.
Trainer train_classifier_only(const RunConfig& cfg, const PreparedData& data) {
    TrainConfig tc = cfg.train;
    tc.checkpoint_dir.clear();
    RandomStream rng(tc.seed);
    SelectiveModel model(cfg.model_config(), rng);
    Trainer trainer(std::move(model), tc, data.train, data.val);
    trainer.set_checkpoint_meta(cfg.checkpoint_meta());
    trainer.warmup_cl(tc.warmup_cl_epochs + tc.joint_epochs);
    return trainer;
}

ConditionRun run_thresh(const RunConfig& cfg, const PreparedData& data) {
    Trainer trainer = train_classifier_only(cfg, data);
    const SelectiveModel& model = trainer.model();

    std::vector<Vec> val_probs(data.val.size());
    std::vector<int> val_gold(data.val.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.val.size(); ++i) {
        val_probs[i] = model.cl_forward(data.val[i].features).p_c;
        val_gold[i] = data.val[i].example.gold_label;
        if (predict(val_probs[i]) == val_gold[i]) ++correct;
    }
    double cl_acc = data.val.empty() ? 0.0 : double(correct) / double(data.val.size());
    ThresholdPolicy policy{select_threshold(val_probs, val_gold, cl_acc)};

    ConditionRun run;
    run.condition = "thresh";
    CheckpointMeta meta = cfg.checkpoint_meta();
    run.artifact = final_checkpoint(trainer, meta, "cl_warmup", data.val);
    run.artifact.extra_json = json{{"kind", "threshold"}, {"tau", policy.tau}}.dump();
    run.records = trainer.records();

    std::vector<int> preds(data.test.size()), gold(data.test.size()), actions(data.test.size());
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        Vec p_c = model.cl_forward(data.test[i].features).p_c;
        preds[i] = predict(p_c);
        gold[i] = data.test[i].example.gold_label;
        actions[i] = threshold_decide(policy, p_c);
    }
    run.test_metrics = compute_metrics(preds, gold, actions, cfg.labels.num_classes());
    return run;
}

constexpr int kLrEpochs = 2000;
constexpr double kLrLearningRate = 0.5;

ConditionRun run_lr(const RunConfig& cfg, const PreparedData& data) {
    Trainer trainer = train_classifier_only(cfg, data);
    const SelectiveModel& model = trainer.model();
    QuestionAccuracyTable table = question_accuracy(model, data.train);

    // The calibrator convention: fitted on the validation split.
    std::vector<Vec> features(data.val.size());
    std::vector<int> labels = dp_labels(model, data.val);
    for (std::size_t i = 0; i < data.val.size(); ++i) {
        Vec p_c = model.cl_forward(data.val[i].features).p_c;
        features[i] = lr_features(p_c, predict(p_c), table.lookup(data.val[i].example.question_id));
    }
    LRPolicy policy = train_lr(features, labels, kLrEpochs, kLrLearningRate);

    ConditionRun run;
    run.condition = "lr";
    CheckpointMeta meta = cfg.checkpoint_meta();
    run.artifact = final_checkpoint(trainer, meta, "cl_warmup", data.val);
    json q_acc = json::object();
    for (const auto& [qid, acc] : table.per_question) q_acc[qid] = acc;
    run.artifact.extra_json = json{{"kind", "lr"},
                                   {"weights", policy.weights},
                                   {"bias", policy.bias},
                                   {"num_classes", policy.num_classes},
                                   {"q_acc", q_acc},
                                   {"global_acc", table.global_accuracy}}
                                  .dump();
    run.records = trainer.records();

    std::vector<int> preds(data.test.size()), gold(data.test.size()), actions(data.test.size());
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        Vec p_c = model.cl_forward(data.test[i].features).p_c;
        preds[i] = predict(p_c);
        gold[i] = data.test[i].example.gold_label;
        Vec f = lr_features(p_c, preds[i], table.lookup(data.test[i].example.question_id));
        actions[i] = lr_decide(policy, f);
    }
    run.test_metrics = compute_metrics(preds, gold, actions, cfg.labels.num_classes());
    return run;
}

} // namespace

ConditionRun run_condition(const std::string& condition, const RunConfig& cfg,
                           const PreparedData& data) {
    if (condition == "jtsp" || condition == "jtsp_ce") return run_jtsp(condition, cfg, data);
    if (condition == "policy") return run_policy(cfg, data);
    if (condition == "thresh") return run_thresh(cfg, data);
    if (condition == "lr") return run_lr(cfg, data);
    throw ConfigError("unknown condition '" + condition + "'");
}

std::string metrics_to_json(const MetricsRecord& m) {
    return detail::metrics_json(m).dump(2) + "\n";
}

MetricsRecord metrics_from_json(const std::string& text) {
    try {
        return detail::metrics_from(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad metrics JSON: ") + e.what());
    }
}

std::string metrics_to_table(const MetricsRecord& m) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%-16s %8.4f\n%-16s %8.4f\n%-16s %8.4f\n%-16s %8.4f\n%-16s %8.4f\n"
                  "%-16s %8.4f\n%-16s %8.4f\n%-16s %8.4f\n%-16s %8zu\n"
                  "counts           a=%zu b=%zu c=%zu d=%zu\n",
                  "cl_acc", m.cl_acc, "cl_f1", m.cl_f1, "dp_acc", m.dp_acc, "dp_f1", m.dp_f1,
                  "dp_f1_macro", m.dp_f1_macro, "sp_acc", m.sp_acc, "sp_f1", m.sp_f1,
                  "deferral_rate", m.deferral_rate, "n", m.n, m.counts.keep_correct,
                  m.counts.defer_correct, m.counts.keep_incorrect, m.counts.defer_incorrect);
    return buf;
}

void write_epoch_csv(const std::string& path, const std::vector<EpochRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << "epoch,phase,loss_cl_ce,loss_dp_ce,reward,loss_total,"
           "val_cl_acc,val_cl_f1,val_dp_acc,val_dp_f1,val_sp_acc,val_sp_f1,val_deferral_rate\n";
    for (const EpochRecord& r : records) {
        out << r.epoch << ',' << r.phase << ',' << fmt_double(r.loss_cl_ce) << ','
            << fmt_double(r.loss_dp_ce) << ',' << fmt_double(r.reward) << ','
            << fmt_double(r.loss_total) << ',' << fmt_double(r.val.cl_acc) << ','
            << fmt_double(r.val.cl_f1) << ',' << fmt_double(r.val.dp_acc) << ','
            << fmt_double(r.val.dp_f1) << ',' << fmt_double(r.val.sp_acc) << ','
            << fmt_double(r.val.sp_f1) << ',' << fmt_double(r.val.deferral_rate) << '\n';
    }
}

MetricsRecord evaluate_artifact(const Checkpoint& ckpt, const std::vector<FeaturizedExample>& data) {
    if (ckpt.extra_json.empty()) return evaluate_model(ckpt.model, data);
    json extra;
    try {
        extra = json::parse(ckpt.extra_json);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad policy payload: ") + e.what());
    }
    std::string kind = extra.value("kind", "");
    if (kind.empty()) return evaluate_model(ckpt.model, data);

    std::vector<int> preds(data.size()), gold(data.size()), actions(data.size());
    if (kind == "threshold") {
        ThresholdPolicy policy{extra.at("tau").get<double>()};
        for (std::size_t i = 0; i < data.size(); ++i) {
            Vec p_c = ckpt.model.cl_forward(data[i].features).p_c;
            preds[i] = predict(p_c);
            gold[i] = data[i].example.gold_label;
            actions[i] = threshold_decide(policy, p_c);
        }
    } else if (kind == "lr") {
        LRPolicy policy;
        policy.weights = extra.at("weights").get<Vec>();
        policy.bias = extra.at("bias").get<double>();
        policy.num_classes = extra.at("num_classes").get<int>();
        QuestionAccuracyTable table;
        table.global_accuracy = extra.at("global_acc").get<double>();
        for (const auto& [qid, acc] : extra.at("q_acc").items()) {
            table.per_question[qid] = acc.get<double>();
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            Vec p_c = ckpt.model.cl_forward(data[i].features).p_c;
            preds[i] = predict(p_c);
            gold[i] = data[i].example.gold_label;
            Vec f = lr_features(p_c, preds[i], table.lookup(data[i].example.question_id));
            actions[i] = lr_decide(policy, f);
        }
    } else {
        throw CheckpointError("unknown policy kind '" + kind + "'");
    }
    return compute_metrics(preds, gold, actions, int(ckpt.class_names.size()));
}

namespace {

void require_reward_for_jtsp(const RunConfig& cfg, const std::string& condition) {
    if (condition != "jtsp") return;
    json snapshot = json::parse(cfg.resolved_json);
    if (!snapshot["train"]["reward_specified"].get<bool>()) {
        throw ConfigError("config: the jtsp condition requires an explicit train.reward signal");
    }
}

} // namespace

void cmd_train(const RunConfig& cfg) {
    require_reward_for_jtsp(cfg, cfg.condition);
    fs::create_directories(cfg.output_dir);
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(), cfg.resolved_json);

    PreparedData data = prepare_data(cfg);
    RunConfig run_cfg = cfg;
    if (cfg.condition == "jtsp" || cfg.condition == "jtsp_ce" || cfg.condition == "policy") {
        run_cfg.train.checkpoint_dir = (fs::path(cfg.output_dir) / "checkpoints").string();
    }
    ConditionRun run = run_condition(cfg.condition, run_cfg, data);

    write_epoch_csv((fs::path(cfg.output_dir) / "epochs.csv").string(), run.records);
    save_checkpoint(run.artifact, (fs::path(cfg.output_dir) / "selected.ckpt").string());
    write_text((fs::path(cfg.output_dir) / "metrics.json").string(), metrics_to_json(run.test_metrics));
    write_text((fs::path(cfg.output_dir) / "metrics.txt").string(), metrics_to_table(run.test_metrics));
    std::cout << "condition " << cfg.condition << " done; test metrics:\n"
              << metrics_to_table(run.test_metrics);
}

void cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
              const std::string& format, const std::string& out_dir,
              const std::string& expect_config_hash) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (!expect_config_hash.empty() && ckpt.config_hash != expect_config_hash) {
        throw ConfigError("checkpoint config hash " + ckpt.config_hash +
                          " does not match expected " + expect_config_hash);
    }
    if (ckpt.class_names.empty()) {
        throw CheckpointError(checkpoint_path + ": checkpoint carries no class names");
    }
    LabelMap labels{ckpt.class_names};
    std::vector<Example> examples = load_examples(data_path, parse_format(format), labels);
    std::vector<FeaturizedExample> feats = featurize_examples(examples, ckpt.hash_bits);
    MetricsRecord m = evaluate_artifact(ckpt, feats);
    std::cout << metrics_to_json(m);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text((fs::path(out_dir) / "metrics.json").string(), metrics_to_json(m));
        write_text((fs::path(out_dir) / "metrics.txt").string(), metrics_to_table(m));
    }
}

void cmd_compare(const RunConfig& cfg) {
    std::vector<std::string> conditions =
        cfg.compare_conditions.empty() ? kConditions : cfg.compare_conditions;
    for (const std::string& c : conditions) require_reward_for_jtsp(cfg, c);

    fs::create_directories(cfg.output_dir);
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(), cfg.resolved_json);
    PreparedData data = prepare_data(cfg);

    json report;
    report["config_hash"] = cfg.config_hash;
    report["seed"] = cfg.train.seed;
    report["test_split_hash"] = data.test_split_hash;
    report["rows"] = json::array();

    std::string table = "condition   ok  dp_acc  dp_f1   sp_acc  sp_f1   dr      cl_acc  cl_f1\n";
    for (const std::string& condition : conditions) {
        json row;
        row["condition"] = condition;
        row["test_split_hash"] = data.test_split_hash;
        char line[160];
        try {
            ConditionRun run = run_condition(condition, cfg, data);
            row["ok"] = true;
            row["metrics"] = detail::metrics_json(run.test_metrics);
            const MetricsRecord& m = run.test_metrics;
            std::snprintf(line, sizeof(line),
                          "%-11s yes %-7.4f %-7.4f %-7.4f %-7.4f %-7.4f %-7.4f %-7.4f\n", condition.c_str(),
                          m.dp_acc, m.dp_f1, m.sp_acc, m.sp_f1, m.deferral_rate, m.cl_acc, m.cl_f1);
        } catch (const std::exception& e) {
            row["ok"] = false;
            row["error"] = e.what();
            std::snprintf(line, sizeof(line), "%-11s no  failed: %s\n", condition.c_str(), e.what());
        }
        report["rows"].push_back(row);
        table += line;
    }

    write_text((fs::path(cfg.output_dir) / "compare.json").string(), report.dump(2) + "\n");
    write_text((fs::path(cfg.output_dir) / "compare.txt").string(), table);
    std::cout << table;
}

void cmd_sweep(const RunConfig& cfg) {
    if (cfg.condition != "jtsp") {
        throw ConfigError("sweep: condition must be jtsp (got '" + cfg.condition + "')");
    }
    fs::create_directories(cfg.output_dir);
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(), cfg.resolved_json);
    PreparedData data = prepare_data(cfg);
    std::vector<double> values = cfg.sweep_values.empty() ? default_d_grid() : cfg.sweep_values;
    std::vector<SweepRow> rows =
        sweep_d(cfg.model_config(), cfg.train, data.train, data.val, data.test, values, cfg.threads);
    std::string csv_path = (fs::path(cfg.output_dir) / "sweep.csv").string();
    write_sweep_csv(csv_path, rows);
    std::cout << "wrote " << rows.size() << " sweep rows to " << csv_path << "\n";
}

void cmd_gen_synth(const RunConfig& cfg) {
    if (!cfg.synthetic) throw ConfigError("gen-synth: config must use data.source = synthetic");
    fs::create_directories(cfg.output_dir);
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(), cfg.resolved_json);
    DatasetSplit split =
        split_examples(gen_synthetic(cfg.synth), cfg.ratios, cfg.split_seed, cfg.split_by_question);
    std::string ext = format_name(cfg.format);
    write_examples((fs::path(cfg.output_dir) / ("train." + ext)).string(), cfg.format, cfg.labels,
                   split.train);
    write_examples((fs::path(cfg.output_dir) / ("val." + ext)).string(), cfg.format, cfg.labels,
                   split.val);
    write_examples((fs::path(cfg.output_dir) / ("test." + ext)).string(), cfg.format, cfg.labels,
                   split.test);
    std::cout << "wrote " << split.train.size() << "/" << split.val.size() << "/" << split.test.size()
              << " examples to " << cfg.output_dir << "\n";
}

} // namespace jtsp
