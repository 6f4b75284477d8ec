#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jtsp/baselines.hpp"
#include "jtsp/dataset.hpp"
#include "jtsp/sweep.hpp"
#include "jtsp/training.hpp"

namespace jtsp {

extern const std::vector<std::string> kConditions; // thresh, lr, policy, jtsp_ce, jtsp

// Fully resolved run description: dataset source, featurizer, model widths,
// training setup, condition and outputs.
struct RunConfig {
    bool synthetic = true;
    SyntheticConfig synth;
    std::string data_path;                         // single file, split by ratios
    std::string train_path, val_path, test_path;   // or explicit split files
    FileFormat format = FileFormat::kCsv;
    LabelMap labels = LabelMap::beetle_style();
    SplitRatios ratios{};
    std::uint64_t split_seed = 7;
    bool split_by_question = false;

    int hash_bits = 12;
    std::size_t hidden_cl = 64;
    std::size_t hidden_dp = 64;

    TrainConfig train;
    std::string condition = "jtsp";
    std::vector<std::string> compare_conditions; // empty = all five
    std::vector<double> sweep_values;            // empty = default 21-point grid
    int threads = 1;
    std::string output_dir = "out";

    std::string resolved_json; // canonical snapshot, includes every default
    std::string config_hash;   // fnv1a64 hex of resolved_json

    ModelConfig model_config() const;
    CheckpointMeta checkpoint_meta() const;
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> threads;
};

RunConfig load_run_config(const std::string& path, const CliOverrides& overrides = {});
RunConfig parse_run_config(const std::string& json_text, const CliOverrides& overrides = {});

struct PreparedData {
    std::vector<FeaturizedExample> train, val, test;
    std::string test_split_hash;
};

PreparedData prepare_data(const RunConfig& cfg);

struct ConditionRun {
    std::string condition;
    MetricsRecord test_metrics;
    std::vector<EpochRecord> records;
    Checkpoint artifact; // model plus optional policy payload in extra_json
};

ConditionRun run_condition(const std::string& condition, const RunConfig& cfg,
                           const PreparedData& data);

// Command bodies shared by the CLI. Each writes its artifacts under
// cfg.output_dir and throws ConfigError / TrainingError on failure.
void cmd_train(const RunConfig& cfg);
void cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
              const std::string& format, const std::string& out_dir,
              const std::string& expect_config_hash = "");
void cmd_compare(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);
void cmd_gen_synth(const RunConfig& cfg);

// Serialization helpers shared by commands and tests.
std::string metrics_to_json(const MetricsRecord& m);
std::string metrics_to_table(const MetricsRecord& m);
MetricsRecord metrics_from_json(const std::string& text);
void write_epoch_csv(const std::string& path, const std::vector<EpochRecord>& records);

// Evaluate a loaded artifact (model or fitted baseline) on featurized data.
MetricsRecord evaluate_artifact(const Checkpoint& ckpt, const std::vector<FeaturizedExample>& data);

} // namespace jtsp
