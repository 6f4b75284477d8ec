#pragma once

#include <string>
#include <vector>

#include "jtsp/training.hpp"

namespace jtsp {

struct SweepRow {
    double d = 0.0;
    double deferral_rate = 0.0;
    double sp_acc = 0.0;
    double cl_acc = 0.0;
    double dp_acc = 0.0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
};

// One full three-phase run per d, every row from the same seed; the reward is
// the constrained family [1-d, 0, 0, d]. A training failure annotates its row
// instead of aborting the sweep. Rows come back sorted by d.
std::vector<SweepRow> sweep_d(const ModelConfig& model_cfg, const TrainConfig& cfg,
                              const std::vector<FeaturizedExample>& train_data,
                              const std::vector<FeaturizedExample>& val_data,
                              const std::vector<FeaturizedExample>& test_data,
                              std::vector<double> d_values, int threads = 1);

// 0, 0.05, ..., 1.0 (21 points).
std::vector<double> default_d_grid();

std::string sweep_csv_header(); // d,deferral_rate,sp_acc,cl_acc,dp_acc,seed

// Failed rows get nan metric cells; their messages go to <path>.errors.log.
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

} // namespace jtsp
