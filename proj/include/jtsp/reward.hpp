#pragma once

#include <vector>

#include "jtsp/numerics.hpp"

namespace jtsp {

// Per-outcome reward over (classifier correct?, defer?) cells. Constrained to
// the probability simplex: every entry >= 0, entries sum to 1.
struct RewardSignal {
    double keep_correct = 0.5;   // a
    double defer_correct = 0.1;  // b
    double keep_incorrect = 0.0; // c
    double defer_incorrect = 0.4;// d
};

bool signal_valid(const RewardSignal& signal);

// Throws ConfigError naming the violated constraint.
void validate_signal(const RewardSignal& signal);

// Expected reward of the policy's action distribution for one example. The
// correctness flag is a constant; gradients flow only through p_d.
double per_example_reward(const Vec& p_d, bool cl_correct, const RewardSignal& signal);

// Mean of per_example_reward over the batch. Throws on an empty batch.
double batch_reward(const std::vector<Vec>& p_ds, const std::vector<char>& cl_correct,
                    const RewardSignal& signal);

// The one-parameter family [1-d, 0, 0, d] used for sensitivity sweeps.
RewardSignal constrained_signal(double d);

} // namespace jtsp
