#include "jtsp/reward.hpp"

#include <cmath>
#include <string>

namespace jtsp {

namespace {

double signal_sum(const RewardSignal& s) {
    return s.keep_correct + s.defer_correct + s.keep_incorrect + s.defer_incorrect;
}

} // namespace

bool signal_valid(const RewardSignal& s) {
    if (!(s.keep_correct >= 0.0 && s.defer_correct >= 0.0 && s.keep_incorrect >= 0.0 &&
          s.defer_incorrect >= 0.0)) {
        return false;
    }
    return std::abs(signal_sum(s) - 1.0) <= 1e-9;
}

void validate_signal(const RewardSignal& s) {
    auto check_nonneg = [](double v, const char* name) {
        if (!(v >= 0.0)) {
            throw ConfigError(std::string("reward signal: entry ") + name + " = " + std::to_string(v) +
                              " violates x >= 0");
        }
    };
    check_nonneg(s.keep_correct, "a (keep when correct)");
    check_nonneg(s.defer_correct, "b (defer when correct)");
    check_nonneg(s.keep_incorrect, "c (keep when incorrect)");
    check_nonneg(s.defer_incorrect, "d (defer when incorrect)");
    double sum = signal_sum(s);
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("reward signal: entries sum to " + std::to_string(sum) + ", must sum to 1");
    }
}

double per_example_reward(const Vec& p_d, bool cl_correct, const RewardSignal& s) {
    if (p_d.size() != 2) throw std::invalid_argument("per_example_reward: expected 2-entry distribution");
    double keep_r = cl_correct ? s.keep_correct : s.keep_incorrect;
    double defer_r = cl_correct ? s.defer_correct : s.defer_incorrect;
    return p_d[0] * keep_r + p_d[1] * defer_r;
}

double batch_reward(const std::vector<Vec>& p_ds, const std::vector<char>& cl_correct,
                    const RewardSignal& s) {
    if (p_ds.empty()) throw std::invalid_argument("batch_reward: empty batch");
    if (p_ds.size() != cl_correct.size()) throw std::invalid_argument("batch_reward: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < p_ds.size(); ++i) {
        sum += per_example_reward(p_ds[i], cl_correct[i] != 0, s);
    }
    return sum / double(p_ds.size());
}

RewardSignal constrained_signal(double d) {
    if (!(d >= 0.0 && d <= 1.0)) {
        throw std::invalid_argument("constrained_signal: d must lie in [0, 1]");
    }
    return RewardSignal{1.0 - d, 0.0, 0.0, d};
}

} // namespace jtsp
