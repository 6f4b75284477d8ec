#pragma once

#include <cstddef>
#include <vector>

namespace jtsp {

// One cell per (classifier correct?, deferred?) pair.
struct OutcomeCounts {
    std::size_t keep_correct = 0;    // a: kept and the classifier was right
    std::size_t defer_correct = 0;   // b: deferred although the classifier was right
    std::size_t keep_incorrect = 0;  // c: kept although the classifier was wrong
    std::size_t defer_incorrect = 0; // d: deferred and the classifier was wrong

    std::size_t total() const { return keep_correct + defer_correct + keep_incorrect + defer_incorrect; }
};

// actions: 0 = keep, 1 = defer. Throws on length mismatch.
OutcomeCounts outcome_matrix(const std::vector<int>& cl_preds, const std::vector<int>& gold,
                             const std::vector<int>& actions);

// Unweighted mean of per-class F1 over the classes present in gold.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& gold, int num_classes);

struct MetricsRecord {
    double cl_acc = 0.0;
    double cl_f1 = 0.0;
    double dp_acc = 0.0;
    double dp_f1 = 0.0;       // F1 of the defer class alone
    double dp_f1_macro = 0.0; // macro over keep/defer, logged for the other reading
    double sp_acc = 0.0;
    double sp_f1 = 0.0;
    double deferral_rate = 0.0;
    OutcomeCounts counts;
    std::size_t n = 0;
};

// Deferred examples count as correct for the combined system (gold label
// substituted). Throws on empty input or length mismatch.
MetricsRecord compute_metrics(const std::vector<int>& cl_preds, const std::vector<int>& gold,
                              const std::vector<int>& actions, int num_classes);

} // namespace jtsp
