#include "jtsp/evaluation.hpp"

#include <stdexcept>
#include <string>

namespace jtsp {

OutcomeCounts outcome_matrix(const std::vector<int>& cl_preds, const std::vector<int>& gold,
                             const std::vector<int>& actions) {
    if (cl_preds.size() != gold.size() || gold.size() != actions.size()) {
        throw std::invalid_argument("outcome_matrix: length mismatch");
    }
    OutcomeCounts c;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        bool correct = cl_preds[i] == gold[i];
        bool defer = actions[i] != 0;
        if (correct && !defer) ++c.keep_correct;
        else if (correct && defer) ++c.defer_correct;
        else if (!correct && !defer) ++c.keep_incorrect;
        else ++c.defer_incorrect;
    }
    return c;
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& gold, int num_classes) {
    if (preds.size() != gold.size()) throw std::invalid_argument("macro_f1: length mismatch");
    if (num_classes < 1) throw std::invalid_argument("macro_f1: num_classes must be positive");
    std::vector<std::size_t> tp(std::size_t(num_classes), 0), fp(std::size_t(num_classes), 0),
        fn(std::size_t(num_classes), 0), support(std::size_t(num_classes), 0);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        int g = gold[i];
        int p = preds[i];
        if (g < 0 || g >= num_classes || p < 0 || p >= num_classes) {
            throw std::invalid_argument("macro_f1: label " + std::to_string(g < 0 || g >= num_classes ? g : p) +
                                        " out of range for k=" + std::to_string(num_classes));
        }
        ++support[std::size_t(g)];
        if (p == g) {
            ++tp[std::size_t(g)];
        } else {
            ++fp[std::size_t(p)];
            ++fn[std::size_t(g)];
        }
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        auto ci = std::size_t(c);
        if (support[ci] == 0) continue; // class absent from gold: excluded from the mean
        ++present;
        double denom = double(2 * tp[ci] + fp[ci] + fn[ci]);
        if (denom > 0.0) sum += 2.0 * double(tp[ci]) / denom;
    }
    return present > 0 ? sum / double(present) : 0.0;
}

MetricsRecord compute_metrics(const std::vector<int>& cl_preds, const std::vector<int>& gold,
                              const std::vector<int>& actions, int num_classes) {
    if (gold.empty()) throw std::invalid_argument("compute_metrics: empty input");
    MetricsRecord rec;
    rec.counts = outcome_matrix(cl_preds, gold, actions);
    rec.n = gold.size();
    const OutcomeCounts& c = rec.counts;
    const double n = double(rec.n);

    rec.deferral_rate = double(c.defer_correct + c.defer_incorrect) / n;
    rec.dp_acc = 1.0 - double(c.defer_correct + c.keep_incorrect) / n;
    double deferred_wrong = double(c.defer_incorrect) / n;
    // When everything is deferred, pick the expression that keeps
    // sp_acc = cl_acc + n_d/N landing exactly on 1.0.
    if (c.defer_correct + c.defer_incorrect == rec.n) {
        rec.cl_acc = 1.0 - deferred_wrong;
    } else {
        rec.cl_acc = double(c.keep_correct + c.defer_correct) / n;
    }
    rec.sp_acc = rec.cl_acc + deferred_wrong;

    rec.cl_f1 = macro_f1(cl_preds, gold, num_classes);

    // Deferral task: gold action = defer exactly when the classifier is wrong.
    std::vector<int> defer_gold(gold.size());
    std::vector<int> defer_pred(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        defer_gold[i] = cl_preds[i] == gold[i] ? 0 : 1;
        defer_pred[i] = actions[i] != 0 ? 1 : 0;
    }
    double defer_denom = double(2 * c.defer_incorrect + c.defer_correct + c.keep_incorrect);
    rec.dp_f1 = defer_denom > 0.0 ? 2.0 * double(c.defer_incorrect) / defer_denom : 0.0;
    rec.dp_f1_macro = macro_f1(defer_pred, defer_gold, 2);

    // Combined system output: gold where deferred, classifier prediction otherwise.
    std::vector<int> sp_preds(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        sp_preds[i] = actions[i] != 0 ? gold[i] : cl_preds[i];
    }
    rec.sp_f1 = macro_f1(sp_preds, gold, num_classes);
    return rec;
}

} // namespace jtsp
