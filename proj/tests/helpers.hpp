#pragma once

// Shared fixtures for the test binaries.

#include <cstdint>
#include <vector>

#include "jtsp/dataset.hpp"
#include "jtsp/model.hpp"
#include "jtsp/training.hpp"

namespace jtsp::testing {

// The default desk-scale corpus: 20 questions x 200 examples, planted noise
// ramping 0 .. 0.45 across questions.
inline SyntheticConfig default_corpus_config(std::uint64_t seed = 7) {
    SyntheticConfig cfg;
    cfg.num_questions = 20;
    cfg.examples_per_question = 200;
    cfg.num_classes = 3;
    cfg.per_question_noise = noise_ramp(20, 0.45);
    cfg.seed = seed;
    return cfg;
}

struct CorpusSplits {
    std::vector<FeaturizedExample> train, val, test;
};

inline CorpusSplits featurized_corpus(const SyntheticConfig& cfg, int hash_bits,
                                      std::uint64_t split_seed = 7) {
    DatasetSplit split = split_examples(gen_synthetic(cfg), {0.8, 0.1, 0.1}, split_seed);
    return {featurize_examples(split.train, hash_bits), featurize_examples(split.val, hash_bits),
            featurize_examples(split.test, hash_bits)};
}

// Twelve linearly separable points, three classes, six dense feature dims.
inline std::vector<FeaturizedExample> separable_toy() {
    std::vector<FeaturizedExample> data;
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 4; ++i) {
            Vec x(6, 0.05);
            x[std::size_t(2 * c)] = 1.0;
            x[std::size_t(2 * c + 1)] = 0.8 + 0.05 * i;
            FeaturizedExample ex;
            ex.example = {"q" + std::to_string(c), "toy", c};
            ex.features = SparseVec::from_dense(x);
            data.push_back(ex);
        }
    }
    return data;
}

inline double train_accuracy(const SelectiveModel& model,
                             const std::vector<FeaturizedExample>& data) {
    std::size_t hits = 0;
    for (const auto& ex : data) {
        if (predict(model.cl_forward(ex.features).p_c) == ex.example.gold_label) ++hits;
    }
    return double(hits) / double(data.size());
}

} // namespace jtsp::testing
