#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "jtsp/numerics.hpp"

namespace jtsp {

std::uint64_t fnv1a64(std::string_view bytes);

// One student response.
struct Example {
    std::string question_id;
    std::string answer_text;
    int gold_label = 0;
};

// Config-driven label-name mapping; index in `names` is the class id.
struct LabelMap {
    std::vector<std::string> names;

    int index_of(std::string_view name) const; // -1 if unknown
    int num_classes() const { return int(names.size()); }

    static LabelMap beetle_style(); // Correct / Incorrect / Contradictory
};

enum class FileFormat { kCsv, kJsonl };

FileFormat parse_format(std::string_view name); // "csv" | "jsonl"
std::string format_name(FileFormat fmt);

// CSV files need a question_id,answer_text,label header; JSON-lines files hold
// one object with those keys per line. Labels may be class names or bare
// indices. Order-preserving. Throws ParseError with "path:line" on bad input.
std::vector<Example> load_examples(const std::string& path, FileFormat fmt, const LabelMap& labels);
void write_examples(const std::string& path, FileFormat fmt, const LabelMap& labels,
                    const std::vector<Example>& examples);

// Hashed bag of words: lowercase, split on non-alphanumeric runs, emit
// unigrams and adjacent bigrams ("tok1 tok2"), bucket by FNV-1a-64 mod 2^h,
// accumulate counts, L2-normalize. Empty text gives the zero vector.
SparseVec featurize_sparse(std::string_view text, int hash_bits);
Vec featurize(std::string_view text, int hash_bits);

struct FeaturizedExample {
    Example example;
    SparseVec features;
};

std::vector<FeaturizedExample> featurize_examples(const std::vector<Example>& examples, int hash_bits);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    std::vector<Example> train;
    std::vector<Example> val;
    std::vector<Example> test;
    std::uint64_t seed = 0;
};

// Stratified by gold label (or, with by_question, whole questions are assigned
// to one split each). Deterministic given the seed. Throws ConfigError when a
// split comes out empty or the ratios are bad.
DatasetSplit split_examples(const std::vector<Example>& data, SplitRatios ratios, std::uint64_t seed,
                            bool by_question = false);

struct SyntheticConfig {
    std::size_t num_questions = 20;
    std::size_t examples_per_question = 200;
    int num_classes = 3;
    std::vector<double> per_question_noise; // each in [0, 0.5]; empty = ramp to 0.45
    std::uint64_t seed = 7;
};

// Linear ramp 0 .. max_noise across questions.
std::vector<double> noise_ramp(std::size_t num_questions, double max_noise);

// Each question gets its own class-prototype token pools; answer text is drawn
// from the true class's pool plus question and filler tokens. The label is
// flipped to a random other class with probability per_question_noise[q].
std::vector<Example> gen_synthetic(const SyntheticConfig& config);

} // namespace jtsp
