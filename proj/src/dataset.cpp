#include "jtsp/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include <json.hpp>

namespace jtsp {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= std::uint64_t(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

int LabelMap::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return int(i);
    }
    return -1;
}

LabelMap LabelMap::beetle_style() {
    return LabelMap{{"Correct", "Incorrect", "Contradictory"}};
}

FileFormat parse_format(std::string_view name) {
    if (name == "csv") return FileFormat::kCsv;
    if (name == "jsonl") return FileFormat::kJsonl;
    throw ConfigError("unknown file format: " + std::string(name) + " (expected csv or jsonl)");
}

std::string format_name(FileFormat fmt) {
    return fmt == FileFormat::kCsv ? "csv" : "jsonl";
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& msg) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + msg);
}

// Resolves a label cell: configured class name or bare index.
int resolve_label(const std::string& raw, const LabelMap& labels, const std::string& path, std::size_t line) {
    int idx = labels.index_of(raw);
    if (idx >= 0) return idx;
    if (!raw.empty() && raw.find_first_not_of("0123456789") == std::string::npos) {
        int v = std::stoi(raw);
        if (v < labels.num_classes()) return v;
        parse_fail(path, line, "label index " + raw + " out of range (have " +
                                   std::to_string(labels.num_classes()) + " classes)");
    }
    parse_fail(path, line, "unknown label '" + raw + "'");
}

struct CsvRecord {
    std::vector<std::string> cells;
    std::size_t line = 0; // line the record starts on
};

// Minimal RFC-4180 reader: quoted cells may contain commas, quotes ("" escape)
// and newlines. Tracks the starting line of each record for error messages.
std::vector<CsvRecord> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<CsvRecord> records;
    CsvRecord rec;
    rec.line = 1;
    std::string cell;
    bool in_quotes = false;
    bool cell_started = false;
    std::size_t line = 1;

    auto end_cell = [&]() {
        rec.cells.push_back(cell);
        cell.clear();
        cell_started = false;
    };
    auto end_record = [&]() {
        end_cell();
        bool blank = rec.cells.size() == 1 && rec.cells[0].empty();
        if (!blank) records.push_back(rec);
        rec = CsvRecord{};
        rec.line = line;
    };

    for (std::size_t i = 0; i < content.size(); ++i) {
        char ch = content[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++line;
                cell.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"':
            if (!cell_started && cell.empty()) {
                in_quotes = true;
                cell_started = true;
            } else {
                cell.push_back(ch);
            }
            break;
        case ',':
            end_cell();
            break;
        case '\r':
            break; // tolerate CRLF
        case '\n':
            ++line;
            end_record();
            break;
        default:
            cell_started = true;
            cell.push_back(ch);
            break;
        }
    }
    if (in_quotes) parse_fail(path, rec.line, "unterminated quoted cell");
    if (cell_started || !cell.empty() || !rec.cells.empty()) end_record();
    return records;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::vector<Example> load_csv(const std::string& path, const LabelMap& labels) {
    std::vector<CsvRecord> records = read_csv(path);
    if (records.empty()) throw ParseError(path + ":1: empty file");
    const CsvRecord& header = records[0];
    long qi = -1, ai = -1, li = -1;
    for (std::size_t i = 0; i < header.cells.size(); ++i) {
        if (header.cells[i] == "question_id") qi = long(i);
        else if (header.cells[i] == "answer_text") ai = long(i);
        else if (header.cells[i] == "label") li = long(i);
    }
    if (qi < 0 || ai < 0 || li < 0) {
        parse_fail(path, header.line, "header must name question_id, answer_text and label columns");
    }
    if (records.size() == 1) throw ParseError(path + ":" + std::to_string(header.line) + ": no data rows");

    std::vector<Example> out;
    out.reserve(records.size() - 1);
    std::size_t width = std::size_t(std::max({qi, ai, li})) + 1;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const CsvRecord& rec = records[r];
        if (rec.cells.size() < width) {
            parse_fail(path, rec.line, "record has " + std::to_string(rec.cells.size()) +
                                           " cells, expected at least " + std::to_string(width));
        }
        Example ex;
        ex.question_id = rec.cells[std::size_t(qi)];
        ex.answer_text = rec.cells[std::size_t(ai)];
        if (ex.question_id.empty()) parse_fail(path, rec.line, "empty question_id");
        ex.gold_label = resolve_label(rec.cells[std::size_t(li)], labels, path, rec.line);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Example> load_jsonl(const std::string& path, const LabelMap& labels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::vector<Example> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            parse_fail(path, lineno, std::string("bad JSON: ") + e.what());
        }
        if (!obj.is_object()) parse_fail(path, lineno, "expected a JSON object");
        for (const char* key : {"question_id", "answer_text", "label"}) {
            if (!obj.contains(key)) parse_fail(path, lineno, std::string("missing field ") + key);
        }
        Example ex;
        if (!obj["question_id"].is_string() || !obj["answer_text"].is_string()) {
            parse_fail(path, lineno, "question_id and answer_text must be strings");
        }
        ex.question_id = obj["question_id"].get<std::string>();
        ex.answer_text = obj["answer_text"].get<std::string>();
        if (ex.question_id.empty()) parse_fail(path, lineno, "empty question_id");
        const auto& lab = obj["label"];
        if (lab.is_string()) {
            ex.gold_label = resolve_label(lab.get<std::string>(), labels, path, lineno);
        } else if (lab.is_number_integer()) {
            int v = lab.get<int>();
            if (v < 0 || v >= labels.num_classes()) {
                parse_fail(path, lineno, "label index " + std::to_string(v) + " out of range");
            }
            ex.gold_label = v;
        } else {
            parse_fail(path, lineno, "label must be a string or an integer");
        }
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw ParseError(path + ":1: empty file");
    return out;
}

} // namespace

std::vector<Example> load_examples(const std::string& path, FileFormat fmt, const LabelMap& labels) {
    return fmt == FileFormat::kCsv ? load_csv(path, labels) : load_jsonl(path, labels);
}

void write_examples(const std::string& path, FileFormat fmt, const LabelMap& labels,
                    const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    if (fmt == FileFormat::kCsv) {
        out << "question_id,answer_text,label\n";
        for (const Example& ex : examples) {
            out << csv_quote(ex.question_id) << ',' << csv_quote(ex.answer_text) << ','
                << csv_quote(labels.names.at(std::size_t(ex.gold_label))) << '\n';
        }
    } else {
        for (const Example& ex : examples) {
            nlohmann::json obj;
            obj["question_id"] = ex.question_id;
            obj["answer_text"] = ex.answer_text;
            obj["label"] = labels.names.at(std::size_t(ex.gold_label));
            out << obj.dump() << '\n';
        }
    }
    if (!out) throw ConfigError("write failed for " + path);
}

SparseVec featurize_sparse(std::string_view text, int hash_bits) {
    if (hash_bits < 2 || hash_bits > 24) {
        throw std::invalid_argument("featurize: hash_bits must be in [2, 24]");
    }
    const std::uint64_t mask = (std::uint64_t(1) << hash_bits) - 1;

    std::string lowered(text);
    for (char& c : lowered) c = char(std::tolower(static_cast<unsigned char>(c)));

    std::vector<std::string> tokens;
    std::string tok;
    for (unsigned char c : lowered) {
        if (std::isalnum(c)) {
            tok.push_back(char(c));
        } else if (!tok.empty()) {
            tokens.push_back(std::move(tok));
            tok.clear();
        }
    }
    if (!tok.empty()) tokens.push_back(std::move(tok));

    std::map<std::uint32_t, double> counts;
    auto bump = [&](std::string_view t) { counts[std::uint32_t(fnv1a64(t) & mask)] += 1.0; };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        bump(tokens[i]);
        if (i + 1 < tokens.size()) bump(tokens[i] + " " + tokens[i + 1]);
    }

    SparseVec sv;
    sv.dim = std::size_t(1) << hash_bits;
    double norm_sq = 0.0;
    for (const auto& [idx, cnt] : counts) norm_sq += cnt * cnt;
    double norm = std::sqrt(norm_sq);
    for (const auto& [idx, cnt] : counts) {
        sv.entries.emplace_back(idx, norm > 0.0 ? cnt / norm : 0.0);
    }
    return sv;
}

Vec featurize(std::string_view text, int hash_bits) {
    return featurize_sparse(text, hash_bits).to_dense();
}

std::vector<FeaturizedExample> featurize_examples(const std::vector<Example>& examples, int hash_bits) {
    std::vector<FeaturizedExample> out;
    out.reserve(examples.size());
    for (const Example& ex : examples) {
        out.push_back({ex, featurize_sparse(ex.answer_text, hash_bits)});
    }
    return out;
}

namespace {

// Largest-remainder allocation of n items to the three splits.
std::array<std::size_t, 3> allocate(std::size_t n, const SplitRatios& r) {
    const double ratios[3] = {r.train, r.val, r.test};
    std::array<std::size_t, 3> counts{};
    double fracs[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double target = ratios[i] * double(n);
        counts[std::size_t(i)] = std::size_t(target);
        fracs[i] = target - double(counts[std::size_t(i)]);
        assigned += counts[std::size_t(i)];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (fracs[i] > fracs[best]) best = i;
        }
        ++counts[std::size_t(best)];
        fracs[best] = -1.0;
        ++assigned;
    }
    return counts;
}

void check_ratios(const SplitRatios& r) {
    if (r.train <= 0.0 || r.val <= 0.0 || r.test <= 0.0) {
        throw ConfigError("split ratios must be positive");
    }
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1");
    }
}

} // namespace

DatasetSplit split_examples(const std::vector<Example>& data, SplitRatios ratios, std::uint64_t seed,
                            bool by_question) {
    check_ratios(ratios);
    if (data.empty()) throw ConfigError("split: no examples");
    RandomStream rng(seed);

    // Per-example split assignment, 0/1/2.
    std::vector<int> assignment(data.size(), -1);

    if (by_question) {
        std::vector<std::string> qids;
        std::unordered_map<std::string, std::vector<std::size_t>> by_q;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto [it, inserted] = by_q.try_emplace(data[i].question_id);
            if (inserted) qids.push_back(data[i].question_id);
            it->second.push_back(i);
        }
        rng.shuffle(qids);
        auto counts = allocate(qids.size(), ratios);
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < counts[std::size_t(s)]; ++k, ++pos) {
                for (std::size_t idx : by_q[qids[pos]]) assignment[idx] = s;
            }
        }
    } else {
        int num_labels = 0;
        for (const Example& ex : data) num_labels = std::max(num_labels, ex.gold_label + 1);
        for (int lab = 0; lab < num_labels; ++lab) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < data.size(); ++i) {
                if (data[i].gold_label == lab) idx.push_back(i);
            }
            if (idx.empty()) continue;
            rng.shuffle(idx);
            auto counts = allocate(idx.size(), ratios);
            std::size_t pos = 0;
            for (int s = 0; s < 3; ++s) {
                for (std::size_t k = 0; k < counts[std::size_t(s)]; ++k, ++pos) {
                    assignment[idx[pos]] = s;
                }
            }
        }
    }

    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < data.size(); ++i) {
        switch (assignment[i]) {
        case 0: split.train.push_back(data[i]); break;
        case 1: split.val.push_back(data[i]); break;
        case 2: split.test.push_back(data[i]); break;
        default: throw std::logic_error("split: unassigned example");
        }
    }
    if (split.train.empty() || split.val.empty() || split.test.empty()) {
        throw ConfigError("split: a split came out empty; need more data or different ratios");
    }
    return split;
}

std::vector<double> noise_ramp(std::size_t num_questions, double max_noise) {
    std::vector<double> noise(num_questions, 0.0);
    for (std::size_t q = 0; q < num_questions; ++q) {
        noise[q] = num_questions > 1 ? max_noise * double(q) / double(num_questions - 1) : 0.0;
    }
    return noise;
}

std::vector<Example> gen_synthetic(const SyntheticConfig& config) {
    if (config.num_questions == 0 || config.examples_per_question == 0) {
        throw ConfigError("gen_synthetic: num_questions and examples_per_question must be positive");
    }
    if (config.num_classes < 2) throw ConfigError("gen_synthetic: need at least 2 classes");
    std::vector<double> noise = config.per_question_noise;
    if (noise.empty()) noise = noise_ramp(config.num_questions, 0.45);
    if (noise.size() != config.num_questions) {
        throw ConfigError("gen_synthetic: per_question_noise length " + std::to_string(noise.size()) +
                          " != num_questions " + std::to_string(config.num_questions));
    }
    for (double p : noise) {
        if (!(p >= 0.0 && p <= 0.5)) {
            throw ConfigError("gen_synthetic: noise probabilities must lie in [0, 0.5]");
        }
    }

    // Every example of a (question, class) cell shares the same prototype and
    // question tokens; only the two filler tokens vary. Flipped labels are
    // therefore not recoverable from the text, so a classifier's training
    // error on a question approaches that question's planted noise rather
    // than vanishing through memorization.
    constexpr std::size_t kClassTokens = 3;
    constexpr std::size_t kQuestionTokens = 2;
    constexpr std::size_t kFillerPool = 6;
    constexpr std::size_t kFillerDraws = 2;

    RandomStream rng(config.seed);
    std::vector<Example> out;
    out.reserve(config.num_questions * config.examples_per_question);

    for (std::size_t q = 0; q < config.num_questions; ++q) {
        std::string qid = "q" + std::to_string(q);
        for (std::size_t e = 0; e < config.examples_per_question; ++e) {
            int true_class = int(rng.next_index(std::size_t(config.num_classes)));

            std::string text;
            for (std::size_t k = 0; k < kClassTokens; ++k) {
                if (k) text += ' ';
                text += qid + "c" + std::to_string(true_class) + "w" + std::to_string(k);
            }
            for (std::size_t k = 0; k < kQuestionTokens; ++k) {
                text += ' ' + qid + "s" + std::to_string(k);
            }
            for (std::size_t k = 0; k < kFillerDraws; ++k) {
                text += " f" + std::to_string(rng.next_index(kFillerPool));
            }

            int label = true_class;
            if (rng.next_double() < noise[q]) {
                label = (true_class + 1 + int(rng.next_index(std::size_t(config.num_classes - 1)))) %
                        config.num_classes;
            }
            out.push_back({qid, std::move(text), label});
        }
    }
    return out;
}

} // namespace jtsp
