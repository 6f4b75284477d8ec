#include "jtsp/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <limits>
#include <thread>

namespace jtsp {

namespace {

SweepRow run_one(double d, const ModelConfig& model_cfg, const TrainConfig& base,
                 const std::vector<FeaturizedExample>& train_data,
                 const std::vector<FeaturizedExample>& val_data,
                 const std::vector<FeaturizedExample>& test_data) {
    SweepRow row;
    row.d = d;
    row.seed = base.seed;
    try {
        TrainConfig cfg = base;
        cfg.reward = constrained_signal(d);
        cfg.checkpoint_dir.clear();
        RandomStream rng(cfg.seed);
        SelectiveModel model(model_cfg, rng);
        Trainer trainer(std::move(model), cfg, train_data, val_data);
        trainer.run_all();
        const SelectiveModel& final_model =
            trainer.has_selected() ? trainer.selected().model : trainer.model();
        MetricsRecord m = evaluate_model(final_model, test_data);
        row.deferral_rate = m.deferral_rate;
        row.sp_acc = m.sp_acc;
        row.cl_acc = m.cl_acc;
        row.dp_acc = m.dp_acc;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
        row.deferral_rate = row.sp_acc = row.cl_acc = row.dp_acc =
            std::numeric_limits<double>::quiet_NaN();
    }
    return row;
}

std::string fmt_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

} // namespace

std::vector<SweepRow> sweep_d(const ModelConfig& model_cfg, const TrainConfig& cfg,
                              const std::vector<FeaturizedExample>& train_data,
                              const std::vector<FeaturizedExample>& val_data,
                              const std::vector<FeaturizedExample>& test_data,
                              std::vector<double> d_values, int threads) {
    if (d_values.empty()) throw ConfigError("sweep: no d values");
    for (double d : d_values) {
        if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("sweep: every d must lie in [0, 1]");
    }
    std::sort(d_values.begin(), d_values.end());

    std::vector<SweepRow> rows(d_values.size());
    if (threads <= 1 || d_values.size() == 1) {
        for (std::size_t i = 0; i < d_values.size(); ++i) {
            rows[i] = run_one(d_values[i], model_cfg, cfg, train_data, val_data, test_data);
        }
        return rows;
    }

    // Rows are independent pipelines; output order is by d regardless of
    // completion order.
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= d_values.size()) return;
            rows[i] = run_one(d_values[i], model_cfg, cfg, train_data, val_data, test_data);
        }
    };
    std::vector<std::thread> pool;
    std::size_t n_threads = std::min<std::size_t>(std::size_t(threads), d_values.size());
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    return rows;
}

std::vector<double> default_d_grid() {
    std::vector<double> grid;
    for (int k = 0; k <= 20; ++k) grid.push_back(double(k) * 0.05);
    return grid;
}

std::string sweep_csv_header() {
    return "d,deferral_rate,sp_acc,cl_acc,dp_acc,seed";
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << sweep_csv_header() << '\n';
    std::vector<std::string> errors;
    for (const SweepRow& row : rows) {
        out << fmt_double(row.d) << ',' << fmt_double(row.deferral_rate) << ','
            << fmt_double(row.sp_acc) << ',' << fmt_double(row.cl_acc) << ','
            << fmt_double(row.dp_acc) << ',' << row.seed << '\n';
        if (!row.ok) errors.push_back("d=" + fmt_double(row.d) + ": " + row.error);
    }
    if (!errors.empty()) {
        std::ofstream err(path + ".errors.log", std::ios::binary);
        for (const std::string& e : errors) err << e << '\n';
    }
}

} // namespace jtsp
