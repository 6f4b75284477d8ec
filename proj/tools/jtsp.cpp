// Command-line front end: train / eval / compare / sweep / gen-synth.
//
// Exit codes: 0 success, 2 configuration or input error, 3 training failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "jtsp/runner.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "run config JSON file");
    if (config_required) c->required();
    cmd->add_option("--seed", [&opts](const std::vector<std::string>& vals) {
        opts.seed = std::stoull(vals.at(0));
        return true;
    }, "override train.seed");
    cmd->add_option("--out", [&opts](const std::vector<std::string>& vals) {
        opts.out = vals.at(0);
        return true;
    }, "override output_dir");
    cmd->add_option("--threads", [&opts](const std::vector<std::string>& vals) {
        opts.threads = std::stoi(vals.at(0));
        return true;
    }, "worker threads for sweep rows (default 1, deterministic)");
}

jtsp::RunConfig load(const CommonOpts& opts) {
    jtsp::CliOverrides overrides;
    overrides.seed = opts.seed;
    overrides.output_dir = opts.out;
    overrides.threads = opts.threads;
    return jtsp::load_run_config(opts.config_path, overrides);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint training for selective prediction"};
    app.require_subcommand(1);

    CommonOpts train_opts, compare_opts, sweep_opts, gen_opts;
    CLI::App* train = app.add_subcommand("train", "run one condition end to end");
    add_common(train, train_opts);
    CLI::App* compare = app.add_subcommand("compare", "run several conditions on the same splits");
    add_common(compare, compare_opts);
    CLI::App* sweep = app.add_subcommand("sweep", "sweep the deferral weight d");
    add_common(sweep, sweep_opts);
    CLI::App* gen = app.add_subcommand("gen-synth", "generate synthetic dataset files");
    add_common(gen, gen_opts);

    std::string eval_checkpoint, eval_data, eval_format = "csv", eval_out, eval_config;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a data file");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "data file")->required();
    eval->add_option("--format", eval_format, "csv or jsonl (default csv)");
    eval->add_option("--out", eval_out, "directory for metrics files (optional)");
    eval->add_option("--config", eval_config, "config whose hash the checkpoint must match");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) {
            jtsp::cmd_train(load(train_opts));
        } else if (compare->parsed()) {
            jtsp::cmd_compare(load(compare_opts));
        } else if (sweep->parsed()) {
            jtsp::cmd_sweep(load(sweep_opts));
        } else if (gen->parsed()) {
            jtsp::cmd_gen_synth(load(gen_opts));
        } else if (eval->parsed()) {
            std::string expect_hash;
            if (!eval_config.empty()) {
                expect_hash = jtsp::load_run_config(eval_config).config_hash;
            }
            jtsp::cmd_eval(eval_checkpoint, eval_data, eval_format, eval_out, expect_hash);
        }
    } catch (const jtsp::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 3;
    } catch (const jtsp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const jtsp::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const jtsp::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
