// Command-line front end: `run` executes the source->target adaptation grid
// for one dataset, `average` collapses per-run learning curves, `eval`
// scores a checkpoint on a dataset's test split, `synth` writes the bundled
// synthetic corpora.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "plastic/plastic.hpp"

namespace fs = std::filesystem;
using namespace plastic;

namespace {

struct RunFlags {
    std::string config_path, dataset, preset, out_dir, data_dir;
    std::vector<std::string> sets;  // KEY=VALUE overrides
    // -1 / NaN markers mean "not given".
    double learning_rate = -1, momentum = -1, dropout_p = -1, l2_lambda = -1, sparsity_coeff = -1,
           sparsity_target = -1, alpha_mt = -1, prf_lambda = -1;
    long long batch_size = -1, max_epochs = -1, patience = -1, runs = -1, few_shot_k = -1;
    long long seed = -1;
    std::string strategies, prior_tasks, target_tasks;
};

ExperimentConfig resolve_run_config(const RunFlags& f) {
    ExperimentConfig cfg;
    if (!f.config_path.empty()) {
        cfg = load_config(f.config_path);
        if (!f.dataset.empty() || !f.preset.empty()) {
            // Re-derive defaults when the dataset/preset changes on top of a file.
            ExperimentConfig base = make_config(f.dataset.empty() ? cfg.dataset : f.dataset,
                                                f.preset.empty() ? cfg.preset : f.preset);
            base.out_dir = cfg.out_dir;
            base.data_dir = cfg.data_dir;
            cfg = base;
        }
    } else {
        cfg = make_config(f.dataset.empty() ? "mnist" : f.dataset,
                          f.preset.empty() ? "paper" : f.preset);
    }
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
    if (f.learning_rate >= 0) cfg.learning_rate = f.learning_rate;
    if (f.momentum >= 0) cfg.momentum = f.momentum;
    if (f.dropout_p >= 0) cfg.dropout_p = f.dropout_p;
    if (f.l2_lambda >= 0) cfg.l2_lambda = f.l2_lambda;
    if (f.sparsity_coeff >= 0) cfg.sparsity_coeff = f.sparsity_coeff;
    if (f.sparsity_target >= 0) cfg.sparsity_target = f.sparsity_target;
    if (f.alpha_mt >= 0) cfg.alpha_mt = f.alpha_mt;
    if (f.prf_lambda >= 0) cfg.prf_lambda = f.prf_lambda;
    if (f.batch_size >= 0) cfg.batch_size = static_cast<std::size_t>(f.batch_size);
    if (f.max_epochs >= 0) cfg.max_epochs = static_cast<std::size_t>(f.max_epochs);
    if (f.patience >= 0) cfg.patience = static_cast<std::size_t>(f.patience);
    if (f.runs >= 0) cfg.runs = static_cast<std::size_t>(f.runs);
    if (f.few_shot_k >= 0) cfg.few_shot_k = static_cast<std::size_t>(f.few_shot_k);
    if (f.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(f.seed);
    if (!f.strategies.empty()) config_set(cfg, "strategies", f.strategies);
    if (!f.prior_tasks.empty()) config_set(cfg, "prior_tasks", f.prior_tasks);
    if (!f.target_tasks.empty()) config_set(cfg, "target_tasks", f.target_tasks);
    for (const std::string& kv : f.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
        config_set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

int cmd_run(const RunFlags& flags) {
    ExperimentConfig cfg = resolve_run_config(flags);
    ExperimentSummary summary =
        run_experiment(cfg, [](const std::string& msg) { std::cout << msg << "\n"; });
    std::cout << "cells: " << summary.cells_total - summary.cells_failed << "/"
              << summary.cells_total << " succeeded\n";
    std::cout << "metrics: " << summary.metrics_csv.string() << "\n";
    if (!summary.averaged_csv.empty())
        std::cout << "averaged: " << summary.averaged_csv.string() << "\n";
    for (const std::string& failure : summary.failures) std::cerr << "failed " << failure << "\n";
    return summary.cells_failed == 0 ? 0 : 1;
}

int cmd_average(const std::string& in_path, const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw ConfigError("cannot open " + in_path);
    auto records = read_metrics_csv(in);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + out_path);
    write_averaged_csv(out, average_runs(records));
    std::cout << "averaged " << records.size() << " records into " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset,
             const std::string& data_dir_flag, const std::string& task_flag) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Task task = task_flag.empty() ? ckpt.spec.task : task_from_string(task_flag);

    ExperimentConfig cfg = make_config(dataset, "paper");
    if (!data_dir_flag.empty()) cfg.data_dir = data_dir_flag;
    const fs::path data_dir = [&] {
        if (!cfg.data_dir.empty()) return fs::path(cfg.data_dir);
        if (const char* root = std::getenv(kDataRootEnvVar)) return fs::path(root) / dataset;
        return fs::path("data") / dataset;
    }();

    PartitionedDataset parts = [&] {
        if (dataset == "mnist" || dataset == "synthetic") return load_mnist_partitioned(data_dir);
        if (dataset == "cifar10") return load_cifar10_partitioned(data_dir);
        if (dataset == "pianoroll") return load_pianoroll_partitioned(data_dir);
        throw ConfigError("unknown dataset '" + dataset + "'");
    }();

    Dataset test = parts.test;
    auto label_map = ckpt.meta.find("label_map");
    if (label_map != ckpt.meta.end() && !label_map->second.empty()) {
        std::vector<int> keep;
        for (const auto& tok : split_ws([](std::string s) {
                 for (char& c : s)
                     if (c == ',') c = ' ';
                 return s;
             }(label_map->second)))
            keep.push_back(std::stoi(tok));
        test = filter_labels(test, keep);
    }

    NetworkShapes shapes = validate_spec(ckpt.spec);
    EvalMetrics metrics = evaluate(ckpt.spec, shapes, ckpt.params, test, task);
    std::cout << "items: " << test.size() << "\n";
    std::cout << "task: " << to_string(task) << "\n";
    std::cout << "test_loss: " << fmt_double(metrics.loss) << "\n";
    if (metrics.accuracy >= 0.0)
        std::cout << "test_accuracy: " << fmt_double(metrics.accuracy) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"plastic: CNN/CAE representation-adaptation experiments"};
    app.require_subcommand(1);

    RunFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "run the adaptation grid for one dataset");
    run->add_option("--config", run_flags.config_path, "config file (flat key = value lines)");
    run->add_option("--dataset", run_flags.dataset, "mnist | cifar10 | pianoroll | synthetic");
    run->add_option("--preset", run_flags.preset, "paper | desk");
    run->add_option("--out", run_flags.out_dir, "output directory");
    run->add_option("--data-dir", run_flags.data_dir, "dataset directory");
    run->add_option("--runs", run_flags.runs, "training runs per grid cell");
    run->add_option("--seed", run_flags.seed, "base seed deriving all per-run randomness");
    run->add_option("--learning-rate", run_flags.learning_rate);
    run->add_option("--momentum", run_flags.momentum);
    run->add_option("--dropout", run_flags.dropout_p);
    run->add_option("--l2", run_flags.l2_lambda);
    run->add_option("--sparsity-coeff", run_flags.sparsity_coeff);
    run->add_option("--sparsity-target", run_flags.sparsity_target);
    run->add_option("--alpha-mt", run_flags.alpha_mt);
    run->add_option("--prf-lambda", run_flags.prf_lambda);
    run->add_option("--batch-size", run_flags.batch_size);
    run->add_option("--max-epochs", run_flags.max_epochs);
    run->add_option("--patience", run_flags.patience);
    run->add_option("--few-shot-k", run_flags.few_shot_k);
    run->add_option("--strategies", run_flags.strategies, "comma list of strategy labels");
    run->add_option("--prior-tasks", run_flags.prior_tasks, "comma list of CL,AE,MT");
    run->add_option("--target-tasks", run_flags.target_tasks, "comma list of CL,AE");
    run->add_option("--set", run_flags.sets, "generic KEY=VALUE config override")
        ->take_all();

    std::string avg_in, avg_out;
    CLI::App* average = app.add_subcommand("average", "average per-run curves in a metrics CSV");
    average->add_option("input", avg_in, "metrics.csv produced by run")->required();
    average->add_option("output", avg_out, "averaged CSV to write")->required();

    std::string eval_ckpt, eval_dataset, eval_data_dir, eval_task;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--dataset", eval_dataset)->required();
    eval->add_option("--data-dir", eval_data_dir);
    eval->add_option("--task", eval_task, "CL | AE (default: the checkpoint's task)");

    std::string synth_kind = "digits", synth_out;
    long long synth_train = 16000, synth_test = 4000, synth_seed = 1;
    long long synth_classes = 6, synth_pieces = 30, synth_windows = 6;
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic corpus");
    synth->add_option("--kind", synth_kind, "digits | pianoroll");
    synth->add_option("--out", synth_out)->required();
    synth->add_option("--train", synth_train, "digit corpus: train-file items");
    synth->add_option("--test", synth_test, "digit corpus: test-file items");
    synth->add_option("--classes", synth_classes, "pianoroll: composer classes");
    synth->add_option("--pieces", synth_pieces, "pianoroll: pieces per class");
    synth->add_option("--windows", synth_windows, "pianoroll: windows per piece");
    synth->add_option("--seed", synth_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_flags);
        if (average->parsed()) return cmd_average(avg_in, avg_out);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_dataset, eval_data_dir, eval_task);
        if (synth->parsed()) {
            if (synth_kind == "digits") {
                write_synthetic_digits(synth_out, static_cast<std::size_t>(synth_train),
                                       static_cast<std::size_t>(synth_test),
                                       static_cast<std::uint64_t>(synth_seed));
            } else if (synth_kind == "pianoroll") {
                write_synthetic_pianoroll(synth_out, static_cast<std::size_t>(synth_classes),
                                          static_cast<std::size_t>(synth_pieces),
                                          static_cast<std::size_t>(synth_windows),
                                          static_cast<std::uint64_t>(synth_seed));
            } else {
                throw ConfigError("unknown synth kind '" + synth_kind + "'");
            }
            std::cout << "wrote " << synth_kind << " corpus to " << synth_out << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
