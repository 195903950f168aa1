#include "plastic/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace plastic;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// A config small enough that the whole grid trains in a couple of seconds.
ExperimentConfig tiny_experiment(const fs::path& out) {
    ExperimentConfig cfg = make_config("synthetic", "desk");
    cfg.out_dir = out.string();
    cfg.synth_train_items = 1200;
    cfg.synth_test_items = 200;
    cfg.source_train_cap = 100;
    cfg.source_valid_cap = 60;
    cfg.few_shot_k = 3;
    cfg.max_epochs = 2;
    cfg.runs = 2;
    cfg.conv1_maps = 2;
    cfg.dense_units = 6;
    cfg.batch_size = 10;
    cfg.strategies = {"RESET", "REUSE_CF"};
    cfg.prior_tasks = {"CL"};
    cfg.target_tasks = {"CL", "AE"};
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Config, PresetsPinPaperHyperparameters) {
    ExperimentConfig mnist = make_config("mnist", "paper");
    EXPECT_DOUBLE_EQ(mnist.learning_rate, 1e-5);
    EXPECT_DOUBLE_EQ(mnist.momentum, 0.5);
    EXPECT_DOUBLE_EQ(mnist.dropout_p, 0.5);
    EXPECT_DOUBLE_EQ(mnist.l2_lambda, 0.001);
    EXPECT_DOUBLE_EQ(mnist.sparsity_coeff, 1e-4);
    EXPECT_DOUBLE_EQ(mnist.sparsity_target, 0.9);
    EXPECT_EQ(mnist.batch_size, 50u);
    EXPECT_DOUBLE_EQ(mnist.alpha_mt, 0.01);
    EXPECT_EQ(mnist.max_epochs, 2000u);
    EXPECT_EQ(mnist.patience, 200u);
    EXPECT_EQ(mnist.conv1_maps, 32u);
    EXPECT_EQ(mnist.dense_units, 40u);
    EXPECT_EQ(mnist.few_shot_k, 10u);
    EXPECT_EQ(mnist.runs, 2u);

    ExperimentConfig cifar = make_config("cifar10", "paper");
    EXPECT_EQ(cifar.max_epochs, 3000u);
    EXPECT_DOUBLE_EQ(cifar.learning_rate, 1e-5);

    ExperimentConfig rolls = make_config("pianoroll", "paper");
    EXPECT_DOUBLE_EQ(rolls.learning_rate, 1e-6);
    EXPECT_DOUBLE_EQ(rolls.sparsity_target, 0.5);
    EXPECT_EQ(rolls.conv1_maps, 9u);
    EXPECT_EQ(rolls.dense_units, 256u);
    EXPECT_EQ(rolls.source_labels, (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(rolls.target_labels, (std::vector<int>{4, 5}));

    ExperimentConfig desk = make_config("mnist", "desk");
    EXPECT_EQ(desk.conv1_maps, 8u);
    EXPECT_EQ(desk.source_train_cap, 2000u);
    EXPECT_EQ(desk.few_shot_k, 50u);
    EXPECT_EQ(desk.max_epochs, 150u);
    EXPECT_EQ(desk.runs, 3u);
}

TEST(Config, TextRoundTripIsCanonical) {
    ExperimentConfig cfg = make_config("pianoroll", "desk");
    cfg.learning_rate = 3.25e-4;
    cfg.strategies = {"RESET", "REUSE_ALL"};
    cfg.base_seed = 777;
    std::string text = config_to_text(cfg);
    ExperimentConfig parsed = config_from_text(text);
    EXPECT_EQ(config_to_text(parsed), text);
    EXPECT_DOUBLE_EQ(parsed.learning_rate, 3.25e-4);
    EXPECT_EQ(parsed.strategies, (std::vector<std::string>{"RESET", "REUSE_ALL"}));
    EXPECT_EQ(parsed.base_seed, 777u);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(config_from_text("no_such_key = 1\n"), ConfigError);
}

TEST(Config, ArchitecturePresetsMatchDatasetShapes) {
    NetworkSpec mnist = build_classifier_spec(make_config("mnist", "paper"), 10);
    NetworkShapes shapes = validate_spec(mnist);
    EXPECT_EQ(shapes.out_shape[0], (std::vector<std::size_t>{32, 24, 24}));
    EXPECT_EQ(shapes.out_shape.back(), (std::vector<std::size_t>{10}));

    NetworkSpec rolls = build_classifier_spec(make_config("pianoroll", "paper"), 4);
    NetworkShapes rshapes = validate_spec(rolls);
    EXPECT_EQ(rshapes.out_shape[0], (std::vector<std::size_t>{9, 60, 392}));
    EXPECT_EQ(rshapes.out_shape[2], (std::vector<std::size_t>{5, 26, 192}));
    EXPECT_EQ(rshapes.out_shape.back(), (std::vector<std::size_t>{4}));

    NetworkSpec cifar = build_classifier_spec(make_config("cifar10", "paper"), 10);
    NetworkShapes cshapes = validate_spec(cifar);
    EXPECT_EQ(cshapes.out_shape[0], (std::vector<std::size_t>{32, 28, 28}));
}

TEST(Grid, MnistDefaultsExpandToFortyCells) {
    ExperimentConfig cfg = make_config("mnist", "paper");
    std::vector<GridCell> grid = enumerate_grid(cfg);
    // RESET (no prior) x 2 targets x 2 runs = 4, plus 3 strategies x 3
    // priors x 2 targets x 2 runs = 36.
    EXPECT_EQ(grid.size(), 40u);
    std::size_t resets = 0;
    for (const GridCell& c : grid)
        if (c.strategy == Strategy::Reset) {
            EXPECT_FALSE(c.prior_task.has_value());
            ++resets;
        }
    EXPECT_EQ(resets, 4u);
}

TEST(AverageRuns, MeanAndIdentity) {
    MetricsRecord base{"mnist", "RESET", "NONE", "CL", 0, 3, "test_loss", 0.4};
    MetricsRecord other = base;
    other.run_id = 1;
    other.value = 0.6;
    auto averaged = average_runs({base, other});
    ASSERT_EQ(averaged.size(), 1u);
    EXPECT_DOUBLE_EQ(averaged[0].value, 0.5);
    EXPECT_EQ(averaged[0].epoch, 3u);

    auto single = average_runs({base});
    ASSERT_EQ(single.size(), 1u);
    EXPECT_DOUBLE_EQ(single[0].value, 0.4);
}

TEST(AverageRuns, PadsHaltedRunsWithFinalValue) {
    // Run A halts at epoch 2 (values 1.0, 2.0); run B reaches epoch 4.
    std::vector<MetricsRecord> records;
    auto add = [&](int run, std::size_t epoch, double value) {
        records.push_back({"mnist", "RESET", "NONE", "CL", run, epoch, "test_loss", value});
    };
    add(0, 1, 1.0);
    add(0, 2, 2.0);
    add(1, 1, 3.0);
    add(1, 2, 4.0);
    add(1, 3, 5.0);
    add(1, 4, 6.0);
    auto averaged = average_runs(records);
    ASSERT_EQ(averaged.size(), 4u);
    // Hand-computed fixture: epochs 3 and 4 average run B with run A's final 2.0.
    EXPECT_DOUBLE_EQ(averaged[0].value, 2.0);   // (1+3)/2
    EXPECT_DOUBLE_EQ(averaged[1].value, 3.0);   // (2+4)/2
    EXPECT_DOUBLE_EQ(averaged[2].value, 3.5);   // (2+5)/2
    EXPECT_DOUBLE_EQ(averaged[3].value, 4.0);   // (2+6)/2
}

TEST(AverageRuns, EmptyInputIsUsageError) {
    EXPECT_THROW(average_runs({}), UsageError);
}

TEST(MetricsCsv, WriteReadRoundTrip) {
    std::vector<MetricsRecord> records{
        {"mnist", "REUSE_CF", "CL", "AE", 1, 2, "test_loss", 0.125},
        {"mnist", "RESET", "NONE", "CL", 0, 1, "test_accuracy", 0.5},
    };
    std::ostringstream out;
    write_metrics_csv(out, records);
    std::istringstream in(out.str());
    auto parsed = read_metrics_csv(in);
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0].strategy, "RESET");  // canonical sort order
    EXPECT_EQ(parsed[1].strategy, "REUSE_CF");
    EXPECT_DOUBLE_EQ(parsed[1].value, 0.125);
}

TEST(Evaluate, PerfectAndChanceLevelAccuracy) {
    // An identity-ish classifier: one dense layer with huge weights pinned
    // to the label gives near-one-hot predictions.
    NetworkSpec spec;
    spec.input_shape = {1, 1, 2};
    spec.task = Task::CL;
    spec.num_classes = 2;
    spec.layers = {DenseSpec{2, Activation::Softmax}};
    ParamSet params = init_params(spec, 1);
    Tensor& w = params.at(0, "weights");
    w(0, 0) = 50.0;
    w(0, 1) = 0.0;
    w(1, 0) = 0.0;
    w(1, 1) = 50.0;
    NetworkShapes shapes = validate_spec(spec);

    Dataset data;
    data.items = {Tensor::from({1, 1, 2}, {1.0, 0.0}), Tensor::from({1, 1, 2}, {0.0, 1.0})};
    data.labels = {0, 1};
    EvalMetrics m = evaluate(spec, shapes, params, data, Task::CL);
    EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
    EXPECT_LT(m.loss, 1e-10);

    // Uniform predictions on balanced data sit at chance level; argmax ties
    // resolve to the lowest class index.
    ParamSet uniform = init_params(spec, 2);
    for (auto& e : uniform.entries()) e.value.fill(0.0);
    EvalMetrics u = evaluate(spec, shapes, uniform, data, Task::CL);
    EXPECT_DOUBLE_EQ(u.accuracy, 0.5);  // both predicted as class 0
    EXPECT_NEAR(u.loss, std::log(2.0), 1e-12);
}

TEST(Evaluate, AutoencoderLossEqualsMse) {
    NetworkSpec cl;
    cl.input_shape = {1, 4, 4};
    cl.task = Task::CL;
    cl.num_classes = 2;
    cl.layers = {ConvSpec{2, 3, 3, Activation::Sigmoid}, DenseSpec{3, Activation::Sigmoid},
                 DenseSpec{2, Activation::Softmax}};
    NetworkSpec ae = build_cae_from_cnn(cl);
    NetworkShapes shapes = validate_spec(ae);
    ParamSet params = init_params(ae, 3);
    Rng data_rng(4);
    Dataset data;
    for (int i = 0; i < 3; ++i)
        data.items.push_back(testutil::random_tensor({1, 4, 4}, data_rng, 0.0, 1.0));
    data.labels = {0, 0, 0};
    EvalMetrics m = evaluate(ae, shapes, params, data, Task::AE);
    std::vector<Tensor> recon, target;
    Rng rng(0);
    for (const Tensor& item : data.items) {
        recon.push_back(forward_item(ae, shapes, params, item, Mode::Eval, rng).reconstruction);
        target.push_back(item);
    }
    EXPECT_NEAR(m.loss, mse(recon, target), 1e-12);
    EXPECT_THROW(evaluate(ae, shapes, params, data, Task::CL), UsageError);
}

// ---------------------------------------------------------------------------
// End-to-end experiment
// ---------------------------------------------------------------------------

TEST(Experiment, RunsGridPersistsOutputsAndAverages) {
    fs::path out = fresh_dir("plastic_exp_run");
    ExperimentConfig cfg = tiny_experiment(out);
    ExperimentSummary summary = run_experiment(cfg);
    EXPECT_EQ(summary.cells_failed, 0u) << (summary.failures.empty() ? "" : summary.failures[0]);
    // RESET (1) + REUSE_CF x 1 prior = 2 strategy variants x 2 targets x 2 runs.
    EXPECT_EQ(summary.cells_total, 8u);
    EXPECT_TRUE(fs::exists(out / "metrics.csv"));
    EXPECT_TRUE(fs::exists(out / "metrics_averaged.csv"));
    EXPECT_TRUE(fs::exists(out / "MANIFEST"));
    EXPECT_TRUE(fs::exists(out / "config.txt"));
    EXPECT_TRUE(fs::exists(out / "checkpoints" / "source_CL.ckpt"));
    EXPECT_TRUE(fs::exists(out / "checkpoints" / "RESET__CL__run0.ckpt"));

    std::ifstream in(out / "metrics.csv");
    auto records = read_metrics_csv(in);
    // Per cell: max_epochs x (train + valid + test [+ accuracy for CL]).
    // 4 CL cells x 2 epochs x 4 metrics + 4 AE cells x 2 epochs x 3 metrics.
    EXPECT_EQ(records.size(), 4u * 2 * 4 + 4u * 2 * 3);

    // The averaged CSV holds exactly one record per key and documents the
    // padding rule in its header.
    std::string averaged = slurp(out / "metrics_averaged.csv");
    EXPECT_NE(averaged.find("final value"), std::string::npos);
    std::istringstream ain(averaged);
    std::string line;
    std::getline(ain, line);  // comment
    std::getline(ain, line);  // header
    std::set<std::string> keys;
    std::size_t lines = 0;
    while (std::getline(ain, line)) {
        if (line.empty()) continue;
        ++lines;
        const auto last_comma = line.rfind(',');
        keys.insert(line.substr(0, last_comma));
    }
    // Exactly one record per (strategy, prior, target, epoch, metric):
    // 2 CL cell-keys x 4 metrics x 2 epochs + 2 AE cell-keys x 3 metrics x 2.
    EXPECT_EQ(keys.size(), 2u * 4 * 2 + 2u * 3 * 2);
    EXPECT_EQ(lines, keys.size());
}

TEST(Experiment, IdenticalConfigAndSeedGiveByteIdenticalCsv) {
    fs::path out_a = fresh_dir("plastic_exp_det_a");
    fs::path out_b = fresh_dir("plastic_exp_det_b");
    ExperimentConfig cfg_a = tiny_experiment(out_a);
    ExperimentConfig cfg_b = tiny_experiment(out_b);
    // Share one synthetic corpus so the check isolates the pipeline.
    cfg_b.data_dir = (out_a / "synthetic-data").string();
    run_experiment(cfg_a);
    run_experiment(cfg_b);
    std::string a = slurp(out_a / "metrics.csv");
    std::string b = slurp(out_b / "metrics.csv");
    // The CSVs differ only in nothing: out_dir is not part of the records.
    EXPECT_EQ(a, b);
}

TEST(Experiment, ResumeProducesIdenticalOutputs) {
    fs::path out = fresh_dir("plastic_exp_resume");
    ExperimentConfig cfg = tiny_experiment(out);
    run_experiment(cfg);
    std::string full_csv = slurp(out / "metrics.csv");

    // Simulate an interruption: drop half the cells and the merged CSV.
    fs::remove(out / "metrics.csv");
    fs::remove(out / "metrics_averaged.csv");
    std::size_t removed = 0;
    for (const GridCell& cell : enumerate_grid(cfg)) {
        if (removed >= 3) break;
        fs::remove(out / "cells" / (cell.name() + ".csv"));
        fs::remove(out / "checkpoints" / (cell.name() + ".ckpt"));
        ++removed;
    }
    ExperimentSummary summary = run_experiment(cfg);
    EXPECT_EQ(summary.cells_failed, 0u);
    EXPECT_EQ(slurp(out / "metrics.csv"), full_csv);
}

TEST(Experiment, MissingDatasetPathFailsBeforeTraining) {
    fs::path out = fresh_dir("plastic_exp_missing");
    ExperimentConfig cfg = make_config("mnist", "desk");
    cfg.out_dir = out.string();
    cfg.data_dir = (out / "no-such-dir").string();
    EXPECT_THROW(run_experiment(cfg), ConfigError);
}
