#ifndef PLASTIC_HARNESS_HPP
#define PLASTIC_HARNESS_HPP

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "plastic/checkpoint.hpp"
#include "plastic/data.hpp"
#include "plastic/model.hpp"
#include "plastic/optim.hpp"
#include "plastic/serialize.hpp"
#include "plastic/strategies.hpp"
#include "plastic/synthetic.hpp"

namespace plastic {

inline constexpr const char* kDataRootEnvVar = "PLASTIC_DATA_ROOT";

// --------------------------------------------------------------------------
// Experiment configuration
// --------------------------------------------------------------------------

/// Full description of one experiment. Paper presets reproduce the published
/// per-dataset hyperparameters; the desk preset shrinks the run (8 filters,
/// capped source sets, short epoch caps, 50-shot target) so the full grid
/// finishes in minutes on one CPU core. Every field can be overridden via
/// the config file or CLI flags.
struct ExperimentConfig {
    std::string dataset = "mnist";  // mnist | cifar10 | pianoroll | synthetic
    std::string preset = "paper";   // paper | desk
    std::string data_dir;           // default: $PLASTIC_DATA_ROOT/<dataset>
    std::string out_dir = "runs/out";

    // Optimiser / regulariser stack.
    double learning_rate = 1e-5;
    double momentum = 0.5;
    double dropout_p = 0.5;
    double l2_lambda = 0.001;
    double sparsity_coeff = 1e-4;
    double sparsity_target = 0.9;
    std::size_t batch_size = 50;
    double alpha_mt = 0.01;
    std::size_t max_epochs = 2000;
    std::size_t patience = 200;
    double prf_lambda = 0.001;

    // Architecture knobs (per-dataset defaults below).
    std::size_t conv1_maps = 32;
    std::size_t conv2_maps = 5;  // pianoroll only
    std::size_t dense_units = 40;

    // Experiment structure.
    std::vector<std::string> strategies = {"RESET", "RESET_PRF", "REUSE_ALL", "REUSE_CF"};
    std::vector<std::string> prior_tasks = {"CL", "AE", "MT"};
    std::vector<std::string> target_tasks = {"CL", "AE"};
    std::size_t runs = 2;
    std::uint64_t base_seed = 1;
    std::size_t few_shot_k = 10;
    std::vector<int> source_labels = {0, 1, 2, 3, 4};
    std::vector<int> target_labels = {5, 6, 7, 8, 9};
    std::size_t source_train_cap = 0;  // 0 = uncapped
    std::size_t source_valid_cap = 0;

    // Synthetic corpus sizing (dataset = synthetic).
    std::size_t synth_train_items = 16000;
    std::size_t synth_test_items = 4000;
};

/// Per-dataset paper defaults, optionally shrunk to the desk preset.
inline ExperimentConfig make_config(const std::string& dataset, const std::string& preset) {
    ExperimentConfig cfg;
    cfg.dataset = dataset;
    cfg.preset = preset;
    if (dataset == "mnist" || dataset == "synthetic") {
        // MNIST paper values are the struct defaults.
    } else if (dataset == "cifar10") {
        cfg.max_epochs = 3000;
    } else if (dataset == "pianoroll") {
        cfg.learning_rate = 1e-6;
        cfg.sparsity_target = 0.5;
        cfg.conv1_maps = 9;
        cfg.conv2_maps = 5;
        cfg.dense_units = 256;
        cfg.source_labels = {0, 1, 2, 3};
        cfg.target_labels = {4, 5};
    } else {
        throw ConfigError("unknown dataset '" + dataset + "'");
    }
    if (preset == "desk") {
        cfg.conv1_maps = 8;
        cfg.source_train_cap = 2000;
        cfg.source_valid_cap = 500;
        cfg.max_epochs = 150;
        cfg.few_shot_k = 50;
        cfg.learning_rate = 1e-3;
        cfg.runs = 3;
    } else if (preset != "paper") {
        throw ConfigError("unknown preset '" + preset + "'");
    }
    return cfg;
}

namespace detail {

inline std::string join_csv(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}

inline std::string join_csv(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::vector<int> split_csv_ints(const std::string& s) {
    std::vector<int> out;
    for (const std::string& tok : split_csv(s)) {
        try {
            out.push_back(std::stoi(tok));
        } catch (...) {
            throw ConfigError("malformed integer list '" + s + "'");
        }
    }
    return out;
}

}  // namespace detail

/// Applies one `key = value` assignment; throws ConfigError on unknown keys
/// or malformed values.
inline void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    auto as_u64 = [&](const std::string& v) -> std::uint64_t {
        try {
            return std::stoull(v);
        } catch (...) {
            throw ConfigError("key '" + key + "': malformed integer '" + v + "'");
        }
    };
    if (key == "dataset") cfg.dataset = value;
    else if (key == "preset") cfg.preset = value;
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "learning_rate") cfg.learning_rate = parse_double(value);
    else if (key == "momentum") cfg.momentum = parse_double(value);
    else if (key == "dropout_p") cfg.dropout_p = parse_double(value);
    else if (key == "l2_lambda") cfg.l2_lambda = parse_double(value);
    else if (key == "sparsity_coeff") cfg.sparsity_coeff = parse_double(value);
    else if (key == "sparsity_target") cfg.sparsity_target = parse_double(value);
    else if (key == "batch_size") cfg.batch_size = as_u64(value);
    else if (key == "alpha_mt") cfg.alpha_mt = parse_double(value);
    else if (key == "max_epochs") cfg.max_epochs = as_u64(value);
    else if (key == "patience") cfg.patience = as_u64(value);
    else if (key == "prf_lambda") cfg.prf_lambda = parse_double(value);
    else if (key == "conv1_maps") cfg.conv1_maps = as_u64(value);
    else if (key == "conv2_maps") cfg.conv2_maps = as_u64(value);
    else if (key == "dense_units") cfg.dense_units = as_u64(value);
    else if (key == "strategies") cfg.strategies = detail::split_csv(value);
    else if (key == "prior_tasks") cfg.prior_tasks = detail::split_csv(value);
    else if (key == "target_tasks") cfg.target_tasks = detail::split_csv(value);
    else if (key == "runs") cfg.runs = as_u64(value);
    else if (key == "base_seed") cfg.base_seed = as_u64(value);
    else if (key == "few_shot_k") cfg.few_shot_k = as_u64(value);
    else if (key == "source_labels") cfg.source_labels = detail::split_csv_ints(value);
    else if (key == "target_labels") cfg.target_labels = detail::split_csv_ints(value);
    else if (key == "source_train_cap") cfg.source_train_cap = as_u64(value);
    else if (key == "source_valid_cap") cfg.source_valid_cap = as_u64(value);
    else if (key == "synth_train_items") cfg.synth_train_items = as_u64(value);
    else if (key == "synth_test_items") cfg.synth_test_items = as_u64(value);
    else throw ConfigError("unknown config key '" + key + "'");
}

/// Canonical flat key-value text; parsing it back reproduces the config.
inline std::string config_to_text(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "dataset = " << c.dataset << "\n";
    out << "preset = " << c.preset << "\n";
    out << "data_dir = " << c.data_dir << "\n";
    out << "out_dir = " << c.out_dir << "\n";
    out << "learning_rate = " << fmt_double(c.learning_rate) << "\n";
    out << "momentum = " << fmt_double(c.momentum) << "\n";
    out << "dropout_p = " << fmt_double(c.dropout_p) << "\n";
    out << "l2_lambda = " << fmt_double(c.l2_lambda) << "\n";
    out << "sparsity_coeff = " << fmt_double(c.sparsity_coeff) << "\n";
    out << "sparsity_target = " << fmt_double(c.sparsity_target) << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "alpha_mt = " << fmt_double(c.alpha_mt) << "\n";
    out << "max_epochs = " << c.max_epochs << "\n";
    out << "patience = " << c.patience << "\n";
    out << "prf_lambda = " << fmt_double(c.prf_lambda) << "\n";
    out << "conv1_maps = " << c.conv1_maps << "\n";
    out << "conv2_maps = " << c.conv2_maps << "\n";
    out << "dense_units = " << c.dense_units << "\n";
    out << "strategies = " << detail::join_csv(c.strategies) << "\n";
    out << "prior_tasks = " << detail::join_csv(c.prior_tasks) << "\n";
    out << "target_tasks = " << detail::join_csv(c.target_tasks) << "\n";
    out << "runs = " << c.runs << "\n";
    out << "base_seed = " << c.base_seed << "\n";
    out << "few_shot_k = " << c.few_shot_k << "\n";
    out << "source_labels = " << detail::join_csv(c.source_labels) << "\n";
    out << "target_labels = " << detail::join_csv(c.target_labels) << "\n";
    out << "source_train_cap = " << c.source_train_cap << "\n";
    out << "source_valid_cap = " << c.source_valid_cap << "\n";
    out << "synth_train_items = " << c.synth_train_items << "\n";
    out << "synth_test_items = " << c.synth_test_items << "\n";
    return out.str();
}

/// Parses a flat key-value config file. Lines are `key = value`; '#' starts
/// a comment. Presets named in the file are applied before the remaining
/// assignments, so a file can say `preset = desk` and then override fields.
inline ExperimentConfig config_from_text(const std::string& text) {
    // First pass finds dataset/preset so defaults resolve before overrides.
    std::string dataset = "mnist", preset = "paper";
    std::vector<std::pair<std::string, std::string>> assignments;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::size_t eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "dataset") dataset = value;
        else if (key == "preset") preset = value;
        assignments.emplace_back(std::move(key), std::move(value));
    }
    ExperimentConfig cfg = make_config(dataset, preset);
    for (const auto& [key, value] : assignments) config_set(cfg, key, value);
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_text(text);
}

// --------------------------------------------------------------------------
// Architecture presets
// --------------------------------------------------------------------------

inline std::vector<std::size_t> dataset_input_shape(const std::string& dataset) {
    if (dataset == "mnist" || dataset == "synthetic") return {1, 28, 28};
    if (dataset == "cifar10") return {3, 32, 32};
    if (dataset == "pianoroll") return {1, kPianorollPitches, kPianorollSteps};
    throw ConfigError("unknown dataset '" + dataset + "'");
}

/// The per-dataset classifier architecture with the given head size.
inline NetworkSpec build_classifier_spec(const ExperimentConfig& cfg, std::size_t num_classes) {
    NetworkSpec spec;
    spec.input_shape = dataset_input_shape(cfg.dataset);
    spec.task = Task::CL;
    spec.num_classes = num_classes;
    spec.reg.l2_lambda = cfg.l2_lambda;
    spec.reg.prior_lambda = cfg.prf_lambda;
    spec.reg.sparsity_coeff = cfg.sparsity_coeff;
    spec.reg.sparsity_target = cfg.sparsity_target;
    if (cfg.dataset == "pianoroll") {
        spec.layers = {ConvSpec{cfg.conv1_maps, 9, 9, Activation::Relu},
                       MaxPoolSpec{2, 2},
                       ConvSpec{cfg.conv2_maps, 5, 5, Activation::Relu},
                       MaxPoolSpec{2, 2},
                       DropoutSpec{cfg.dropout_p},
                       DenseSpec{cfg.dense_units, Activation::Relu},
                       DenseSpec{num_classes, Activation::Softmax}};
    } else {
        spec.layers = {ConvSpec{cfg.conv1_maps, 5, 5, Activation::Sigmoid},
                       MaxPoolSpec{2, 2},
                       DropoutSpec{cfg.dropout_p},
                       DenseSpec{cfg.dense_units, Activation::Sigmoid},
                       DenseSpec{num_classes, Activation::Softmax}};
    }
    validate_spec(spec);
    return spec;
}

inline NetworkSpec build_task_spec(const ExperimentConfig& cfg, Task task, std::size_t num_classes) {
    NetworkSpec cl = build_classifier_spec(cfg, num_classes);
    switch (task) {
        case Task::CL: return cl;
        case Task::AE: return build_cae_from_cnn(cl);
        case Task::MT: return build_mt_from_cnn(cl, cfg.alpha_mt);
    }
    throw UsageError("unreachable task");
}

// --------------------------------------------------------------------------
// Metrics records and CSV
// --------------------------------------------------------------------------

struct MetricsRecord {
    std::string dataset;
    std::string strategy;     // RESET / RESET_PRF / REUSE_ALL / REUSE_CF
    std::string prior_task;   // CL / AE / MT / NONE
    std::string target_task;  // CL / AE
    int run_id = 0;
    std::size_t epoch = 0;
    std::string metric;  // train_loss | valid_loss | test_loss | test_accuracy
    double value = 0.0;
};

struct AveragedRecord {
    std::string dataset, strategy, prior_task, target_task;
    std::size_t epoch = 0;
    std::string metric;
    double value = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "dataset,strategy,prior_task,target_task,run_id,epoch,metric,value";
inline constexpr const char* kAveragedCsvHeader =
    "dataset,strategy,prior_task,target_task,epoch,metric,value";
inline constexpr const char* kPaddingRuleComment =
    "# mean over runs per key+epoch; a run that halted early contributes its final value to "
    "later epochs";

inline void write_metrics_csv(std::ostream& out, std::vector<MetricsRecord> records) {
    auto key = [](const MetricsRecord& r) {
        return std::tie(r.dataset, r.strategy, r.prior_task, r.target_task, r.run_id, r.epoch,
                        r.metric);
    };
    std::sort(records.begin(), records.end(),
              [&](const MetricsRecord& a, const MetricsRecord& b) { return key(a) < key(b); });
    out << kMetricsCsvHeader << "\n";
    for (const MetricsRecord& r : records)
        out << r.dataset << "," << r.strategy << "," << r.prior_task << "," << r.target_task << ","
            << r.run_id << "," << r.epoch << "," << r.metric << "," << fmt_double(r.value) << "\n";
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
    std::vector<MetricsRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line == kMetricsCsvHeader) continue;
        auto fields = detail::split_csv(line);
        if (fields.size() != 8)
            throw FormatError("metrics CSV line " + std::to_string(lineno) + ": expected 8 fields");
        MetricsRecord r;
        r.dataset = fields[0];
        r.strategy = fields[1];
        r.prior_task = fields[2];
        r.target_task = fields[3];
        r.run_id = std::stoi(fields[4]);
        r.epoch = static_cast<std::size_t>(std::stoull(fields[5]));
        r.metric = fields[6];
        r.value = parse_double(fields[7]);
        records.push_back(std::move(r));
    }
    return records;
}

inline void write_averaged_csv(std::ostream& out, std::vector<AveragedRecord> records) {
    auto key = [](const AveragedRecord& r) {
        return std::tie(r.dataset, r.strategy, r.prior_task, r.target_task, r.epoch, r.metric);
    };
    std::sort(records.begin(), records.end(),
              [&](const AveragedRecord& a, const AveragedRecord& b) { return key(a) < key(b); });
    out << kPaddingRuleComment << "\n" << kAveragedCsvHeader << "\n";
    for (const AveragedRecord& r : records)
        out << r.dataset << "," << r.strategy << "," << r.prior_task << "," << r.target_task << ","
            << r.epoch << "," << r.metric << "," << fmt_double(r.value) << "\n";
}

/// Mean over runs per (dataset, strategy, prior, target, metric, epoch).
/// Runs that halted before the group's last epoch are padded with their own
/// final value, preserving asymptotes instead of truncating them.
inline std::vector<AveragedRecord> average_runs(const std::vector<MetricsRecord>& records) {
    if (records.empty()) throw UsageError("average_runs: no records");
    using GroupKey = std::tuple<std::string, std::string, std::string, std::string, std::string>;
    std::map<GroupKey, std::map<int, std::map<std::size_t, double>>> groups;
    for (const MetricsRecord& r : records)
        groups[{r.dataset, r.strategy, r.prior_task, r.target_task, r.metric}][r.run_id][r.epoch] =
            r.value;

    std::vector<AveragedRecord> out;
    for (const auto& [key, runs] : groups) {
        std::size_t max_epoch = 0;
        for (const auto& [run, series] : runs)
            max_epoch = std::max(max_epoch, series.rbegin()->first);
        std::size_t min_epoch = max_epoch;
        for (const auto& [run, series] : runs)
            min_epoch = std::min(min_epoch, series.begin()->first);
        for (std::size_t epoch = min_epoch; epoch <= max_epoch; ++epoch) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& [run, series] : runs) {
                auto it = series.find(epoch);
                if (it != series.end()) {
                    sum += it->second;
                } else if (epoch > series.rbegin()->first) {
                    sum += series.rbegin()->second;  // last-value padding
                } else {
                    continue;  // a run with a gap below its halt contributes nothing here
                }
                ++n;
            }
            if (n == 0) continue;
            AveragedRecord a;
            std::tie(a.dataset, a.strategy, a.prior_task, a.target_task, a.metric) = key;
            a.epoch = epoch;
            a.value = sum / static_cast<double>(n);
            out.push_back(std::move(a));
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Evaluation
// --------------------------------------------------------------------------

struct EvalMetrics {
    double loss = 0.0;       // CCE for CL, MSE for AE
    double accuracy = -1.0;  // CL only
};

/// Test-set metrics in eval mode. Classification reports mean CCE and the
/// proportion of correctly classified items (argmax; ties resolve to the
/// lowest class index). Autoencoding reports mean MSE.
inline EvalMetrics evaluate(const NetworkSpec& spec, const NetworkShapes& shapes,
                            const ParamSet& params, const Dataset& data, Task task) {
    if (task != spec.task)
        throw UsageError(std::string("evaluate: model solves ") + to_string(spec.task) +
                         ", asked to evaluate " + to_string(task));
    if (data.items.empty()) throw UsageError("evaluate: empty dataset");
    Rng rng(0);
    EvalMetrics metrics;
    if (task == Task::CL || task == Task::MT) {
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < data.items.size(); ++i) {
            ItemForward fwd = forward_item(spec, shapes, params, data.items[i], Mode::Eval, rng);
            Tensor onehot({spec.num_classes}, 0.0);
            onehot[static_cast<std::size_t>(data.labels[i])] = 1.0;
            loss_sum += cce({fwd.class_probs}, {onehot});
            std::size_t argmax = 0;
            for (std::size_t k = 1; k < fwd.class_probs.size(); ++k)
                if (fwd.class_probs[k] > fwd.class_probs[argmax]) argmax = k;
            if (static_cast<int>(argmax) == data.labels[i]) ++correct;
        }
        metrics.loss = loss_sum / static_cast<double>(data.items.size());
        metrics.accuracy = static_cast<double>(correct) / static_cast<double>(data.items.size());
    } else {
        double loss_sum = 0.0;
        for (const Tensor& item : data.items) {
            ItemForward fwd = forward_item(spec, shapes, params, item, Mode::Eval, rng);
            loss_sum += mse({fwd.reconstruction}, {item});
        }
        metrics.loss = loss_sum / static_cast<double>(data.items.size());
    }
    return metrics;
}

// --------------------------------------------------------------------------
// Experiment runner
// --------------------------------------------------------------------------

struct GridCell {
    Strategy strategy = Strategy::Reset;
    std::optional<Task> prior_task;
    Task target_task = Task::CL;
    int run_id = 0;

    std::string prior_tag() const { return prior_task ? to_string(*prior_task) : "NONE"; }

    std::string name() const {
        std::string n = to_string(strategy);
        if (prior_task) n += std::string("_") + to_string(*prior_task);
        n += std::string("__") + to_string(target_task) + "__run" + std::to_string(run_id);
        return n;
    }
};

/// Expands the configured strategy/prior/target/run lists into the grid of
/// adaptation cells. RESET ignores priors and appears once per target/run.
inline std::vector<GridCell> enumerate_grid(const ExperimentConfig& cfg) {
    std::vector<GridCell> cells;
    for (const std::string& sname : cfg.strategies) {
        const Strategy strategy = strategy_from_string(sname);
        std::vector<std::optional<Task>> priors;
        if (strategy == Strategy::Reset) {
            priors.push_back(std::nullopt);
        } else {
            for (const std::string& p : cfg.prior_tasks) priors.push_back(task_from_string(p));
        }
        for (const auto& prior : priors)
            for (const std::string& tname : cfg.target_tasks)
                for (std::size_t run = 0; run < cfg.runs; ++run)
                    cells.push_back({strategy, prior, task_from_string(tname),
                                     static_cast<int>(run)});
    }
    return cells;
}

struct ExperimentSummary {
    std::size_t cells_total = 0;
    std::size_t cells_failed = 0;
    std::vector<std::string> failures;  // "cell-name: reason"
    std::filesystem::path metrics_csv;
    std::filesystem::path averaged_csv;
};

namespace detail {

inline std::filesystem::path resolve_data_dir(const ExperimentConfig& cfg) {
    if (!cfg.data_dir.empty()) return cfg.data_dir;
    if (cfg.dataset == "synthetic")
        return std::filesystem::path(cfg.out_dir) / "synthetic-data";
    if (const char* root = std::getenv(kDataRootEnvVar))
        return std::filesystem::path(root) / cfg.dataset;
    return std::filesystem::path("data") / cfg.dataset;
}

inline PartitionedDataset load_dataset(const ExperimentConfig& cfg,
                                       const std::filesystem::path& data_dir) {
    if (cfg.dataset == "mnist") return load_mnist_partitioned(data_dir);
    if (cfg.dataset == "cifar10") return load_cifar10_partitioned(data_dir);
    if (cfg.dataset == "pianoroll") return load_pianoroll_partitioned(data_dir);
    if (cfg.dataset == "synthetic") {
        if (!std::filesystem::exists(data_dir / "train-images-idx3-ubyte"))
            write_synthetic_digits(data_dir, cfg.synth_train_items, cfg.synth_test_items,
                                   derive_seed(cfg.base_seed, "synth-corpus"));
        return load_mnist_partitioned(data_dir);
    }
    throw ConfigError("unknown dataset '" + cfg.dataset + "'");
}

inline std::string label_map_string(const std::vector<int>& map) {
    return join_csv(map);
}

/// Writes a file atomically (tmp + rename) so resumable artefacts are never
/// observed half-written.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Runs the full source->target pipeline:
///   1. split the dataset into source/target domains (target few-shot);
///   2. train (or reload) one source model per configured prior task;
///   3. for each strategy x prior x target task x run, prepare the target
///      model per the strategy and train it, evaluating the target test set
///      every epoch;
///   4. persist checkpoints, per-cell CSVs, a merged metrics.csv, an
///      averaged CSV and a MANIFEST mapping cells to checkpoints.
/// Completed cells (checkpoint + CSV already present) are skipped, so an
/// interrupted experiment resumes into identical outputs. A failing cell is
/// logged and the grid continues; failures are reported in the summary.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg,
                                        const std::function<void(const std::string&)>& log = {}) {
    namespace fs = std::filesystem;
    const auto say = [&](const std::string& msg) {
        if (log) log(msg);
    };

    const fs::path out_dir = cfg.out_dir;
    const fs::path ckpt_dir = out_dir / "checkpoints";
    const fs::path cell_dir = out_dir / "cells";
    fs::create_directories(ckpt_dir);
    fs::create_directories(cell_dir);
    detail::write_file_atomic(out_dir / "config.txt", config_to_text(cfg));

    const fs::path data_dir = detail::resolve_data_dir(cfg);
    if (cfg.dataset != "synthetic" && !fs::exists(data_dir))
        throw ConfigError("dataset directory " + data_dir.string() +
                          " does not exist (set data_dir or " + std::string(kDataRootEnvVar) + ")");
    PartitionedDataset data = detail::load_dataset(cfg, data_dir);

    OptimHyper hyper{cfg.learning_rate, 0.9, cfg.momentum, 1e-8, cfg.batch_size};

    // ---- source domain ----
    DomainSplit base_split = split_domains(data, cfg.source_labels, cfg.target_labels,
                                           {cfg.few_shot_k, derive_seed(cfg.base_seed, "fewshot", 0)});
    Dataset source_train = base_split.source.train;
    Dataset source_valid = base_split.source.valid;
    if (cfg.source_train_cap) source_train = take_first(source_train, cfg.source_train_cap);
    if (cfg.source_valid_cap) source_valid = take_first(source_valid, cfg.source_valid_cap);

    std::map<Task, Checkpoint> source_models;
    std::set<Task> needed_priors;
    for (const GridCell& cell : enumerate_grid(cfg))
        if (cell.prior_task) needed_priors.insert(*cell.prior_task);

    for (Task task : needed_priors) {
        const fs::path path = ckpt_dir / ("source_" + std::string(to_string(task)) + ".ckpt");
        NetworkSpec spec = build_task_spec(cfg, task, cfg.source_labels.size());
        if (fs::exists(path)) {
            say("source " + std::string(to_string(task)) + ": reusing " + path.string());
            source_models[task] = load_checkpoint(path, &spec);
            continue;
        }
        say("source " + std::string(to_string(task)) + ": training");
        const std::uint64_t seed = derive_seed(cfg.base_seed, "source", static_cast<int>(task));
        ParamSet params = init_params(spec, derive_seed(seed, "init"));
        TrainResult result = train_model(spec, std::move(params), source_train.items,
                                         source_train.labels, source_valid.items,
                                         source_valid.labels, hyper, cfg.max_epochs, cfg.patience,
                                         derive_seed(seed, "train"));
        CheckpointMeta meta{{"dataset", cfg.dataset},
                            {"task", to_string(task)},
                            {"role", "source"},
                            {"seed", std::to_string(seed)},
                            {"label_map", detail::label_map_string(base_split.source_label_map)},
                            {"best_epoch", std::to_string(result.best_epoch)},
                            {"epochs_run", std::to_string(result.epochs_run)},
                            {"best_valid_loss", fmt_double(result.best_valid_loss)}};
        save_checkpoint(path, spec, result.best_params, meta);
        source_models[task] = Checkpoint{spec, std::move(result.best_params), std::move(meta)};
    }

    // ---- target grid ----
    ExperimentSummary summary;
    std::vector<GridCell> grid = enumerate_grid(cfg);
    summary.cells_total = grid.size();
    std::vector<MetricsRecord> all_records;

    for (const GridCell& cell : grid) {
        const fs::path cell_csv = cell_dir / (cell.name() + ".csv");
        const fs::path cell_ckpt = ckpt_dir / (cell.name() + ".ckpt");
        try {
            if (fs::exists(cell_csv) && fs::exists(cell_ckpt)) {
                say("cell " + cell.name() + ": reusing completed outputs");
                std::ifstream in(cell_csv);
                auto records = read_metrics_csv(in);
                all_records.insert(all_records.end(), records.begin(), records.end());
                continue;
            }

            DomainSplit split =
                split_domains(data, cfg.source_labels, cfg.target_labels,
                              {cfg.few_shot_k,
                               derive_seed(cfg.base_seed, "fewshot", cell.run_id)});

            NetworkSpec target_spec =
                build_task_spec(cfg, cell.target_task, cfg.target_labels.size());
            NetworkShapes target_shapes = validate_spec(target_spec);

            AdaptationStrategy strategy{cell.strategy, cfg.prf_lambda, cell.prior_task};
            const Checkpoint* prior =
                cell.prior_task ? &source_models.at(*cell.prior_task) : nullptr;
            PreparedTarget prepared =
                prepare_target(strategy, prior, target_spec,
                               derive_seed(cfg.base_seed, "target-init", cell.run_id));
            const PriorRegBinding* binding =
                prepared.loss_augment ? &*prepared.loss_augment : nullptr;

            say("cell " + cell.name() + ": training");
            std::vector<MetricsRecord> records;
            auto record = [&](std::size_t epoch, const std::string& metric, double value) {
                records.push_back({cfg.dataset, to_string(cell.strategy), cell.prior_tag(),
                                   to_string(cell.target_task), cell.run_id, epoch, metric, value});
            };
            TrainResult result = train_model(
                target_spec, std::move(prepared.params), split.target.train.items,
                split.target.train.labels, split.target.valid.items, split.target.valid.labels,
                hyper, cfg.max_epochs, cfg.patience,
                derive_seed(cfg.base_seed, "target-train", cell.run_id), binding,
                [&](const EpochReport& report, const ParamSet& params) {
                    record(report.epoch, "train_loss", report.train_loss);
                    record(report.epoch, "valid_loss", report.valid_loss);
                    EvalMetrics test = evaluate(target_spec, target_shapes, params,
                                                split.target.test, cell.target_task);
                    record(report.epoch, "test_loss", test.loss);
                    if (cell.target_task == Task::CL)
                        record(report.epoch, "test_accuracy", test.accuracy);
                });

            CheckpointMeta meta{{"dataset", cfg.dataset},
                                {"task", to_string(cell.target_task)},
                                {"role", "target"},
                                {"strategy", to_string(cell.strategy)},
                                {"prior_task", cell.prior_tag()},
                                {"run", std::to_string(cell.run_id)},
                                {"label_map",
                                 detail::label_map_string(split.target_label_map)},
                                {"best_epoch", std::to_string(result.best_epoch)},
                                {"epochs_run", std::to_string(result.epochs_run)},
                                {"best_valid_loss", fmt_double(result.best_valid_loss)}};
            save_checkpoint(cell_ckpt, target_spec, result.best_params, meta);
            std::ostringstream csv;
            write_metrics_csv(csv, records);
            detail::write_file_atomic(cell_csv, csv.str());
            all_records.insert(all_records.end(), records.begin(), records.end());
        } catch (const Error& e) {
            ++summary.cells_failed;
            summary.failures.push_back(cell.name() + ": " + e.what());
            say("cell " + cell.name() + ": FAILED: " + e.what());
            std::ofstream fail_log(out_dir / "failed_cells.log", std::ios::app);
            fail_log << cell.name() << ": " << e.what() << "\n";
        }
    }

    // ---- merged outputs ----
    {
        std::ostringstream csv;
        write_metrics_csv(csv, all_records);
        detail::write_file_atomic(out_dir / "metrics.csv", csv.str());
        summary.metrics_csv = out_dir / "metrics.csv";
    }
    if (!all_records.empty()) {
        std::ostringstream csv;
        write_averaged_csv(csv, average_runs(all_records));
        detail::write_file_atomic(out_dir / "metrics_averaged.csv", csv.str());
        summary.averaged_csv = out_dir / "metrics_averaged.csv";
    }
    {
        std::ostringstream manifest;
        for (Task task : needed_priors)
            manifest << "source_" << to_string(task) << " checkpoints/source_" << to_string(task)
                     << ".ckpt\n";
        for (const GridCell& cell : grid)
            manifest << cell.name() << " checkpoints/" << cell.name() << ".ckpt\n";
        detail::write_file_atomic(out_dir / "MANIFEST", manifest.str());
    }
    return summary;
}

}  // namespace plastic

#endif  // PLASTIC_HARNESS_HPP
