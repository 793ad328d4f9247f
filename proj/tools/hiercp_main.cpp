// Command-line toolkit for hierarchical conformal prediction: synthetic data
// generation, per-level model training, calibration, set-valued prediction and
// Monte Carlo alpha sweeps.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"

#include "hiercp/conformal.hpp"
#include "hiercp/dataset.hpp"
#include "hiercp/error.hpp"
#include "hiercp/harness.hpp"
#include "hiercp/metrics.hpp"
#include "hiercp/model.hpp"
#include "hiercp/rng.hpp"
#include "hiercp/text.hpp"

namespace {

using namespace hiercp;

std::vector<int> layers_of(const Taxonomy& taxonomy) {
    std::vector<int> layers;
    for (int k = 1; k <= taxonomy.depth(); ++k) layers.push_back(k);
    layers.push_back(kLeafLayer);
    return layers;
}

struct GenerateArgs {
    std::string taxonomy, config, out_features, out_labels;
    std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& args) {
    Taxonomy taxonomy = Taxonomy::load(args.taxonomy);
    GeneratorConfig cfg = GeneratorConfig::load(args.config);
    Dataset ds = generate_synthetic(cfg, taxonomy, args.seed);
    write_features_csv(args.out_features, ds);
    write_labels_file(args.out_labels, ds);

    std::map<NodeIndex, std::size_t> counts;
    for (NodeIndex leaf : ds.leaf_labels) ++counts[leaf];
    std::cout << "generated " << ds.size() << " samples, feature_dim=" << ds.feature_dim
              << "\nleaf class counts:\n";
    for (NodeIndex leaf : taxonomy.leaves()) {
        std::cout << "  " << taxonomy.name_of(leaf) << ": " << counts[leaf] << '\n';
    }
    return 0;
}

struct TrainArgs {
    std::string taxonomy, features, labels, out_dir;
    std::string layer = "all";
    TrainConfig config;
};

int cmd_train(const TrainArgs& args) {
    Taxonomy taxonomy = Taxonomy::load(args.taxonomy);
    Dataset ds = load_dataset(taxonomy, args.features, args.labels);
    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + args.out_dir);

    std::vector<int> layers;
    if (args.layer == "all") {
        layers = layers_of(taxonomy);
    } else {
        layers.push_back(Taxonomy::parse_layer_token(args.layer, taxonomy.depth()));
    }
    std::vector<std::size_t> all_indices(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) all_indices[i] = i;

    for (int layer : layers) {
        TrainData data;
        data.feature_dim = ds.feature_dim;
        for (std::size_t i : all_indices) {
            auto label = ds.induced_label(i, layer);
            if (!label) continue;
            data.labels.push_back(taxonomy.layer_position(layer, *label));
            auto row = ds.row(i);
            data.features.insert(data.features.end(), row.begin(), row.end());
        }
        TrainConfig tc = args.config;
        tc.seed = derive_seed(args.config.seed, 16 + static_cast<std::uint64_t>(layer));
        SoftmaxClassifier clf = train_softmax(layer, taxonomy.layer_nodes(layer), data, tc);

        // Diagnostic only; calibration does not depend on model quality.
        std::size_t correct = 0;
        ProbabilityTable probs = clf.predict_proba(data.features, data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto row = probs.row(i);
            std::size_t best = static_cast<std::size_t>(
                std::max_element(row.begin(), row.end()) - row.begin());
            correct += static_cast<int>(best) == data.labels[i] ? 1 : 0;
        }
        std::string path = args.out_dir + "/" + model_file_name(layer);
        save_model(path, clf, taxonomy);
        std::cout << "layer " << Taxonomy::layer_token(layer) << ": " << data.size()
                  << " samples, train accuracy "
                  << format_double(static_cast<double>(correct) /
                                   static_cast<double>(std::max<std::size_t>(1, data.size())))
                  << ", wrote " << path << '\n';
    }
    return 0;
}

// Probability tables either computed from a model directory plus features, or
// loaded directly from per-layer CSVs written by an external classifier.
struct TableSource {
    std::string model_dir;
    std::string features;
    std::string probs_dir;

    void check() const {
        bool from_models = !model_dir.empty();
        bool from_probs = !probs_dir.empty();
        if (from_models == from_probs) {
            throw ValidationError("exactly one of --model-dir/--probs-dir is required");
        }
        if (from_models && features.empty()) {
            throw ValidationError("--model-dir requires --features");
        }
    }

    ProbabilityTable load_layer(const Taxonomy& taxonomy, int layer) const {
        if (!probs_dir.empty()) {
            std::string name = layer == kLeafLayer
                                   ? "probs_leaf.csv"
                                   : "probs_level_" + std::to_string(layer) + ".csv";
            return load_probability_csv(probs_dir + "/" + name, taxonomy, layer);
        }
        SoftmaxClassifier clf =
            load_model(model_dir + "/" + model_file_name(layer), taxonomy);
        auto [values, d] = load_features_csv(features);
        if (d != clf.feature_dim) {
            throw ValidationError("feature dimension " + std::to_string(d) +
                                  " does not match model dimension " +
                                  std::to_string(clf.feature_dim));
        }
        std::size_t n = d > 0 ? values.size() / static_cast<std::size_t>(d) : 0;
        return clf.predict_proba(values, n);
    }
};

struct CalibrateArgs {
    std::string taxonomy, labels, out;
    TableSource source;
    double alpha = 0.1;
    std::vector<std::string> alpha_overrides; // layer=alpha entries
    std::string score_kind = "one_minus_prob";
};

int cmd_calibrate(const CalibrateArgs& args) {
    Taxonomy taxonomy = Taxonomy::load(args.taxonomy);
    args.source.check();
    ScoreKind kind = parse_score_kind(args.score_kind);
    std::vector<NodeIndex> labels = load_labels_file(args.labels, taxonomy);

    std::map<int, double> alpha_for;
    for (const std::string& entry : args.alpha_overrides) {
        std::size_t eq = entry.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("--alpha-level expects layer=alpha, got '" + entry + "'");
        }
        int layer = Taxonomy::parse_layer_token(entry.substr(0, eq), taxonomy.depth());
        alpha_for[layer] = parse_double(entry.substr(eq + 1));
    }

    std::vector<CalibratedThreshold> thresholds;
    for (int layer : layers_of(taxonomy)) {
        ProbabilityTable table = args.source.load_layer(taxonomy, layer);
        if (table.rows != labels.size()) {
            throw ValidationError("probability rows (" + std::to_string(table.rows) +
                                  ") do not match label count (" +
                                  std::to_string(labels.size()) + ") at layer " +
                                  Taxonomy::layer_token(layer));
        }
        std::vector<double> scores;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            std::optional<NodeIndex> label =
                layer == kLeafLayer ? std::optional<NodeIndex>(labels[i])
                                    : taxonomy.ancestor_at_level(labels[i], layer);
            if (!label) continue;
            int pos = taxonomy.layer_position(layer, *label);
            scores.push_back(nonconformity(table.row(i)[static_cast<std::size_t>(pos)], kind));
        }
        auto it = alpha_for.find(layer);
        double alpha = it == alpha_for.end() ? args.alpha : it->second;
        thresholds.push_back(calibrate_level(scores, alpha, layer));
    }
    write_thresholds_file(args.out, thresholds);
    std::cout << "wrote " << args.out << " (" << thresholds.size() << " layers, alpha="
              << format_double(args.alpha) << ")\n";
    return 0;
}

struct PredictArgs {
    std::string taxonomy, thresholds, method, out;
    TableSource source;
    std::string score_kind = "one_minus_prob";
    bool check = false;
};

int cmd_predict(const PredictArgs& args) {
    Taxonomy taxonomy = Taxonomy::load(args.taxonomy);
    args.source.check();
    Method method = parse_method(args.method);
    ScoreKind kind = parse_score_kind(args.score_kind);

    std::vector<CalibratedThreshold> loaded = load_thresholds_file(args.thresholds, taxonomy);
    auto threshold_for = [&](int layer) -> const CalibratedThreshold& {
        for (const auto& th : loaded) {
            if (th.layer == layer) return th;
        }
        throw ValidationError("thresholds file has no entry for layer " +
                              Taxonomy::layer_token(layer));
    };

    std::vector<HierPredictionSets> sets;
    if (method == Method::PCP) {
        ProbabilityTable leaf_table = args.source.load_layer(taxonomy, kLeafLayer);
        sets = pcp_predict(leaf_table, threshold_for(kLeafLayer), taxonomy, kind);
    } else {
        std::vector<ProbabilityTable> level_tables;
        std::vector<CalibratedThreshold> level_thresholds;
        for (int k = 1; k <= taxonomy.depth(); ++k) {
            level_tables.push_back(args.source.load_layer(taxonomy, k));
            level_thresholds.push_back(threshold_for(k));
        }
        ProbabilityTable leaf_table = args.source.load_layer(taxonomy, kLeafLayer);
        sets = lcp_predict(level_tables, level_thresholds, leaf_table,
                           threshold_for(kLeafLayer), taxonomy, kind);
    }
    write_prediction_sets(args.out, sets, taxonomy);

    if (args.check) {
        std::size_t violations = 0;
        for (const auto& sample : sets) {
            violations += is_nested(sample, taxonomy) ? 0 : 1;
        }
        if (method == Method::PCP && violations > 0) {
            throw ValidationError("nestedness check failed on " + std::to_string(violations) +
                                  " samples");
        }
        std::cout << "nestedness check: " << violations << "/" << sets.size()
                  << " samples violate\n";
    }
    std::cout << "wrote " << args.out << " (" << sets.size() << " samples, method="
              << to_token(method) << ")\n";
    return 0;
}

struct EvaluateArgs {
    std::string taxonomy, sets, labels, method, out;
    double alpha = 0.0;
};

int cmd_evaluate(const EvaluateArgs& args) {
    Taxonomy taxonomy = Taxonomy::load(args.taxonomy);
    Method method = parse_method(args.method);
    std::vector<HierPredictionSets> sets = load_prediction_sets(args.sets, taxonomy, method);
    std::vector<NodeIndex> labels = load_labels_file(args.labels, taxonomy);
    if (sets.size() != labels.size()) {
        throw ValidationError("set lines (" + std::to_string(sets.size()) +
                              ") do not match label count (" + std::to_string(labels.size()) +
                              ")");
    }
    MetricsReport report = evaluate_predictions(sets, labels, taxonomy, method, args.alpha);
    std::ostringstream csv;
    write_report_header(csv);
    write_report_rows(csv, report);
    if (args.out.empty()) {
        std::cout << csv.str();
    } else {
        write_text_file(args.out, csv.str());
        std::cout << "wrote " << args.out << '\n';
    }
    return 0;
}

struct SweepArgs {
    std::string taxonomy, features, labels, synthetic_config, experiment_config, out_dir;
    std::string methods;
};

int cmd_sweep(const SweepArgs& args) {
    Taxonomy taxonomy = Taxonomy::load(args.taxonomy);
    ExperimentConfig cfg = args.experiment_config.empty()
                               ? ExperimentConfig()
                               : ExperimentConfig::load(args.experiment_config);
    if (!args.methods.empty()) {
        cfg.methods.clear();
        for (const std::string& field : split(args.methods, ',')) {
            cfg.methods.push_back(parse_method(field));
        }
        cfg.validate();
    }

    bool from_files = !args.features.empty() || !args.labels.empty();
    bool from_synthetic = !args.synthetic_config.empty();
    if (from_files == from_synthetic) {
        throw ValidationError(
            "provide either --features/--labels or --synthetic-config, not both");
    }
    Dataset ds;
    if (from_files) {
        if (args.features.empty() || args.labels.empty()) {
            throw ValidationError("--features and --labels must be given together");
        }
        ds = load_dataset(taxonomy, args.features, args.labels);
    } else {
        GeneratorConfig gen = GeneratorConfig::load(args.synthetic_config);
        ds = generate_synthetic(gen, taxonomy, derive_seed(cfg.master_seed, 0xDA7A));
    }

    SweepResult result = sweep(cfg, ds);
    write_sweep_outputs(result, args.out_dir);

    std::size_t aborted = 0;
    for (const auto& run : result.runs) aborted += run.aborted ? 1 : 0;
    if (aborted > 0) {
        std::cout << aborted << "/" << result.runs.size() << " iterations aborted\n";
    }
    print_summary_table(std::cout, result);
    std::cout << "wrote " << args.out_dir << "/metrics_report.csv and " << args.out_dir
              << "/sweep_long.csv\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical conformal prediction toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "synthesize a labeled dataset");
    generate->add_option("--taxonomy", gen.taxonomy, "taxonomy file")->required();
    generate->add_option("--config", gen.config, "generator config (key=value)")->required();
    generate->add_option("--seed", gen.seed, "generator seed");
    generate->add_option("--out-features", gen.out_features, "features CSV to write")->required();
    generate->add_option("--out-labels", gen.out_labels, "labels file to write")->required();

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "train per-layer softmax models");
    train_cmd->add_option("--taxonomy", train.taxonomy)->required();
    train_cmd->add_option("--features", train.features)->required();
    train_cmd->add_option("--labels", train.labels)->required();
    train_cmd->add_option("--out-dir", train.out_dir)->required();
    train_cmd->add_option("--level", train.layer, "layer to train (1..K, 'leaf' or 'all')");
    train_cmd->add_option("--learning-rate", train.config.learning_rate);
    train_cmd->add_option("--epochs", train.config.epochs);
    train_cmd->add_option("--batch-size", train.config.batch_size);
    train_cmd->add_option("--l2", train.config.l2_penalty);
    train_cmd->add_option("--seed", train.config.seed);
    train_cmd->add_flag("--undersample", train.config.undersample_majority,
                        "cap majority classes at the median class count");

    CalibrateArgs cal;
    CLI::App* cal_cmd = app.add_subcommand("calibrate", "compute per-layer thresholds");
    cal_cmd->add_option("--taxonomy", cal.taxonomy)->required();
    cal_cmd->add_option("--model-dir", cal.source.model_dir);
    cal_cmd->add_option("--features", cal.source.features);
    cal_cmd->add_option("--probs-dir", cal.source.probs_dir,
                        "directory of probs_level_<k>.csv / probs_leaf.csv");
    cal_cmd->add_option("--labels", cal.labels)->required();
    cal_cmd->add_option("--alpha", cal.alpha)->required();
    cal_cmd->add_option("--alpha-level", cal.alpha_overrides,
                        "per-layer override, e.g. --alpha-level 1=0.05 --alpha-level leaf=0.2");
    cal_cmd->add_option("--score-kind", cal.score_kind, "one_minus_prob | neg_log_prob");
    cal_cmd->add_option("--out", cal.out)->required();

    PredictArgs pred;
    CLI::App* pred_cmd = app.add_subcommand("predict", "write per-sample prediction sets");
    pred_cmd->add_option("--taxonomy", pred.taxonomy)->required();
    pred_cmd->add_option("--model-dir", pred.source.model_dir);
    pred_cmd->add_option("--features", pred.source.features);
    pred_cmd->add_option("--probs-dir", pred.source.probs_dir);
    pred_cmd->add_option("--thresholds", pred.thresholds)->required();
    pred_cmd->add_option("--method", pred.method, "lcp | pcp")->required();
    pred_cmd->add_option("--score-kind", pred.score_kind);
    pred_cmd->add_option("--out", pred.out)->required();
    pred_cmd->add_flag("--check", pred.check, "verify nestedness of the output");

    EvaluateArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "metrics for a prediction-set file");
    eval_cmd->add_option("--taxonomy", eval.taxonomy)->required();
    eval_cmd->add_option("--sets", eval.sets)->required();
    eval_cmd->add_option("--labels", eval.labels)->required();
    eval_cmd->add_option("--method", eval.method, "lcp | pcp")->required();
    eval_cmd->add_option("--alpha", eval.alpha, "alpha recorded in the report")->required();
    eval_cmd->add_option("--out", eval.out, "report CSV (stdout when omitted)");

    SweepArgs sweep_args;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo alpha sweep");
    sweep_cmd->add_option("--taxonomy", sweep_args.taxonomy)->required();
    sweep_cmd->add_option("--features", sweep_args.features);
    sweep_cmd->add_option("--labels", sweep_args.labels);
    sweep_cmd->add_option("--synthetic-config", sweep_args.synthetic_config);
    sweep_cmd->add_option("--experiment-config", sweep_args.experiment_config);
    sweep_cmd->add_option("--out-dir", sweep_args.out_dir)->required();
    sweep_cmd->add_option("--methods", sweep_args.methods, "comma list overriding the config");

    try {
        app.parse(argc, argv);
        if (*generate) return cmd_generate(gen);
        if (*train_cmd) return cmd_train(train);
        if (*cal_cmd) return cmd_calibrate(cal);
        if (*pred_cmd) return cmd_predict(pred);
        if (*eval_cmd) return cmd_evaluate(eval);
        if (*sweep_cmd) return cmd_sweep(sweep_args);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
