#include "hiercp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "hiercp/error.hpp"
#include "hiercp/rng.hpp"
#include "hiercp/text.hpp"

namespace hiercp {

std::vector<double> ExperimentConfig::default_alpha_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 25; ++i) grid.push_back(static_cast<double>(i) / 50.0);
    return grid;
}

void ExperimentConfig::validate() const {
    if (alphas.empty()) throw ValidationError("alphas list must not be empty");
    for (double a : alphas) {
        if (!(a >= 0.0) || !(a < 1.0)) throw ValidationError("every alpha must lie in [0, 1)");
    }
    if (!std::is_sorted(alphas.begin(), alphas.end())) {
        throw ValidationError("alphas must be sorted ascending");
    }
    if (n_iterations < 1) throw ValidationError("n_iterations must be at least 1");
    if (methods.empty()) throw ValidationError("methods list must not be empty");
    if (methods.size() > 2 || (methods.size() == 2 && methods[0] == methods[1])) {
        throw ValidationError("methods must be a subset of {lcp, pcp}");
    }
    fractions.validate();
    train.validate();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : parse_key_value(text)) {
        if (key == "alphas") {
            if (trim(value) == "default") {
                cfg.alphas = default_alpha_grid();
            } else {
                cfg.alphas.clear();
                for (const std::string& field : split(value, ',')) {
                    cfg.alphas.push_back(parse_double(field));
                }
                std::sort(cfg.alphas.begin(), cfg.alphas.end());
                cfg.alphas.erase(std::unique(cfg.alphas.begin(), cfg.alphas.end()),
                                 cfg.alphas.end());
            }
        } else if (key == "n_iterations") {
            cfg.n_iterations = static_cast<int>(parse_int(value));
        } else if (key == "master_seed") {
            auto seed = parse_int(value);
            if (seed < 0) throw ValidationError("master_seed must be nonnegative");
            cfg.master_seed = static_cast<std::uint64_t>(seed);
        } else if (key == "score_kind") {
            cfg.score_kind = parse_score_kind(value);
        } else if (key == "methods") {
            cfg.methods.clear();
            for (const std::string& field : split(value, ',')) {
                cfg.methods.push_back(parse_method(field));
            }
        } else if (key == "train_frac") {
            cfg.fractions.train = parse_double(value);
        } else if (key == "calibration_frac") {
            cfg.fractions.calibration = parse_double(value);
        } else if (key == "test_frac") {
            cfg.fractions.test = parse_double(value);
        } else if (key == "learning_rate") {
            cfg.train.learning_rate = parse_double(value);
        } else if (key == "epochs") {
            cfg.train.epochs = static_cast<int>(parse_int(value));
        } else if (key == "batch_size") {
            cfg.train.batch_size = static_cast<int>(parse_int(value));
        } else if (key == "l2_penalty") {
            cfg.train.l2_penalty = parse_double(value);
        } else if (key == "train_seed") {
            auto seed = parse_int(value);
            if (seed < 0) throw ValidationError("train_seed must be nonnegative");
            cfg.train.seed = static_cast<std::uint64_t>(seed);
        } else if (key == "undersample") {
            std::string_view v = trim(value);
            if (v == "1" || v == "true") {
                cfg.train.undersample_majority = true;
            } else if (v == "0" || v == "false") {
                cfg.train.undersample_majority = false;
            } else {
                throw ValidationError("undersample must be 0/1/true/false");
            }
        } else {
            throw ValidationError("unknown experiment config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return parse(read_text_file(path));
}

namespace {

std::vector<int> all_layers(const Taxonomy& taxonomy) {
    std::vector<int> layers;
    for (int k = 1; k <= taxonomy.depth(); ++k) layers.push_back(k);
    layers.push_back(kLeafLayer);
    return layers;
}

// Training rows of one layer: samples in the index list whose layer label is
// defined, labels as class positions.
TrainData build_train_data(const Dataset& dataset, const std::vector<std::size_t>& indices,
                           int layer) {
    TrainData data;
    data.feature_dim = dataset.feature_dim;
    for (std::size_t i : indices) {
        auto label = dataset.induced_label(i, layer);
        if (!label) continue;
        int pos = dataset.taxonomy->layer_position(layer, *label);
        data.labels.push_back(pos);
        auto row = dataset.row(i);
        data.features.insert(data.features.end(), row.begin(), row.end());
    }
    return data;
}

bool alpha_matches(double a, double b) { return std::abs(a - b) < 1e-12; }

} // namespace

RunRecord run_iteration(const ExperimentConfig& cfg, const Dataset& dataset, int iteration) {
    auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.iteration = iteration;
    rec.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(iteration));
    const Taxonomy& taxonomy = *dataset.taxonomy;
    const int depth = taxonomy.depth();

    try {
        SplitResult split = stratified_split(dataset, cfg.fractions, derive_seed(rec.seed, 1));

        // One model per layer, then per-layer probability tables for the test
        // split and calibration scores; only thresholds depend on alpha.
        std::vector<ProbabilityTable> test_tables(static_cast<std::size_t>(depth) + 1);
        std::vector<std::vector<double>> cal_scores(static_cast<std::size_t>(depth) + 1);
        auto slot = [&](int layer) {
            return layer == kLeafLayer ? static_cast<std::size_t>(depth)
                                       : static_cast<std::size_t>(layer) - 1;
        };

        std::vector<double> test_features;
        for (std::size_t i : split.test) {
            auto row = dataset.row(i);
            test_features.insert(test_features.end(), row.begin(), row.end());
        }
        std::vector<double> cal_features;
        for (std::size_t i : split.calibration) {
            auto row = dataset.row(i);
            cal_features.insert(cal_features.end(), row.begin(), row.end());
        }

        for (int layer : all_layers(taxonomy)) {
            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(rec.seed + cfg.train.seed,
                                  16 + static_cast<std::uint64_t>(layer));
            TrainData data = build_train_data(dataset, split.train, layer);
            SoftmaxClassifier clf =
                train_softmax(layer, taxonomy.layer_nodes(layer), data, tc);

            test_tables[slot(layer)] = clf.predict_proba(test_features, split.test.size());
            ProbabilityTable cal_table = clf.predict_proba(cal_features, split.calibration.size());
            std::vector<double>& scores = cal_scores[slot(layer)];
            for (std::size_t r = 0; r < split.calibration.size(); ++r) {
                auto label = dataset.induced_label(split.calibration[r], layer);
                if (!label) continue;
                int pos = taxonomy.layer_position(layer, *label);
                scores.push_back(nonconformity(cal_table.row(r)[static_cast<std::size_t>(pos)],
                                               cfg.score_kind));
            }
        }

        std::vector<NodeIndex> test_labels;
        test_labels.reserve(split.test.size());
        for (std::size_t i : split.test) test_labels.push_back(dataset.leaf_labels[i]);

        std::span<const ProbabilityTable> level_tables(test_tables.data(),
                                                       static_cast<std::size_t>(depth));
        const ProbabilityTable& leaf_table = test_tables[slot(kLeafLayer)];

        for (double alpha : cfg.alphas) {
            std::vector<CalibratedThreshold> level_thresholds;
            for (int k = 1; k <= depth; ++k) {
                level_thresholds.push_back(calibrate_level(cal_scores[slot(k)], alpha, k));
            }
            CalibratedThreshold leaf_threshold =
                calibrate_level(cal_scores[slot(kLeafLayer)], alpha, kLeafLayer);

            for (Method method : cfg.methods) {
                std::vector<HierPredictionSets> sets =
                    method == Method::LCP
                        ? lcp_predict(level_tables, level_thresholds, leaf_table,
                                      leaf_threshold, taxonomy, cfg.score_kind)
                        : pcp_predict(leaf_table, leaf_threshold, taxonomy, cfg.score_kind);

                rec.reports.push_back(
                    evaluate_predictions(sets, test_labels, taxonomy, method, alpha));

                if (method == Method::PCP) {
                    for (std::size_t i = 0; i < sets.size(); ++i) {
                        if (!is_nested(sets[i], taxonomy)) ++rec.pcp_audit.nestedness_violations;
                        NodeIndex leaf = test_labels[i];
                        if (!std::binary_search(sets[i].leaf_set.begin(),
                                                sets[i].leaf_set.end(), leaf)) {
                            continue;
                        }
                        for (int k = 1; k <= taxonomy.level_of(leaf); ++k) {
                            const auto& level_set =
                                sets[i].level_sets[static_cast<std::size_t>(k) - 1];
                            if (!std::binary_search(level_set.begin(), level_set.end(),
                                                    *taxonomy.ancestor_at_level(leaf, k))) {
                                ++rec.pcp_audit.inheritance_violations;
                                break;
                            }
                        }
                    }
                }

                bool retain = std::any_of(cfg.retain_sets_alphas.begin(),
                                          cfg.retain_sets_alphas.end(),
                                          [&](double a) { return alpha_matches(a, alpha); });
                if (retain) rec.retained.push_back({alpha, method, std::move(sets)});
            }
        }
    } catch (const std::exception& e) {
        rec.aborted = true;
        rec.abort_reason = e.what();
        rec.reports.clear();
        rec.retained.clear();
    }
    rec.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

unsigned thread_budget() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("HIERCP_THREADS");
    if (env == nullptr || *env == '\0') return hw;
    auto value = parse_int(env);
    if (value < 1) throw ValidationError("HIERCP_THREADS must be a positive integer");
    return static_cast<unsigned>(value);
}

SweepResult sweep(const ExperimentConfig& cfg, const Dataset& dataset) {
    cfg.validate();
    if (dataset.size() == 0) throw ValidationError("dataset is empty");

    SweepResult result;
    result.runs.resize(static_cast<std::size_t>(cfg.n_iterations));
    const unsigned workers =
        std::min<unsigned>(thread_budget(), static_cast<unsigned>(cfg.n_iterations));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= result.runs.size()) break;
            result.runs[i] = run_iteration(cfg, dataset, static_cast<int>(i));
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    std::vector<const RunRecord*> usable;
    for (const auto& run : result.runs) {
        if (!run.aborted) usable.push_back(&run);
    }
    if (usable.empty()) {
        throw ValidationError("all iterations aborted: " + result.runs.front().abort_reason);
    }

    // Aggregation walks iterations in index order, so scheduling cannot
    // change the output bytes.
    const std::size_t per_alpha = cfg.methods.size();
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
        for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
            std::vector<MetricsReport> runs;
            for (const RunRecord* run : usable) {
                runs.push_back(run->reports[a * per_alpha + m]);
            }
            result.aggregated.push_back(aggregate(runs));
        }
    }
    return result;
}

void write_sweep_outputs(const SweepResult& result, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    std::ostringstream report;
    write_report_header(report);
    for (const auto& agg : result.aggregated) write_report_rows(report, agg);
    write_text_file(out_dir + "/metrics_report.csv", report.str());

    std::ostringstream longfmt;
    write_long_header(longfmt);
    for (const auto& run : result.runs) {
        if (run.aborted) continue;
        for (const auto& rep : run.reports) write_long_rows(longfmt, rep, run.iteration);
    }
    write_text_file(out_dir + "/sweep_long.csv", longfmt.str());
}

namespace {

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string stat_cell(const MetricValue& v) { return fmt3(v.mean) + " +/- " + fmt3(v.stddev); }

const LayerStats* find_layer(const MetricsReport& report, int layer) {
    for (const auto& [l, stats] : report.layers) {
        if (l == layer) return &stats;
    }
    return nullptr;
}

} // namespace

void print_summary_table(std::ostream& out, const SweepResult& result) {
    const double targets[] = {0.02, 0.05, 0.10, 0.20};
    out << "alpha   method  family coverage   family set size   leaf coverage     "
           "leaf set size     hir\n";
    for (double target : targets) {
        bool any = false;
        for (const auto& report : result.aggregated) {
            if (!alpha_matches(report.alpha, target)) continue;
            any = true;
        }
        if (!any) continue;
        for (Method method : {Method::LCP, Method::PCP}) {
            for (const auto& report : result.aggregated) {
                if (!alpha_matches(report.alpha, target) || report.method != method) continue;
                const LayerStats* family = find_layer(report, 1);
                const LayerStats* leaf = find_layer(report, kLeafLayer);
                out << fmt3(report.alpha) << "   " << display_name(report.method) << "    ";
                auto cell = [&](const LayerStats* stats, bool cov) -> std::string {
                    if (stats == nullptr) return "-";
                    if (cov) {
                        return stats->coverage ? stat_cell(*stats->coverage) : "-";
                    }
                    return stat_cell(stats->set_size);
                };
                out << cell(family, true) << "   " << cell(family, false) << "   "
                    << cell(leaf, true) << "   " << cell(leaf, false) << "   "
                    << stat_cell(report.hir) << '\n';
            }
        }
    }
}

} // namespace hiercp
