// Python bindings for the hierarchical conformal prediction core. The
// binding layer speaks node names and plain containers; indices stay internal.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hiercp/conformal.hpp"
#include "hiercp/dataset.hpp"
#include "hiercp/error.hpp"
#include "hiercp/harness.hpp"
#include "hiercp/metrics.hpp"
#include "hiercp/model.hpp"
#include "hiercp/rng.hpp"
#include "hiercp/text.hpp"

namespace py = pybind11;
using namespace hiercp;

namespace {

int layer_from_py(const Taxonomy& taxonomy, const py::object& layer) {
    if (py::isinstance<py::str>(layer)) {
        return Taxonomy::parse_layer_token(layer.cast<std::string>(), taxonomy.depth());
    }
    int value = layer.cast<int>();
    if (!taxonomy.valid_layer(value)) {
        throw ValidationError("layer " + std::to_string(value) + " out of range");
    }
    return value;
}

std::vector<std::string> names_of(const Taxonomy& taxonomy, const std::vector<NodeIndex>& nodes) {
    std::vector<std::string> names;
    names.reserve(nodes.size());
    for (NodeIndex n : nodes) names.push_back(taxonomy.name_of(n));
    return names;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows, int& dim) {
    dim = rows.empty() ? 0 : static_cast<int>(rows[0].size());
    std::vector<double> flat;
    flat.reserve(rows.size() * static_cast<std::size_t>(dim));
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != dim) {
            throw ValidationError("ragged feature rows");
        }
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return flat;
}

std::vector<NodeIndex> leaf_indices(const Taxonomy& taxonomy,
                                    const std::vector<std::string>& labels) {
    std::vector<NodeIndex> out;
    out.reserve(labels.size());
    for (const std::string& name : labels) {
        NodeIndex node = taxonomy.index_of(name);
        if (!taxonomy.is_leaf(node)) {
            throw ValidationError("'" + name + "' is not a terminal leaf");
        }
        out.push_back(node);
    }
    return out;
}

ProbabilityTable table_from_py(const Taxonomy& taxonomy, const py::object& layer,
                               const std::vector<std::vector<double>>& rows) {
    ProbabilityTable table;
    table.layer = layer_from_py(taxonomy, layer);
    table.class_order = taxonomy.layer_nodes(table.layer);
    table.rows = rows.size();
    for (const auto& row : rows) {
        if (row.size() != table.class_order.size()) {
            throw ValidationError("probability row width does not match the layer");
        }
        table.values.insert(table.values.end(), row.begin(), row.end());
    }
    table.validate_rows();
    return table;
}

py::dict sets_to_py(const Taxonomy& taxonomy, const HierPredictionSets& sets) {
    py::dict out;
    for (int k = 1; k <= taxonomy.depth(); ++k) {
        out[py::str(Taxonomy::layer_token(k))] =
            names_of(taxonomy, sets.level_sets[static_cast<std::size_t>(k) - 1]);
    }
    out[py::str("leaf")] = names_of(taxonomy, sets.leaf_set);
    return out;
}

py::dict metric_value_to_py(const MetricValue& value) {
    py::dict out;
    out["mean"] = value.mean;
    out["std"] = value.stddev;
    out["n_iterations"] = value.n_iterations;
    out["n_samples_effective"] = value.n_effective;
    return out;
}

py::list report_to_rows(const MetricsReport& report) {
    py::list rows;
    auto add = [&](const std::string& level, const char* metric, const MetricValue& value) {
        py::dict row = metric_value_to_py(value);
        row["method"] = std::string(display_name(report.method));
        row["alpha"] = report.alpha;
        row["level"] = level;
        row["metric"] = metric;
        rows.append(row);
    };
    for (const auto& [layer, stats] : report.layers) {
        std::string level = Taxonomy::layer_token(layer);
        if (stats.coverage) add(level, "coverage", *stats.coverage);
        add(level, "mean_set_size", stats.set_size);
        add(level, "empty_rate", stats.empty);
        add(level, "singleton_rate", stats.singleton);
    }
    add("global", "hir", report.hir);
    return rows;
}

ExperimentConfig config_from_dict(const py::dict& options) {
    std::ostringstream text;
    for (auto item : options) {
        std::string key = py::str(item.first);
        std::string value;
        if (py::isinstance<py::list>(item.second) || py::isinstance<py::tuple>(item.second)) {
            py::sequence seq = item.second.cast<py::sequence>();
            for (py::size_t i = 0; i < seq.size(); ++i) {
                if (i > 0) value += ',';
                value += py::str(seq[i]).cast<std::string>();
            }
        } else if (py::isinstance<py::bool_>(item.second)) {
            value = item.second.cast<bool>() ? "1" : "0";
        } else {
            value = py::str(item.second).cast<std::string>();
        }
        text << key << '=' << value << '\n';
    }
    return ExperimentConfig::parse(text.str());
}

} // namespace

PYBIND11_MODULE(_hiercp, m) {
    m.doc() = "Hierarchical conformal prediction over ragged label taxonomies";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<Taxonomy>(m, "Taxonomy")
        .def_static("parse", &Taxonomy::parse, py::arg("text"),
                    "Parse `name<TAB>parent` lines; root lines omit the parent.")
        .def_static("load", &Taxonomy::load, py::arg("path"))
        .def_property_readonly("depth", &Taxonomy::depth)
        .def_property_readonly("node_count", &Taxonomy::node_count)
        .def("level_of",
             [](const Taxonomy& t, const std::string& name) { return t.level_of(t.index_of(name)); })
        .def("is_leaf",
             [](const Taxonomy& t, const std::string& name) { return t.is_leaf(t.index_of(name)); })
        .def("parent_of",
             [](const Taxonomy& t, const std::string& name) -> std::optional<std::string> {
                 auto parent = t.parent_of(t.index_of(name));
                 if (!parent) return std::nullopt;
                 return t.name_of(*parent);
             })
        .def("children_of",
             [](const Taxonomy& t, const std::string& name) {
                 return names_of(t, t.children_of(t.index_of(name)));
             })
        .def("level_nodes",
             [](const Taxonomy& t, int level) { return names_of(t, t.level_nodes(level)); })
        .def("leaves", [](const Taxonomy& t) { return names_of(t, t.leaves()); })
        .def("leaf_descendants",
             [](const Taxonomy& t, const std::string& name) {
                 return names_of(t, t.leaf_descendants(t.index_of(name)));
             })
        .def("ancestor_at_level",
             [](const Taxonomy& t, const std::string& name, int level)
                 -> std::optional<std::string> {
                 auto anc = t.ancestor_at_level(t.index_of(name), level);
                 if (!anc) return std::nullopt;
                 return t.name_of(*anc);
             });

    m.def(
        "generate_synthetic",
        [](const Taxonomy& taxonomy, std::size_t n_samples, double zipf_s, double noise_sigma,
           double separation, int feature_dim, std::uint64_t seed) {
            GeneratorConfig cfg;
            cfg.n_samples = n_samples;
            cfg.zipf_s = zipf_s;
            cfg.noise_sigma = noise_sigma;
            cfg.separation = separation;
            cfg.feature_dim = feature_dim;
            Dataset ds = generate_synthetic(cfg, taxonomy, seed);
            std::vector<std::vector<double>> rows(ds.size());
            for (std::size_t i = 0; i < ds.size(); ++i) {
                auto row = ds.row(i);
                rows[i].assign(row.begin(), row.end());
            }
            return py::make_tuple(rows, names_of(taxonomy, ds.leaf_labels));
        },
        py::arg("taxonomy"), py::arg("n_samples"), py::arg("zipf_s") = 1.0,
        py::arg("noise_sigma") = 0.5, py::arg("separation") = 1.0, py::arg("feature_dim") = 6,
        py::arg("seed") = 0);

    m.def(
        "stratified_split",
        [](const Taxonomy& taxonomy, const std::vector<std::string>& labels, double train,
           double calibration, double test, std::uint64_t seed) {
            SplitFractions fractions{train, calibration, test};
            SplitResult split = stratified_split(leaf_indices(taxonomy, labels), fractions, seed);
            return py::make_tuple(split.train, split.calibration, split.test);
        },
        py::arg("taxonomy"), py::arg("labels"), py::arg("train") = 0.70,
        py::arg("calibration") = 0.15, py::arg("test") = 0.15, py::arg("seed") = 0);

    py::class_<SoftmaxClassifier>(m, "SoftmaxModel")
        .def_property_readonly("layer",
                               [](const SoftmaxClassifier& c) { return Taxonomy::layer_token(c.layer); })
        .def_property_readonly("feature_dim",
                               [](const SoftmaxClassifier& c) { return c.feature_dim; })
        .def("predict_proba",
             [](const SoftmaxClassifier& clf, const std::vector<std::vector<double>>& rows) {
                 int dim = 0;
                 std::vector<double> flat = flatten(rows, dim);
                 if (!rows.empty() && dim != clf.feature_dim) {
                     throw ValidationError("feature dimension mismatch");
                 }
                 ProbabilityTable table = clf.predict_proba(flat, rows.size());
                 std::vector<std::vector<double>> out(table.rows);
                 for (std::size_t i = 0; i < table.rows; ++i) {
                     auto row = table.row(i);
                     out[i].assign(row.begin(), row.end());
                 }
                 return out;
             });

    m.def(
        "train_softmax",
        [](const Taxonomy& taxonomy, const py::object& layer,
           const std::vector<std::vector<double>>& features,
           const std::vector<std::string>& labels, double learning_rate, int epochs,
           int batch_size, double l2_penalty, std::uint64_t seed, bool undersample) {
            int layer_id = layer_from_py(taxonomy, layer);
            if (features.size() != labels.size()) {
                throw ValidationError("features and labels must align");
            }
            TrainData data;
            int dim = 0;
            std::vector<double> flat = flatten(features, dim);
            data.feature_dim = dim;
            const std::size_t d = static_cast<std::size_t>(dim);
            for (std::size_t i = 0; i < labels.size(); ++i) {
                NodeIndex leaf = taxonomy.index_of(labels[i]);
                std::optional<NodeIndex> induced =
                    layer_id == kLeafLayer ? std::optional<NodeIndex>(leaf)
                                           : taxonomy.ancestor_at_level(leaf, layer_id);
                if (!induced) continue;
                data.labels.push_back(taxonomy.layer_position(layer_id, *induced));
                data.features.insert(data.features.end(), flat.begin() + static_cast<std::ptrdiff_t>(i * d),
                                     flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
            }
            TrainConfig cfg;
            cfg.learning_rate = learning_rate;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.l2_penalty = l2_penalty;
            cfg.seed = seed;
            cfg.undersample_majority = undersample;
            return train_softmax(layer_id, taxonomy.layer_nodes(layer_id), data, cfg);
        },
        py::arg("taxonomy"), py::arg("layer"), py::arg("features"), py::arg("labels"),
        py::arg("learning_rate") = 0.3, py::arg("epochs") = 80, py::arg("batch_size") = 64,
        py::arg("l2_penalty") = 1e-4, py::arg("seed") = 0, py::arg("undersample") = false);

    m.def(
        "nonconformity",
        [](double p, const std::string& kind) { return nonconformity(p, parse_score_kind(kind)); },
        py::arg("p"), py::arg("kind") = "one_minus_prob");

    m.def(
        "calibrate_threshold",
        [](const std::vector<double>& scores, double alpha) {
            CalibratedThreshold th = calibrate_level(scores, alpha);
            return py::make_tuple(th.q_hat, th.n_cal);
        },
        py::arg("scores"), py::arg("alpha"),
        "Conservative empirical quantile; returns (q_hat, n_cal), q_hat may be inf.");

    m.def(
        "lcp_predict",
        [](const Taxonomy& taxonomy,
           const std::vector<std::vector<std::vector<double>>>& level_rows,
           const std::vector<double>& level_q_hats,
           const std::vector<std::vector<double>>& leaf_rows, double leaf_q_hat,
           const std::string& kind) {
            if (static_cast<int>(level_rows.size()) != taxonomy.depth() ||
                level_q_hats.size() != level_rows.size()) {
                throw ValidationError("expected one table and one q_hat per level");
            }
            std::vector<ProbabilityTable> tables;
            std::vector<CalibratedThreshold> thresholds;
            for (int k = 1; k <= taxonomy.depth(); ++k) {
                tables.push_back(table_from_py(taxonomy, py::int_(k),
                                               level_rows[static_cast<std::size_t>(k) - 1]));
                CalibratedThreshold th;
                th.layer = k;
                th.q_hat = level_q_hats[static_cast<std::size_t>(k) - 1];
                thresholds.push_back(th);
            }
            ProbabilityTable leaf_table = table_from_py(taxonomy, py::str("leaf"), leaf_rows);
            CalibratedThreshold leaf_th;
            leaf_th.layer = kLeafLayer;
            leaf_th.q_hat = leaf_q_hat;
            auto sets = lcp_predict(tables, thresholds, leaf_table, leaf_th, taxonomy,
                                    parse_score_kind(kind));
            py::list out;
            for (const auto& s : sets) out.append(sets_to_py(taxonomy, s));
            return out;
        },
        py::arg("taxonomy"), py::arg("level_tables"), py::arg("level_q_hats"),
        py::arg("leaf_table"), py::arg("leaf_q_hat"), py::arg("kind") = "one_minus_prob");

    m.def(
        "pcp_predict",
        [](const Taxonomy& taxonomy, const std::vector<std::vector<double>>& leaf_rows,
           double leaf_q_hat, const std::string& kind) {
            ProbabilityTable leaf_table = table_from_py(taxonomy, py::str("leaf"), leaf_rows);
            CalibratedThreshold th;
            th.layer = kLeafLayer;
            th.q_hat = leaf_q_hat;
            auto sets = pcp_predict(leaf_table, th, taxonomy, parse_score_kind(kind));
            py::list out;
            for (const auto& s : sets) out.append(sets_to_py(taxonomy, s));
            return out;
        },
        py::arg("taxonomy"), py::arg("leaf_table"), py::arg("leaf_q_hat"),
        py::arg("kind") = "one_minus_prob");

    m.def(
        "run_sweep",
        [](const Taxonomy& taxonomy, const std::vector<std::vector<double>>& features,
           const std::vector<std::string>& labels, const py::dict& options,
           const std::optional<std::string>& out_dir) {
            ExperimentConfig cfg = config_from_dict(options);
            Dataset ds;
            ds.taxonomy = &taxonomy;
            ds.features = flatten(features, ds.feature_dim);
            ds.leaf_labels = leaf_indices(taxonomy, labels);
            if (ds.leaf_labels.size() != features.size()) {
                throw ValidationError("features and labels must align");
            }
            SweepResult result = sweep(cfg, ds);
            if (out_dir) write_sweep_outputs(result, *out_dir);
            py::list rows;
            for (const auto& report : result.aggregated) {
                for (auto row : report_to_rows(report)) rows.append(row);
            }
            return rows;
        },
        py::arg("taxonomy"), py::arg("features"), py::arg("labels"),
        py::arg("options") = py::dict(), py::arg("out_dir") = std::nullopt,
        "Monte Carlo alpha sweep; returns aggregated metric rows as dicts.");

    m.def("default_alpha_grid", &ExperimentConfig::default_alpha_grid);
}
