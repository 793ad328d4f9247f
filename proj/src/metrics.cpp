#include "hiercp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hiercp/error.hpp"
#include "hiercp/text.hpp"

namespace hiercp {

std::optional<double> coverage(std::span<const std::vector<NodeIndex>> sets,
                               std::span<const std::optional<NodeIndex>> labels) {
    if (sets.size() != labels.size()) {
        throw ValidationError("coverage: sets and labels must align");
    }
    std::size_t defined = 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (!labels[i]) continue;
        ++defined;
        if (std::binary_search(sets[i].begin(), sets[i].end(), *labels[i])) ++hit;
    }
    if (defined == 0) return std::nullopt;
    return static_cast<double>(hit) / static_cast<double>(defined);
}

double mean_set_size(std::span<const std::vector<NodeIndex>> sets) {
    if (sets.empty()) throw ValidationError("mean_set_size: empty batch");
    double total = 0.0;
    for (const auto& s : sets) total += static_cast<double>(s.size());
    return total / static_cast<double>(sets.size());
}

double empty_rate(std::span<const std::vector<NodeIndex>> sets) {
    if (sets.empty()) throw ValidationError("empty_rate: empty batch");
    std::size_t count = 0;
    for (const auto& s : sets) count += s.empty() ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(sets.size());
}

double singleton_rate(std::span<const std::vector<NodeIndex>> sets) {
    if (sets.empty()) throw ValidationError("singleton_rate: empty batch");
    std::size_t count = 0;
    for (const auto& s : sets) count += s.size() == 1 ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(sets.size());
}

HirResult hir(std::span<const HierPredictionSets> sets, const Taxonomy& taxonomy) {
    if (sets.empty()) throw ValidationError("hir: empty batch");
    const int depth = taxonomy.depth();
    HirResult result;
    result.details.resize(sets.size());
    std::size_t violated = 0;
    auto contains = [](const std::vector<NodeIndex>& v, NodeIndex x) {
        return std::binary_search(v.begin(), v.end(), x);
    };
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (static_cast<int>(sets[i].level_sets.size()) != depth) {
            throw ValidationError("hir: sample " + std::to_string(i) +
                                  " is missing level sets");
        }
        SampleViolations& detail = result.details[i];
        for (int k = 1; k < depth; ++k) {
            const auto& upper = sets[i].level_sets[static_cast<std::size_t>(k) - 1];
            const auto& lower = sets[i].level_sets[static_cast<std::size_t>(k)];
            for (NodeIndex child : lower) {
                if (!contains(upper, *taxonomy.parent_of(child))) {
                    detail.orphans.push_back({k, child});
                }
            }
            for (NodeIndex parent : upper) {
                const auto& children = taxonomy.children_of(parent);
                if (children.empty()) continue; // taxonomic leaves are exempt
                bool any = std::any_of(children.begin(), children.end(),
                                       [&](NodeIndex c) { return contains(lower, c); });
                if (!any) detail.steriles.push_back({k, parent});
            }
        }
        violated += detail.violated() ? 1 : 0;
    }
    result.rate = static_cast<double>(violated) / static_cast<double>(sets.size());
    return result;
}

namespace {

MetricValue single(double value, double n_effective) {
    return MetricValue{value, 0.0, 1, n_effective};
}

} // namespace

MetricsReport evaluate_predictions(std::span<const HierPredictionSets> sets,
                                   std::span<const NodeIndex> leaf_labels,
                                   const Taxonomy& taxonomy,
                                   Method method, double alpha) {
    if (sets.empty()) throw ValidationError("evaluate_predictions: empty batch");
    if (sets.size() != leaf_labels.size()) {
        throw ValidationError("evaluate_predictions: sets and labels must align");
    }
    const int depth = taxonomy.depth();
    const double n = static_cast<double>(sets.size());
    MetricsReport report;
    report.method = method;
    report.alpha = alpha;

    std::vector<std::vector<NodeIndex>> layer_sets(sets.size());
    std::vector<std::optional<NodeIndex>> labels(sets.size());
    auto eval_layer = [&](int layer) {
        for (std::size_t i = 0; i < sets.size(); ++i) {
            layer_sets[i] = sets[i].layer_set(layer);
            labels[i] = layer == kLeafLayer
                            ? std::optional<NodeIndex>(leaf_labels[i])
                            : taxonomy.ancestor_at_level(leaf_labels[i], layer);
        }
        LayerStats stats;
        std::size_t defined = 0;
        for (const auto& l : labels) defined += l ? 1 : 0;
        if (auto cov = coverage(layer_sets, labels)) {
            stats.coverage = single(*cov, static_cast<double>(defined));
        }
        stats.set_size = single(mean_set_size(layer_sets), n);
        stats.empty = single(empty_rate(layer_sets), n);
        stats.singleton = single(singleton_rate(layer_sets), n);
        report.layers.emplace_back(layer, stats);
    };
    for (int k = 1; k <= depth; ++k) eval_layer(k);
    eval_layer(kLeafLayer);
    report.hir = single(hir(sets, taxonomy).rate, n);
    return report;
}

namespace {

MetricValue aggregate_values(const std::vector<MetricValue>& values) {
    MetricValue out;
    out.n_iterations = static_cast<int>(values.size());
    if (values.empty()) return out;
    double sum = 0.0;
    double n_eff = 0.0;
    for (const auto& v : values) {
        sum += v.mean;
        n_eff += v.n_effective;
    }
    out.mean = sum / static_cast<double>(values.size());
    out.n_effective = n_eff / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const auto& v : values) {
            double d = v.mean - out.mean;
            ss += d * d;
        }
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

} // namespace

MetricsReport aggregate(std::span<const MetricsReport> runs) {
    if (runs.empty()) throw ValidationError("aggregate: no runs");
    const MetricsReport& first = runs.front();
    for (const auto& run : runs) {
        if (run.method != first.method || run.alpha != first.alpha ||
            run.layers.size() != first.layers.size()) {
            throw ValidationError("aggregate: heterogeneous runs");
        }
        for (std::size_t l = 0; l < run.layers.size(); ++l) {
            if (run.layers[l].first != first.layers[l].first) {
                throw ValidationError("aggregate: heterogeneous layer structure");
            }
        }
    }
    MetricsReport out;
    out.method = first.method;
    out.alpha = first.alpha;
    for (std::size_t l = 0; l < first.layers.size(); ++l) {
        LayerStats stats;
        std::vector<MetricValue> cov, size, empty, singleton;
        for (const auto& run : runs) {
            const LayerStats& rs = run.layers[l].second;
            if (rs.coverage) cov.push_back(*rs.coverage);
            size.push_back(rs.set_size);
            empty.push_back(rs.empty);
            singleton.push_back(rs.singleton);
        }
        if (!cov.empty()) stats.coverage = aggregate_values(cov);
        stats.set_size = aggregate_values(size);
        stats.empty = aggregate_values(empty);
        stats.singleton = aggregate_values(singleton);
        out.layers.emplace_back(first.layers[l].first, stats);
    }
    std::vector<MetricValue> hirs;
    for (const auto& run : runs) hirs.push_back(run.hir);
    out.hir = aggregate_values(hirs);
    return out;
}

namespace {

void report_row(std::ostream& out, const MetricsReport& report, const std::string& level,
                const char* metric, const MetricValue& value) {
    out << display_name(report.method) << ',' << format_double(report.alpha) << ',' << level
        << ',' << metric << ',' << format_double(value.mean) << ','
        << format_double(value.stddev) << ',' << value.n_iterations << ','
        << format_double(value.n_effective) << '\n';
}

void long_row(std::ostream& out, const MetricsReport& run, const std::string& level,
              const char* metric, double value, int iteration) {
    out << display_name(run.method) << ',' << format_double(run.alpha) << ',' << level << ','
        << metric << ',' << format_double(value) << ',' << iteration << '\n';
}

} // namespace

void write_report_header(std::ostream& out) {
    out << "method,alpha,level,metric,mean,std,n_iterations,n_samples_effective\n";
}

void write_report_rows(std::ostream& out, const MetricsReport& report) {
    for (const auto& [layer, stats] : report.layers) {
        std::string level = Taxonomy::layer_token(layer);
        if (stats.coverage) report_row(out, report, level, "coverage", *stats.coverage);
        report_row(out, report, level, "mean_set_size", stats.set_size);
        report_row(out, report, level, "empty_rate", stats.empty);
        report_row(out, report, level, "singleton_rate", stats.singleton);
    }
    report_row(out, report, "global", "hir", report.hir);
}

void write_long_header(std::ostream& out) {
    out << "method,alpha,level,metric,value,iteration\n";
}

void write_long_rows(std::ostream& out, const MetricsReport& run, int iteration) {
    for (const auto& [layer, stats] : run.layers) {
        std::string level = Taxonomy::layer_token(layer);
        if (stats.coverage) long_row(out, run, level, "coverage", stats.coverage->mean, iteration);
        long_row(out, run, level, "mean_set_size", stats.set_size.mean, iteration);
        long_row(out, run, level, "empty_rate", stats.empty.mean, iteration);
        long_row(out, run, level, "singleton_rate", stats.singleton.mean, iteration);
    }
    long_row(out, run, "global", "hir", run.hir.mean, iteration);
}

} // namespace hiercp
