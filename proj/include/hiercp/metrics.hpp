#ifndef HIERCP_METRICS_HPP
#define HIERCP_METRICS_HPP

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hiercp/conformal.hpp"
#include "hiercp/taxonomy.hpp"

namespace hiercp {

// Fraction of samples whose label lies in their set. Samples with an absent
// label are skipped; absent result when no label is defined.
std::optional<double> coverage(std::span<const std::vector<NodeIndex>> sets,
                               std::span<const std::optional<NodeIndex>> labels);

// Mean cardinality, empty sets counting 0. Throws on an empty batch.
double mean_set_size(std::span<const std::vector<NodeIndex>> sets);
double empty_rate(std::span<const std::vector<NodeIndex>> sets);
double singleton_rate(std::span<const std::vector<NodeIndex>> sets);

// One inconsistent edge between adjacent levels. For an orphan, node sits at
// parent_level+1 with its parent missing from the level above; for a sterile,
// node sits at parent_level, has children, and none were admitted below.
struct ViolationEdge {
    int parent_level = 0;
    NodeIndex node = -1;
};

struct SampleViolations {
    std::vector<ViolationEdge> orphans;
    std::vector<ViolationEdge> steriles;
    bool violated() const { return !orphans.empty() || !steriles.empty(); }
};

struct HirResult {
    double rate = 0.0;
    std::vector<SampleViolations> details;
};

// Hierarchical inconsistency over the per-level sets (the leaf set does not
// participate). A childless node never counts as sterile.
HirResult hir(std::span<const HierPredictionSets> sets, const Taxonomy& taxonomy);

// Mean/std pair over iterations; n_effective is the mean per-iteration
// denominator (defined labels for coverage, batch size otherwise).
struct MetricValue {
    double mean = 0.0;
    double stddev = 0.0;
    int n_iterations = 0;
    double n_effective = 0.0;
};

struct LayerStats {
    std::optional<MetricValue> coverage;
    MetricValue set_size;
    MetricValue empty;
    MetricValue singleton;
};

// Per-(method, alpha) metric block; single runs carry stddev 0. Layers are
// ordered 1..K then kLeafLayer.
struct MetricsReport {
    Method method = Method::LCP;
    double alpha = 0.0;
    std::vector<std::pair<int, LayerStats>> layers;
    MetricValue hir;
};

// Metrics for one batch of predictions with row-aligned leaf labels.
MetricsReport evaluate_predictions(std::span<const HierPredictionSets> sets,
                                   std::span<const NodeIndex> leaf_labels,
                                   const Taxonomy& taxonomy,
                                   Method method, double alpha);

// Sample mean and (n-1)-normalized std per metric; runs must share method,
// alpha and layer structure. A single run keeps std 0.
MetricsReport aggregate(std::span<const MetricsReport> runs);

// CSV `method,alpha,level,metric,mean,std,n_iterations,n_samples_effective`;
// hir rows use level `global`, the terminal-leaf layer uses `leaf`.
void write_report_header(std::ostream& out);
void write_report_rows(std::ostream& out, const MetricsReport& report);

// Long format `method,alpha,level,metric,value,iteration` for plotting.
void write_long_header(std::ostream& out);
void write_long_rows(std::ostream& out, const MetricsReport& run, int iteration);

} // namespace hiercp

#endif
