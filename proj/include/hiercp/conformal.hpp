#ifndef HIERCP_CONFORMAL_HPP
#define HIERCP_CONFORMAL_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiercp/taxonomy.hpp"

namespace hiercp {

enum class ScoreKind {
    OneMinusProb, // 1 - p
    NegLogProb,   // -log(max(p, 1e-12))
};

ScoreKind parse_score_kind(std::string_view token);
std::string_view to_token(ScoreKind kind);

// Smaller is more conforming; strictly decreasing in p for both kinds.
double nonconformity(double p, ScoreKind kind);

// Class-probability rows for a batch, columns aligned to layer_nodes(layer).
struct ProbabilityTable {
    int layer = kLeafLayer;
    std::vector<NodeIndex> class_order;
    std::size_t rows = 0;
    std::vector<double> values; // rows * class_order.size(), row-major

    std::size_t class_count() const { return class_order.size(); }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * class_count(), class_count()};
    }
    // Every row nonnegative and summing to 1 within tol.
    void validate_rows(double tol = 1e-6) const;
};

struct CalibratedThreshold {
    int layer = kLeafLayer;
    double alpha = 0.0;
    double q_hat = std::numeric_limits<double>::infinity();
    std::size_t n_cal = 0;
};

// Rank of the conservative empirical quantile: the index (1-based) of the
// score that becomes q_hat, equal to ceil((n_cal+1)*(1-alpha)) computed as
// (n_cal+1) - floor((n_cal+1)*alpha) to keep decimal alphas exact.
std::size_t conservative_rank(std::size_t n_cal, double alpha);

// q_hat = rank-th smallest score, or +inf when the rank exceeds n_cal
// (always the case for alpha = 0 and for an empty score list).
CalibratedThreshold calibrate_level(std::span<const double> scores, double alpha,
                                    int layer = kLeafLayer);

// Scores of the true labels, given each sample's class position in the table.
std::vector<double> true_label_scores(const ProbabilityTable& table,
                                      std::span<const int> label_positions,
                                      ScoreKind kind);

enum class Method { LCP, PCP };

std::string_view to_token(Method method);
Method parse_method(std::string_view token);
// Display name used in reports ("L-CP" / "P-CP").
std::string_view display_name(Method method);

// Per-level label sets for one sample plus the terminal-leaf set. Level k
// lives at level_sets[k-1]; all sets are sorted by node index.
struct HierPredictionSets {
    Method method = Method::LCP;
    std::vector<std::vector<NodeIndex>> level_sets;
    std::vector<NodeIndex> leaf_set;

    const std::vector<NodeIndex>& layer_set(int layer) const {
        return layer == kLeafLayer ? leaf_set : level_sets[static_cast<std::size_t>(layer) - 1];
    }
};

// { y : s(p(y|x)) <= q_hat } per row.
std::vector<std::vector<NodeIndex>> conformal_sets(const ProbabilityTable& table,
                                                   const CalibratedThreshold& threshold,
                                                   ScoreKind kind);

// Thresholds each level with its own quantile, plus the leaf layer with the
// leaf threshold. Sets may disagree across levels.
// level_tables[k-1] / level_thresholds[k-1] must carry layer k.
std::vector<HierPredictionSets> lcp_predict(std::span<const ProbabilityTable> level_tables,
                                            std::span<const CalibratedThreshold> level_thresholds,
                                            const ProbabilityTable& leaf_table,
                                            const CalibratedThreshold& leaf_threshold,
                                            const Taxonomy& taxonomy,
                                            ScoreKind kind);

// Thresholds the leaf layer only, then projects upward: level k keeps the
// level-k ancestors of the retained leaves. Nested by construction.
std::vector<HierPredictionSets> pcp_predict(const ProbabilityTable& leaf_table,
                                            const CalibratedThreshold& leaf_threshold,
                                            const Taxonomy& taxonomy,
                                            ScoreKind kind);

// Checks the nesting implications: every level-(k+1) member's parent present
// at level k, and every retained leaf's ancestors present at every level it
// reaches. Always true for pcp_predict output.
bool is_nested(const HierPredictionSets& sets, const Taxonomy& taxonomy);

// File formats --------------------------------------------------------------

// CSV with one header row of node names matching layer_nodes(layer).
void write_probability_csv(const std::string& path, const ProbabilityTable& table,
                           const Taxonomy& taxonomy);
ProbabilityTable load_probability_csv(const std::string& path, const Taxonomy& taxonomy,
                                      int layer);

// Header `level,alpha,n_cal,q_hat`, one row per layer, `inf` permitted.
void write_thresholds_file(const std::string& path,
                           std::span<const CalibratedThreshold> thresholds);
std::vector<CalibratedThreshold> load_thresholds_file(const std::string& path,
                                                      const Taxonomy& taxonomy);

// One line per sample: `level:{name;name;...}` groups joined by `|`, with
// levels 1..K followed by the leaf group.
std::string format_prediction_line(const HierPredictionSets& sets, const Taxonomy& taxonomy);
void write_prediction_sets(const std::string& path,
                           std::span<const HierPredictionSets> sets,
                           const Taxonomy& taxonomy);
std::vector<HierPredictionSets> load_prediction_sets(const std::string& path,
                                                     const Taxonomy& taxonomy,
                                                     Method method);

} // namespace hiercp

#endif
