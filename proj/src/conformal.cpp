#include "hiercp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hiercp/error.hpp"
#include "hiercp/text.hpp"

namespace hiercp {

ScoreKind parse_score_kind(std::string_view token) {
    std::string_view t = trim(token);
    if (t == "one_minus_prob") return ScoreKind::OneMinusProb;
    if (t == "neg_log_prob") return ScoreKind::NegLogProb;
    throw ValidationError("unknown score kind '" + std::string(token) +
                          "' (expected one_minus_prob or neg_log_prob)");
}

std::string_view to_token(ScoreKind kind) {
    return kind == ScoreKind::OneMinusProb ? "one_minus_prob" : "neg_log_prob";
}

double nonconformity(double p, ScoreKind kind) {
    if (kind == ScoreKind::OneMinusProb) return 1.0 - p;
    return -std::log(std::max(p, 1e-12));
}

void ProbabilityTable::validate_rows(double tol) const {
    for (std::size_t i = 0; i < rows; ++i) {
        double sum = 0.0;
        for (double p : row(i)) {
            if (!(p >= 0.0) || !(p <= 1.0 + tol)) {
                throw ValidationError("row " + std::to_string(i) +
                                      " holds a value outside [0,1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > tol) {
            throw ValidationError("row " + std::to_string(i) + " sums to " +
                                  format_double(sum) + ", not 1");
        }
    }
}

std::size_t conservative_rank(std::size_t n_cal, double alpha) {
    // ceil(m*(1-alpha)) == m - floor(m*alpha) exactly; the floor form keeps
    // decimal alphas on the intended side of integer breakpoints.
    const double m = static_cast<double>(n_cal + 1);
    double f = std::floor(m * alpha);
    if (f < 0.0) f = 0.0;
    if (f > static_cast<double>(n_cal + 1)) f = static_cast<double>(n_cal + 1);
    return n_cal + 1 - static_cast<std::size_t>(f);
}

CalibratedThreshold calibrate_level(std::span<const double> scores, double alpha, int layer) {
    if (!(alpha >= 0.0) || !(alpha < 1.0)) {
        throw ValidationError("alpha must lie in [0, 1)");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw ValidationError("calibration scores must be finite");
    }
    CalibratedThreshold out;
    out.layer = layer;
    out.alpha = alpha;
    out.n_cal = scores.size();
    std::size_t rank = conservative_rank(scores.size(), alpha);
    if (rank > scores.size()) {
        out.q_hat = std::numeric_limits<double>::infinity();
        return out;
    }
    std::vector<double> sorted(scores.begin(), scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                     sorted.end());
    out.q_hat = sorted[rank - 1];
    return out;
}

std::vector<double> true_label_scores(const ProbabilityTable& table,
                                      std::span<const int> label_positions,
                                      ScoreKind kind) {
    if (label_positions.size() != table.rows) {
        throw ValidationError("label count does not match probability rows");
    }
    std::vector<double> scores;
    scores.reserve(table.rows);
    for (std::size_t i = 0; i < table.rows; ++i) {
        int pos = label_positions[i];
        if (pos < 0 || static_cast<std::size_t>(pos) >= table.class_count()) {
            throw ValidationError("label position out of range at row " + std::to_string(i));
        }
        scores.push_back(nonconformity(table.row(i)[static_cast<std::size_t>(pos)], kind));
    }
    return scores;
}

std::string_view to_token(Method method) {
    return method == Method::LCP ? "lcp" : "pcp";
}

Method parse_method(std::string_view token) {
    std::string_view t = trim(token);
    if (t == "lcp") return Method::LCP;
    if (t == "pcp") return Method::PCP;
    throw ValidationError("unknown method '" + std::string(token) + "' (expected lcp or pcp)");
}

std::string_view display_name(Method method) {
    return method == Method::LCP ? "L-CP" : "P-CP";
}

std::vector<std::vector<NodeIndex>> conformal_sets(const ProbabilityTable& table,
                                                   const CalibratedThreshold& threshold,
                                                   ScoreKind kind) {
    if (table.layer != threshold.layer) {
        throw ValidationError("layer mismatch: table is " + Taxonomy::layer_token(table.layer) +
                              ", threshold is " + Taxonomy::layer_token(threshold.layer));
    }
    std::vector<std::vector<NodeIndex>> sets(table.rows);
    for (std::size_t i = 0; i < table.rows; ++i) {
        auto row = table.row(i);
        // class_order ascends by node index, so each set comes out sorted.
        for (std::size_t c = 0; c < table.class_count(); ++c) {
            if (nonconformity(row[c], kind) <= threshold.q_hat) {
                sets[i].push_back(table.class_order[c]);
            }
        }
    }
    return sets;
}

namespace {

void check_layer_table(const ProbabilityTable& table, const Taxonomy& taxonomy, int layer) {
    if (table.layer != layer) {
        throw ValidationError("expected a table for layer " + Taxonomy::layer_token(layer) +
                              ", got " + Taxonomy::layer_token(table.layer));
    }
    if (table.class_order != taxonomy.layer_nodes(layer)) {
        throw ValidationError("column order mismatch at layer " + Taxonomy::layer_token(layer));
    }
}

} // namespace

std::vector<HierPredictionSets> lcp_predict(std::span<const ProbabilityTable> level_tables,
                                            std::span<const CalibratedThreshold> level_thresholds,
                                            const ProbabilityTable& leaf_table,
                                            const CalibratedThreshold& leaf_threshold,
                                            const Taxonomy& taxonomy,
                                            ScoreKind kind) {
    const int depth = taxonomy.depth();
    if (static_cast<int>(level_tables.size()) != depth ||
        static_cast<int>(level_thresholds.size()) != depth) {
        throw ValidationError("expected one table and one threshold per level");
    }
    for (int k = 1; k <= depth; ++k) {
        check_layer_table(level_tables[static_cast<std::size_t>(k) - 1], taxonomy, k);
        if (level_thresholds[static_cast<std::size_t>(k) - 1].layer != k) {
            throw ValidationError("level mismatch between tables and thresholds at level " +
                                  std::to_string(k));
        }
        if (level_tables[static_cast<std::size_t>(k) - 1].rows != leaf_table.rows) {
            throw ValidationError("inconsistent row counts across level tables");
        }
    }
    check_layer_table(leaf_table, taxonomy, kLeafLayer);
    if (leaf_threshold.layer != kLeafLayer) {
        throw ValidationError("leaf threshold does not carry the leaf layer");
    }

    std::vector<HierPredictionSets> out(leaf_table.rows);
    for (auto& sample : out) {
        sample.method = Method::LCP;
        sample.level_sets.resize(static_cast<std::size_t>(depth));
    }
    for (int k = 1; k <= depth; ++k) {
        auto sets = conformal_sets(level_tables[static_cast<std::size_t>(k) - 1],
                                   level_thresholds[static_cast<std::size_t>(k) - 1], kind);
        for (std::size_t i = 0; i < sets.size(); ++i) {
            out[i].level_sets[static_cast<std::size_t>(k) - 1] = std::move(sets[i]);
        }
    }
    auto leaf_sets = conformal_sets(leaf_table, leaf_threshold, kind);
    for (std::size_t i = 0; i < leaf_sets.size(); ++i) {
        out[i].leaf_set = std::move(leaf_sets[i]);
    }
    return out;
}

std::vector<HierPredictionSets> pcp_predict(const ProbabilityTable& leaf_table,
                                            const CalibratedThreshold& leaf_threshold,
                                            const Taxonomy& taxonomy,
                                            ScoreKind kind) {
    check_layer_table(leaf_table, taxonomy, kLeafLayer);
    if (leaf_threshold.layer != kLeafLayer) {
        throw ValidationError("leaf threshold does not carry the leaf layer");
    }
    const int depth = taxonomy.depth();
    const auto& leaves = taxonomy.leaves();

    // Ancestor positions per leaf and level, so projecting a leaf set is a
    // table lookup per retained leaf.
    std::vector<int> ancestor_pos(leaves.size() * static_cast<std::size_t>(depth), -1);
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        for (int k = 1; k <= taxonomy.level_of(leaves[l]); ++k) {
            NodeIndex anc = *taxonomy.ancestor_at_level(leaves[l], k);
            ancestor_pos[l * static_cast<std::size_t>(depth) + static_cast<std::size_t>(k) - 1] =
                taxonomy.layer_position(k, anc);
        }
    }

    auto leaf_sets = conformal_sets(leaf_table, leaf_threshold, kind);
    std::vector<HierPredictionSets> out(leaf_table.rows);
    std::vector<std::vector<char>> mask(static_cast<std::size_t>(depth));
    for (int k = 1; k <= depth; ++k) {
        mask[static_cast<std::size_t>(k) - 1].assign(taxonomy.level_nodes(k).size(), 0);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        HierPredictionSets& sample = out[i];
        sample.method = Method::PCP;
        sample.leaf_set = std::move(leaf_sets[i]);
        sample.level_sets.assign(static_cast<std::size_t>(depth), {});
        for (auto& m : mask) std::fill(m.begin(), m.end(), 0);
        for (NodeIndex leaf : sample.leaf_set) {
            std::size_t l = static_cast<std::size_t>(taxonomy.layer_position(kLeafLayer, leaf));
            for (int k = 1; k <= depth; ++k) {
                int pos = ancestor_pos[l * static_cast<std::size_t>(depth) +
                                       static_cast<std::size_t>(k) - 1];
                if (pos >= 0) mask[static_cast<std::size_t>(k) - 1][static_cast<std::size_t>(pos)] = 1;
            }
        }
        for (int k = 1; k <= depth; ++k) {
            const auto& nodes = taxonomy.level_nodes(k);
            auto& m = mask[static_cast<std::size_t>(k) - 1];
            for (std::size_t p = 0; p < nodes.size(); ++p) {
                if (m[p]) sample.level_sets[static_cast<std::size_t>(k) - 1].push_back(nodes[p]);
            }
        }
    }
    return out;
}

bool is_nested(const HierPredictionSets& sets, const Taxonomy& taxonomy) {
    const int depth = taxonomy.depth();
    if (static_cast<int>(sets.level_sets.size()) != depth) return false;
    auto contains = [](const std::vector<NodeIndex>& v, NodeIndex x) {
        return std::binary_search(v.begin(), v.end(), x);
    };
    for (int k = 2; k <= depth; ++k) {
        for (NodeIndex y : sets.level_sets[static_cast<std::size_t>(k) - 1]) {
            if (!contains(sets.level_sets[static_cast<std::size_t>(k) - 2],
                          *taxonomy.parent_of(y))) {
                return false;
            }
        }
    }
    for (NodeIndex leaf : sets.leaf_set) {
        for (int k = 1; k <= taxonomy.level_of(leaf); ++k) {
            if (!contains(sets.level_sets[static_cast<std::size_t>(k) - 1],
                          *taxonomy.ancestor_at_level(leaf, k))) {
                return false;
            }
        }
    }
    return true;
}

// File formats ---------------------------------------------------------------

void write_probability_csv(const std::string& path, const ProbabilityTable& table,
                           const Taxonomy& taxonomy) {
    std::ostringstream out;
    for (std::size_t c = 0; c < table.class_count(); ++c) {
        if (c > 0) out << ',';
        out << taxonomy.name_of(table.class_order[c]);
    }
    out << '\n';
    for (std::size_t i = 0; i < table.rows; ++i) {
        auto row = table.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out << ',';
            out << format_double(row[c]);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

ProbabilityTable load_probability_csv(const std::string& path, const Taxonomy& taxonomy,
                                      int layer) {
    std::vector<std::string> lines = split_lines(read_text_file(path));
    if (lines.empty()) throw ValidationError(path + ": missing header row");
    std::vector<std::string> header = split(lines[0], ',');
    const auto& expected = taxonomy.layer_nodes(layer);
    if (header.size() != expected.size()) {
        throw ValidationError(path + ": column order mismatch at layer " +
                              Taxonomy::layer_token(layer) + " (got " +
                              std::to_string(header.size()) + " columns, expected " +
                              std::to_string(expected.size()) + ")");
    }
    for (std::size_t c = 0; c < expected.size(); ++c) {
        if (header[c] != taxonomy.name_of(expected[c])) {
            throw ValidationError(path + ": column order mismatch at layer " +
                                  Taxonomy::layer_token(layer) + ": column " +
                                  std::to_string(c) + " is '" + header[c] + "', expected '" +
                                  taxonomy.name_of(expected[c]) + "'");
        }
    }
    ProbabilityTable table;
    table.layer = layer;
    table.class_order = expected;
    for (std::size_t line_no = 1; line_no < lines.size(); ++line_no) {
        if (trim(lines[line_no]).empty()) continue;
        std::vector<std::string> fields = split(lines[line_no], ',');
        if (fields.size() != expected.size()) {
            throw ValidationError(path + ": line " + std::to_string(line_no + 1) +
                                  " has the wrong field count");
        }
        for (const std::string& f : fields) table.values.push_back(parse_double(f));
        ++table.rows;
    }
    table.validate_rows();
    return table;
}

void write_thresholds_file(const std::string& path,
                           std::span<const CalibratedThreshold> thresholds) {
    std::ostringstream out;
    out << "level,alpha,n_cal,q_hat\n";
    for (const auto& th : thresholds) {
        out << Taxonomy::layer_token(th.layer) << ',' << format_double(th.alpha) << ','
            << th.n_cal << ',' << format_double(th.q_hat) << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<CalibratedThreshold> load_thresholds_file(const std::string& path,
                                                      const Taxonomy& taxonomy) {
    std::vector<std::string> lines = split_lines(read_text_file(path));
    if (lines.empty() || trim(lines[0]) != "level,alpha,n_cal,q_hat") {
        throw ValidationError(path + ": expected header 'level,alpha,n_cal,q_hat'");
    }
    std::vector<CalibratedThreshold> out;
    for (std::size_t line_no = 1; line_no < lines.size(); ++line_no) {
        if (trim(lines[line_no]).empty()) continue;
        std::vector<std::string> fields = split(lines[line_no], ',');
        if (fields.size() != 4) {
            throw ValidationError(path + ": line " + std::to_string(line_no + 1) +
                                  " must have 4 fields");
        }
        CalibratedThreshold th;
        th.layer = Taxonomy::parse_layer_token(fields[0], taxonomy.depth());
        th.alpha = parse_double(fields[1]);
        auto n = parse_int(fields[2]);
        if (n < 0) throw ValidationError(path + ": negative n_cal");
        th.n_cal = static_cast<std::size_t>(n);
        th.q_hat = parse_double(fields[3]);
        out.push_back(th);
    }
    return out;
}

std::string format_prediction_line(const HierPredictionSets& sets, const Taxonomy& taxonomy) {
    std::ostringstream out;
    auto emit = [&](int layer, const std::vector<NodeIndex>& members) {
        out << Taxonomy::layer_token(layer) << ":{";
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i > 0) out << ';';
            out << taxonomy.name_of(members[i]);
        }
        out << '}';
    };
    for (int k = 1; k <= taxonomy.depth(); ++k) {
        if (k > 1) out << '|';
        emit(k, sets.level_sets[static_cast<std::size_t>(k) - 1]);
    }
    out << '|';
    emit(kLeafLayer, sets.leaf_set);
    return out.str();
}

void write_prediction_sets(const std::string& path,
                           std::span<const HierPredictionSets> sets,
                           const Taxonomy& taxonomy) {
    std::ostringstream out;
    for (const auto& sample : sets) {
        out << format_prediction_line(sample, taxonomy) << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<HierPredictionSets> load_prediction_sets(const std::string& path,
                                                     const Taxonomy& taxonomy,
                                                     Method method) {
    const int depth = taxonomy.depth();
    std::vector<HierPredictionSets> out;
    std::vector<std::string> lines = split_lines(read_text_file(path));
    for (std::size_t line_no = 0; line_no < lines.size(); ++line_no) {
        if (trim(lines[line_no]).empty()) continue;
        std::string where = path + ": line " + std::to_string(line_no + 1);
        HierPredictionSets sample;
        sample.method = method;
        sample.level_sets.assign(static_cast<std::size_t>(depth), {});
        bool saw_leaf = false;
        std::vector<bool> saw_level(static_cast<std::size_t>(depth), false);
        for (const std::string& group : split(lines[line_no], '|')) {
            std::size_t colon = group.find(':');
            if (colon == std::string::npos || group.size() < colon + 3 ||
                group[colon + 1] != '{' || group.back() != '}') {
                throw ValidationError(where + ": malformed group '" + group + "'");
            }
            int layer = Taxonomy::parse_layer_token(group.substr(0, colon), depth);
            std::string body = group.substr(colon + 2, group.size() - colon - 3);
            std::vector<NodeIndex> members;
            if (!body.empty()) {
                for (const std::string& name : split(body, ';')) {
                    NodeIndex node = taxonomy.index_of(name);
                    if (taxonomy.layer_position(layer, node) < 0) {
                        throw ValidationError(where + ": node '" + name +
                                              "' does not belong to layer " +
                                              Taxonomy::layer_token(layer));
                    }
                    members.push_back(node);
                }
            }
            std::sort(members.begin(), members.end());
            members.erase(std::unique(members.begin(), members.end()), members.end());
            if (layer == kLeafLayer) {
                if (saw_leaf) throw ValidationError(where + ": duplicate leaf group");
                saw_leaf = true;
                sample.leaf_set = std::move(members);
            } else {
                if (saw_level[static_cast<std::size_t>(layer) - 1]) {
                    throw ValidationError(where + ": duplicate level group " +
                                          std::to_string(layer));
                }
                saw_level[static_cast<std::size_t>(layer) - 1] = true;
                sample.level_sets[static_cast<std::size_t>(layer) - 1] = std::move(members);
            }
        }
        if (!saw_leaf) throw ValidationError(where + ": missing leaf group");
        for (int k = 1; k <= depth; ++k) {
            if (!saw_level[static_cast<std::size_t>(k) - 1]) {
                throw ValidationError(where + ": missing level group " + std::to_string(k));
            }
        }
        out.push_back(std::move(sample));
    }
    return out;
}

} // namespace hiercp
