#include "hiercp/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "hiercp/error.hpp"
#include "hiercp/rng.hpp"
#include "hiercp/text.hpp"

namespace hiercp {

std::optional<NodeIndex> Dataset::induced_label(std::size_t i, int layer) const {
    if (i >= size()) {
        throw ValidationError("sample index " + std::to_string(i) + " out of range");
    }
    NodeIndex leaf = leaf_labels[i];
    if (layer == kLeafLayer) return leaf;
    return taxonomy->ancestor_at_level(leaf, layer);
}

void SplitFractions::validate() const {
    if (!(train > 0.0) || !(calibration > 0.0) || !(test > 0.0)) {
        throw ValidationError("split fractions must all be positive");
    }
    if (std::abs(train + calibration + test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
}

namespace {

// floor(n*f_j) per split, remainder to the largest fractional parts,
// ties resolved in split order. Guarantees |count - n*f_j| < 1.
std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3>& fracs) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (int j = 0; j < 3; ++j) {
        double share = static_cast<double>(n) * fracs[static_cast<std::size_t>(j)];
        counts[static_cast<std::size_t>(j)] = static_cast<std::size_t>(std::floor(share));
        remainders[static_cast<std::size_t>(j)] = share - std::floor(share);
        assigned += counts[static_cast<std::size_t>(j)];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return remainders[static_cast<std::size_t>(a)] > remainders[static_cast<std::size_t>(b)];
    });
    for (std::size_t left = n - assigned, j = 0; left > 0; --left, ++j) {
        ++counts[static_cast<std::size_t>(order[j % 3])];
    }
    return counts;
}

} // namespace

SplitResult stratified_split(const std::vector<NodeIndex>& leaf_labels,
                             const SplitFractions& fractions,
                             std::uint64_t seed) {
    fractions.validate();
    if (leaf_labels.empty()) throw ValidationError("cannot split an empty dataset");

    // Group sample indices per class; iterate classes by node index so the
    // RNG consumption order is reproducible.
    std::map<NodeIndex, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < leaf_labels.size(); ++i) {
        by_class[leaf_labels[i]].push_back(i);
    }

    Rng rng(seed);
    const std::array<double, 3> fracs{fractions.train, fractions.calibration, fractions.test};
    SplitResult result;
    std::vector<std::size_t>* dest[3] = {&result.train, &result.calibration, &result.test};

    for (auto& [cls, indices] : by_class) {
        (void)cls;
        if (indices.size() < 2) {
            // Too small to stratify: unstratified draw over the fractions.
            for (std::size_t idx : indices) {
                double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                int j = u < fracs[0] ? 0 : (u < fracs[0] + fracs[1] ? 1 : 2);
                dest[j]->push_back(idx);
            }
            continue;
        }
        std::shuffle(indices.begin(), indices.end(), rng);
        auto counts = largest_remainder(indices.size(), fracs);
        std::size_t offset = 0;
        for (int j = 0; j < 3; ++j) {
            for (std::size_t c = 0; c < counts[static_cast<std::size_t>(j)]; ++c) {
                dest[j]->push_back(indices[offset++]);
            }
        }
    }
    for (auto* part : dest) std::sort(part->begin(), part->end());
    return result;
}

SplitResult stratified_split(const Dataset& dataset, const SplitFractions& fractions,
                             std::uint64_t seed) {
    return stratified_split(dataset.leaf_labels, fractions, seed);
}

GeneratorConfig GeneratorConfig::parse(std::string_view text) {
    GeneratorConfig cfg;
    for (const auto& [key, value] : parse_key_value(text)) {
        if (key == "n_samples") {
            auto n = parse_int(value);
            if (n < 0) throw ValidationError("n_samples must be nonnegative");
            cfg.n_samples = static_cast<std::size_t>(n);
        } else if (key == "zipf_s") {
            cfg.zipf_s = parse_double(value);
        } else if (key == "noise_sigma") {
            cfg.noise_sigma = parse_double(value);
        } else if (key == "separation") {
            cfg.separation = parse_double(value);
        } else if (key == "feature_dim") {
            cfg.feature_dim = static_cast<int>(parse_int(value));
        } else {
            throw ValidationError("unknown generator config key '" + key + "'");
        }
    }
    return cfg;
}

GeneratorConfig GeneratorConfig::load(const std::string& path) {
    return parse(read_text_file(path));
}

void GeneratorConfig::validate(std::size_t n_leaves) const {
    if (n_samples < n_leaves) {
        throw ValidationError("n_samples (" + std::to_string(n_samples) +
                              ") must be at least the number of leaves (" +
                              std::to_string(n_leaves) + ")");
    }
    if (!(noise_sigma > 0.0)) throw ValidationError("noise_sigma must be positive");
    if (!(zipf_s >= 0.0)) throw ValidationError("zipf_s must be nonnegative");
    if (!(separation >= 0.0)) throw ValidationError("separation must be nonnegative");
    if (feature_dim < 1) throw ValidationError("feature_dim must be at least 1");
}

Dataset generate_synthetic(const GeneratorConfig& cfg, const Taxonomy& taxonomy,
                           std::uint64_t seed) {
    cfg.validate(taxonomy.leaves().size());
    const std::size_t d = static_cast<std::size_t>(cfg.feature_dim);

    // One direction vector per node, drawn in node order.
    Rng node_rng(derive_seed(seed, 1));
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::vector<double> directions(static_cast<std::size_t>(taxonomy.node_count()) * d);
    for (double& v : directions) v = unit_normal(node_rng) * cfg.separation;

    // Leaf prevalence ~ 1/rank^s over leaves in canonical order.
    const auto& leaves = taxonomy.leaves();
    std::vector<double> cumulative(leaves.size());
    double total = 0.0;
    for (std::size_t r = 0; r < leaves.size(); ++r) {
        total += std::pow(static_cast<double>(r + 1), -cfg.zipf_s);
        cumulative[r] = total;
    }

    Rng label_rng(derive_seed(seed, 2));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Dataset ds;
    ds.taxonomy = &taxonomy;
    ds.feature_dim = cfg.feature_dim;
    ds.leaf_labels.reserve(cfg.n_samples);
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        double u = uniform(label_rng) * total;
        std::size_t r = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        if (r >= leaves.size()) r = leaves.size() - 1;
        ds.leaf_labels.push_back(leaves[r]);
    }

    // Ancestor contributions halve per level: the family carries the
    // strongest signal, finer versions add progressively weaker offsets.
    Rng noise_rng(derive_seed(seed, 3));
    ds.features.assign(cfg.n_samples * d, 0.0);
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        double* row = ds.features.data() + i * d;
        NodeIndex leaf = ds.leaf_labels[i];
        int level = taxonomy.level_of(leaf);
        double scale = 1.0;
        for (int k = 1; k <= level; ++k, scale *= 0.5) {
            NodeIndex anc = *taxonomy.ancestor_at_level(leaf, k);
            const double* dir = directions.data() + static_cast<std::size_t>(anc) * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += scale * dir[j];
        }
        for (std::size_t j = 0; j < d; ++j) row[j] += cfg.noise_sigma * unit_normal(noise_rng);
    }
    return ds;
}

void write_features_csv(const std::string& path, const Dataset& dataset) {
    std::ostringstream out;
    for (int j = 0; j < dataset.feature_dim; ++j) {
        if (j > 0) out << ',';
        out << 'f' << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto row = dataset.row(i);
        for (int j = 0; j < dataset.feature_dim; ++j) {
            if (j > 0) out << ',';
            out << format_double(row[static_cast<std::size_t>(j)]);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

void write_labels_file(const std::string& path, const Dataset& dataset) {
    std::ostringstream out;
    for (NodeIndex leaf : dataset.leaf_labels) {
        out << dataset.taxonomy->name_of(leaf) << '\n';
    }
    write_text_file(path, out.str());
}

std::pair<std::vector<double>, int> load_features_csv(const std::string& path) {
    std::vector<std::string> lines = split_lines(read_text_file(path));
    if (lines.empty()) throw ValidationError(path + ": missing header row");
    std::vector<std::string> header = split(lines[0], ',');
    int d = static_cast<int>(header.size());
    for (int j = 0; j < d; ++j) {
        if (header[static_cast<std::size_t>(j)] != "f" + std::to_string(j)) {
            throw ValidationError(path + ": expected header column f" + std::to_string(j) +
                                  ", got '" + header[static_cast<std::size_t>(j)] + "'");
        }
    }
    std::vector<double> values;
    for (std::size_t line_no = 1; line_no < lines.size(); ++line_no) {
        if (trim(lines[line_no]).empty()) continue;
        std::vector<std::string> fields = split(lines[line_no], ',');
        if (static_cast<int>(fields.size()) != d) {
            throw ValidationError(path + ": line " + std::to_string(line_no + 1) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(d));
        }
        for (const std::string& f : fields) values.push_back(parse_double(f));
    }
    return {std::move(values), d};
}

std::vector<NodeIndex> load_labels_file(const std::string& path, const Taxonomy& taxonomy) {
    std::vector<NodeIndex> labels;
    std::vector<std::string> lines = split_lines(read_text_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        NodeIndex node = taxonomy.index_of(lines[i]);
        if (!taxonomy.is_leaf(node)) {
            throw ValidationError(path + ": line " + std::to_string(i + 1) + ": '" + lines[i] +
                                  "' is not a terminal leaf");
        }
        labels.push_back(node);
    }
    return labels;
}

Dataset load_dataset(const Taxonomy& taxonomy, const std::string& features_path,
                     const std::string& labels_path) {
    auto [values, d] = load_features_csv(features_path);
    std::vector<NodeIndex> labels = load_labels_file(labels_path, taxonomy);
    std::size_t rows = d > 0 ? values.size() / static_cast<std::size_t>(d) : 0;
    if (rows != labels.size()) {
        throw ValidationError("row mismatch: " + std::to_string(rows) + " feature rows vs " +
                              std::to_string(labels.size()) + " labels");
    }
    Dataset ds;
    ds.taxonomy = &taxonomy;
    ds.feature_dim = d;
    ds.features = std::move(values);
    ds.leaf_labels = std::move(labels);
    return ds;
}

} // namespace hiercp
