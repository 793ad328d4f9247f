#ifndef HIERCP_DATASET_HPP
#define HIERCP_DATASET_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiercp/taxonomy.hpp"

namespace hiercp {

// Row-major feature matrix plus terminal-leaf labels. The taxonomy is
// referenced, not owned; it must outlive the dataset.
struct Dataset {
    const Taxonomy* taxonomy = nullptr;
    int feature_dim = 0;
    std::vector<double> features;     // size() * feature_dim
    std::vector<NodeIndex> leaf_labels;

    std::size_t size() const { return leaf_labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * static_cast<std::size_t>(feature_dim),
                static_cast<std::size_t>(feature_dim)};
    }
    // Level-k ancestor of the sample's leaf label; leaf label itself for
    // kLeafLayer; absent when the branch terminates above level k.
    std::optional<NodeIndex> induced_label(std::size_t i, int layer) const;
};

struct SplitFractions {
    double train = 0.70;
    double calibration = 0.15;
    double test = 0.15;

    void validate() const; // all positive, sum to 1
};

struct SplitResult {
    std::vector<std::size_t> train;
    std::vector<std::size_t> calibration;
    std::vector<std::size_t> test;
};

// Per-leaf-class allocation by largest remainder; classes with fewer than
// 2 samples are assigned by an unstratified seeded draw over the fractions.
// Deterministic given (labels, fractions, seed).
SplitResult stratified_split(const std::vector<NodeIndex>& leaf_labels,
                             const SplitFractions& fractions,
                             std::uint64_t seed);
SplitResult stratified_split(const Dataset& dataset,
                             const SplitFractions& fractions,
                             std::uint64_t seed);

struct GeneratorConfig {
    std::size_t n_samples = 5000;
    double zipf_s = 1.0;       // leaf prevalence ~ 1 / rank^s
    double noise_sigma = 0.5;
    double separation = 1.0;   // scale of per-node direction vectors
    int feature_dim = 6;

    static GeneratorConfig parse(std::string_view text);
    static GeneratorConfig load(const std::string& path);
    void validate(std::size_t n_leaves) const;
};

// Hierarchy-aware mixture: every node gets a fixed random direction, and a
// sample of leaf L sums its ancestors' directions with weights 1, 0.5,
// 0.25, ... from the family level down, plus isotropic Gaussian noise.
// Coarse levels therefore carry the strongest signal.
Dataset generate_synthetic(const GeneratorConfig& cfg, const Taxonomy& taxonomy,
                           std::uint64_t seed);

// Features file: CSV with header f0,f1,...; labels file: one leaf name per
// line, row-aligned with the features.
void write_features_csv(const std::string& path, const Dataset& dataset);
void write_labels_file(const std::string& path, const Dataset& dataset);
std::pair<std::vector<double>, int> load_features_csv(const std::string& path);
std::vector<NodeIndex> load_labels_file(const std::string& path, const Taxonomy& taxonomy);
Dataset load_dataset(const Taxonomy& taxonomy, const std::string& features_path,
                     const std::string& labels_path);

} // namespace hiercp

#endif
