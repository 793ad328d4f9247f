#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"

#include "hiercp/dataset.hpp"
#include "hiercp/error.hpp"
#include "hiercp/text.hpp"
#include "helpers.hpp"

using namespace hiercp;
using hiercp::testing::os_tree;

namespace {

Dataset tiny_dataset(const Taxonomy& t) {
    Dataset ds;
    ds.taxonomy = &t;
    ds.feature_dim = 2;
    ds.leaf_labels = {t.index_of("Windows 10 22H2"), t.index_of("Windows 7"),
                      t.index_of("Ubuntu 22.04")};
    ds.features = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    return ds;
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "hiercp_dataset_test";
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("induced labels") {
    Taxonomy t = os_tree();
    Dataset ds = tiny_dataset(t);
    CHECK(*ds.induced_label(0, 3) == t.index_of("Windows 10 22H2"));
    CHECK(*ds.induced_label(0, 1) == t.index_of("Windows"));
    CHECK(*ds.induced_label(0, kLeafLayer) == t.index_of("Windows 10 22H2"));
    CHECK(!ds.induced_label(1, 3).has_value()); // level-2 leaf has no level-3 ancestor
    CHECK(*ds.induced_label(1, 2) == t.index_of("Windows 7"));
    CHECK_THROWS_AS(ds.induced_label(9, 1), ValidationError);
}

TEST_CASE("single-class split is exact") {
    Taxonomy t = Taxonomy::parse("Windows");
    std::vector<NodeIndex> labels(100, 0);
    SplitResult split = stratified_split(labels, SplitFractions{}, 7);
    CHECK(split.train.size() == 70);
    CHECK(split.calibration.size() == 15);
    CHECK(split.test.size() == 15);
}

TEST_CASE("split partitions the indices") {
    Taxonomy t = os_tree();
    std::mt19937_64 rng(3);
    std::vector<NodeIndex> labels;
    for (int i = 0; i < 500; ++i) {
        const auto& leaves = t.leaves();
        labels.push_back(leaves[rng() % leaves.size()]);
    }
    SplitResult split = stratified_split(labels, SplitFractions{}, 11);
    std::set<std::size_t> seen;
    for (const auto* part : {&split.train, &split.calibration, &split.test}) {
        for (std::size_t i : *part) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == labels.size());
}

TEST_CASE("stratification keeps per-class counts within one of the exact share") {
    Taxonomy t = os_tree();
    std::mt19937_64 rng(5);
    std::vector<NodeIndex> labels;
    const auto& leaves = t.leaves();
    for (int i = 0; i < 997; ++i) labels.push_back(leaves[rng() % leaves.size()]);
    SplitResult split = stratified_split(labels, SplitFractions{}, 13);

    std::map<NodeIndex, std::size_t> totals;
    for (NodeIndex l : labels) ++totals[l];
    const double fracs[3] = {0.70, 0.15, 0.15};
    const std::vector<std::size_t>* parts[3] = {&split.train, &split.calibration, &split.test};
    for (int j = 0; j < 3; ++j) {
        std::map<NodeIndex, std::size_t> counts;
        for (std::size_t i : *parts[j]) ++counts[labels[i]];
        for (const auto& [cls, total] : totals) {
            if (total < 2) continue;
            double share = static_cast<double>(total) * fracs[j];
            CHECK(std::abs(static_cast<double>(counts[cls]) - share) < 1.0);
        }
    }
}

TEST_CASE("split determinism and seed sensitivity") {
    Taxonomy t = os_tree();
    std::mt19937_64 rng(9);
    std::vector<NodeIndex> labels;
    const auto& leaves = t.leaves();
    for (int i = 0; i < 400; ++i) labels.push_back(leaves[rng() % leaves.size()]);

    SplitResult a = stratified_split(labels, SplitFractions{}, 21);
    SplitResult b = stratified_split(labels, SplitFractions{}, 21);
    CHECK(a.train == b.train);
    CHECK(a.calibration == b.calibration);
    CHECK(a.test == b.test);

    SplitResult c = stratified_split(labels, SplitFractions{}, 22);
    CHECK(a.train != c.train);
    // Identical per-class counts regardless of seed for classes >= 2 samples.
    auto class_counts = [&](const std::vector<std::size_t>& part) {
        std::map<NodeIndex, std::size_t> counts;
        for (std::size_t i : part) ++counts[labels[i]];
        return counts;
    };
    CHECK(class_counts(a.train) == class_counts(c.train));
    CHECK(class_counts(a.test) == class_counts(c.test));
}

TEST_CASE("singleton class lands in exactly one split") {
    Taxonomy t = os_tree();
    std::vector<NodeIndex> labels(60, t.index_of("Windows 10 22H2"));
    labels.push_back(t.index_of("iOS 16.5")); // the lone sample
    std::set<int> destinations;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        SplitResult split = stratified_split(labels, SplitFractions{}, seed);
        int hits = 0;
        int dest = -1;
        const std::vector<std::size_t>* parts[3] = {&split.train, &split.calibration,
                                                    &split.test};
        for (int j = 0; j < 3; ++j) {
            if (std::find(parts[j]->begin(), parts[j]->end(), 60u) != parts[j]->end()) {
                ++hits;
                dest = j;
            }
        }
        CHECK(hits == 1);
        destinations.insert(dest);
    }
    // The seeded draw reaches every split across seeds.
    CHECK(destinations.size() == 3);
}

TEST_CASE("split validation") {
    std::vector<NodeIndex> empty;
    CHECK_THROWS_AS(stratified_split(empty, SplitFractions{}, 1), ValidationError);
    std::vector<NodeIndex> labels(10, 0);
    CHECK_THROWS_AS(stratified_split(labels, SplitFractions{0.5, 0.5, 0.5}, 1),
                    ValidationError);
    CHECK_THROWS_AS(stratified_split(labels, SplitFractions{1.0, 0.0, 0.0}, 1),
                    ValidationError);
}

TEST_CASE("generator config parsing") {
    GeneratorConfig cfg = GeneratorConfig::parse(
        "n_samples=500\nzipf_s=1.5\nnoise_sigma=0.4\nseparation=2\nfeature_dim=3\n");
    CHECK(cfg.n_samples == 500);
    CHECK(cfg.zipf_s == 1.5);
    CHECK(cfg.feature_dim == 3);
    CHECK_THROWS_AS(GeneratorConfig::parse("bogus=1\n"), ValidationError);
}

TEST_CASE("zipf exponent shapes the class counts") {
    Taxonomy t = os_tree();
    GeneratorConfig cfg;
    cfg.feature_dim = 3;

    cfg.n_samples = 10000;
    cfg.zipf_s = 0.0;
    Dataset uniform = generate_synthetic(cfg, t, 7);
    std::map<NodeIndex, std::size_t> counts;
    for (NodeIndex l : uniform.leaf_labels) ++counts[l];
    std::size_t max_count = 0;
    std::size_t min_count = uniform.size();
    for (NodeIndex leaf : t.leaves()) {
        max_count = std::max(max_count, counts[leaf]);
        min_count = std::min(min_count, counts[leaf]);
    }
    CHECK(static_cast<double>(max_count) / static_cast<double>(min_count) <= 1.5);

    cfg.n_samples = 5000;
    cfg.zipf_s = 1.5;
    Dataset skewed = generate_synthetic(cfg, t, 7);
    counts.clear();
    for (NodeIndex l : skewed.leaf_labels) ++counts[l];
    CHECK(counts[t.leaves()[0]] > counts[t.leaves()[5]]);
}

TEST_CASE("vanishing noise separates the classes") {
    Taxonomy t = os_tree();
    GeneratorConfig cfg;
    cfg.n_samples = 600;
    cfg.zipf_s = 0.0;
    cfg.noise_sigma = 1e-6;
    cfg.separation = 1.0;
    cfg.feature_dim = 5;
    Dataset ds = generate_synthetic(cfg, t, 3);

    // Class means are the centers up to 1e-6 noise; nearest-mean then
    // classifies every sample correctly.
    std::map<NodeIndex, std::vector<double>> means;
    std::map<NodeIndex, double> n_of;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& mean = means[ds.leaf_labels[i]];
        mean.resize(static_cast<std::size_t>(ds.feature_dim), 0.0);
        auto row = ds.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j];
        n_of[ds.leaf_labels[i]] += 1.0;
    }
    for (auto& [leaf, mean] : means) {
        for (double& v : mean) v /= n_of[leaf];
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = ds.row(i);
        NodeIndex best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const auto& [leaf, mean] : means) {
            double dist = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) {
                dist += (row[j] - mean[j]) * (row[j] - mean[j]);
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = leaf;
            }
        }
        correct += best == ds.leaf_labels[i] ? 1 : 0;
    }
    CHECK(correct == ds.size());
}

TEST_CASE("same-family leaves sit closer than cross-family leaves") {
    Taxonomy t = os_tree();
    GeneratorConfig cfg;
    cfg.n_samples = 6000;
    cfg.zipf_s = 0.0;
    cfg.noise_sigma = 0.3;
    cfg.feature_dim = 6;
    Dataset ds = generate_synthetic(cfg, t, 17);

    std::map<NodeIndex, std::vector<double>> means;
    std::map<NodeIndex, double> n_of;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& mean = means[ds.leaf_labels[i]];
        mean.resize(static_cast<std::size_t>(ds.feature_dim), 0.0);
        auto row = ds.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j];
        n_of[ds.leaf_labels[i]] += 1.0;
    }
    for (auto& [leaf, mean] : means) {
        for (double& v : mean) v /= n_of[leaf];
    }
    double same_total = 0.0, cross_total = 0.0;
    std::size_t same_n = 0, cross_n = 0;
    const auto& leaves = t.leaves();
    for (std::size_t a = 0; a < leaves.size(); ++a) {
        for (std::size_t b = a + 1; b < leaves.size(); ++b) {
            double dist = 0.0;
            const auto& ma = means[leaves[a]];
            const auto& mb = means[leaves[b]];
            for (std::size_t j = 0; j < ma.size(); ++j) {
                dist += (ma[j] - mb[j]) * (ma[j] - mb[j]);
            }
            dist = std::sqrt(dist);
            bool same_family = *t.ancestor_at_level(leaves[a], 1) ==
                               *t.ancestor_at_level(leaves[b], 1);
            (same_family ? same_total : cross_total) += dist;
            (same_family ? same_n : cross_n) += 1;
        }
    }
    CHECK(same_total / static_cast<double>(same_n) <
          cross_total / static_cast<double>(cross_n));
}

TEST_CASE("generator validation") {
    Taxonomy t = os_tree();
    GeneratorConfig cfg;
    cfg.n_samples = 5; // fewer than 12 leaves
    CHECK_THROWS_AS(generate_synthetic(cfg, t, 1), ValidationError);
    cfg.n_samples = 100;
    cfg.noise_sigma = 0.0;
    CHECK_THROWS_AS(generate_synthetic(cfg, t, 1), ValidationError);
}

TEST_CASE("generator determinism") {
    Taxonomy t = os_tree();
    GeneratorConfig cfg;
    cfg.n_samples = 200;
    Dataset a = generate_synthetic(cfg, t, 99);
    Dataset b = generate_synthetic(cfg, t, 99);
    CHECK(a.features == b.features);
    CHECK(a.leaf_labels == b.leaf_labels);
    Dataset c = generate_synthetic(cfg, t, 100);
    CHECK(a.features != c.features);
}

TEST_CASE("feature and label files round-trip") {
    Taxonomy t = os_tree();
    GeneratorConfig cfg;
    cfg.n_samples = 50;
    cfg.feature_dim = 4;
    Dataset ds = generate_synthetic(cfg, t, 5);
    auto dir = temp_dir();
    std::string features = (dir / "features.csv").string();
    std::string labels = (dir / "labels.txt").string();
    write_features_csv(features, ds);
    write_labels_file(labels, ds);
    Dataset back = load_dataset(t, features, labels);
    CHECK(back.feature_dim == ds.feature_dim);
    CHECK(back.features == ds.features); // bit-exact via shortest round-trip floats
    CHECK(back.leaf_labels == ds.leaf_labels);
}

TEST_CASE("label file rejects non-leaf names") {
    Taxonomy t = os_tree();
    auto dir = temp_dir();
    std::string path = (dir / "bad_labels.txt").string();
    write_text_file(path, "Windows\n");
    CHECK_THROWS_AS(load_labels_file(path, t), ValidationError);
}
