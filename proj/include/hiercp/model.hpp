#ifndef HIERCP_MODEL_HPP
#define HIERCP_MODEL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiercp/conformal.hpp"
#include "hiercp/taxonomy.hpp"

namespace hiercp {

struct TrainConfig {
    double learning_rate = 0.3;
    int epochs = 80;
    int batch_size = 64;
    double l2_penalty = 1e-4;
    std::uint64_t seed = 0;
    // Caps every class at the median present-class count before training.
    bool undersample_majority = false;

    void validate() const;
};

// Samples for one layer, labels as positions in that layer's class order.
struct TrainData {
    int feature_dim = 0;
    std::vector<double> features; // n * feature_dim, row-major
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

// Multinomial logistic regression; rows of predict_proba are probability
// distributions over class_order.
struct SoftmaxClassifier {
    int layer = kLeafLayer;
    std::vector<NodeIndex> class_order;
    int feature_dim = 0;
    std::vector<double> weights; // class_count() * feature_dim, row-major
    std::vector<double> biases;  // class_count()

    std::size_t class_count() const { return class_order.size(); }
    void predict_row(std::span<const double> x, std::span<double> out) const;
    ProbabilityTable predict_proba(std::span<const double> features, std::size_t n) const;
};

// w_c = n_total / (n_present_classes * n_c); zero-count classes get weight 0
// and drop out of the loss. All-equal counts give all-ones.
std::vector<double> class_weights(std::span<const int> labels, std::size_t class_count);

// Mean class-weighted cross-entropy plus (l2/2)*||W||^2; biases unpenalized.
double weighted_ce_objective(const SoftmaxClassifier& clf, const TrainData& data,
                             std::span<const double> weights_per_class, double l2_penalty);
// Analytic gradient of weighted_ce_objective, same parameter layout.
void weighted_ce_gradient(const SoftmaxClassifier& clf, const TrainData& data,
                          std::span<const double> weights_per_class, double l2_penalty,
                          std::span<double> grad_weights, std::span<double> grad_biases);

// Mini-batch gradient descent from zero init; deterministic given cfg.seed.
// Throws ValidationError on dimension mismatch, fewer than two present
// classes, or a non-finite objective (divergence).
SoftmaxClassifier train_softmax(int layer, std::vector<NodeIndex> class_order,
                                const TrainData& data, const TrainConfig& cfg);

// Plain-text model file: layer, class names, dimension, then one `w,...` row
// per class and a final `b,...` row. Floats round-trip bit-exactly.
void save_model(const std::string& path, const SoftmaxClassifier& clf,
                const Taxonomy& taxonomy);
SoftmaxClassifier load_model(const std::string& path, const Taxonomy& taxonomy);

// Conventional file name for a layer's model inside a model directory.
std::string model_file_name(int layer);

} // namespace hiercp

#endif
