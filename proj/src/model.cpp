#include "hiercp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hiercp/error.hpp"
#include "hiercp/rng.hpp"
#include "hiercp/text.hpp"

namespace hiercp {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (epochs < 1) throw ValidationError("epochs must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be positive");
    if (!(l2_penalty >= 0.0)) throw ValidationError("l2_penalty must be nonnegative");
}

void SoftmaxClassifier::predict_row(std::span<const double> x, std::span<double> out) const {
    const std::size_t m = class_count();
    const std::size_t d = static_cast<std::size_t>(feature_dim);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) {
        double z = biases[c];
        const double* w = weights.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
        out[c] = z;
        max_logit = std::max(max_logit, z);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        out[c] = std::exp(out[c] - max_logit);
        sum += out[c];
    }
    for (std::size_t c = 0; c < m; ++c) out[c] /= sum;
}

ProbabilityTable SoftmaxClassifier::predict_proba(std::span<const double> features,
                                                  std::size_t n) const {
    const std::size_t d = static_cast<std::size_t>(feature_dim);
    if (features.size() != n * d) {
        throw ValidationError("feature buffer does not match dimension " +
                              std::to_string(feature_dim));
    }
    ProbabilityTable table;
    table.layer = layer;
    table.class_order = class_order;
    table.rows = n;
    table.values.resize(n * class_count());
    for (std::size_t i = 0; i < n; ++i) {
        predict_row(features.subspan(i * d, d),
                    {table.values.data() + i * class_count(), class_count()});
    }
    return table;
}

std::vector<double> class_weights(std::span<const int> labels, std::size_t class_count) {
    std::vector<double> counts(class_count, 0.0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
            throw ValidationError("label position out of range");
        }
        counts[static_cast<std::size_t>(y)] += 1.0;
    }
    std::size_t present = 0;
    for (double c : counts) present += c > 0.0 ? 1 : 0;
    if (present == 0) throw ValidationError("no labels given");
    std::vector<double> weights(class_count, 0.0);
    const double n_total = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] > 0.0) {
            weights[c] = n_total / (static_cast<double>(present) * counts[c]);
        }
    }
    return weights;
}

namespace {

// -log p[label] via log-sum-exp, without materializing the probabilities.
double row_nll(const SoftmaxClassifier& clf, std::span<const double> x, int label) {
    const std::size_t m = clf.class_count();
    const std::size_t d = static_cast<std::size_t>(clf.feature_dim);
    double max_logit = -std::numeric_limits<double>::infinity();
    double label_logit = 0.0;
    std::vector<double> logits(m);
    for (std::size_t c = 0; c < m; ++c) {
        double z = clf.biases[c];
        const double* w = clf.weights.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
        logits[c] = z;
        max_logit = std::max(max_logit, z);
    }
    label_logit = logits[static_cast<std::size_t>(label)];
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - max_logit);
    return std::log(sum) - (label_logit - max_logit);
}

} // namespace

double weighted_ce_objective(const SoftmaxClassifier& clf, const TrainData& data,
                             std::span<const double> weights_per_class, double l2_penalty) {
    if (data.feature_dim != clf.feature_dim) {
        throw ValidationError("feature dimension mismatch");
    }
    const std::size_t n = data.size();
    const std::size_t d = static_cast<std::size_t>(clf.feature_dim);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int y = data.labels[i];
        double w = weights_per_class[static_cast<std::size_t>(y)];
        if (w == 0.0) continue;
        loss += w * row_nll(clf, {data.features.data() + i * d, d}, y);
    }
    loss /= static_cast<double>(n);
    double reg = 0.0;
    for (double w : clf.weights) reg += w * w;
    return loss + 0.5 * l2_penalty * reg;
}

void weighted_ce_gradient(const SoftmaxClassifier& clf, const TrainData& data,
                          std::span<const double> weights_per_class, double l2_penalty,
                          std::span<double> grad_weights, std::span<double> grad_biases) {
    const std::size_t n = data.size();
    const std::size_t m = clf.class_count();
    const std::size_t d = static_cast<std::size_t>(clf.feature_dim);
    if (grad_weights.size() != m * d || grad_biases.size() != m) {
        throw ValidationError("gradient buffer size mismatch");
    }
    std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
    std::fill(grad_biases.begin(), grad_biases.end(), 0.0);
    std::vector<double> probs(m);
    for (std::size_t i = 0; i < n; ++i) {
        int y = data.labels[i];
        double w = weights_per_class[static_cast<std::size_t>(y)];
        if (w == 0.0) continue;
        const double* x = data.features.data() + i * d;
        clf.predict_row({x, d}, probs);
        double scale = w / static_cast<double>(n);
        for (std::size_t c = 0; c < m; ++c) {
            double delta = probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0);
            double g = scale * delta;
            grad_biases[c] += g;
            double* gw = grad_weights.data() + c * d;
            for (std::size_t j = 0; j < d; ++j) gw[j] += g * x[j];
        }
    }
    for (std::size_t idx = 0; idx < m * d; ++idx) {
        grad_weights[idx] += l2_penalty * clf.weights[idx];
    }
}

namespace {

// Keeps at most the median present-class count per class; selection is a
// seeded shuffle so the result is reproducible.
std::vector<std::size_t> undersample_indices(const TrainData& data, std::size_t class_count,
                                             std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> per_class(class_count);
    for (std::size_t i = 0; i < data.size(); ++i) {
        per_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    std::vector<std::size_t> present_counts;
    for (const auto& idx : per_class) {
        if (!idx.empty()) present_counts.push_back(idx.size());
    }
    std::sort(present_counts.begin(), present_counts.end());
    std::size_t cap = present_counts[(present_counts.size() - 1) / 2];
    Rng rng(derive_seed(seed, 0xCA9));
    std::vector<std::size_t> kept;
    for (auto& idx : per_class) {
        if (idx.size() > cap) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(cap);
        }
        kept.insert(kept.end(), idx.begin(), idx.end());
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

} // namespace

SoftmaxClassifier train_softmax(int layer, std::vector<NodeIndex> class_order,
                                const TrainData& data, const TrainConfig& cfg) {
    cfg.validate();
    if (class_order.empty()) throw ValidationError("empty class order");
    if (data.size() == 0) throw ValidationError("no training samples");
    if (data.features.size() != data.size() * static_cast<std::size_t>(data.feature_dim)) {
        throw ValidationError("feature buffer does not match dimension");
    }
    const std::size_t m = class_order.size();
    for (int y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= m) {
            throw ValidationError("label position out of range");
        }
    }

    TrainData reduced;
    const TrainData* train_data = &data;
    if (cfg.undersample_majority) {
        auto kept = undersample_indices(data, m, cfg.seed);
        reduced.feature_dim = data.feature_dim;
        const std::size_t d = static_cast<std::size_t>(data.feature_dim);
        for (std::size_t i : kept) {
            reduced.labels.push_back(data.labels[i]);
            reduced.features.insert(reduced.features.end(), data.features.begin() + static_cast<std::ptrdiff_t>(i * d),
                                    data.features.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
        }
        train_data = &reduced;
    }

    std::vector<double> weights_per_class = class_weights(train_data->labels, m);
    std::size_t present = 0;
    for (double w : weights_per_class) present += w > 0.0 ? 1 : 0;
    if (present < 2) throw ValidationError("fewer than 2 classes present in training labels");

    SoftmaxClassifier clf;
    clf.layer = layer;
    clf.class_order = std::move(class_order);
    clf.feature_dim = train_data->feature_dim;
    const std::size_t d = static_cast<std::size_t>(clf.feature_dim);
    clf.weights.assign(m * d, 0.0);
    clf.biases.assign(m, 0.0);

    const std::size_t n = train_data->size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 0x7B));
    std::vector<double> probs(m);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            double batch_n = static_cast<double>(stop - start);
            // L2 shrink once per batch, then the data term.
            double shrink = 1.0 - cfg.learning_rate * cfg.l2_penalty;
            for (double& w : clf.weights) w *= shrink;
            for (std::size_t pos = start; pos < stop; ++pos) {
                std::size_t i = order[pos];
                int y = train_data->labels[i];
                double w = weights_per_class[static_cast<std::size_t>(y)];
                if (w == 0.0) continue;
                const double* x = train_data->features.data() + i * d;
                clf.predict_row({x, d}, probs);
                double scale = cfg.learning_rate * w / batch_n;
                for (std::size_t c = 0; c < m; ++c) {
                    double delta = probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0);
                    double g = scale * delta;
                    clf.biases[c] -= g;
                    double* wc = clf.weights.data() + c * d;
                    for (std::size_t j = 0; j < d; ++j) wc[j] -= g * x[j];
                }
            }
        }
        double loss = weighted_ce_objective(clf, *train_data, weights_per_class, cfg.l2_penalty);
        if (!std::isfinite(loss)) {
            throw ValidationError("training diverged: non-finite loss at epoch " +
                                  std::to_string(epoch));
        }
    }
    return clf;
}

void save_model(const std::string& path, const SoftmaxClassifier& clf,
                const Taxonomy& taxonomy) {
    std::ostringstream out;
    out << "level," << Taxonomy::layer_token(clf.layer) << '\n';
    out << "classes";
    for (NodeIndex node : clf.class_order) out << ',' << taxonomy.name_of(node);
    out << '\n';
    out << "dim," << clf.feature_dim << '\n';
    const std::size_t d = static_cast<std::size_t>(clf.feature_dim);
    for (std::size_t c = 0; c < clf.class_count(); ++c) {
        out << 'w';
        for (std::size_t j = 0; j < d; ++j) out << ',' << format_double(clf.weights[c * d + j]);
        out << '\n';
    }
    out << 'b';
    for (double b : clf.biases) out << ',' << format_double(b);
    out << '\n';
    write_text_file(path, out.str());
}

SoftmaxClassifier load_model(const std::string& path, const Taxonomy& taxonomy) {
    std::vector<std::string> lines = split_lines(read_text_file(path));
    if (lines.size() < 5) throw ValidationError(path + ": truncated model file");
    auto expect = [&](std::size_t idx, std::string_view prefix) {
        std::vector<std::string> fields = split(lines[idx], ',');
        if (fields.empty() || fields[0] != prefix) {
            throw ValidationError(path + ": line " + std::to_string(idx + 1) + " must start '" +
                                  std::string(prefix) + ",'");
        }
        fields.erase(fields.begin());
        return fields;
    };
    auto level_fields = expect(0, "level");
    if (level_fields.size() != 1) throw ValidationError(path + ": malformed level line");
    SoftmaxClassifier clf;
    clf.layer = Taxonomy::parse_layer_token(level_fields[0], taxonomy.depth());
    auto class_fields = expect(1, "classes");
    const auto& expected = taxonomy.layer_nodes(clf.layer);
    if (class_fields.size() != expected.size()) {
        throw ValidationError(path + ": column order mismatch at layer " +
                              Taxonomy::layer_token(clf.layer));
    }
    for (std::size_t c = 0; c < expected.size(); ++c) {
        if (class_fields[c] != taxonomy.name_of(expected[c])) {
            throw ValidationError(path + ": column order mismatch at layer " +
                                  Taxonomy::layer_token(clf.layer) + ": class " +
                                  std::to_string(c) + " is '" + class_fields[c] + "'");
        }
        clf.class_order.push_back(expected[c]);
    }
    auto dim_fields = expect(2, "dim");
    if (dim_fields.size() != 1) throw ValidationError(path + ": malformed dim line");
    clf.feature_dim = static_cast<int>(parse_int(dim_fields[0]));
    if (clf.feature_dim < 1) throw ValidationError(path + ": dim must be positive");
    const std::size_t m = clf.class_count();
    const std::size_t d = static_cast<std::size_t>(clf.feature_dim);
    if (lines.size() != 4 + m) {
        throw ValidationError(path + ": expected " + std::to_string(4 + m) + " lines");
    }
    for (std::size_t c = 0; c < m; ++c) {
        auto row = expect(3 + c, "w");
        if (row.size() != d) throw ValidationError(path + ": weight row size mismatch");
        for (const std::string& f : row) clf.weights.push_back(parse_double(f));
    }
    auto bias_row = expect(3 + m, "b");
    if (bias_row.size() != m) throw ValidationError(path + ": bias row size mismatch");
    for (const std::string& f : bias_row) clf.biases.push_back(parse_double(f));
    return clf;
}

std::string model_file_name(int layer) {
    return layer == kLeafLayer ? "model_leaf.txt"
                               : "model_level_" + std::to_string(layer) + ".txt";
}

} // namespace hiercp
