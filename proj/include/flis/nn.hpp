#pragma once

// Dense feed-forward classifier with softmax cross-entropy and mini-batch
// SGD. Everything is a pure function of its arguments (seeds included);
// models are flat weight vectors plus a layer-shape descriptor, which keeps
// aggregation and serialization trivial.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "flis/error.hpp"
#include "flis/matrix.hpp"
#include "flis/rng.hpp"

namespace flis {

struct LayerShape {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;

    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct ModelParams {
    // Per layer: row-major fan_in x fan_out weights, then fan_out biases.
    std::vector<double> weights;
    std::vector<LayerShape> shape;

    std::size_t param_count() const { return weights.size(); }

    static std::size_t expected_size(const std::vector<LayerShape>& shape) {
        std::size_t n = 0;
        for (const auto& l : shape) n += l.fan_in * l.fan_out + l.fan_out;
        return n;
    }

    bool all_finite() const {
        return std::all_of(weights.begin(), weights.end(),
                           [](double w) { return std::isfinite(w); });
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct LabeledData {
    Matrix features;          // M x d
    std::vector<int> labels;  // M entries in [0, num_classes)

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
};

enum class InferenceMode { kOneHot, kSoft };

inline void validate_model(const ModelParams& model) {
    if (model.shape.empty()) throw ShapeError("model has no layers");
    if (model.weights.size() != ModelParams::expected_size(model.shape)) {
        throw ShapeError("model weight count " + std::to_string(model.weights.size()) +
                         " does not match layer shapes (expected " +
                         std::to_string(ModelParams::expected_size(model.shape)) + ")");
    }
    for (std::size_t l = 1; l < model.shape.size(); ++l) {
        if (model.shape[l].fan_in != model.shape[l - 1].fan_out) {
            throw ShapeError("layer " + std::to_string(l) + " fan_in does not chain");
        }
    }
}

// Glorot-uniform weights, zero biases.
inline ModelParams xavier_init(const std::vector<LayerShape>& shape, std::uint64_t seed) {
    ModelParams model;
    model.shape = shape;
    model.weights.reserve(ModelParams::expected_size(shape));
    Rng rng(seed);
    for (const auto& l : shape) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
        for (std::size_t i = 0; i < l.fan_in * l.fan_out; ++i) {
            model.weights.push_back(rng.uniform(-limit, limit));
        }
        for (std::size_t i = 0; i < l.fan_out; ++i) model.weights.push_back(0.0);
    }
    return model;
}

inline std::vector<LayerShape> mlp_shape(std::size_t dim, std::size_t hidden, std::size_t classes) {
    if (hidden == 0) return {{dim, classes}};
    return {{dim, hidden}, {hidden, classes}};
}

namespace detail {

// Offset of layer l's weight block in the flat vector.
inline std::size_t layer_offset(const std::vector<LayerShape>& shape, std::size_t l) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += shape[i].fan_in * shape[i].fan_out + shape[i].fan_out;
    return off;
}

// Logits of the final layer; hidden layers use ReLU. When `activations` is
// given it receives the input followed by every post-ReLU hidden output.
inline Matrix forward_logits(const ModelParams& model, const Matrix& features,
                             std::vector<Matrix>* activations = nullptr) {
    validate_model(model);
    if (features.cols() != model.shape.front().fan_in) {
        throw ShapeError("input has " + std::to_string(features.cols()) +
                         " features, model expects " +
                         std::to_string(model.shape.front().fan_in));
    }
    Matrix h = features;
    if (activations) activations->push_back(h);
    std::size_t off = 0;
    for (std::size_t l = 0; l < model.shape.size(); ++l) {
        const auto [fan_in, fan_out] = model.shape[l];
        const double* w = model.weights.data() + off;
        const double* b = w + fan_in * fan_out;
        Matrix z(h.rows(), fan_out);
        for (std::size_t r = 0; r < h.rows(); ++r) {
            const double* hr = h.row(r);
            double* zr = z.row(r);
            for (std::size_t j = 0; j < fan_out; ++j) zr[j] = b[j];
            for (std::size_t k = 0; k < fan_in; ++k) {
                const double hv = hr[k];
                if (hv == 0.0) continue;
                const double* wk = w + k * fan_out;
                for (std::size_t j = 0; j < fan_out; ++j) zr[j] += hv * wk[j];
            }
        }
        const bool is_hidden = l + 1 < model.shape.size();
        if (is_hidden) {
            for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
            if (activations) activations->push_back(z);
        }
        h = std::move(z);
        off += fan_in * fan_out + fan_out;
    }
    return h;
}

inline void softmax_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double* row = m.row(r);
        const double mx = *std::max_element(row, row + m.cols());
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (std::size_t c = 0; c < m.cols(); ++c) row[c] /= sum;
    }
}

inline void check_labels(const LabeledData& data, std::size_t classes) {
    for (int y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw ShapeError("label " + std::to_string(y) + " out of range [0, " +
                             std::to_string(classes) + ")");
        }
    }
}

}  // namespace detail

// Per-row class probabilities.
inline Matrix forward(const ModelParams& model, const Matrix& features) {
    Matrix logits = detail::forward_logits(model, features);
    detail::softmax_rows(logits);
    return logits;
}

// Mean softmax cross-entropy, computed from logits via log-sum-exp so that a
// confident wrong prediction cannot produce log(0).
inline double loss(const ModelParams& model, const LabeledData& data) {
    if (data.empty()) throw EmptyInputError("loss: empty dataset");
    const Matrix logits = detail::forward_logits(model, data.features);
    detail::check_labels(data, logits.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* row = logits.row(r);
        const double mx = *std::max_element(row, row + logits.cols());
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(row[c] - mx);
        total += mx + std::log(sum) - row[data.labels[r]];
    }
    return total / static_cast<double>(logits.rows());
}

// Gradient of loss() w.r.t. the flat weight vector.
inline std::vector<double> loss_gradient(const ModelParams& model, const LabeledData& data) {
    if (data.empty()) throw EmptyInputError("loss_gradient: empty dataset");
    std::vector<Matrix> activations;
    Matrix probs = detail::forward_logits(model, data.features, &activations);
    detail::check_labels(data, probs.cols());
    detail::softmax_rows(probs);

    const std::size_t batch = data.size();
    Matrix delta = std::move(probs);
    for (std::size_t r = 0; r < batch; ++r) {
        delta(r, static_cast<std::size_t>(data.labels[r])) -= 1.0;
        for (std::size_t c = 0; c < delta.cols(); ++c) delta(r, c) /= static_cast<double>(batch);
    }

    std::vector<double> grad(model.weights.size(), 0.0);
    for (std::size_t l = model.shape.size(); l-- > 0;) {
        const auto [fan_in, fan_out] = model.shape[l];
        const std::size_t off = detail::layer_offset(model.shape, l);
        const Matrix& input = activations[l];
        double* gw = grad.data() + off;
        double* gb = gw + fan_in * fan_out;
        for (std::size_t r = 0; r < batch; ++r) {
            const double* in = input.row(r);
            const double* d = delta.row(r);
            for (std::size_t k = 0; k < fan_in; ++k) {
                const double iv = in[k];
                if (iv == 0.0) continue;
                double* gk = gw + k * fan_out;
                for (std::size_t j = 0; j < fan_out; ++j) gk[j] += iv * d[j];
            }
            for (std::size_t j = 0; j < fan_out; ++j) gb[j] += d[j];
        }
        if (l > 0) {
            const double* w = model.weights.data() + off;
            Matrix prev(batch, fan_in);
            for (std::size_t r = 0; r < batch; ++r) {
                const double* d = delta.row(r);
                const double* act = input.row(r);
                double* p = prev.row(r);
                for (std::size_t k = 0; k < fan_in; ++k) {
                    if (act[k] <= 0.0) {  // ReLU gate; derivative at 0 taken as 0
                        p[k] = 0.0;
                        continue;
                    }
                    const double* wk = w + k * fan_out;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < fan_out; ++j) acc += d[j] * wk[j];
                    p[k] = acc;
                }
            }
            delta = std::move(prev);
        }
    }
    return grad;
}

// Mini-batch SGD. Runs epochs * ceil(M / batch_size) steps; the shuffle order
// is drawn from rng_seed, so identical arguments give bitwise-identical
// output. The input model is left untouched.
inline ModelParams client_update(const ModelParams& model, const LabeledData& train, int epochs,
                                 double lr, std::size_t batch_size, std::uint64_t rng_seed) {
    if (train.empty()) throw EmptyInputError("client_update: empty training set");
    if (epochs < 1) throw Error("client_update: epochs must be >= 1");
    if (batch_size < 1 || batch_size > train.size()) {
        throw Error("client_update: batch_size must be in [1, |train|]");
    }
    ModelParams updated = model;
    Rng rng(rng_seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t dim = train.features.cols();
    long step = 0;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(order.size(), start + batch_size);
            LabeledData batch;
            batch.features = Matrix(stop - start, dim);
            batch.labels.resize(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t src = order[i];
                std::copy(train.features.row(src), train.features.row(src) + dim,
                          batch.features.row(i - start));
                batch.labels[i - start] = train.labels[src];
            }
            const std::vector<double> grad = loss_gradient(updated, batch);
            for (double g : grad) {
                if (!std::isfinite(g)) {
                    throw DivergenceError("training diverged at step " + std::to_string(step) +
                                          ": non-finite gradient");
                }
            }
            for (std::size_t i = 0; i < grad.size(); ++i) updated.weights[i] -= lr * grad[i];
            if (!updated.all_finite()) {
                throw DivergenceError("training diverged at step " + std::to_string(step) +
                                      ": non-finite weights");
            }
            ++step;
        }
    }
    return updated;
}

inline std::size_t argmax_row(const Matrix& m, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c) {
        if (m(r, c) > m(r, best)) best = c;  // ties keep the lowest class index
    }
    return best;
}

// M x N output matrix of the model on the given dataset: soft rows are the
// forward probabilities, one-hot rows are the indicator of each row's argmax.
inline Matrix inference_matrix(const ModelParams& model, const LabeledData& server_data,
                               InferenceMode mode) {
    if (server_data.empty()) throw EmptyInputError("inference_matrix: empty server dataset");
    Matrix probs = forward(model, server_data.features);
    if (mode == InferenceMode::kSoft) return probs;
    Matrix hot(probs.rows(), probs.cols(), 0.0);
    for (std::size_t r = 0; r < probs.rows(); ++r) hot(r, argmax_row(probs, r)) = 1.0;
    return hot;
}

inline double top1_accuracy(const ModelParams& model, const LabeledData& data) {
    if (data.empty()) throw EmptyInputError("top1_accuracy: empty dataset");
    const Matrix logits = detail::forward_logits(model, data.features);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (argmax_row(logits, r) == static_cast<std::size_t>(data.labels[r])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace flis
