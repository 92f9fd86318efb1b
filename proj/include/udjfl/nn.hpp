#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "udjfl/errors.hpp"
#include "udjfl/rng.hpp"

namespace udjfl {

/// Flat parameter vector of a single-hidden-layer MLP.
/// Layout: W1 (input_dim x hidden_dim, row-major), b1 (hidden_dim),
///         W2 (hidden_dim x num_classes, row-major), b2 (num_classes).
struct ModelParams {
    int input_dim = 0;
    int hidden_dim = 0;
    int num_classes = 0;
    std::vector<double> values;

    static std::size_t value_count(int input_dim, int hidden_dim, int num_classes) {
        return static_cast<std::size_t>(input_dim) * hidden_dim + hidden_dim +
               static_cast<std::size_t>(hidden_dim) * num_classes + num_classes;
    }

    std::size_t w1_offset() const { return 0; }
    std::size_t b1_offset() const { return static_cast<std::size_t>(input_dim) * hidden_dim; }
    std::size_t w2_offset() const { return b1_offset() + hidden_dim; }
    std::size_t b2_offset() const { return w2_offset() + static_cast<std::size_t>(hidden_dim) * num_classes; }

    bool same_shape(const ModelParams& other) const {
        return input_dim == other.input_dim && hidden_dim == other.hidden_dim &&
               num_classes == other.num_classes;
    }
};

/// A labeled minibatch/dataset: row-major feature matrix plus class labels.
struct Batch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> features;  // rows * cols
    std::vector<int> labels;       // rows

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * cols, cols};
    }
};

inline void check_batch(const Batch& b) {
    if (b.features.size() != b.rows * b.cols || b.labels.size() != b.rows)
        throw ShapeError("batch storage does not match declared rows/cols");
}

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)); biases exactly zero.
/// Same seed yields bit-identical parameters.
inline ModelParams init_params(std::uint64_t seed, int input_dim, int hidden_dim, int num_classes) {
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 1)
        throw ConfigError("init_params: all dimensions must be >= 1");
    ModelParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.num_classes = num_classes;
    p.values.assign(ModelParams::value_count(input_dim, hidden_dim, num_classes), 0.0);

    Rng rng(seed);
    const double limit1 = std::sqrt(6.0 / (input_dim + hidden_dim));
    for (std::size_t i = 0; i < static_cast<std::size_t>(input_dim) * hidden_dim; ++i)
        p.values[p.w1_offset() + i] = rng.uniform(-limit1, limit1);
    const double limit2 = std::sqrt(6.0 / (hidden_dim + num_classes));
    for (std::size_t i = 0; i < static_cast<std::size_t>(hidden_dim) * num_classes; ++i)
        p.values[p.w2_offset() + i] = rng.uniform(-limit2, limit2);
    return p;
}

/// Logits for a feature matrix: ReLU hidden layer, linear output.
inline std::vector<double> forward(const ModelParams& p, std::span<const double> features, std::size_t n_rows) {
    if (n_rows == 0 || features.size() != n_rows * static_cast<std::size_t>(p.input_dim))
        throw ShapeError("forward: feature width does not match input_dim");
    const std::size_t in = p.input_dim, hid = p.hidden_dim, cls = p.num_classes;
    const double* w1 = p.values.data() + p.w1_offset();
    const double* b1 = p.values.data() + p.b1_offset();
    const double* w2 = p.values.data() + p.w2_offset();
    const double* b2 = p.values.data() + p.b2_offset();

    std::vector<double> logits(n_rows * cls);
    std::vector<double> hidden(hid);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const double* x = features.data() + r * in;
        for (std::size_t h = 0; h < hid; ++h) {
            double z = b1[h];
            for (std::size_t i = 0; i < in; ++i) z += x[i] * w1[i * hid + h];
            hidden[h] = z > 0.0 ? z : 0.0;
        }
        double* out = logits.data() + r * cls;
        for (std::size_t c = 0; c < cls; ++c) {
            double z = b2[c];
            for (std::size_t h = 0; h < hid; ++h) z += hidden[h] * w2[h * cls + c];
            out[c] = z;
        }
    }
    return logits;
}

inline std::vector<double> forward(const ModelParams& p, const Batch& b) {
    check_batch(b);
    return forward(p, std::span<const double>(b.features), b.rows);
}

namespace detail {

// Log-sum-exp over one logit row; max-shifted for stability.
inline double log_sum_exp(const double* logits, std::size_t n) {
    double m = logits[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(logits[i] - m);
    return m + std::log(s);
}

}  // namespace detail

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Mean softmax cross-entropy over the batch and its analytic gradient.
inline LossGrad loss_and_grad(const ModelParams& p, const Batch& b) {
    check_batch(b);
    if (b.rows == 0) throw DomainError("loss_and_grad: empty batch");
    if (b.cols != static_cast<std::size_t>(p.input_dim))
        throw ShapeError("loss_and_grad: feature width does not match input_dim");
    for (int y : b.labels)
        if (y < 0 || y >= p.num_classes) throw DomainError("loss_and_grad: label out of range");

    const std::size_t in = p.input_dim, hid = p.hidden_dim, cls = p.num_classes;
    const double* w1 = p.values.data() + p.w1_offset();
    const double* b1 = p.values.data() + p.b1_offset();
    const double* w2 = p.values.data() + p.w2_offset();
    const double* b2 = p.values.data() + p.b2_offset();

    LossGrad out;
    out.grad.assign(p.values.size(), 0.0);
    double* gw1 = out.grad.data() + p.w1_offset();
    double* gb1 = out.grad.data() + p.b1_offset();
    double* gw2 = out.grad.data() + p.w2_offset();
    double* gb2 = out.grad.data() + p.b2_offset();

    std::vector<double> pre(hid), act(hid), logits(cls), probs(cls), dhidden(hid);
    const double inv_n = 1.0 / static_cast<double>(b.rows);
    double loss_sum = 0.0;

    for (std::size_t r = 0; r < b.rows; ++r) {
        const double* x = b.features.data() + r * in;
        for (std::size_t h = 0; h < hid; ++h) {
            double z = b1[h];
            for (std::size_t i = 0; i < in; ++i) z += x[i] * w1[i * hid + h];
            pre[h] = z;
            act[h] = z > 0.0 ? z : 0.0;
        }
        for (std::size_t c = 0; c < cls; ++c) {
            double z = b2[c];
            for (std::size_t h = 0; h < hid; ++h) z += act[h] * w2[h * cls + c];
            logits[c] = z;
        }
        const double lse = detail::log_sum_exp(logits.data(), cls);
        const int y = b.labels[r];
        loss_sum += lse - logits[y];

        // dL/dlogit = (softmax - one_hot) / n
        for (std::size_t c = 0; c < cls; ++c)
            probs[c] = std::exp(logits[c] - lse);
        for (std::size_t c = 0; c < cls; ++c) {
            const double d = (probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_n;
            gb2[c] += d;
            for (std::size_t h = 0; h < hid; ++h) gw2[h * cls + c] += act[h] * d;
        }
        for (std::size_t h = 0; h < hid; ++h) {
            if (pre[h] <= 0.0) {
                dhidden[h] = 0.0;
                continue;
            }
            double d = 0.0;
            for (std::size_t c = 0; c < cls; ++c)
                d += (probs[c] - (static_cast<int>(c) == b.labels[r] ? 1.0 : 0.0)) * inv_n * w2[h * cls + c];
            dhidden[h] = d;
        }
        for (std::size_t h = 0; h < hid; ++h) {
            const double d = dhidden[h];
            if (d == 0.0) continue;
            gb1[h] += d;
            for (std::size_t i = 0; i < in; ++i) gw1[i * hid + h] += x[i] * d;
        }
    }
    out.loss = loss_sum * inv_n;
    return out;
}

/// Loss-only path (no gradient); same math as loss_and_grad.
inline double mean_cross_entropy(const ModelParams& p, const Batch& b) {
    check_batch(b);
    if (b.rows == 0) throw DomainError("mean_cross_entropy: empty batch");
    const std::vector<double> logits = forward(p, b);
    const std::size_t cls = p.num_classes;
    double loss_sum = 0.0;
    for (std::size_t r = 0; r < b.rows; ++r) {
        const int y = b.labels[r];
        if (y < 0 || y >= p.num_classes) throw DomainError("mean_cross_entropy: label out of range");
        const double* row = logits.data() + r * cls;
        loss_sum += detail::log_sum_exp(row, cls) - row[y];
    }
    return loss_sum / static_cast<double>(b.rows);
}

/// Minibatch SGD. Data is reshuffled each epoch from the seeded stream and the
/// last partial batch is kept. Deterministic given (params, data, seed).
inline ModelParams sgd_epochs(ModelParams params, const Batch& data, int epochs, double lr,
                              int batch_size, std::uint64_t seed) {
    if (epochs < 0) throw ConfigError("sgd_epochs: epochs must be >= 0");
    if (lr <= 0.0) throw ConfigError("sgd_epochs: learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("sgd_epochs: batch size must be >= 1");
    if (epochs == 0) return params;
    check_batch(data);
    if (data.rows == 0) throw DomainError("sgd_epochs: empty batch");

    Rng rng(seed);
    std::vector<std::size_t> order(data.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});

    Batch mini;
    mini.cols = data.cols;
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < data.rows; start += bs) {
            const std::size_t stop = std::min(start + bs, data.rows);
            mini.rows = stop - start;
            mini.features.resize(mini.rows * mini.cols);
            mini.labels.resize(mini.rows);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t src = order[k];
                std::copy_n(data.features.data() + src * data.cols, data.cols,
                            mini.features.data() + (k - start) * mini.cols);
                mini.labels[k - start] = data.labels[src];
            }
            const LossGrad lg = loss_and_grad(params, mini);
            for (std::size_t i = 0; i < params.values.size(); ++i)
                params.values[i] -= lr * lg.grad[i];
        }
    }
    return params;
}

/// Fraction of samples whose argmax logit equals the label.
/// Ties break toward the lowest class index.
inline double accuracy(const ModelParams& p, const Batch& b) {
    check_batch(b);
    if (b.rows == 0) throw DomainError("accuracy: empty batch");
    const std::vector<double> logits = forward(p, b);
    const std::size_t cls = p.num_classes;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < b.rows; ++r) {
        const double* row = logits.data() + r * cls;
        std::size_t best = 0;
        for (std::size_t c = 1; c < cls; ++c)
            if (row[c] > row[best]) best = c;
        if (static_cast<int>(best) == b.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(b.rows);
}

}  // namespace udjfl
