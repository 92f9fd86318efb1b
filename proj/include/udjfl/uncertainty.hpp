#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "udjfl/errors.hpp"
#include "udjfl/nn.hpp"

namespace udjfl {

/// Per-client aleatoric uncertainty score, in nats.
struct UncertaintyScore {
    double upsilon = 0.0;
};

/// Predictive-uncertainty split for a single query, in nats.
/// total = aleatoric + epistemic; tiny negative round-off is clamped to zero.
struct UncertaintyDecomposition {
    double total = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
};

namespace detail {

// Entropy of a probability vector, 0*log(0) treated as 0.
inline double prob_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

inline double clamp_tiny_negative(double v) {
    return (v < 0.0 && v >= -1e-12) ? 0.0 : v;
}

}  // namespace detail

/// Shannon entropy of softmax(logits), computed via the max-shifted form
/// H = lse - sum(p_c * l_c). Result lies in [0, ln C].
inline double softmax_entropy(std::span<const double> logits) {
    if (logits.size() < 2) throw DomainError("softmax_entropy: need at least 2 classes");
    double m = logits[0];
    for (double l : logits) {
        if (!std::isfinite(l)) throw DomainError("softmax_entropy: non-finite logit");
        m = std::max(m, l);
    }
    double z = 0.0, weighted = 0.0;
    for (double l : logits) {
        const double e = std::exp(l - m);
        z += e;
        weighted += e * (l - m);
    }
    const double h = std::log(z) - weighted / z;
    return h < 0.0 ? 0.0 : h;
}

/// Mean softmax entropy of a trained model over every example of the client's
/// training set: the frozen per-client dataset-quality score.
inline UncertaintyScore aleatoric_score(const ModelParams& params, const Batch& train_set) {
    check_batch(train_set);
    if (train_set.rows == 0) throw DomainError("aleatoric_score: empty training set");
    const std::vector<double> logits = forward(params, train_set);
    const std::size_t cls = params.num_classes;
    double sum = 0.0;
    for (std::size_t r = 0; r < train_set.rows; ++r)
        sum += softmax_entropy({logits.data() + r * cls, cls});
    return UncertaintyScore{sum / static_cast<double>(train_set.rows)};
}

/// Ensemble decomposition for one query. `ensemble_probs` holds K rows of C
/// class probabilities; each row must sum to 1 within 1e-9.
/// total     = entropy of the row-mean distribution
/// aleatoric = mean of the per-row entropies
/// epistemic = total - aleatoric  (>= 0 up to round-off, by Jensen)
inline UncertaintyDecomposition decompose_uncertainty(std::span<const double> ensemble_probs,
                                                      std::size_t k_models, std::size_t num_classes) {
    if (k_models < 1) throw DomainError("decompose_uncertainty: need at least one model");
    if (num_classes < 2) throw DomainError("decompose_uncertainty: need at least 2 classes");
    if (ensemble_probs.size() != k_models * num_classes)
        throw ShapeError("decompose_uncertainty: matrix does not match K x C");

    std::vector<double> mean(num_classes, 0.0);
    double aleatoric_sum = 0.0;
    for (std::size_t k = 0; k < k_models; ++k) {
        std::span<const double> row{ensemble_probs.data() + k * num_classes, num_classes};
        double row_sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0) || !std::isfinite(p))
                throw DomainError("decompose_uncertainty: invalid probability");
            row_sum += p;
        }
        if (std::abs(row_sum - 1.0) > 1e-9)
            throw DomainError("decompose_uncertainty: row not normalized");
        aleatoric_sum += detail::prob_entropy(row);
        for (std::size_t c = 0; c < num_classes; ++c) mean[c] += row[c];
    }
    for (double& m : mean) m /= static_cast<double>(k_models);

    UncertaintyDecomposition d;
    d.total = detail::prob_entropy(mean);
    d.aleatoric = aleatoric_sum / static_cast<double>(k_models);
    d.epistemic = detail::clamp_tiny_negative(d.total - d.aleatoric);
    d.total = detail::clamp_tiny_negative(d.total);
    d.aleatoric = detail::clamp_tiny_negative(d.aleatoric);
    return d;
}

}  // namespace udjfl
