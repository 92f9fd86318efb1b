#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "udjfl/errors.hpp"
#include "udjfl/fairness.hpp"
#include "udjfl/nn.hpp"
#include "udjfl/rng.hpp"
#include "udjfl/uncertainty.hpp"

namespace udjfl {

// Near-zero floor for the aggregation denominator.
inline constexpr double kDenominatorEps = 1e-8;

struct FederationConfig {
    int num_clients = 5;
    int rounds = 100;        // T
    int local_epochs = 1;    // E
    int solo_epochs = 500;   // S
    double learning_rate = 0.1;  // eta; the Lipschitz-scale input is L = 1/eta
    int batch_size = 64;
    double solo_learning_rate = 0.001;
    int solo_batch_size = 128;
    int hidden_dim = 128;
    int num_classes = 10;
    FairnessPreset preset = FairnessPreset::fedavg();
    std::uint64_t master_seed = 1;

    void validate() const {
        if (num_clients < 1) throw ConfigError("federation: num_clients must be >= 1");
        if (rounds < 1) throw ConfigError("federation: rounds must be >= 1");
        if (local_epochs < 0) throw ConfigError("federation: local_epochs must be >= 0");
        if (solo_epochs < 1) throw ConfigError("federation: solo_epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("federation: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("federation: batch_size must be >= 1");
        if (!(solo_learning_rate > 0.0)) throw ConfigError("federation: solo_learning_rate must be > 0");
        if (solo_batch_size < 1) throw ConfigError("federation: solo_batch_size must be >= 1");
        if (hidden_dim < 1) throw ConfigError("federation: hidden_dim must be >= 1");
        if (num_classes < 2) throw ConfigError("federation: num_classes must be >= 2");
    }
};

/// One federation participant. The RNG streams used for solo training and
/// per-round shuffles are derived from `seed`, never stored, so a client can
/// participate in several runs with identical behavior in each.
struct ClientState {
    int id = 0;
    Batch train;
    Batch test;
    std::uint64_t seed = 0;
    double upsilon = 0.0;
    bool has_upsilon = false;

    static std::uint64_t derive_seed(std::uint64_t master_seed, int client_id) {
        return mix_seed(mix_seed(master_seed, seed_tag::client), static_cast<std::uint64_t>(client_id));
    }
};

/// One client's per-round contribution.
struct RoundUpdate {
    std::vector<double> delta;  // same length as the parameter vector
    double g = 0.0;
};

struct ClientRoundRecord {
    double upsilon = std::numeric_limits<double>::quiet_NaN();
    double loss = 0.0;      // H_i at the round-start global model
    double weight = 0.0;
    double exponent = 0.0;
    double delta_norm = 0.0;
    double g = std::numeric_limits<double>::quiet_NaN();
};

struct RoundRecord {
    int round = 0;  // 1-based
    std::vector<ClientRoundRecord> clients;
    double objective = 0.0;
    double sum_g = std::numeric_limits<double>::quiet_NaN();
    bool abs_denominator_used = false;
    bool degenerate_skipped = false;
    double global_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingHistory {
    std::vector<RoundRecord> rounds;
    ModelParams final_model;
    int denominator_substitutions = 0;
};

/// Solo pre-training: the client trains a private model for `solo_epochs`
/// epochs and freezes its aleatoric score from that model's softmax entropy
/// over the training set. The private model is discarded afterwards.
inline void solo_pretrain(ClientState& client, int solo_epochs, const FederationConfig& cfg) {
    if (solo_epochs < 1) throw ConfigError("solo_pretrain: epochs must be >= 1");
    check_batch(client.train);
    ModelParams model = init_params(mix_seed(client.seed, seed_tag::solo_init),
                                    static_cast<int>(client.train.cols), cfg.hidden_dim, cfg.num_classes);
    model = sgd_epochs(std::move(model), client.train, solo_epochs, cfg.solo_learning_rate,
                       cfg.solo_batch_size, mix_seed(client.seed, seed_tag::solo_shuffle));
    client.upsilon = aleatoric_score(model, client.train).upsilon;
    client.has_upsilon = true;
}

/// E epochs of local SGD starting from the global model; the global model is
/// left untouched.
inline ModelParams local_update(const ClientState& client, const ModelParams& global, int epochs,
                                double lr, int batch_size, std::uint64_t shuffle_seed) {
    if (epochs == 0) return global;
    return sgd_epochs(global, client.train, epochs, lr, batch_size, shuffle_seed);
}

/// Client-side delta and step-scale terms:
///   dtheta = L * (global - local)
///   delta  = |e| * w * H^(e-1) * dtheta
///   g      = |e| * w * (L * H^(e-1) + |e-1| * H^(e-2) * ||dtheta||^2)
/// with H floored at kLossFloor. e is the resolved per-client exponent and w
/// the resolved weight.
///
/// For e >= 1 (every preset except desert) the magnitudes change nothing and
/// this is the plain  e*w*(L*H^(e-1) + (e-1)*H^(e-2)*||dtheta||^2)  form. For
/// the desert exponents e = -b_i the absolute values matter: |e|, |e-1| keep g
/// a genuine curvature bound of w*H^e (triangle inequality over the two
/// Hessian terms) and keep the step descending each client's loss. Without
/// them the signed form turns the server step into loss ascent and the run
/// diverges.
inline RoundUpdate client_deltas(const ModelParams& global, const ModelParams& local,
                                 double loss_at_global, double weight, double exponent, double lipschitz) {
    if (!global.same_shape(local) || global.values.size() != local.values.size())
        throw ShapeError("client_deltas: model shapes differ");
    if (!(lipschitz > 0.0)) throw ConfigError("client_deltas: L must be > 0");

    const double h = std::max(loss_at_global, kLossFloor);
    const double h_e1 = std::pow(h, exponent - 1.0);
    const double h_e2 = std::pow(h, exponent - 2.0);

    RoundUpdate upd;
    upd.delta.resize(global.values.size());
    double dtheta_sq = 0.0;
    const double scale = std::abs(exponent) * weight * h_e1;
    for (std::size_t i = 0; i < global.values.size(); ++i) {
        const double dtheta = lipschitz * (global.values[i] - local.values[i]);
        dtheta_sq += dtheta * dtheta;
        upd.delta[i] = scale * dtheta;
    }
    upd.g = std::abs(exponent) * weight *
            (lipschitz * h_e1 + std::abs(exponent - 1.0) * h_e2 * dtheta_sq);

    if (!std::isfinite(upd.g)) throw NumericalError("client_deltas: non-finite g");
    for (double d : upd.delta)
        if (!std::isfinite(d)) throw NumericalError("client_deltas: non-finite delta");
    return upd;
}

struct AggregationResult {
    ModelParams params;
    double sum_g = 0.0;          // raw sum, in client-index order
    double denominator = 0.0;    // what was actually divided by
    bool abs_substituted = false;
    bool degenerate_skipped = false;
};

/// Server step theta' = theta - sum(delta_i) / sum(g_i), accumulated in
/// client-index order for bit reproducibility.
///
/// sum(g) is used as-is whenever its magnitude clears kDenominatorEps; this
/// includes negative sums, which arise under the desert preset where every
/// g_i carries the negative exponent's sign and the ratio of the two
/// same-signed sums is still a contraction toward the client models.
/// Only a near-zero sum falls back to sum(|g_i|), and if that is also
/// near zero the round leaves the model unchanged.
inline AggregationResult server_aggregate(const ModelParams& global, std::span<const RoundUpdate> updates) {
    if (updates.empty()) throw DomainError("server_aggregate: need at least one update");
    for (const RoundUpdate& u : updates)
        if (u.delta.size() != global.values.size())
            throw ShapeError("server_aggregate: delta length mismatch");

    AggregationResult res;
    res.params = global;
    double sum_g = 0.0;
    for (const RoundUpdate& u : updates) sum_g += u.g;
    res.sum_g = sum_g;

    double denom = sum_g;
    if (std::abs(sum_g) <= kDenominatorEps) {
        double abs_sum = 0.0;
        for (const RoundUpdate& u : updates) abs_sum += std::abs(u.g);
        if (abs_sum <= kDenominatorEps) {
            res.degenerate_skipped = true;
            res.denominator = 0.0;
            return res;
        }
        denom = abs_sum;
        res.abs_substituted = true;
    }
    res.denominator = denom;

    for (std::size_t i = 0; i < global.values.size(); ++i) {
        double num = 0.0;
        for (const RoundUpdate& u : updates) num += u.delta[i];
        const double v = global.values[i] - num / denom;
        if (!std::isfinite(v)) throw NumericalError("server_aggregate: non-finite parameter");
        res.params.values[i] = v;
    }
    return res;
}

/// Dataset-size weighted parameter averaging: sum_i (n_i / sum_j n_j) * theta_i.
inline ModelParams fedavg_round(const std::vector<ModelParams>& client_models,
                                const std::vector<std::size_t>& sizes) {
    if (client_models.empty() || client_models.size() != sizes.size())
        throw DomainError("fedavg_round: need one size per model");
    double total = 0.0;
    for (std::size_t n : sizes) {
        if (n == 0) throw DomainError("fedavg_round: sizes must be positive");
        total += static_cast<double>(n);
    }
    ModelParams out = client_models[0];
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (std::size_t c = 0; c < client_models.size(); ++c) {
        if (!out.same_shape(client_models[c]))
            throw ShapeError("fedavg_round: model shapes differ");
        const double w = static_cast<double>(sizes[c]) / total;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] += w * client_models[c].values[i];
    }
    return out;
}

namespace detail {

inline std::uint64_t round_shuffle_seed(const ClientState& client, int round) {
    return mix_seed(mix_seed(client.seed, seed_tag::round_shuffle), static_cast<std::uint64_t>(round));
}

}  // namespace detail

/// The full training loop. Clients must carry frozen upsilon scores for every
/// preset except the FedAvg baseline (run solo_pretrain first). Per-round
/// client work is independent; this implementation runs it sequentially and
/// aggregates in client-index order, which is the reference result any
/// parallel execution has to match bit-for-bit.
///
/// `global_eval`, when given, is scored after every server update and lands in
/// the history as global_acc.
inline TrainingHistory run_federation(const FederationConfig& config, std::vector<ClientState>& clients,
                                      const Batch* global_eval = nullptr) {
    config.validate();
    if (clients.size() != static_cast<std::size_t>(config.num_clients))
        throw ConfigError("run_federation: client count does not match config");
    for (const ClientState& c : clients) {
        check_batch(c.train);
        if (c.train.rows == 0) throw DomainError("run_federation: client with empty train set");
        if (c.train.cols != clients[0].train.cols)
            throw ShapeError("run_federation: clients disagree on feature width");
    }

    const bool is_fedavg = config.preset.kind == PresetKind::FedAvgBaseline;
    std::vector<double> upsilons(clients.size(), 0.0);
    if (!is_fedavg) {
        for (std::size_t i = 0; i < clients.size(); ++i) {
            if (!clients[i].has_upsilon)
                throw ConfigError("run_federation: preset requires upsilon; run solo_pretrain first");
            upsilons[i] = clients[i].upsilon;
        }
    }

    const int input_dim = static_cast<int>(clients[0].train.cols);
    ModelParams global = init_params(mix_seed(config.master_seed, seed_tag::server_init), input_dim,
                                     config.hidden_dim, config.num_classes);

    ClientCoefficients coeffs;
    if (!is_fedavg) coeffs = resolve_preset(config.preset, upsilons);
    const double lipschitz = 1.0 / config.learning_rate;

    std::vector<std::size_t> sizes(clients.size());
    double size_total = 0.0;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        sizes[i] = clients[i].train.rows;
        size_total += static_cast<double>(sizes[i]);
    }

    TrainingHistory history;
    history.rounds.reserve(static_cast<std::size_t>(config.rounds));

    std::vector<ModelParams> locals(clients.size());
    std::vector<RoundUpdate> updates(clients.size());
    std::vector<double> losses(clients.size());

    for (int t = 1; t <= config.rounds; ++t) {
        RoundRecord rec;
        rec.round = t;
        rec.clients.resize(clients.size());
        try {
            for (std::size_t i = 0; i < clients.size(); ++i) {
                const ClientState& client = clients[i];
                losses[i] = mean_cross_entropy(global, client.train);
                locals[i] = local_update(client, global, config.local_epochs, config.learning_rate,
                                         config.batch_size, detail::round_shuffle_seed(client, t));
                ClientRoundRecord& cr = rec.clients[i];
                cr.loss = losses[i];
                if (client.has_upsilon) cr.upsilon = client.upsilon;
                if (is_fedavg) {
                    cr.weight = static_cast<double>(sizes[i]) / size_total;
                    cr.exponent = 1.0;
                    double norm_sq = 0.0;
                    for (std::size_t k = 0; k < global.values.size(); ++k) {
                        const double d = locals[i].values[k] - global.values[k];
                        norm_sq += d * d;
                    }
                    cr.delta_norm = std::sqrt(norm_sq);
                } else {
                    updates[i] = client_deltas(global, locals[i], losses[i], coeffs.weight[i],
                                               coeffs.exponent[i], lipschitz);
                    cr.weight = coeffs.weight[i];
                    cr.exponent = coeffs.exponent[i];
                    cr.g = updates[i].g;
                    double norm_sq = 0.0;
                    for (double d : updates[i].delta) norm_sq += d * d;
                    cr.delta_norm = std::sqrt(norm_sq);
                }
            }
            if (is_fedavg) {
                global = fedavg_round(locals, sizes);
                double obj = 0.0;
                for (std::size_t i = 0; i < clients.size(); ++i)
                    obj += static_cast<double>(sizes[i]) / size_total * losses[i];
                rec.objective = obj;
            } else {
                AggregationResult agg = server_aggregate(global, updates);
                global = std::move(agg.params);
                rec.sum_g = agg.sum_g;
                rec.abs_denominator_used = agg.abs_substituted;
                rec.degenerate_skipped = agg.degenerate_skipped;
                if (agg.abs_substituted || agg.degenerate_skipped) ++history.denominator_substitutions;
                rec.objective = objective_value(losses, coeffs);
            }
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (round " + std::to_string(t) + ")");
        }
        if (global_eval != nullptr) rec.global_acc = accuracy(global, *global_eval);
        history.rounds.push_back(std::move(rec));
    }
    history.final_model = std::move(global);
    return history;
}

}  // namespace udjfl
