#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udjfl/errors.hpp"
#include "udjfl/federation.hpp"
#include "udjfl/nn.hpp"

namespace udjfl {

/// Population standard deviation of the client accuracies.
inline double client_std(std::span<const double> accs) {
    if (accs.size() < 2) throw DomainError("client_std: need at least 2 values");
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    return std::sqrt(var / static_cast<double>(accs.size()));
}

/// Rawlsian score: the accuracy gain (over the FedAvg reference) of the client
/// with the highest uncertainty, minus the mean gain of everyone else.
/// Ties on the argmax resolve to the lowest index.
inline double psi(std::span<const double> acc_method, std::span<const double> acc_fedavg,
                  std::span<const double> upsilons) {
    const std::size_t n = acc_method.size();
    if (n < 2) throw DomainError("psi: need at least 2 clients");
    if (acc_fedavg.size() != n || upsilons.size() != n)
        throw DomainError("psi: array lengths differ");
    std::size_t worst = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (upsilons[i] > upsilons[worst]) worst = i;
    double others = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (i != worst) others += acc_method[i] - acc_fedavg[i];
    others /= static_cast<double>(n - 1);
    return (acc_method[worst] - acc_fedavg[worst]) - others;
}

/// Sample Pearson correlation. Zero variance in either argument is an error,
/// never a silent zero.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("pearson: need at least 2 points");
    if (y.size() != n) throw DomainError("pearson: array lengths differ");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DegenerateInputError("pearson: zero variance input");
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

/// One evaluated model in the shape of a results-table row. Accuracies are
/// percentages here; everything upstream works in fractions.
struct MetricsReport {
    std::string preset_label;
    double global_acc = 0.0;           // percent
    std::vector<double> client_accs;   // percent
    std::vector<double> upsilons;
    double client_std_pct = 0.0;
    std::optional<double> psi_pct;
    std::string psi_absent_reason;
    std::optional<double> pearson_r;
    std::string pearson_absent_reason;

    double acc_max_upsilon() const { return client_accs[argmax_upsilon()]; }
    double acc_min_upsilon() const { return client_accs[argmin_upsilon()]; }

    std::size_t argmax_upsilon() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < upsilons.size(); ++i)
            if (upsilons[i] > upsilons[best]) best = i;
        return best;
    }
    std::size_t argmin_upsilon() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < upsilons.size(); ++i)
            if (upsilons[i] < upsilons[best]) best = i;
        return best;
    }
};

/// Evaluate a trained model: global clean-test accuracy, per-client local
/// accuracies, their spread, and the two fairness scores. psi needs the
/// matching FedAvg reference accuracies (fractions); pearson needs variance
/// in both inputs. When a precondition fails the field stays absent with the
/// reason recorded.
inline MetricsReport build_report(const ModelParams& model, const std::vector<ClientState>& clients,
                                  const Batch& global_test,
                                  const std::optional<std::vector<double>>& fedavg_ref_accs,
                                  std::span<const double> upsilons, const std::string& label) {
    if (clients.empty()) throw DomainError("build_report: no clients");
    if (upsilons.size() != clients.size())
        throw DomainError("build_report: upsilon count does not match clients");

    MetricsReport rep;
    rep.preset_label = label;
    rep.upsilons.assign(upsilons.begin(), upsilons.end());
    rep.global_acc = 100.0 * accuracy(model, global_test);

    std::vector<double> accs(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i)
        accs[i] = accuracy(model, clients[i].test);
    rep.client_accs.resize(accs.size());
    for (std::size_t i = 0; i < accs.size(); ++i) rep.client_accs[i] = 100.0 * accs[i];

    rep.client_std_pct = clients.size() >= 2 ? client_std(rep.client_accs) : 0.0;

    if (!fedavg_ref_accs.has_value()) {
        rep.psi_absent_reason = "no fedavg reference run";
    } else if (fedavg_ref_accs->size() != accs.size()) {
        rep.psi_absent_reason = "fedavg reference has wrong length";
    } else if (accs.size() < 2) {
        rep.psi_absent_reason = "need at least 2 clients";
    } else {
        std::vector<double> ref_pct(fedavg_ref_accs->size());
        for (std::size_t i = 0; i < ref_pct.size(); ++i) ref_pct[i] = 100.0 * (*fedavg_ref_accs)[i];
        rep.psi_pct = psi(rep.client_accs, ref_pct, upsilons);
    }

    try {
        rep.pearson_r = pearson(upsilons, rep.client_accs);
    } catch (const DomainError& e) {
        rep.pearson_absent_reason = e.what();
    }
    return rep;
}

}  // namespace udjfl
