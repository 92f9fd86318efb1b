#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "udjfl/errors.hpp"

namespace udjfl {

// Loss values are clamped to this floor before exponentiation; the
// Lipschitz-style denominator involves loss^(e-2), which is singular at 0.
inline constexpr double kLossFloor = 1e-10;

enum class PresetKind {
    Egalitarian,     // e_i = 1,      w_i = v_i / sum(v)
    Utilitarian,     // e_i = 1,      w_i = (v_i / sum(v))^-1
    RawlsDP,         // e_i = 1+beta, w_i = v_i / sum(v), beta > 0
    Desert,          // e_i = -b_i,   w_i = 1, b_i = (1/v_i) / sum(1/v_j)
    QFed,            // e_i = 1+q,    w_i = 1, q >= 0
    FedAvgBaseline,  // dataset-size weighted parameter averaging, no coefficients
    Custom,          // e_i = r*beta, w_i = (v_i / sum(v))^gamma
};

/// A fairness preset: the (r, beta, gamma) configuration that resolves to
/// per-client exponents and weights.
struct FairnessPreset {
    PresetKind kind = PresetKind::FedAvgBaseline;
    double beta = 0.0;  // RawlsDP / QFed / Custom
    double r = 0.0;     // Custom only
    int gamma = 0;      // Custom only, in {-1, 0, 1}

    static FairnessPreset egalitarian() { return {PresetKind::Egalitarian, 0.0, 0.0, 0}; }
    static FairnessPreset utilitarian() { return {PresetKind::Utilitarian, 0.0, 0.0, 0}; }
    static FairnessPreset rawls(double beta) { return {PresetKind::RawlsDP, beta, 0.0, 0}; }
    static FairnessPreset desert() { return {PresetKind::Desert, 0.0, 0.0, 0}; }
    static FairnessPreset qfed(double q) { return {PresetKind::QFed, q, 0.0, 0}; }
    static FairnessPreset fedavg() { return {PresetKind::FedAvgBaseline, 0.0, 0.0, 0}; }
    static FairnessPreset custom(double r, double beta, int gamma) {
        return {PresetKind::Custom, beta, r, gamma};
    }

    // Filesystem-safe label, e.g. "rawls_b5", "qfed_q0.1", "custom_r11_b0.1_g-1".
    std::string label() const {
        char buf[96];
        switch (kind) {
            case PresetKind::Egalitarian: return "egalitarian";
            case PresetKind::Utilitarian: return "utilitarian";
            case PresetKind::Desert: return "desert";
            case PresetKind::FedAvgBaseline: return "fedavg";
            case PresetKind::RawlsDP:
                std::snprintf(buf, sizeof buf, "rawls_b%g", beta);
                return buf;
            case PresetKind::QFed:
                std::snprintf(buf, sizeof buf, "qfed_q%g", beta);
                return buf;
            case PresetKind::Custom:
                std::snprintf(buf, sizeof buf, "custom_r%g_b%g_g%d", r, beta, gamma);
                return buf;
        }
        return "unknown";
    }

    /// Parse "NAME[:ARGS]" as accepted on the command line and in configs:
    ///   fedavg | egalitarian | utilitarian | desert | rawls:BETA | qfed:Q
    ///   | custom:R,BETA,GAMMA
    static FairnessPreset parse(const std::string& text) {
        const auto colon = text.find(':');
        const std::string name = text.substr(0, colon);
        const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
        auto need_number = [&](const std::string& s) {
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("preset '" + text + "': expected a numeric argument");
            }
        };
        if (name == "fedavg") return fedavg();
        if (name == "egalitarian") return egalitarian();
        if (name == "utilitarian") return utilitarian();
        if (name == "desert") return desert();
        if (name == "rawls") {
            if (args.empty()) throw ConfigError("preset 'rawls' requires ':BETA'");
            return rawls(need_number(args));
        }
        if (name == "qfed") {
            if (args.empty()) throw ConfigError("preset 'qfed' requires ':Q'");
            return qfed(need_number(args));
        }
        if (name == "custom") {
            const auto c1 = args.find(',');
            const auto c2 = args.find(',', c1 == std::string::npos ? c1 : c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos)
                throw ConfigError("preset 'custom' requires ':R,BETA,GAMMA'");
            const double r = need_number(args.substr(0, c1));
            const double b = need_number(args.substr(c1 + 1, c2 - c1 - 1));
            const double g = need_number(args.substr(c2 + 1));
            if (g != -1.0 && g != 0.0 && g != 1.0)
                throw ConfigError("preset 'custom': gamma must be -1, 0 or 1");
            return custom(r, b, static_cast<int>(g));
        }
        throw ConfigError("unknown preset '" + text + "'");
    }
};

/// Per-client aggregation coefficients: weight w_i and the effective exponent
/// e_i applied to the client loss.
struct ClientCoefficients {
    std::vector<double> weight;
    std::vector<double> exponent;

    std::size_t size() const { return weight.size(); }
};

/// Resolve a preset against the clients' uncertainty scores. Weights are the
/// gamma-th power of the normalized score vector v_i / sum(v_j), so scaling
/// every score by a positive constant leaves the result unchanged.
inline ClientCoefficients resolve_preset(const FairnessPreset& preset, std::span<const double> upsilons) {
    const std::size_t n = upsilons.size();
    if (n < 1) throw DomainError("resolve_preset: need at least one client");
    if (preset.kind == PresetKind::FedAvgBaseline)
        throw ConfigError("resolve_preset: fedavg uses plain averaging, not coefficients");

    double sum = 0.0;
    for (double u : upsilons) {
        if (!(u > 0.0)) throw DomainError("resolve_preset: upsilon values must be positive");
        sum += u;
    }

    int gamma = 0;
    double exponent_all = 1.0;
    switch (preset.kind) {
        case PresetKind::Egalitarian:
            gamma = 1;
            exponent_all = 1.0;
            break;
        case PresetKind::Utilitarian:  // exact beta -> 0 limit of e = 1 + beta
            gamma = -1;
            exponent_all = 1.0;
            break;
        case PresetKind::RawlsDP:
            if (!(preset.beta > 0.0)) throw ConfigError("rawls preset requires beta > 0");
            gamma = 1;
            exponent_all = 1.0 + preset.beta;
            break;
        case PresetKind::QFed:
            if (preset.beta < 0.0) throw ConfigError("qfed preset requires q >= 0");
            gamma = 0;
            exponent_all = 1.0 + preset.beta;
            break;
        case PresetKind::Custom:
            if (preset.gamma != -1 && preset.gamma != 0 && preset.gamma != 1)
                throw ConfigError("custom preset: gamma must be -1, 0 or 1");
            gamma = preset.gamma;
            exponent_all = preset.r * preset.beta;
            break;
        case PresetKind::Desert:
        case PresetKind::FedAvgBaseline:
            break;
    }

    ClientCoefficients coeffs;
    coeffs.weight.resize(n);
    coeffs.exponent.resize(n);

    if (preset.kind == PresetKind::Desert) {
        // b_i = (1/v_i) / sum(1/v_j); exponent -b_i, unit weights.
        double inv_sum = 0.0;
        for (double u : upsilons) inv_sum += 1.0 / u;
        for (std::size_t i = 0; i < n; ++i) {
            coeffs.weight[i] = 1.0;
            coeffs.exponent[i] = -(1.0 / upsilons[i]) / inv_sum;
        }
        return coeffs;
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double normalized = upsilons[i] / sum;
        double w = 1.0;
        if (gamma == 1)
            w = normalized;
        else if (gamma == -1)
            w = 1.0 / normalized;
        coeffs.weight[i] = w;
        coeffs.exponent[i] = exponent_all;
    }
    return coeffs;
}

/// Objective value sum_i w_i * H_i^{e_i}, with losses floored at kLossFloor so
/// fractional or negative exponents can never produce NaN.
inline double objective_value(std::span<const double> losses, const ClientCoefficients& coeffs) {
    if (losses.size() != coeffs.size())
        throw ShapeError("objective_value: losses and coefficients disagree on N");
    double total = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const double h = std::max(losses[i], kLossFloor);
        total += coeffs.weight[i] * std::pow(h, coeffs.exponent[i]);
    }
    return total;
}

}  // namespace udjfl
