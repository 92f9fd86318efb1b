#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "udjfl/data.hpp"
#include "udjfl/dataset_io.hpp"
#include "udjfl/errors.hpp"
#include "udjfl/federation.hpp"
#include "udjfl/io.hpp"
#include "udjfl/metrics.hpp"

namespace udjfl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration (versioned JSON schema, unknown keys rejected)
// ---------------------------------------------------------------------------

struct DataConfig {
    enum class Source { Synthetic, Idx } source = Source::Synthetic;
    // synthetic
    std::size_t n_per_class = 500;
    int num_classes = 10;
    double noise_rate = 0.3;
    double spread = 0.12;
    // idx
    std::string images, labels;
    std::string ambiguous_images, ambiguous_labels;  // optional second pool
};

struct ExperimentConfig {
    DataConfig data;
    ShardSpec shards = ShardSpec::default_five_client();
    FederationConfig federation;
    std::vector<FairnessPreset> presets = {FairnessPreset::fedavg()};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "results";
    int threads = 1;

    std::filesystem::path data_dir() const { return std::filesystem::path(out_dir) / "data"; }
    std::filesystem::path seed_data_dir(std::uint64_t seed) const {
        return data_dir() / ("seed_" + std::to_string(seed));
    }
};

/// The desk-scale default experiment: 5 clients on synthetic 10-class data
/// with the standard shard mix, T=100 rounds and 3 seeds. configs/default.json
/// mirrors these values. The solo phase here runs 100 epochs at lr 0.1 and
/// the MLP is 32 wide; at this scale the full-size settings leave the solo
/// models too far from convergence to carry any uncertainty signal.
inline ExperimentConfig desk_default_config() {
    ExperimentConfig cfg;
    cfg.data = DataConfig{};
    cfg.shards = ShardSpec::default_five_client();
    cfg.federation.rounds = 100;
    cfg.federation.local_epochs = 1;
    cfg.federation.solo_epochs = 100;
    cfg.federation.learning_rate = 0.1;
    cfg.federation.batch_size = 64;
    cfg.federation.solo_learning_rate = 0.1;
    cfg.federation.solo_batch_size = 128;
    cfg.federation.hidden_dim = 32;
    cfg.federation.num_clients = 5;
    cfg.federation.num_classes = 10;
    cfg.presets = {FairnessPreset::fedavg(), FairnessPreset::egalitarian(),
                   FairnessPreset::rawls(5.0), FairnessPreset::desert(),
                   FairnessPreset::utilitarian()};
    cfg.seeds = {1, 2, 3};
    return cfg;
}

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown_keys(
        j, {"version", "data", "shards", "federation", "presets", "seeds", "out_dir", "threads"},
        "config");
    if (detail::get_or<int>(j, "version", 0) != 1)
        throw ConfigError("config: 'version' must be 1");

    ExperimentConfig cfg;
    if (j.contains("data")) {
        const json& d = j.at("data");
        detail::reject_unknown_keys(d,
                                    {"source", "n_per_class", "num_classes", "noise_rate", "spread",
                                     "images", "labels", "ambiguous_images", "ambiguous_labels"},
                                    "data");
        const std::string source = detail::get_or<std::string>(d, "source", "synthetic");
        if (source == "synthetic") {
            cfg.data.source = DataConfig::Source::Synthetic;
            cfg.data.n_per_class = detail::get_or<std::size_t>(d, "n_per_class", cfg.data.n_per_class);
            cfg.data.num_classes = detail::get_or<int>(d, "num_classes", cfg.data.num_classes);
            cfg.data.noise_rate = detail::get_or<double>(d, "noise_rate", cfg.data.noise_rate);
            cfg.data.spread = detail::get_or<double>(d, "spread", cfg.data.spread);
        } else if (source == "idx") {
            cfg.data.source = DataConfig::Source::Idx;
            cfg.data.images = detail::get_or<std::string>(d, "images", "");
            cfg.data.labels = detail::get_or<std::string>(d, "labels", "");
            cfg.data.ambiguous_images = detail::get_or<std::string>(d, "ambiguous_images", "");
            cfg.data.ambiguous_labels = detail::get_or<std::string>(d, "ambiguous_labels", "");
            if (cfg.data.images.empty() || cfg.data.labels.empty())
                throw ConfigError("idx data source requires 'images' and 'labels'");
        } else {
            throw ConfigError("data.source must be 'synthetic' or 'idx'");
        }
    }
    if (j.contains("shards")) {
        const json& s = j.at("shards");
        detail::reject_unknown_keys(s, {"clean", "ambiguous", "shard_size", "global_test_size"},
                                    "shards");
        cfg.shards.clean_shards = detail::get_or<std::vector<int>>(s, "clean", cfg.shards.clean_shards);
        cfg.shards.ambiguous_shards =
            detail::get_or<std::vector<int>>(s, "ambiguous", cfg.shards.ambiguous_shards);
        cfg.shards.shard_size = detail::get_or<int>(s, "shard_size", cfg.shards.shard_size);
        cfg.shards.global_test_size =
            detail::get_or<std::size_t>(s, "global_test_size", cfg.shards.global_test_size);
    }
    if (j.contains("federation")) {
        const json& f = j.at("federation");
        detail::reject_unknown_keys(f,
                                    {"rounds", "local_epochs", "solo_epochs", "learning_rate",
                                     "batch_size", "solo_learning_rate", "solo_batch_size",
                                     "hidden_dim"},
                                    "federation");
        cfg.federation.rounds = detail::get_or<int>(f, "rounds", cfg.federation.rounds);
        cfg.federation.local_epochs = detail::get_or<int>(f, "local_epochs", cfg.federation.local_epochs);
        cfg.federation.solo_epochs = detail::get_or<int>(f, "solo_epochs", cfg.federation.solo_epochs);
        cfg.federation.learning_rate =
            detail::get_or<double>(f, "learning_rate", cfg.federation.learning_rate);
        cfg.federation.batch_size = detail::get_or<int>(f, "batch_size", cfg.federation.batch_size);
        cfg.federation.solo_learning_rate =
            detail::get_or<double>(f, "solo_learning_rate", cfg.federation.solo_learning_rate);
        cfg.federation.solo_batch_size =
            detail::get_or<int>(f, "solo_batch_size", cfg.federation.solo_batch_size);
        cfg.federation.hidden_dim = detail::get_or<int>(f, "hidden_dim", cfg.federation.hidden_dim);
    }
    if (j.contains("presets")) {
        cfg.presets.clear();
        for (const json& p : j.at("presets")) {
            if (!p.is_string()) throw ConfigError("presets entries must be strings");
            cfg.presets.push_back(FairnessPreset::parse(p.get<std::string>()));
        }
    }
    if (j.contains("seeds")) {
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
    }
    cfg.out_dir = detail::get_or<std::string>(j, "out_dir", cfg.out_dir);
    cfg.threads = detail::get_or<int>(j, "threads", cfg.threads);
    if (cfg.threads < 1) throw ConfigError("threads must be >= 1");

    cfg.federation.num_clients = static_cast<int>(cfg.shards.num_clients());
    if (cfg.data.source == DataConfig::Source::Synthetic)
        cfg.federation.num_classes = cfg.data.num_classes;
    if (cfg.presets.empty()) throw ConfigError("presets must not be empty");
    std::vector<std::string> labels;
    for (const FairnessPreset& p : cfg.presets) labels.push_back(p.label());
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
        throw ConfigError("duplicate preset in config");
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Dataset generation and loading
// ---------------------------------------------------------------------------

namespace detail {

inline json data_config_json(const DataConfig& d) {
    json out;
    if (d.source == DataConfig::Source::Synthetic) {
        out["source"] = "synthetic";
        out["n_per_class"] = d.n_per_class;
        out["num_classes"] = d.num_classes;
        out["noise_rate"] = d.noise_rate;
        out["spread"] = d.spread;
    } else {
        out["source"] = "idx";
        out["images"] = d.images;
        out["labels"] = d.labels;
        if (!d.ambiguous_images.empty()) {
            out["ambiguous_images"] = d.ambiguous_images;
            out["ambiguous_labels"] = d.ambiguous_labels;
        }
    }
    return out;
}

inline LabeledPool build_pool(const DataConfig& d, std::uint64_t seed) {
    if (d.source == DataConfig::Source::Synthetic)
        return gen_synthetic(d.n_per_class, d.num_classes, d.noise_rate, d.spread, seed);
    LabeledPool pool = load_idx(d.images, d.labels);
    if (!d.ambiguous_images.empty()) {
        if (d.ambiguous_labels.empty())
            throw ConfigError("idx: ambiguous_images requires ambiguous_labels");
        LabeledPool amb = load_idx(d.ambiguous_images, d.ambiguous_labels);
        if (amb.feature_dim != pool.feature_dim)
            throw FormatError("idx: ambiguous pool feature width differs from clean pool");
        pool.features.insert(pool.features.end(), amb.features.begin(), amb.features.end());
        pool.labels.insert(pool.labels.end(), amb.labels.begin(), amb.labels.end());
        pool.ambiguous.insert(pool.ambiguous.end(), amb.labels.size(), std::uint8_t{1});
        pool.group.insert(pool.group.end(), amb.group.begin(), amb.group.end());
        pool.num_classes = std::max(pool.num_classes, amb.num_classes);
    }
    return pool;
}

inline std::string client_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "client_%02zu.bin", i);
    return buf;
}

}  // namespace detail

/// Write the partitioned datasets for every seed: one directory per seed with
/// client files, the clean global test set, and a checksummed manifest.
inline void cmd_generate(const ExperimentConfig& cfg) {
    for (const std::uint64_t seed : cfg.seeds) {
        const LabeledPool pool = detail::build_pool(cfg.data, seed);
        const Partition part = partition_shards(pool, cfg.shards, seed);
        const std::filesystem::path dir = cfg.seed_data_dir(seed);
        std::filesystem::create_directories(dir);

        json manifest;
        manifest["version"] = 1;
        manifest["seed"] = seed;
        manifest["input_dim"] = pool.feature_dim;
        manifest["num_classes"] = pool.num_classes;
        manifest["data"] = detail::data_config_json(cfg.data);
        manifest["shards"] = {{"clean", cfg.shards.clean_shards},
                              {"ambiguous", cfg.shards.ambiguous_shards},
                              {"shard_size", cfg.shards.shard_size},
                              {"global_test_size", cfg.shards.global_test_size}};
        json files = json::object();
        for (std::size_t i = 0; i < part.clients.size(); ++i) {
            const std::string name = detail::client_file_name(i);
            write_batches(dir / name, {part.clients[i].train, part.clients[i].test});
            files[name] = file_checksum(dir / name);
        }
        write_batches(dir / "global_test.bin", {part.global_test});
        files["global_test.bin"] = file_checksum(dir / "global_test.bin");
        manifest["files"] = files;
        write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    }
}

struct SeedData {
    std::vector<ClientSplit> clients;
    Batch global_test;
    std::size_t input_dim = 0;
    int num_classes = 0;
};

/// Load one seed's datasets, verifying every file checksum against the
/// manifest. A mismatch refuses to run.
inline SeedData load_seed_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    const std::filesystem::path dir = cfg.seed_data_dir(seed);
    const std::filesystem::path manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
        throw ConfigError("no generated data for seed " + std::to_string(seed) +
                          "; run the 'generate' command first");
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    SeedData out;
    out.input_dim = manifest.at("input_dim").get<std::size_t>();
    out.num_classes = manifest.at("num_classes").get<int>();
    const json& files = manifest.at("files");
    for (auto it = files.begin(); it != files.end(); ++it) {
        const std::string actual = file_checksum(dir / it.key());
        if (actual != it.value().get<std::string>())
            throw FormatError("checksum mismatch for " + (dir / it.key()).string() +
                              "; refusing to run");
    }
    const std::size_t n_clients = files.size() - 1;
    for (std::size_t i = 0; i < n_clients; ++i) {
        std::vector<Batch> batches = read_batches(dir / detail::client_file_name(i));
        if (batches.size() != 2)
            throw FormatError("client file must contain train and test sections");
        ClientSplit split;
        split.train = std::move(batches[0]);
        split.test = std::move(batches[1]);
        out.clients.push_back(std::move(split));
    }
    std::vector<Batch> gt = read_batches(dir / "global_test.bin");
    if (gt.size() != 1) throw FormatError("global test file must contain one section");
    out.global_test = std::move(gt[0]);
    return out;
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

struct Stat {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

inline Stat make_stat(const std::vector<double>& values) {
    Stat s;
    s.n = values.size();
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(values.size()));
    return s;
}

struct PresetOutcome {
    FairnessPreset preset;
    std::string label;
    std::vector<std::uint64_t> ok_seeds;
    std::vector<MetricsReport> per_seed;  // aligned with ok_seeds
    std::vector<std::string> errors;
    Stat global_acc, acc_max_upsilon, acc_min_upsilon, client_std_stat, psi_stat, pearson_stat;
    std::vector<double> mean_client_accs;
    std::vector<double> mean_upsilons;
};

struct AggregateReport {
    std::vector<std::uint64_t> seeds;
    std::vector<PresetOutcome> presets;

    const PresetOutcome& by_label(const std::string& label) const {
        for (const PresetOutcome& p : presets)
            if (p.label == label) return p;
        throw DomainError("no preset outcome labeled '" + label + "'");
    }
};

namespace detail {

inline void finalize_outcome(PresetOutcome& out) {
    std::vector<double> ga, amax, amin, cstd, psis, pearsons;
    for (const MetricsReport& r : out.per_seed) {
        ga.push_back(r.global_acc);
        cstd.push_back(r.client_std_pct);
        if (!r.upsilons.empty()) {
            amax.push_back(r.acc_max_upsilon());
            amin.push_back(r.acc_min_upsilon());
        }
        if (r.psi_pct) psis.push_back(*r.psi_pct);
        if (r.pearson_r) pearsons.push_back(*r.pearson_r);
    }
    out.global_acc = make_stat(ga);
    out.acc_max_upsilon = make_stat(amax);
    out.acc_min_upsilon = make_stat(amin);
    out.client_std_stat = make_stat(cstd);
    out.psi_stat = make_stat(psis);
    out.pearson_stat = make_stat(pearsons);
    if (!out.per_seed.empty()) {
        const std::size_t n_clients = out.per_seed[0].client_accs.size();
        out.mean_client_accs.assign(n_clients, 0.0);
        for (const MetricsReport& r : out.per_seed)
            for (std::size_t i = 0; i < n_clients; ++i) out.mean_client_accs[i] += r.client_accs[i];
        for (double& v : out.mean_client_accs) v /= static_cast<double>(out.per_seed.size());
        if (!out.per_seed[0].upsilons.empty()) {
            out.mean_upsilons.assign(n_clients, 0.0);
            for (const MetricsReport& r : out.per_seed)
                for (std::size_t i = 0; i < n_clients; ++i) out.mean_upsilons[i] += r.upsilons[i];
            for (double& v : out.mean_upsilons) v /= static_cast<double>(out.per_seed.size());
        }
    }
}

inline std::string history_csv(const TrainingHistory& history) {
    CsvBuilder csv(
        "round,client_id,upsilon,loss,weight,exponent,delta_norm,g,global_acc,objective,sum_g");
    for (const RoundRecord& r : history.rounds) {
        for (std::size_t c = 0; c < r.clients.size(); ++c) {
            const ClientRoundRecord& cr = r.clients[c];
            csv.begin_row();
            csv.add(r.round);
            csv.add(static_cast<int>(c));
            csv.add(cr.upsilon);
            csv.add(cr.loss);
            csv.add(cr.weight);
            csv.add(cr.exponent);
            csv.add(cr.delta_norm);
            csv.add(cr.g);
            csv.add(r.global_acc);
            csv.add(r.objective);
            csv.add(r.sum_g);
            csv.end_row();
        }
    }
    return csv.str();
}

inline json report_json(const MetricsReport& r, std::uint64_t seed) {
    json out;
    out["label"] = r.preset_label;
    out["seed"] = seed;
    out["global_acc"] = r.global_acc;
    out["client_accs"] = r.client_accs;
    out["upsilons"] = r.upsilons;
    out["client_std"] = r.client_std_pct;
    if (r.psi_pct)
        out["psi"] = *r.psi_pct;
    else {
        out["psi"] = nullptr;
        out["psi_absent_reason"] = r.psi_absent_reason;
    }
    if (r.pearson_r)
        out["pearson"] = *r.pearson_r;
    else {
        out["pearson"] = nullptr;
        out["pearson_absent_reason"] = r.pearson_absent_reason;
    }
    return out;
}

inline MetricsReport report_from_json(const json& j) {
    MetricsReport r;
    r.preset_label = j.at("label").get<std::string>();
    r.global_acc = j.at("global_acc").get<double>();
    r.client_accs = j.at("client_accs").get<std::vector<double>>();
    r.upsilons = j.at("upsilons").get<std::vector<double>>();
    r.client_std_pct = j.at("client_std").get<double>();
    if (!j.at("psi").is_null()) r.psi_pct = j.at("psi").get<double>();
    else r.psi_absent_reason = detail::get_or<std::string>(j, "psi_absent_reason", "");
    if (!j.at("pearson").is_null()) r.pearson_r = j.at("pearson").get<double>();
    else r.pearson_absent_reason = detail::get_or<std::string>(j, "pearson_absent_reason", "");
    return r;
}

// Report for a run with no upsilon scores available (fedavg-only configs).
inline MetricsReport report_without_upsilon(const ModelParams& model,
                                            const std::vector<ClientState>& clients,
                                            const Batch& global_test, const std::string& label) {
    MetricsReport rep;
    rep.preset_label = label;
    rep.global_acc = 100.0 * accuracy(model, global_test);
    for (const ClientState& c : clients) rep.client_accs.push_back(100.0 * accuracy(model, c.test));
    rep.client_std_pct = clients.size() >= 2 ? client_std(rep.client_accs) : 0.0;
    rep.psi_absent_reason = "upsilon not computed (fedavg-only run)";
    rep.pearson_absent_reason = "upsilon not computed (fedavg-only run)";
    return rep;
}

struct SeedRunResult {
    std::uint64_t seed = 0;
    // aligned with the effective preset list
    std::vector<std::optional<MetricsReport>> reports;
    std::vector<std::string> errors;
};

}  // namespace detail

/// The effective preset list for a run: the FedAvg reference always runs first
/// and is reported; requested presets follow in config order.
inline std::vector<FairnessPreset> effective_presets(const ExperimentConfig& cfg) {
    std::vector<FairnessPreset> out = {FairnessPreset::fedavg()};
    for (const FairnessPreset& p : cfg.presets)
        if (p.kind != PresetKind::FedAvgBaseline) out.push_back(p);
    return out;
}

namespace detail {

inline SeedRunResult run_one_seed(const ExperimentConfig& cfg,
                                  const std::vector<FairnessPreset>& presets, std::uint64_t seed) {
    SeedRunResult result;
    result.seed = seed;
    result.reports.resize(presets.size());

    const SeedData data = load_seed_data(cfg, seed);
    const bool needs_upsilon = presets.size() > 1;

    std::vector<ClientState> clients;
    for (std::size_t i = 0; i < data.clients.size(); ++i) {
        ClientState c;
        c.id = static_cast<int>(i);
        c.train = data.clients[i].train;
        c.test = data.clients[i].test;
        c.seed = ClientState::derive_seed(seed, c.id);
        clients.push_back(std::move(c));
    }

    FederationConfig fed = cfg.federation;
    fed.num_clients = static_cast<int>(clients.size());
    fed.num_classes = data.num_classes;
    fed.master_seed = seed;

    std::vector<double> upsilons;
    if (needs_upsilon) {
        for (ClientState& c : clients) solo_pretrain(c, fed.solo_epochs, fed);
        for (const ClientState& c : clients) upsilons.push_back(c.upsilon);
    }

    std::optional<std::vector<double>> fedavg_accs;  // fractions, psi reference
    for (std::size_t pi = 0; pi < presets.size(); ++pi) {
        const FairnessPreset& preset = presets[pi];
        const std::string label = preset.label();
        FederationConfig run_cfg = fed;
        run_cfg.preset = preset;
        try {
            TrainingHistory history = run_federation(run_cfg, clients, &data.global_test);
            const std::filesystem::path run_dir =
                std::filesystem::path(cfg.out_dir) / label / ("seed_" + std::to_string(seed));
            write_file_atomic(run_dir / "rounds.csv", history_csv(history));

            MetricsReport report;
            if (preset.kind == PresetKind::FedAvgBaseline) {
                if (needs_upsilon)
                    report = build_report(history.final_model, clients, data.global_test, std::nullopt,
                                          upsilons, label);
                else
                    report = report_without_upsilon(history.final_model, clients, data.global_test, label);
                if (!report.psi_pct && report.psi_absent_reason.empty())
                    report.psi_absent_reason = "psi is relative to fedavg";
                std::vector<double> accs;
                for (const ClientState& c : clients)
                    accs.push_back(accuracy(history.final_model, c.test));
                fedavg_accs = std::move(accs);
            } else {
                report = build_report(history.final_model, clients, data.global_test, fedavg_accs,
                                      upsilons, label);
                if (!fedavg_accs.has_value()) report.psi_absent_reason = "fedavg reference failed";
            }
            write_file_atomic(run_dir / "report.json", report_json(report, seed).dump(2) + "\n");
            result.reports[pi] = std::move(report);
            if (history.denominator_substitutions > 0)
                std::cerr << "[udjfl] " << label << " seed " << seed << ": denominator guard used in "
                          << history.denominator_substitutions << " round(s)\n";
        } catch (const ConfigError&) {
            throw;  // a setup problem would hit every pair; abort the run
        } catch (const NumericalError& e) {
            result.errors.push_back(label + " seed " + std::to_string(seed) + ": " + e.what());
        } catch (const DomainError& e) {
            result.errors.push_back(label + " seed " + std::to_string(seed) + ": " + e.what());
        }
    }
    return result;
}

inline json aggregate_json(const AggregateReport& agg) {
    json out;
    out["version"] = 1;
    out["seeds"] = agg.seeds;
    json rows = json::array();
    auto stat_json = [](const Stat& s) -> json {
        if (s.n == 0) return nullptr;
        return json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    };
    for (const PresetOutcome& p : agg.presets) {
        json row;
        row["label"] = p.label;
        row["seeds_ok"] = p.ok_seeds;
        row["errors"] = p.errors;
        row["global_acc"] = stat_json(p.global_acc);
        row["acc_max_upsilon"] = stat_json(p.acc_max_upsilon);
        row["acc_min_upsilon"] = stat_json(p.acc_min_upsilon);
        row["client_std"] = stat_json(p.client_std_stat);
        row["psi"] = stat_json(p.psi_stat);
        row["pearson"] = stat_json(p.pearson_stat);
        row["mean_client_accs"] = p.mean_client_accs;
        row["mean_upsilons"] = p.mean_upsilons;
        rows.push_back(row);
    }
    out["presets"] = rows;
    return out;
}

inline std::string aggregate_csv(const AggregateReport& agg) {
    CsvBuilder csv(
        "label,global_acc_mean,global_acc_std,acc_max_upsilon_mean,acc_max_upsilon_std,"
        "acc_min_upsilon_mean,acc_min_upsilon_std,client_std_mean,client_std_std,"
        "psi_mean,psi_std,pearson_mean,pearson_std,seeds_ok,errors");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto mean_or_nan = [&](const Stat& s) { return s.n ? s.mean : nan; };
    auto std_or_nan = [&](const Stat& s) { return s.n ? s.std : nan; };
    for (const PresetOutcome& p : agg.presets) {
        csv.begin_row();
        csv.add(p.label);
        csv.add(mean_or_nan(p.global_acc));
        csv.add(std_or_nan(p.global_acc));
        csv.add(mean_or_nan(p.acc_max_upsilon));
        csv.add(std_or_nan(p.acc_max_upsilon));
        csv.add(mean_or_nan(p.acc_min_upsilon));
        csv.add(std_or_nan(p.acc_min_upsilon));
        csv.add(mean_or_nan(p.client_std_stat));
        csv.add(std_or_nan(p.client_std_stat));
        csv.add(mean_or_nan(p.psi_stat));
        csv.add(std_or_nan(p.psi_stat));
        csv.add(mean_or_nan(p.pearson_stat));
        csv.add(std_or_nan(p.pearson_stat));
        csv.add(static_cast<int>(p.ok_seeds.size()));
        csv.add(static_cast<int>(p.errors.size()));
        csv.end_row();
    }
    return csv.str();
}

inline void print_table(const AggregateReport& agg, std::ostream& os) {
    auto cell = [](const Stat& s, int prec) {
        if (s.n == 0) return std::string("-");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f+-%.*f", prec, s.mean, prec, s.std);
        return std::string(buf);
    };
    auto pad = [](std::string s, std::size_t width) {
        if (s.size() < width) s.append(width - s.size(), ' ');
        return s;
    };
    os << pad("preset", 20) << pad("global_acc", 15) << pad("acc_max_v", 15) << pad("acc_min_v", 15)
       << pad("std", 13) << pad("psi", 13) << "pearson\n";
    for (const PresetOutcome& p : agg.presets) {
        os << pad(p.label, 20) << pad(cell(p.global_acc, 2), 15) << pad(cell(p.acc_max_upsilon, 2), 15)
           << pad(cell(p.acc_min_upsilon, 2), 15) << pad(cell(p.client_std_stat, 2), 13)
           << pad(cell(p.psi_stat, 2), 13) << cell(p.pearson_stat, 3) << "\n";
    }
}

}  // namespace detail

/// Run every (preset, seed) pair: the FedAvg reference first per seed, then
/// each configured preset against the same data, seeds and upsilon scores.
/// Failures are recorded per pair and do not stop the run.
inline AggregateReport cmd_run(const ExperimentConfig& cfg) {
    const std::vector<FairnessPreset> presets = effective_presets(cfg);

    std::vector<detail::SeedRunResult> seed_results(cfg.seeds.size());
    std::vector<std::exception_ptr> failures(cfg.seeds.size());

    const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(cfg.seeds.size())));
    if (workers == 1) {
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si)
            seed_results[si] = detail::run_one_seed(cfg, presets, cfg.seeds[si]);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t si = next.fetch_add(1); si < cfg.seeds.size(); si = next.fetch_add(1)) {
                    try {
                        seed_results[si] = detail::run_one_seed(cfg, presets, cfg.seeds[si]);
                    } catch (...) {
                        failures[si] = std::current_exception();
                    }
                }
            });
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : failures)
            if (e) std::rethrow_exception(e);
    }

    AggregateReport agg;
    agg.seeds = cfg.seeds;
    for (std::size_t pi = 0; pi < presets.size(); ++pi) {
        PresetOutcome out;
        out.preset = presets[pi];
        out.label = presets[pi].label();
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
            if (seed_results[si].reports[pi]) {
                out.ok_seeds.push_back(cfg.seeds[si]);
                out.per_seed.push_back(*seed_results[si].reports[pi]);
            }
        }
        for (const detail::SeedRunResult& sr : seed_results)
            for (const std::string& err : sr.errors)
                if (err.rfind(out.label + " ", 0) == 0) out.errors.push_back(err);
        detail::finalize_outcome(out);
        agg.presets.push_back(std::move(out));
    }

    write_file_atomic(std::filesystem::path(cfg.out_dir) / "report.json",
                      detail::aggregate_json(agg).dump(2) + "\n");
    write_file_atomic(std::filesystem::path(cfg.out_dir) / "report.csv", detail::aggregate_csv(agg));
    return agg;
}

/// One cmd_run covering the whole beta grid for a preset family. Data and the
/// per-seed FedAvg reference are shared across the grid by construction.
inline AggregateReport cmd_sweep(const ExperimentConfig& base, PresetKind kind,
                                 const std::vector<double>& beta_grid) {
    if (beta_grid.empty()) throw ConfigError("sweep: beta grid must not be empty");
    ExperimentConfig cfg = base;
    cfg.presets.clear();
    for (const double beta : beta_grid) {
        switch (kind) {
            case PresetKind::RawlsDP: cfg.presets.push_back(FairnessPreset::rawls(beta)); break;
            case PresetKind::QFed: cfg.presets.push_back(FairnessPreset::qfed(beta)); break;
            case PresetKind::Custom: {
                FairnessPreset p = FairnessPreset::custom(base.presets.empty() ? 1.0 : base.presets[0].r,
                                                          beta,
                                                          base.presets.empty() ? 0 : base.presets[0].gamma);
                cfg.presets.push_back(p);
                break;
            }
            default:
                throw ConfigError("sweep: preset must be rawls, qfed or custom");
        }
    }
    return cmd_run(cfg);
}

/// Rebuild the aggregate report from per-seed report files already on disk.
inline AggregateReport cmd_report(const std::string& out_dir) {
    AggregateReport agg;
    std::map<std::string, PresetOutcome> by_label;
    std::vector<std::string> label_order;
    const std::filesystem::path root(out_dir);
    if (!std::filesystem::is_directory(root))
        throw ConfigError("report: no such directory: " + out_dir);

    std::vector<std::filesystem::path> preset_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory() && entry.path().filename() != "data")
            preset_dirs.push_back(entry.path());
    std::sort(preset_dirs.begin(), preset_dirs.end());

    std::vector<std::uint64_t> all_seeds;
    for (const std::filesystem::path& pdir : preset_dirs) {
        std::vector<std::filesystem::path> seed_dirs;
        for (const auto& entry : std::filesystem::directory_iterator(pdir))
            if (entry.is_directory()) seed_dirs.push_back(entry.path());
        std::sort(seed_dirs.begin(), seed_dirs.end());
        for (const std::filesystem::path& sdir : seed_dirs) {
            const std::filesystem::path report_path = sdir / "report.json";
            if (!std::filesystem::exists(report_path)) continue;
            json j;
            try {
                j = json::parse(read_file(report_path));
            } catch (const json::exception& e) {
                throw FormatError("bad report " + report_path.string() + ": " + e.what());
            }
            MetricsReport rep = detail::report_from_json(j);
            const std::uint64_t seed = j.at("seed").get<std::uint64_t>();
            auto [it, inserted] = by_label.try_emplace(rep.preset_label);
            if (inserted) {
                it->second.label = rep.preset_label;
                label_order.push_back(rep.preset_label);
            }
            it->second.ok_seeds.push_back(seed);
            it->second.per_seed.push_back(std::move(rep));
            if (std::find(all_seeds.begin(), all_seeds.end(), seed) == all_seeds.end())
                all_seeds.push_back(seed);
        }
    }
    if (by_label.empty()) throw ConfigError("report: no per-seed reports under " + out_dir);

    std::sort(all_seeds.begin(), all_seeds.end());
    agg.seeds = all_seeds;
    // fedavg first, then the rest in directory order
    std::stable_sort(label_order.begin(), label_order.end(),
                     [](const std::string& a, const std::string& b) {
                         return (a == "fedavg") > (b == "fedavg");
                     });
    for (const std::string& label : label_order) {
        PresetOutcome& out = by_label.at(label);
        detail::finalize_outcome(out);
        agg.presets.push_back(std::move(out));
    }
    write_file_atomic(root / "report.json", detail::aggregate_json(agg).dump(2) + "\n");
    write_file_atomic(root / "report.csv", detail::aggregate_csv(agg));
    return agg;
}

inline void print_report(const AggregateReport& agg, std::ostream& os = std::cout) {
    detail::print_table(agg, os);
}

}  // namespace udjfl
