// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion; exits nonzero if any fail.
//
// Exact/analytic criteria run first; the statistical block runs the default
// desk-scale experiment (5 clients, synthetic data, T=100 rounds, 3 seeds)
// once and evaluates the qualitative orderings on the seed means.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "udjfl/experiment.hpp"

using namespace udjfl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %-38s %s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

Batch random_batch(Rng& rng, std::size_t rows, std::size_t cols, int num_classes) {
    Batch b;
    b.rows = rows;
    b.cols = cols;
    b.features.resize(rows * cols);
    b.labels.resize(rows);
    for (double& f : b.features) f = rng.uniform(-2.0, 2.0);
    for (int& y : b.labels) y = static_cast<int>(rng.below(num_classes));
    return b;
}

// ---- criterion 1: gradient check ------------------------------------------
void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(1001);
    double max_rel = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int in = 2 + static_cast<int>(rng.below(4));
        const int hid = 2 + static_cast<int>(rng.below(5));
        const int cls = 2 + static_cast<int>(rng.below(4));
        ModelParams p = init_params(rng.next_u64(), in, hid, cls);
        for (double& v : p.values) v = rng.uniform(-1.0, 1.0);
        Batch b = random_batch(rng, 3 + rng.below(5), in, cls);
        const LossGrad lg = loss_and_grad(p, b);
        const double eps = 1e-5;
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            ModelParams plus = p, minus = p;
            plus.values[i] += eps;
            minus.values[i] -= eps;
            const double fd =
                (loss_and_grad(plus, b).loss - loss_and_grad(minus, b).loss) / (2 * eps);
            const double denom = std::max({std::abs(fd), std::abs(lg.grad[i]), 1e-3});
            max_rel = std::max(max_rel, std::abs(fd - lg.grad[i]) / denom);
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, "analytic gradients vs central FD", max_rel < 1e-4 && secs < 10.0,
           fmt("max rel err %.3g (< 1e-4), %.1fs (< 10s)", max_rel, secs));
}

// ---- criterion 2: entropy identities ---------------------------------------
void criterion_entropy() {
    const double uniform_err = std::abs(softmax_entropy(std::vector<double>(10, 0.0)) - std::log(10.0));

    Rng rng(1002);
    double shift_err = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> logits(2 + rng.below(8));
        for (double& l : logits) l = rng.uniform(-20.0, 20.0);
        std::vector<double> shifted = logits;
        const double c = rng.uniform(-500.0, 500.0);
        for (double& l : shifted) l += c;
        shift_err = std::max(shift_err, std::abs(softmax_entropy(logits) - softmax_entropy(shifted)));
    }

    double add_err = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t k = 1 + rng.below(5), c = 2 + rng.below(5);
        std::vector<double> rows(k * c);
        for (std::size_t i = 0; i < k; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                rows[i * c + j] = std::exp(rng.uniform(-2.0, 2.0));
                z += rows[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) rows[i * c + j] /= z;
        }
        const UncertaintyDecomposition d = decompose_uncertainty(rows, k, c);
        add_err = std::max(add_err, std::abs(d.total - (d.aleatoric + d.epistemic)));
    }
    report(2, "entropy identities", uniform_err < 1e-12 && shift_err < 1e-12 && add_err < 1e-10,
           fmt("ln10 err %.2g, shift err %.2g, additivity err %.2g", uniform_err, shift_err, add_err));
}

// ---- criterion 3: reduction equivalences ------------------------------------
void criterion_reductions() {
    Rng rng(1003);
    FederationConfig cfg;
    cfg.num_clients = 3;
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 4;
    cfg.hidden_dim = 4;
    cfg.num_classes = 3;
    cfg.master_seed = 17;
    std::vector<ClientState> clients;
    for (int i = 0; i < 3; ++i) {
        ClientState c;
        c.id = i;
        c.train = random_batch(rng, 12, 2, 3);
        c.test = random_batch(rng, 6, 2, 3);
        c.seed = ClientState::derive_seed(cfg.master_seed, i);
        c.upsilon = 0.5;
        c.has_upsilon = true;
        clients.push_back(std::move(c));
    }

    FederationConfig qcfg = cfg;
    qcfg.preset = FairnessPreset::qfed(0.0);
    const TrainingHistory hq = run_federation(qcfg, clients);

    // independent uniform model average of the same local updates
    const ModelParams theta0 = init_params(mix_seed(cfg.master_seed, seed_tag::server_init), 2,
                                           cfg.hidden_dim, cfg.num_classes);
    ModelParams mean = theta0;
    std::fill(mean.values.begin(), mean.values.end(), 0.0);
    for (const ClientState& c : clients) {
        const ModelParams local =
            local_update(c, theta0, 1, cfg.learning_rate, cfg.batch_size,
                         mix_seed(mix_seed(c.seed, seed_tag::round_shuffle), 1));
        for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += local.values[i] / 3.0;
    }
    double qfed_vs_uniform = 0.0;
    for (std::size_t i = 0; i < mean.values.size(); ++i)
        qfed_vs_uniform = std::max(qfed_vs_uniform, std::abs(hq.final_model.values[i] - mean.values[i]));

    FederationConfig fcfg = cfg;
    fcfg.preset = FairnessPreset::fedavg();
    const TrainingHistory hf = run_federation(fcfg, clients);
    double fedavg_vs_qfed = 0.0;
    for (std::size_t i = 0; i < mean.values.size(); ++i)
        fedavg_vs_qfed =
            std::max(fedavg_vs_qfed, std::abs(hf.final_model.values[i] - hq.final_model.values[i]));

    ModelParams local = theta0;
    for (double& v : local.values) v += 0.01;
    const RoundUpdate upd = client_deltas(theta0, local, 0.42, 1.0, 1.0, 10.0);
    const bool g_exact = (upd.g == 10.0);

    report(3, "reduction equivalences",
           qfed_vs_uniform < 1e-9 && fedavg_vs_qfed < 1e-9 && g_exact,
           fmt("qfed0-vs-uniform %.2g, fedavg-vs-qfed0 %.2g, g==L %s", qfed_vs_uniform,
               fedavg_vs_qfed, g_exact ? "exact" : "VIOLATED"));
}

// ---- criterion 4: Lipschitz bound ------------------------------------------
void criterion_lipschitz() {
    Rng rng(1004);
    const double eps = 1e-4;
    int violations = 0, checked = 0;
    double worst_margin = 1e9;
    for (int rep = 0; rep < 100; ++rep) {
        const double a = rng.uniform(0.05, 0.5);
        const double c = rng.uniform(-0.5, 0.5);
        const double d = rng.uniform(0.02, 0.8);
        const double w = rng.uniform(0.2, 2.0);
        const double L = 2.0 * a;
        for (const double e : {1.0, 2.0, 6.0}) {
            const double x = c + rng.uniform(-0.5, 0.5);
            const auto h = [&](double t) { return a * (t - c) * (t - c) + d; };
            if (h(x) <= 0.01) continue;
            const auto f = [&](double t) { return w * std::pow(h(t), e); };
            const double fd2 = (f(x + eps) - 2.0 * f(x) + f(x - eps)) / (eps * eps);
            const double grad = 2.0 * a * (x - c);
            const double bound = e * w *
                                 (L * std::pow(h(x), e - 1.0) +
                                  (e - 1.0) * std::pow(h(x), e - 2.0) * grad * grad);
            ++checked;
            worst_margin = std::min(worst_margin, bound + 1e-6 - fd2);
            if (fd2 > bound + 1e-6) ++violations;
        }
    }
    report(4, "Lipschitz upper bound on quadratics", violations == 0,
           fmt("%d checks, %d violations, worst margin %.2g", checked, violations, worst_margin));
}

// ---- criterion 5: metric oracles -------------------------------------------
void criterion_metric_oracles() {
    const double psi_val = psi(std::vector<double>{10.0, 5.0, 15.0}, std::vector<double>{10.0, 10.0, 10.0},
                               std::vector<double>{0.1, 0.2, 0.3});
    const double pearson_val =
        pearson(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{3.0, 2.0, 1.0});
    report(5, "metric oracles", psi_val == 7.5 && std::abs(pearson_val + 1.0) < 1e-12,
           fmt("psi %.12g (== 7.5), pearson %.15g (-1 within 1e-12)", psi_val, pearson_val));
}

// ---- criteria 6-10: default desk-scale experiment ---------------------------
void criteria_desk_scale(const fs::path& workdir) {
    ExperimentConfig cfg = desk_default_config();
    cfg.out_dir = (workdir / "default").string();
    cmd_generate(cfg);
    const AggregateReport agg = cmd_run(cfg);

    const PresetOutcome& fedavg = agg.by_label("fedavg");
    const PresetOutcome& egal = agg.by_label("egalitarian");
    const PresetOutcome& rawls = agg.by_label("rawls_b5");
    const PresetOutcome& desert = agg.by_label("desert");
    const PresetOutcome& util = agg.by_label("utilitarian");

    {
        const std::vector<double>& ups = egal.mean_upsilons;
        bool strict = ups.size() == 5;
        std::string shown;
        for (std::size_t i = 0; i < ups.size(); ++i) {
            if (i > 0 && ups[i] <= ups[i - 1]) strict = false;
            shown += fmt("%s%.3f", i ? " " : "", ups[i]);
        }
        report(6, "upsilon strictly increasing", strict, "seed-mean ups: " + shown);
    }
    report(7, "egalitarian STD below fedavg",
           egal.client_std_stat.mean < fedavg.client_std_stat.mean,
           fmt("%.3f < %.3f", egal.client_std_stat.mean, fedavg.client_std_stat.mean));
    report(8, "rawls psi positive and above egalitarian",
           rawls.psi_stat.mean > 0.0 && rawls.psi_stat.mean > egal.psi_stat.mean,
           fmt("psi(rawls) %.3f > 0 and > psi(egal) %.3f", rawls.psi_stat.mean, egal.psi_stat.mean));
    {
        bool min_ups_tops = !desert.mean_client_accs.empty();
        std::size_t argmin = 0;
        for (std::size_t i = 1; i < desert.mean_upsilons.size(); ++i)
            if (desert.mean_upsilons[i] < desert.mean_upsilons[argmin]) argmin = i;
        for (std::size_t i = 0; i < desert.mean_client_accs.size(); ++i)
            if (desert.mean_client_accs[i] > desert.mean_client_accs[argmin]) min_ups_tops = false;
        report(9, "desert pearson and min-upsilon client",
               desert.pearson_stat.mean <= fedavg.pearson_stat.mean && min_ups_tops,
               fmt("r(desert) %.4f <= r(fedavg) %.4f, min-ups client %s top accuracy",
                   desert.pearson_stat.mean, fedavg.pearson_stat.mean,
                   min_ups_tops ? "has" : "LACKS"));
    }
    report(10, "utilitarian global accuracy",
           util.global_acc.mean >= fedavg.global_acc.mean - 1.0,
           fmt("%.2f >= %.2f - 1", util.global_acc.mean, fedavg.global_acc.mean));
}

// ---- criterion 11: dominant-client scenario ---------------------------------
void criterion_dominant_client(const fs::path& workdir) {
    int wins = 0;
    std::string detail;
    for (int setting = 0; setting < 2; ++setting) {
        ExperimentConfig cfg = desk_default_config();
        if (setting == 0) {
            cfg.shards.clean_shards = {40, 1, 1, 1, 1};
            cfg.shards.ambiguous_shards = {0, 4, 4, 4, 4};
        } else {
            cfg.shards.clean_shards = {0, 4, 4, 4, 4};
            cfg.shards.ambiguous_shards = {40, 1, 1, 1, 1};
        }
        cfg.federation.rounds = 60;
        cfg.federation.num_clients = 5;
        cfg.presets = {FairnessPreset::fedavg()};
        cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        cfg.out_dir = (workdir / (setting == 0 ? "dominant_clean" : "dominant_dirty")).string();
        cmd_generate(cfg);
        cmd_run(cfg);
    }
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        double acc[2];
        for (int setting = 0; setting < 2; ++setting) {
            const fs::path p = workdir / (setting == 0 ? "dominant_clean" : "dominant_dirty") /
                               "fedavg" / ("seed_" + std::to_string(seed)) / "report.json";
            std::ifstream in(p);
            json j;
            in >> j;
            acc[setting] = j.at("global_acc").get<double>();
        }
        wins += acc[0] > acc[1];
    }
    report(11, "dominant clean beats dominant dirty", wins >= 8, fmt("%d/10 seeds (need >= 8)", wins));
}

// ---- criterion 12: byte-identical reruns ------------------------------------
void criterion_determinism(const fs::path& workdir) {
    auto small_config = [&](const std::string& name) {
        ExperimentConfig cfg;
        cfg.data.n_per_class = 60;
        cfg.data.num_classes = 5;
        cfg.shards.clean_shards = {6, 3, 1};
        cfg.shards.ambiguous_shards = {0, 3, 5};
        cfg.shards.shard_size = 20;
        cfg.shards.global_test_size = 60;
        cfg.federation.rounds = 5;
        cfg.federation.solo_epochs = 10;
        cfg.federation.hidden_dim = 8;
        cfg.federation.num_clients = 3;
        cfg.federation.num_classes = 5;
        cfg.federation.batch_size = 16;
        cfg.presets = {FairnessPreset::fedavg(), FairnessPreset::egalitarian(),
                       FairnessPreset::desert()};
        cfg.seeds = {1, 2};
        cfg.out_dir = (workdir / name).string();
        return cfg;
    };
    const ExperimentConfig a = small_config("det_a");
    const ExperimentConfig b = small_config("det_b");
    cmd_generate(a);
    cmd_run(a);
    cmd_generate(b);
    cmd_run(b);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    bool identical = true;
    std::string first_diff;
    std::vector<std::string> rels = {"report.json", "report.csv"};
    for (const char* preset : {"fedavg", "egalitarian", "desert"})
        for (int seed : {1, 2}) {
            rels.push_back(std::string(preset) + "/seed_" + std::to_string(seed) + "/rounds.csv");
            rels.push_back(std::string(preset) + "/seed_" + std::to_string(seed) + "/report.json");
        }
    for (const std::string& rel : rels) {
        if (slurp(fs::path(a.out_dir) / rel) != slurp(fs::path(b.out_dir) / rel)) {
            identical = false;
            if (first_diff.empty()) first_diff = rel;
        }
    }
    report(12, "byte-identical rerun", identical,
           identical ? fmt("%zu files compared equal", rels.size()) : "differs: " + first_diff);
}

}  // namespace

int main() {
    const fs::path workdir = fs::temp_directory_path() / "udjfl_acceptance";
    fs::remove_all(workdir);
    fs::create_directories(workdir);

    const auto t0 = std::chrono::steady_clock::now();
    criterion_gradients();
    criterion_entropy();
    criterion_reductions();
    criterion_lipschitz();
    criterion_metric_oracles();
    criteria_desk_scale(workdir);
    criterion_dominant_client(workdir);
    criterion_determinism(workdir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::printf("%s: %d criterion(s) failed, total %.0fs\n", g_failures == 0 ? "OK" : "FAILED",
                g_failures, secs);
    return g_failures == 0 ? 0 : 1;
}
