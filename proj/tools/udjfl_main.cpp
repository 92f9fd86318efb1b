// Command-line front end: generate | run | sweep | report.
// Exit codes: 0 success, 1 configuration error, 2 runtime/numerical error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "udjfl/experiment.hpp"

namespace {

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        try {
            out.push_back(std::stod(text.substr(pos, comma - pos)));
        } catch (const std::exception&) {
            throw udjfl::ConfigError("bad numeric list: '" + text + "'");
        }
        pos = comma + 1;
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (double v : parse_double_list(text)) {
        if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
            throw udjfl::ConfigError("seeds must be non-negative integers");
        out.push_back(static_cast<std::uint64_t>(v));
    }
    return out;
}

struct CommonFlags {
    std::string config_path;
    std::string preset;
    std::string seeds;
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config_path, "experiment config JSON");
    if (config_required) opt->required();
    cmd->add_option("--preset", flags.preset, "preset override, NAME[:BETA]");
    cmd->add_option("--seeds", flags.seeds, "seed list override, e.g. 1,2,3");
    cmd->add_option("--out", flags.out, "output directory override");
    cmd->add_option("--threads", flags.threads, "parallel seed jobs");
}

udjfl::ExperimentConfig make_config(const CommonFlags& flags) {
    udjfl::ExperimentConfig cfg = udjfl::load_config(flags.config_path);
    if (!flags.preset.empty()) cfg.presets = {udjfl::FairnessPreset::parse(flags.preset)};
    if (!flags.seeds.empty()) cfg.seeds = parse_seed_list(flags.seeds);
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (flags.threads > 0) cfg.threads = flags.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UDJ-FL: uncertainty-weighted fair federated learning simulator"};
    app.require_subcommand(1);

    CommonFlags gen_flags, run_flags, sweep_flags, report_flags;
    std::string grid_text;

    CLI::App* gen = app.add_subcommand("generate", "generate and partition datasets");
    add_common(gen, gen_flags, true);

    CLI::App* run = app.add_subcommand("run", "run the configured presets over all seeds");
    add_common(run, run_flags, true);

    CLI::App* sweep = app.add_subcommand("sweep", "run one preset family over a beta grid");
    add_common(sweep, sweep_flags, true);
    sweep->add_option("--grid", grid_text, "comma-separated beta values")->required();

    CLI::App* report = app.add_subcommand("report", "re-aggregate per-seed reports in an output dir");
    report->add_option("--out", report_flags.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            udjfl::cmd_generate(make_config(gen_flags));
            std::cout << "datasets written\n";
        } else if (run->parsed()) {
            const udjfl::AggregateReport agg = udjfl::cmd_run(make_config(run_flags));
            udjfl::print_report(agg);
        } else if (sweep->parsed()) {
            if (sweep_flags.preset.empty())
                throw udjfl::ConfigError("sweep requires --preset (rawls, qfed or custom)");
            CommonFlags base_flags = sweep_flags;
            base_flags.preset.clear();  // the grid, not the flag, decides the presets
            const udjfl::ExperimentConfig cfg = make_config(base_flags);
            const udjfl::FairnessPreset base = udjfl::FairnessPreset::parse(
                sweep_flags.preset.find(':') == std::string::npos ? sweep_flags.preset + ":1"
                                                                  : sweep_flags.preset);
            const udjfl::AggregateReport agg =
                udjfl::cmd_sweep(cfg, base.kind, parse_double_list(grid_text));
            udjfl::print_report(agg);
        } else if (report->parsed()) {
            const udjfl::AggregateReport agg = udjfl::cmd_report(report_flags.out);
            udjfl::print_report(agg);
        }
    } catch (const udjfl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
