// biofuse: synthesize, preprocess, train, evaluate, ablate, and report on
// multimodal biosignal gesture experiments. Exit codes: 0 success,
// 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biofuse/config.hpp"
#include "biofuse/errors.hpp"
#include "biofuse/experiment.hpp"

namespace {

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    std::optional<std::size_t> factor;
};

biofuse::experiment::Overrides overrides_of(const GlobalFlags& g) {
    return {g.seed, g.out, g.threads, g.factor};
}

void add_global_flags(CLI::App* cmd, GlobalFlags& g, bool needs_config) {
    auto* cfg = cmd->add_option("--config", g.config_path, "configuration file");
    if (needs_config) cfg->required();
    cmd->add_option("--seed", [&g](const CLI::results_t& r) {
        g.seed = std::stoull(r[0]);
        return true;
    }, "override the config seed(s)");
    cmd->add_option("--out", [&g](const CLI::results_t& r) {
        g.out = r[0];
        return true;
    }, "override the output directory");
    cmd->add_option("--threads", [&g](const CLI::results_t& r) {
        g.threads = std::stoi(r[0]);
        return true;
    }, "worker threads for independent seeds");
    cmd->add_option("--factor", [&g](const CLI::results_t& r) {
        g.factor = std::stoull(r[0]);
        return true;
    }, "Bonferroni correction factor override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal biosignal gesture classification toolkit"};
    app.require_subcommand(1);

    GlobalFlags g_synth, g_prep, g_run, g_eval, g_ablate, g_stats, g_report;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_global_flags(synth, g_synth, true);

    auto* prep = app.add_subcommand("prep", "run the preprocessing pipeline over a dataset");
    add_global_flags(prep, g_prep, true);

    auto* run = app.add_subcommand("run", "train model(s) and write checkpoints/history/eval");
    add_global_flags(run, g_run, true);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, optionally zeroing modalities");
    add_global_flags(eval, g_eval, true);

    auto* ablate = app.add_subcommand("ablate", "attention-edge masking ablation grid");
    add_global_flags(ablate, g_ablate, true);

    auto* stats_cmd = app.add_subcommand("stats", "Mann-Whitney U comparisons between eval files");
    std::vector<std::string> stats_files;
    std::string stats_condition = "baseline";
    stats_cmd->add_option("files", stats_files, "baseline eval.jsonl then comparison files")
        ->required()
        ->expected(-2);
    stats_cmd->add_option("--condition", stats_condition, "eval record condition to compare");
    add_global_flags(stats_cmd, g_stats, false);  // --out redirects stdout to a file

    auto* report = app.add_subcommand("report", "summarize eval artifacts into CSV plot data");
    std::string report_results, report_out = "report";
    report->add_option("results", report_results, "results directory to scan")->required();
    report->add_option("--out", report_out, "report output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const auto cfg = biofuse::config::KeyValueConfig::parse_file(g_synth.config_path);
            biofuse::experiment::cmd_synth(cfg, overrides_of(g_synth));
        } else if (prep->parsed()) {
            const auto cfg = biofuse::config::KeyValueConfig::parse_file(g_prep.config_path);
            biofuse::experiment::cmd_prep(cfg, overrides_of(g_prep));
        } else if (run->parsed()) {
            const auto cfg = biofuse::config::KeyValueConfig::parse_file(g_run.config_path);
            biofuse::experiment::cmd_run(cfg, overrides_of(g_run));
        } else if (eval->parsed()) {
            const auto cfg = biofuse::config::KeyValueConfig::parse_file(g_eval.config_path);
            biofuse::experiment::cmd_eval(cfg, overrides_of(g_eval));
        } else if (ablate->parsed()) {
            const auto cfg = biofuse::config::KeyValueConfig::parse_file(g_ablate.config_path);
            biofuse::experiment::cmd_ablate(cfg, overrides_of(g_ablate));
        } else if (stats_cmd->parsed()) {
            biofuse::experiment::cmd_stats(stats_files, stats_condition,
                                           g_stats.factor.value_or(1),
                                           g_stats.out.value_or(""));
        } else if (report->parsed()) {
            biofuse::experiment::cmd_report(report_results, report_out);
        }
    } catch (const biofuse::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
