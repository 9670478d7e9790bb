// Command-line interface: synthetic and semi-synthetic Monte Carlo runs,
// metric recomputation from saved panels, and plot-data export.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "hte/driver.hpp"
#include "hte/kernels.hpp"

namespace {

using hte::driver::ExperimentConfig;
using hte::driver::ResultFormat;
using hte::driver::ResultTable;

int workers_from_env() {
    if (const char* env = std::getenv("HTE_WORKERS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

struct CommonOptions {
    std::vector<std::string> learners;
    std::vector<std::string> procedures;
    std::vector<int> n_train;
    std::vector<int> replications;
    int n_validation = -1;
    int trees = -1;
    int min_leaf = -1;
    int mtry = -1;
    std::uint64_t seed = 42;
    std::string out = "results.csv";
    std::string format = "csv";
    std::string profile = "desk";
    std::string save_panels;
    double clip_propensity = 0.0;
    bool no_runtime = false;
    bool strict = false;
};

void add_common_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--learners", opt.learners, "Comma-separated subset of S,SW,T,X,DR,R")
        ->delimiter(',');
    cmd->add_option("--procedures", opt.procedures, "Comma-separated subset of full,split,crossfit")
        ->delimiter(',');
    cmd->add_option("--n-train", opt.n_train, "Training sample sizes")->delimiter(',');
    cmd->add_option("--replications", opt.replications,
                    "Replication counts, paired with --n-train")
        ->delimiter(',');
    cmd->add_option("--n-validation", opt.n_validation, "Validation sample size");
    cmd->add_option("--trees", opt.trees, "Trees per forest");
    cmd->add_option("--min-leaf", opt.min_leaf, "Minimum leaf size");
    cmd->add_option("--mtry", opt.mtry, "Split candidates per node (0 = ceil(sqrt(p)))");
    cmd->add_option("--seed", opt.seed, "Master seed");
    cmd->add_option("--out", opt.out, "Output path");
    cmd->add_option("--format", opt.format, "Output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--profile", opt.profile, "Scale profile: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--save-panels", opt.save_panels, "Directory for per-cell prediction panels");
    cmd->add_option("--clip-propensity", opt.clip_propensity,
                    "Clip propensities into [eps, 1-eps]; 0 disables (replication mode)");
    cmd->add_flag("--no-runtime", opt.no_runtime,
                  "Blank the runtime column (byte-reproducible output)");
    cmd->add_flag("--strict", opt.strict, "Exit nonzero when any cell aborts");
}

ExperimentConfig build_config(const CommonOptions& opt, bool semisynth) {
    ExperimentConfig config = opt.profile == "paper" ? ExperimentConfig::paper_profile()
                                                     : ExperimentConfig::desk_profile();
    if (!opt.learners.empty()) {
        config.learners.clear();
        for (const auto& name : opt.learners)
            config.learners.push_back(hte::meta::parse_learner(name));
    }
    if (!opt.procedures.empty()) {
        config.procedures.clear();
        for (const auto& name : opt.procedures)
            config.procedures.push_back(hte::meta::parse_procedure(name));
    }
    if (!opt.n_train.empty()) config.n_train = opt.n_train;
    if (!opt.replications.empty()) config.replications = opt.replications;
    if (opt.n_validation > 0) config.n_validation = opt.n_validation;
    if (semisynth && opt.n_validation <= 0) config.n_validation = 1000;
    if (opt.trees > 0) config.forest.trees = opt.trees;
    if (opt.min_leaf > 0) config.forest.min_leaf = opt.min_leaf;
    if (opt.mtry >= 0) config.forest.mtry = opt.mtry;
    config.clip_epsilon = opt.clip_propensity;
    config.master_seed = opt.seed;
    config.save_panels_dir = opt.save_panels;
    config.workers = workers_from_env();
    return config;
}

int finish_run(const ResultTable& table, const CommonOptions& opt) {
    hte::driver::write_results(table, opt.out,
                               opt.format == "json" ? ResultFormat::json : ResultFormat::csv,
                               !opt.no_runtime);
    int aborted = 0;
    for (const auto& row : table.rows) {
        if (row.aborted) {
            ++aborted;
            std::cerr << "aborted cell: design=" << row.design << " learner=" << row.learner
                      << " procedure=" << row.procedure << " n_train=" << row.n_train << " ("
                      << row.abort_reason << ")\n";
        }
        if (row.warnings.total() > 0) {
            std::cerr << "warnings: design=" << row.design << " learner=" << row.learner
                      << " procedure=" << row.procedure << " n_train=" << row.n_train
                      << " oob_fallbacks=" << row.warnings.oob_fallbacks
                      << " propensity_clips=" << row.warnings.propensity_clips
                      << " degraded_procedures=" << row.warnings.degraded_procedures
                      << " dgp_redraws=" << row.warnings.dgp_redraws
                      << " failed_replications=" << row.warnings.failed_replications << "\n";
        }
    }
    std::cout << "wrote " << table.rows.size() << " result rows to " << opt.out
              << " (simd=" << hte::kernels::isa_name(hte::kernels::active_isa()) << ")\n";
    if (aborted > 0 && opt.strict) return 2;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-learners for conditional average treatment effects: "
                 "S/SW/T/X/DR/R with full-sample, double sample-splitting and "
                 "double cross-fitting estimation"};
    app.require_subcommand(1);

    // --- simulate ---
    CommonOptions sim_opt;
    int design = 6;
    auto* simulate = app.add_subcommand("simulate", "Run a synthetic-design Monte Carlo study");
    simulate->add_option("--design", design, "Design id in 1..6")->check(CLI::Range(1, 6));
    add_common_options(simulate, sim_opt);

    // --- semisynth ---
    CommonOptions semi_opt;
    std::string data_path;
    std::string colmap_path;
    int augment_p = 90;
    auto* semisynth =
        app.add_subcommand("semisynth", "Run the semi-synthetic study on a real dataset");
    semisynth->add_option("--data", data_path, "Input csv file")->required();
    semisynth->add_option("--colmap", colmap_path, "role=header mapping file");
    semisynth->add_option("--augment-p", augment_p, "Correlated-uniform covariates to append");
    add_common_options(semisynth, semi_opt);

    // --- metrics ---
    std::string panel_path;
    std::string metrics_out = "summary.csv";
    std::string metrics_format = "csv";
    auto* metrics_cmd =
        app.add_subcommand("metrics", "Recompute the summary from a saved prediction panel");
    metrics_cmd->add_option("--panel", panel_path, "Panel file written by --save-panels")
        ->required();
    metrics_cmd->add_option("--out", metrics_out, "Output path");
    metrics_cmd->add_option("--format", metrics_format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));

    // --- emit-plotdata ---
    std::string results_path;
    std::string plot_out = "plotdata.csv";
    auto* plot_cmd = app.add_subcommand("emit-plotdata",
                                        "Long-format summary-vs-n_train csv for plotting");
    plot_cmd->add_option("--results", results_path, "Results csv from simulate/semisynth")
        ->required();
    plot_cmd->add_option("--out", plot_out, "Output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            ExperimentConfig config = build_config(sim_opt, false);
            config.design_id = design;
            return finish_run(hte::driver::run_experiment(config), sim_opt);
        }
        if (semisynth->parsed()) {
            ExperimentConfig config = build_config(semi_opt, true);
            config.data_path = data_path;
            config.colmap_path = colmap_path;
            config.augment_p = augment_p;
            // The dataset bounds training sizes; default schedule drops 32000.
            if (semi_opt.n_train.empty()) {
                config.n_train = {500, 2000, 8000};
                config.replications = semi_opt.replications.empty()
                                          ? std::vector<int>{200, 100, 50}
                                          : semi_opt.replications;
            }
            return finish_run(hte::driver::run_experiment(config), semi_opt);
        }
        if (metrics_cmd->parsed()) {
            const hte::metrics::PredictionPanel panel = hte::driver::read_panel(panel_path);
            const auto rows = hte::metrics::per_obs_metrics(panel);
            const auto summary = hte::metrics::aggregate(rows, panel);
            hte::driver::ResultTable table;
            hte::driver::ResultRow row;
            row.design = "panel";
            row.learner = "-";
            row.procedure = "-";
            row.n_train = 0;
            row.replications = summary.n_replications;
            row.summary = summary;
            table.rows.push_back(row);
            hte::driver::write_results(table, metrics_out,
                                       metrics_format == "json" ? ResultFormat::json
                                                                : ResultFormat::csv,
                                       false);
            std::cout << "wrote summary for " << summary.n_replications << " replications x "
                      << summary.n_observations << " observations to " << metrics_out << "\n";
            return 0;
        }
        if (plot_cmd->parsed()) {
            const ResultTable table = hte::driver::read_results_csv(results_path);
            hte::driver::emit_plotdata(table, plot_out);
            std::cout << "wrote plot data to " << plot_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
