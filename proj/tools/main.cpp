#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "matchdid/cli.hpp"

int main(int argc, char **argv) {
    CLI::App app{"Matched-control difference-in-differences toolkit"};
    app.require_subcommand(1);

    matchdid::cli::MatchOptions match_opts;
    auto *match = app.add_subcommand(
        "match", "Optimally match treated units to controls on covariates");
    match
        ->add_option("covariates", match_opts.covariates_path,
                     "CSV with header unit_id,treated,<covariate>...")
        ->required();
    match->add_option("--k", match_opts.k, "Controls matched to each treated unit (default 1)");
    match->add_option("--metric", match_opts.metric,
                      "Distance metric: rank-mahalanobis (default) or propensity");
    bool caliper_on = false, caliper_off = false;
    match->add_flag("--caliper", caliper_on,
                    "Penalize pairs outside the propensity caliper (default for "
                    "rank-mahalanobis)");
    match->add_flag("--no-caliper", caliper_off, "Disable the propensity caliper");
    double penalty_scale = 0.0;
    auto *penalty_opt = match->add_option(
        "--penalty-scale", penalty_scale,
        "Caliper penalty per unit of excess logit distance (default: 1000 x median distance)");
    match->add_option("--out", match_opts.out_dir, "Output directory (default .)");

    matchdid::cli::DidOptions did_opts;
    auto *did = app.add_subcommand("did", "Difference-in-differences estimate on a panel");
    did->add_option("panel", did_opts.panel_path, "CSV with header unit_id,group,period,outcome")
        ->required();
    did->add_option("--pairs", did_opts.pairs_path,
                    "Matched pairs CSV (treated_id,control_id); switches to the paired "
                    "estimator");
    did->add_option("--pre", did_opts.pre_period, "Pre-treatment period label");
    did->add_option("--post", did_opts.post_period, "Post-treatment period label");
    did->add_option("--period-order", did_opts.period_order,
                    "Comma-separated period labels, earliest first")
        ->delimiter(',');
    did->add_option("--alpha", did_opts.alpha, "Two-sided CI level (default 0.05)");
    did->add_option("--out", did_opts.out_dir, "Output directory (default .)");

    matchdid::cli::TrendOptions trend_opts;
    auto *trend = app.add_subcommand(
        "trend", "Test for differential pre-treatment trends between groups");
    trend
        ->add_option("panel", trend_opts.panel_path,
                     "CSV with header unit_id,group,period,outcome")
        ->required();
    trend->add_option("--pre1", trend_opts.first_period, "Earlier pre-treatment period label");
    trend->add_option("--pre2", trend_opts.second_period, "Later pre-treatment period label");
    trend
        ->add_option("--period-order", trend_opts.period_order,
                     "Comma-separated period labels, earliest first")
        ->delimiter(',');
    trend->add_option("--out", trend_opts.out_dir, "Output directory (default .)");

    matchdid::cli::SimulateOptions sim_opts;
    auto *simulate = app.add_subcommand(
        "simulate", "Monte Carlo comparison of matching strategies");
    int table = 4;
    int reps = 1000;
    std::uint64_t seed = 12345;
    auto *table_opt = simulate->add_option("--table", table, "Study grid to run, 4-8 (default 4)");
    auto *reps_opt =
        simulate->add_option("--reps", reps, "Replications per scenario (default 1000)");
    auto *seed_opt = simulate->add_option("--seed", seed, "Master seed (default 12345)");
    simulate->add_option("--config", sim_opts.config_path, "JSON file with scenario overrides");
    simulate->add_option("--out", sim_opts.out_dir, "Output directory (default .)");

    CLI11_PARSE(app, argc, argv);

    if (match->parsed()) {
        if (caliper_on && caliper_off) {
            std::cerr << "error: --caliper and --no-caliper are mutually exclusive\n";
            return matchdid::cli::kExitValidation;
        }
        if (caliper_on) match_opts.caliper = true;
        if (caliper_off) match_opts.caliper = false;
        if (penalty_opt->count() > 0) match_opts.penalty_scale = penalty_scale;
        return matchdid::cli::cmd_match(match_opts);
    }
    if (did->parsed()) return matchdid::cli::cmd_did(did_opts);
    if (trend->parsed()) return matchdid::cli::cmd_trend(trend_opts);
    if (simulate->parsed()) {
        if (table_opt->count() > 0) sim_opts.table = table;
        if (reps_opt->count() > 0) sim_opts.n_reps = reps;
        if (seed_opt->count() > 0) sim_opts.seed = seed;
        return matchdid::cli::cmd_simulate(sim_opts);
    }
    return matchdid::cli::kExitValidation;
}
