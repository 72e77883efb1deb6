#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace matchdid::cli {

// Exit codes shared by all commands: 0 success, 2 input/validation error,
// 3 infeasible matching problem, 1 internal error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInfeasible = 3;

struct MatchOptions {
    std::string covariates_path;
    int k = 1;
    std::string metric = "rank-mahalanobis";  // or "propensity"
    std::optional<bool> caliper;         // default: on for rank-mahalanobis, off for propensity
    std::optional<double> penalty_scale;  // default: 1000 x median distance
    std::string out_dir = ".";
};

struct DidOptions {
    std::string panel_path;
    std::string pairs_path;   // empty: two-way fixed-effects DID on the whole panel
    std::string pre_period;   // labels; both empty: inferred from a two-period panel
    std::string post_period;
    std::vector<std::string> period_order;
    double alpha = 0.05;
    std::string out_dir = ".";
};

struct TrendOptions {
    std::string panel_path;
    std::string first_period;  // labels; both empty: inferred from a two-period panel
    std::string second_period;
    std::vector<std::string> period_order;
    std::string out_dir = ".";
};

struct SimulateOptions {
    std::optional<int> table;           // 4..8, default 4
    std::optional<int> n_reps;          // default 1000
    std::optional<std::uint64_t> seed;  // default 12345
    std::string config_path;            // optional JSON overrides
    std::string out_dir = ".";
};

// Each command reads its inputs, computes, writes its output files
// atomically into out_dir (plus manifest.json describing the run), prints a
// human-readable summary to stdout, and returns an exit code. Errors are
// reported on stderr; no partial output files are left behind.
int cmd_match(const MatchOptions &options);
int cmd_did(const DidOptions &options);
int cmd_trend(const TrendOptions &options);
int cmd_simulate(const SimulateOptions &options);

}  // namespace matchdid::cli
