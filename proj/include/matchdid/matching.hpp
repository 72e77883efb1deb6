#pragma once

#include <string>
#include <vector>

#include "matchdid/core_stats.hpp"
#include "matchdid/matrix.hpp"

namespace matchdid::matching {

// A cross-section of units with covariates and a treatment flag. Unit ids
// are unique labels carried through to outputs; covariate_names has one
// entry per covariate column.
struct CovariateSample {
    Matrix covariates;                         // n x d
    std::vector<bool> treated;                 // n
    std::vector<std::string> unit_ids;         // n
    std::vector<std::string> covariate_names;  // d

    int n() const { return covariates.rows(); }
    int d() const { return covariates.cols(); }

    int n_treated() const;
    int n_control() const;

    // Sample row indices of treated / control units, ascending. All
    // treated-by-control matrices and assignments produced by this module
    // index into these orderings.
    std::vector<int> treated_indices() const;
    std::vector<int> control_indices() const;

    // Restriction to the first m covariate columns (same units and flags).
    CovariateSample with_columns(int m) const;
};

// Logistic regression of treatment on covariates (intercept first).
// logit_scores holds the linear predictor for every unit in sample order;
// caliper_width is 0.2 times the SD of the logit scores. ridge_fallback is
// set when the unpenalized fit failed to converge (e.g. separation) and a
// small L2 penalty was applied instead.
struct PropensityModel {
    std::vector<double> coefficients;
    std::vector<double> logit_scores;
    double caliper_width = 0.0;
    bool ridge_fallback = false;
};

// Pairwise treated-by-control distances. Row t corresponds to
// treated_rows[t] in the originating sample, column c to control_rows[c];
// both are ascending sample row indices.
struct DistanceMatrix {
    Matrix distances;  // n_treated x n_control, finite and non-negative
    std::vector<int> treated_rows;
    std::vector<int> control_rows;
};

// One treated unit matched to k distinct controls. treated_index is a
// position in the treated ordering of the distance matrix; control_indices
// are positions in its control ordering, sorted ascending.
struct MatchedPair {
    int treated_index = 0;
    std::vector<int> control_indices;
};

// A full 1:k matching. Pairs are sorted by treated_index; no control
// position appears twice anywhere in the assignment. total_distance is the
// sum of the matched distance entries.
struct PairAssignment {
    std::vector<MatchedPair> pairs;
    double total_distance = 0.0;
    int k = 1;
};

// Per-covariate balance diagnostics. Standardized differences divide by the
// pooled SD sqrt((var_treated + var_controls_all) / 2) computed before
// matching; they are NaN when that SD is zero or a group is too small, and
// the matched columns are NaN when no assignment is supplied.
struct BalanceRow {
    std::string covariate;
    double mean_treated = 0.0;
    double mean_controls_all = 0.0;
    double mean_controls_matched = 0.0;
    double std_diff_before = 0.0;
    double std_diff_after = 0.0;
};

// Fits the propensity model by Newton iteration on the logistic likelihood,
// with step halving; falls back to an L2-penalized fit when the
// unpenalized likelihood fails to converge. Requires both classes present
// and n >= d + 2. Throws SingularityError for collinear covariates.
PropensityModel logistic_fit(const CovariateSample &sample);

// Rank-based Mahalanobis distances: covariates are replaced column-wise by
// average ranks over the pooled sample, their covariance is rescaled so
// every diagonal entry equals the untied-rank variance (n^2 - 1) / 12, and
// distances are Mahalanobis in that metric. Robust to outliers and
// invariant to monotone transformations of individual covariates. Throws
// SingularityError for constant or collinear covariates.
DistanceMatrix rank_mahalanobis_distances(const CovariateSample &sample);

// Absolute difference in propensity logit scores for every treated-control
// pair. The model must have been fitted on this sample.
DistanceMatrix propensity_distances(const PropensityModel &model, const CovariateSample &sample);

// Absolute difference in a single outcome value per unit (used for matching
// directly on a pre-period outcome).
DistanceMatrix outcome_distances(const std::vector<double> &treated_outcomes,
                                 const std::vector<double> &control_outcomes);

// Soft propensity caliper: pairs whose logit distance exceeds the model's
// caliper width are penalized by penalty_scale times the excess, which
// steers the optimizer away from them while keeping every problem feasible.
// The overload without penalty_scale uses 1000 times the median entry of
// dist.
DistanceMatrix apply_caliper(const DistanceMatrix &dist, const PropensityModel &model,
                             const CovariateSample &sample, double penalty_scale);
DistanceMatrix apply_caliper(const DistanceMatrix &dist, const PropensityModel &model,
                             const CovariateSample &sample);

// Optimal 1:k matching minimizing the total distance over all assignments
// of k distinct controls to every treated unit, by the shortest
// augmenting-path (Jonker-Volgenant) algorithm on the k-fold replicated
// cost matrix. Throws InfeasibleError when fewer than k * n_treated
// controls are available.
PairAssignment optimal_match(const DistanceMatrix &dist, int k);

// Balance table before and (optionally) after matching; pass nullptr for
// the pre-matching table only.
std::vector<BalanceRow> standardized_differences(const CovariateSample &sample,
                                                 const PairAssignment *assignment);

}  // namespace matchdid::matching
