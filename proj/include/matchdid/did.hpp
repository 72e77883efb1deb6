#pragma once

#include <string>
#include <vector>

#include "matchdid/matching.hpp"

namespace matchdid::did {

// One observation of one unit in one period. Periods are integer ordinals;
// smaller means earlier. treated_group must be constant within a unit.
struct PanelRecord {
    std::string unit_id;
    bool treated_group = false;
    int period = 0;
    double outcome = 0.0;
};

struct PanelDataset {
    std::vector<PanelRecord> records;
};

// A difference-in-differences estimate with a t-based confidence interval.
// group_means_did produces a descriptive point estimate only; its se and CI
// fields are NaN and df is 0.
struct DidEstimate {
    double point = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int df = 0;
    double alpha = 0.05;
    std::string method;
};

// Pre/post outcomes for 1:1 matched pairs, aligned by index.
struct MatchedOutcomePairs {
    std::vector<double> treated_pre;
    std::vector<double> treated_post;
    std::vector<double> control_pre;
    std::vector<double> control_post;

    int n_pairs() const { return static_cast<int>(treated_pre.size()); }
};

// Test for differential trends between groups across two pre-treatment
// periods: OLS of outcome on group, period, and their interaction. estimate
// is the interaction coefficient (the gap in period-to-period change).
struct TrendTest {
    double estimate = 0.0;
    double se = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    int df = 0;
};

// Paired difference-in-differences: per pair computes
// (treated post - treated pre) - (control post - control pre), then a mean
// with a t interval over pairs. Requires at least two pairs.
DidEstimate paired_did(const MatchedOutcomePairs &pairs, double alpha = 0.05);

// Descriptive DID of four group means:
// (treated post - treated pre) - (control post - control pre).
DidEstimate group_means_did(double treated_pre, double treated_post, double control_pre,
                            double control_post);

// Two-way fixed-effects DID on a two-period panel: outcome on unit effects,
// a period effect, and treated x post, estimated by within-unit demeaning.
// Every unit must appear in exactly both periods with a constant group
// flag. The residual degrees of freedom account for the absorbed unit
// effects: df = n_obs - n_units - 1.
DidEstimate regression_did(const PanelDataset &panel, double alpha = 0.05);

// Differential pre-trend test on a panel holding exactly two pre-treatment
// periods. Does not require units to appear in both periods.
TrendTest parallel_trend_test(const PanelDataset &panel);

// Joins a 1:1 assignment with a two-period panel into matched outcome
// pairs. treated_ids / control_ids give the unit id for each treated /
// control position of the assignment's distance matrix (ascending sample
// order, as produced by the matching module). Missing (unit, period)
// outcomes raise ValidationError listing the offending units.
MatchedOutcomePairs pairs_from_assignment(const PanelDataset &panel,
                                          const matching::PairAssignment &assignment,
                                          const std::vector<std::string> &treated_ids,
                                          const std::vector<std::string> &control_ids,
                                          int pre_period, int post_period);

}  // namespace matchdid::did
