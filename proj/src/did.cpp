#include "matchdid/did.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "matchdid/core_stats.hpp"
#include "matchdid/errors.hpp"

namespace matchdid::did {

namespace {

void validate_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("alpha must lie strictly in (0, 1)");
}

std::string join_ids(const std::vector<std::string> &ids) {
    std::string out;
    const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
        if (i > 0) out += ", ";
        out += ids[i];
    }
    if (ids.size() > shown) out += ", and " + std::to_string(ids.size() - shown) + " more";
    return out;
}

// Distinct periods of a panel, ascending; throws unless there are exactly
// two.
std::pair<int, int> two_periods(const PanelDataset &panel, const char *where) {
    std::set<int> periods;
    for (const auto &rec : panel.records) periods.insert(rec.period);
    if (periods.size() != 2)
        throw ValidationError(std::string(where) + ": panel must hold exactly two periods, found " +
                              std::to_string(periods.size()));
    return {*periods.begin(), *std::next(periods.begin())};
}

void require_finite_outcomes(const PanelDataset &panel, const char *where) {
    for (const auto &rec : panel.records)
        if (!std::isfinite(rec.outcome))
            throw std::domain_error(std::string(where) + ": non-finite outcome for unit '" +
                                    rec.unit_id + "'");
}

}  // namespace

DidEstimate paired_did(const MatchedOutcomePairs &pairs, double alpha) {
    validate_alpha(alpha);
    const int n = pairs.n_pairs();
    if (static_cast<int>(pairs.treated_post.size()) != n ||
        static_cast<int>(pairs.control_pre.size()) != n ||
        static_cast<int>(pairs.control_post.size()) != n)
        throw std::domain_error("paired_did: pair vectors have unequal lengths");
    if (n < 2) throw std::domain_error("paired_did: need at least two pairs");

    std::vector<double> diff(n);
    for (int i = 0; i < n; ++i)
        diff[i] = (pairs.treated_post[i] - pairs.treated_pre[i]) -
                  (pairs.control_post[i] - pairs.control_pre[i]);

    DidEstimate est;
    est.method = "paired";
    est.alpha = alpha;
    est.point = mean_of(diff);
    est.se = sd_of(diff) / std::sqrt(static_cast<double>(n));
    est.df = n - 1;
    const double tq = student_t_quantile(1.0 - alpha / 2.0, est.df);
    est.ci_low = est.point - tq * est.se;
    est.ci_high = est.point + tq * est.se;
    return est;
}

DidEstimate group_means_did(double treated_pre, double treated_post, double control_pre,
                            double control_post) {
    for (double v : {treated_pre, treated_post, control_pre, control_post})
        if (!std::isfinite(v)) throw std::domain_error("group_means_did: non-finite mean");
    DidEstimate est;
    est.method = "group_means";
    est.point = (treated_post - treated_pre) - (control_post - control_pre);
    est.se = std::numeric_limits<double>::quiet_NaN();
    est.ci_low = std::numeric_limits<double>::quiet_NaN();
    est.ci_high = std::numeric_limits<double>::quiet_NaN();
    est.df = 0;
    return est;
}

DidEstimate regression_did(const PanelDataset &panel, double alpha) {
    validate_alpha(alpha);
    require_finite_outcomes(panel, "regression_did");
    const auto [before, after] = two_periods(panel, "regression_did");

    struct UnitObs {
        bool group = false;
        bool has_before = false, has_after = false;
        double y_before = 0.0, y_after = 0.0;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, UnitObs> units;
    for (const auto &rec : panel.records) {
        auto [it, inserted] = units.try_emplace(rec.unit_id);
        if (inserted) {
            order.push_back(rec.unit_id);
            it->second.group = rec.treated_group;
        } else if (it->second.group != rec.treated_group) {
            throw ValidationError("regression_did: unit '" + rec.unit_id +
                                  "' changes group between records");
        }
        const bool is_before = rec.period == before;
        bool &seen = is_before ? it->second.has_before : it->second.has_after;
        if (seen)
            throw ValidationError("regression_did: duplicate record for unit '" + rec.unit_id +
                                  "' in period " + std::to_string(rec.period));
        seen = true;
        (is_before ? it->second.y_before : it->second.y_after) = rec.outcome;
    }

    std::vector<std::string> incomplete;
    for (const auto &id : order) {
        const UnitObs &u = units.at(id);
        if (!u.has_before || !u.has_after) incomplete.push_back(id);
    }
    if (!incomplete.empty())
        throw ValidationError("regression_did: units missing a period: " + join_ids(incomplete));

    const int n_units = static_cast<int>(order.size());
    int n_treated = 0;
    for (const auto &id : order) n_treated += units.at(id).group ? 1 : 0;
    const int n_control = n_units - n_treated;
    if (n_treated < 1 || n_control < 1)
        throw ValidationError("regression_did: both groups must be present");
    if (n_units < 2) throw ValidationError("regression_did: need at least two units");

    // Within-unit demeaning absorbs the unit effects; the demeaned design
    // has the period dummy and the treated x post interaction.
    Matrix design(2 * n_units, 2);
    std::vector<double> response(2 * n_units);
    for (int i = 0; i < n_units; ++i) {
        const UnitObs &u = units.at(order[i]);
        const double ybar = 0.5 * (u.y_before + u.y_after);
        const double g = u.group ? 1.0 : 0.0;
        design(2 * i, 0) = -0.5;
        design(2 * i, 1) = -0.5 * g;
        response[2 * i] = u.y_before - ybar;
        design(2 * i + 1, 0) = 0.5;
        design(2 * i + 1, 1) = 0.5 * g;
        response[2 * i + 1] = u.y_after - ybar;
    }
    const OlsFit fit = ols_fit(design, response, {"post", "treated_post"});

    DidEstimate est;
    est.method = "regression";
    est.alpha = alpha;
    est.point = fit.coefficients[1];
    // Absorbed unit effects spend n_units degrees of freedom on top of the
    // two slope parameters' net one: df = n_obs - n_units - 1.
    est.df = 2 * n_units - n_units - 1;
    const double rss = fit.residual_variance * fit.residual_df;
    const double sigma2 = rss / est.df;
    // For this balanced demeaned design, (X'X)^-1 for the interaction is
    // 2 n / (n_treated * n_control), exactly.
    est.se = std::sqrt(sigma2 * 2.0 * n_units /
                       (static_cast<double>(n_treated) * static_cast<double>(n_control)));
    const double tq = student_t_quantile(1.0 - alpha / 2.0, est.df);
    est.ci_low = est.point - tq * est.se;
    est.ci_high = est.point + tq * est.se;
    return est;
}

TrendTest parallel_trend_test(const PanelDataset &panel) {
    require_finite_outcomes(panel, "parallel_trend_test");
    const auto [first, second] = two_periods(panel, "parallel_trend_test");

    std::set<std::pair<std::string, int>> seen;
    for (const auto &rec : panel.records)
        if (!seen.insert({rec.unit_id, rec.period}).second)
            throw ValidationError("parallel_trend_test: duplicate record for unit '" +
                                  rec.unit_id + "' in period " + std::to_string(rec.period));

    int cells[2][2] = {{0, 0}, {0, 0}};
    for (const auto &rec : panel.records)
        ++cells[rec.treated_group ? 1 : 0][rec.period == first ? 0 : 1];
    if (cells[0][0] == 0 || cells[0][1] == 0 || cells[1][0] == 0 || cells[1][1] == 0)
        throw ValidationError(
            "parallel_trend_test: every group must be observed in both periods");

    const int n = static_cast<int>(panel.records.size());
    Matrix design(n, 4);
    std::vector<double> response(n);
    for (int i = 0; i < n; ++i) {
        const auto &rec = panel.records[i];
        const double t = rec.period == first ? 0.0 : 1.0;
        const double g = rec.treated_group ? 1.0 : 0.0;
        design(i, 0) = 1.0;
        design(i, 1) = t;
        design(i, 2) = g;
        design(i, 3) = t * g;
        response[i] = rec.outcome;
    }
    const OlsFit fit =
        ols_fit(design, response, {"intercept", "period", "group", "period_x_group"});

    TrendTest test;
    test.estimate = fit.coefficients[3];
    test.se = fit.standard_errors[3];
    test.df = fit.residual_df;
    if (test.se > 0.0) {
        test.t_stat = test.estimate / test.se;
        test.p_value = 2.0 * (1.0 - student_t_cdf(std::fabs(test.t_stat), test.df));
    } else {
        // Perfect fit: the trend gap is either exactly zero or exactly
        // nonzero with no residual noise.
        test.t_stat = test.estimate == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        test.p_value = test.estimate == 0.0 ? 1.0 : 0.0;
    }
    return test;
}

MatchedOutcomePairs pairs_from_assignment(const PanelDataset &panel,
                                          const matching::PairAssignment &assignment,
                                          const std::vector<std::string> &treated_ids,
                                          const std::vector<std::string> &control_ids,
                                          int pre_period, int post_period) {
    if (assignment.k != 1)
        throw std::domain_error("pairs_from_assignment: paired outcomes need a 1:1 assignment");
    if (pre_period == post_period)
        throw std::domain_error("pairs_from_assignment: pre and post period coincide");
    require_finite_outcomes(panel, "pairs_from_assignment");

    std::map<std::pair<std::string, int>, double> outcomes;
    for (const auto &rec : panel.records) {
        if (rec.period != pre_period && rec.period != post_period) continue;
        if (!outcomes.emplace(std::make_pair(rec.unit_id, rec.period), rec.outcome).second)
            throw ValidationError("pairs_from_assignment: duplicate record for unit '" +
                                  rec.unit_id + "' in period " + std::to_string(rec.period));
    }

    MatchedOutcomePairs pairs;
    std::vector<std::string> missing;
    auto fetch = [&](const std::string &id, int period, std::vector<double> &dest) {
        const auto it = outcomes.find({id, period});
        if (it == outcomes.end()) {
            missing.push_back(id + " (period " + std::to_string(period) + ")");
            dest.push_back(0.0);
        } else {
            dest.push_back(it->second);
        }
    };
    for (const auto &pair : assignment.pairs) {
        if (pair.treated_index < 0 ||
            pair.treated_index >= static_cast<int>(treated_ids.size()) ||
            pair.control_indices.size() != 1 || pair.control_indices[0] < 0 ||
            pair.control_indices[0] >= static_cast<int>(control_ids.size()))
            throw std::domain_error("pairs_from_assignment: assignment does not match id lists");
        const std::string &tid = treated_ids[pair.treated_index];
        const std::string &cid = control_ids[pair.control_indices[0]];
        fetch(tid, pre_period, pairs.treated_pre);
        fetch(tid, post_period, pairs.treated_post);
        fetch(cid, pre_period, pairs.control_pre);
        fetch(cid, post_period, pairs.control_post);
    }
    if (!missing.empty())
        throw ValidationError("pairs_from_assignment: missing outcomes for: " + join_ids(missing));
    return pairs;
}

}  // namespace matchdid::did
