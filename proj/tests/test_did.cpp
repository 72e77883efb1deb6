#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "matchdid/core_stats.hpp"
#include "matchdid/did.hpp"
#include "matchdid/errors.hpp"
#include "matchdid/rng.hpp"

using namespace matchdid;
using namespace matchdid::did;

namespace {

// Balanced two-period panel: one record per unit and period.
PanelDataset make_panel(const std::vector<bool> &groups,
                        const std::vector<double> &pre,
                        const std::vector<double> &post) {
    PanelDataset panel;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const std::string id = "u" + std::to_string(i);
        panel.records.push_back({id, groups[i], 0, pre[i]});
        panel.records.push_back({id, groups[i], 1, post[i]});
    }
    return panel;
}

MatchedOutcomePairs make_pairs(const std::vector<double> &tp, const std::vector<double> &tq,
                               const std::vector<double> &cp, const std::vector<double> &cq) {
    return MatchedOutcomePairs{tp, tq, cp, cq};
}

}  // namespace

TEST_CASE("group means did is the double difference") {
    // Treated moves 1141 -> 1134, controls 1022 -> 921.
    const DidEstimate d = group_means_did(1141.0, 1134.0, 1022.0, 921.0);
    CHECK(d.point == doctest::Approx(94.0));
    CHECK(d.method == "group_means");
    CHECK(std::isnan(d.se));
    CHECK(std::isnan(d.ci_low));
    CHECK(d.df == 0);

    CHECK(group_means_did(1141.0, 1134.0, 1078.0, 1042.0).point == doctest::Approx(29.0));
    CHECK_THROWS_AS(group_means_did(0.0, 1.0, 2.0, std::numeric_limits<double>::quiet_NaN()),
                    std::domain_error);
}

TEST_CASE("paired did recovers a constant effect with a degenerate interval") {
    // Every pair shows the same DID of 5, so the SE collapses to zero.
    const MatchedOutcomePairs pairs =
        make_pairs({1.0, 2.0, 3.0}, {7.0, 8.0, 9.0}, {0.0, 1.0, 0.5}, {1.0, 2.0, 1.5});
    const DidEstimate d = paired_did(pairs);
    CHECK(d.point == doctest::Approx(5.0));
    CHECK(d.se == 0.0);
    CHECK(d.ci_low == doctest::Approx(5.0));
    CHECK(d.ci_high == doctest::Approx(5.0));
    CHECK(d.df == 2);
    CHECK(d.method == "paired");
}

TEST_CASE("paired did matches a hand-computed t interval") {
    // Pair differences: 3, 1, 2, 6 -> mean 3, sd sqrt(14/3).
    const MatchedOutcomePairs pairs = make_pairs({0.0, 0.0, 0.0, 0.0}, {3.0, 1.0, 2.0, 6.0},
                                                 {0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0});
    const DidEstimate d = paired_did(pairs, 0.05);
    CHECK(d.point == doctest::Approx(3.0));
    const double se = std::sqrt(14.0 / 3.0) / 2.0;
    CHECK(d.se == doctest::Approx(se).epsilon(1e-12));
    CHECK(d.df == 3);
    const double tcrit = student_t_quantile(0.975, 3);
    CHECK(d.ci_low == doctest::Approx(3.0 - tcrit * se).epsilon(1e-10));
    CHECK(d.ci_high == doctest::Approx(3.0 + tcrit * se).epsilon(1e-10));

    // Widening alpha narrows the interval.
    const DidEstimate wide = paired_did(pairs, 0.2);
    CHECK(wide.ci_high - wide.ci_low < d.ci_high - d.ci_low);

    MatchedOutcomePairs ragged = pairs;
    ragged.control_post.pop_back();
    CHECK_THROWS_AS(paired_did(ragged), std::domain_error);
    CHECK_THROWS_AS(paired_did(make_pairs({1.0}, {2.0}, {0.0}, {0.0})), std::domain_error);
    CHECK_THROWS_AS(paired_did(pairs, 0.0), std::domain_error);
    CHECK_THROWS_AS(paired_did(pairs, 1.0), std::domain_error);
}

TEST_CASE("paired interval covers a null effect at the nominal rate") {
    // 10000 replications of 16 pairs with no effect: the 95% interval should
    // cover zero 95% of the time, within Monte Carlo slack.
    const int reps = 10000, n = 16;
    int covered = 0;
    for (int r = 0; r < reps; ++r) {
        Pcg32 rng(RngStream{424242, static_cast<std::uint64_t>(r), 0});
        MatchedOutcomePairs pairs;
        for (int i = 0; i < n; ++i) {
            pairs.treated_pre.push_back(rng.normal());
            pairs.treated_post.push_back(rng.normal());
            pairs.control_pre.push_back(rng.normal());
            pairs.control_post.push_back(rng.normal());
        }
        const DidEstimate d = paired_did(pairs);
        if (d.ci_low <= 0.0 && 0.0 <= d.ci_high) ++covered;
    }
    CHECK(std::fabs(covered / static_cast<double>(reps) - 0.95) < 0.015);
}

TEST_CASE("regression did agrees with the group means identity") {
    Pcg32 rng(RngStream{31007, 0, 0});
    const int n = 40;
    std::vector<bool> groups(n);
    std::vector<double> pre(n), post(n);
    for (int i = 0; i < n; ++i) {
        groups[i] = i < 15;
        pre[i] = rng.normal() + (groups[i] ? 0.8 : 0.0);
        post[i] = rng.normal() + (groups[i] ? 2.5 : 0.3);
    }
    const PanelDataset panel = make_panel(groups, pre, post);
    const DidEstimate reg = regression_did(panel);
    CHECK(reg.method == "regression");
    CHECK(reg.df == 2 * n - n - 1);

    double tp = 0.0, tq = 0.0, cp = 0.0, cq = 0.0;
    int nt = 0;
    for (int i = 0; i < n; ++i) {
        if (groups[i]) {
            tp += pre[i];
            tq += post[i];
            ++nt;
        } else {
            cp += pre[i];
            cq += post[i];
        }
    }
    const int nc = n - nt;
    const double gm = (tq / nt - tp / nt) - (cq / nc - cp / nc);
    CHECK(reg.point == doctest::Approx(gm).epsilon(1e-10));
    CHECK(reg.se > 0.0);
    CHECK(reg.ci_low < reg.point);
    CHECK(reg.ci_high > reg.point);
    CHECK(reg.ci_high - reg.point ==
          doctest::Approx(student_t_quantile(0.975, reg.df) * reg.se).epsilon(1e-10));
}

TEST_CASE("regression did is invariant to common shocks and unit shifts") {
    Pcg32 rng(RngStream{31008, 0, 0});
    const int n = 24;
    std::vector<bool> groups(n);
    std::vector<double> pre(n), post(n);
    for (int i = 0; i < n; ++i) {
        groups[i] = (i % 3 == 0);
        pre[i] = rng.normal();
        post[i] = rng.normal() + (groups[i] ? 1.7 : 0.0);
    }
    const DidEstimate base = regression_did(make_panel(groups, pre, post));

    // A period shock common to everyone changes nothing.
    std::vector<double> shifted_post = post;
    for (double &v : shifted_post) v += 100.0;
    const DidEstimate shocked = regression_did(make_panel(groups, pre, shifted_post));
    CHECK(shocked.point == doctest::Approx(base.point).epsilon(1e-9));
    CHECK(shocked.se == doctest::Approx(base.se).epsilon(1e-9));

    // Unit-specific constants are absorbed by the unit effects.
    std::vector<double> pre2 = pre, post2 = post;
    for (int i = 0; i < n; ++i) {
        const double c = 10.0 * i;
        pre2[i] += c;
        post2[i] += c;
    }
    const DidEstimate leveled = regression_did(make_panel(groups, pre2, post2));
    CHECK(leveled.point == doctest::Approx(base.point).epsilon(1e-9));
    CHECK(leveled.se == doctest::Approx(base.se).epsilon(1e-8));

    // Scaling outcomes scales the estimate and its SE.
    std::vector<double> pre3 = pre, post3 = post;
    for (double &v : pre3) v *= 3.0;
    for (double &v : post3) v *= 3.0;
    const DidEstimate scaled = regression_did(make_panel(groups, pre3, post3));
    CHECK(scaled.point == doctest::Approx(3.0 * base.point).epsilon(1e-9));
    CHECK(scaled.se == doctest::Approx(3.0 * base.se).epsilon(1e-9));
}

TEST_CASE("regression did rejects malformed panels") {
    PanelDataset panel = make_panel({true, true, false, false}, {1.0, 2.0, 3.0, 4.0},
                                    {2.0, 3.0, 4.0, 5.0});
    CHECK_NOTHROW(regression_did(panel));

    PanelDataset three_periods = panel;
    three_periods.records.push_back({"u0", true, 2, 9.0});
    CHECK_THROWS_AS(regression_did(three_periods), ValidationError);

    PanelDataset missing = panel;
    missing.records.pop_back();
    CHECK_THROWS_WITH_AS(regression_did(missing), doctest::Contains("u3"), ValidationError);

    PanelDataset dup = panel;
    dup.records.push_back({"u1", true, 1, 5.0});
    CHECK_THROWS_AS(regression_did(dup), ValidationError);

    PanelDataset flip = panel;
    flip.records[1].treated_group = false;  // u0 changes group between periods
    CHECK_THROWS_AS(regression_did(flip), ValidationError);

    const PanelDataset all_treated =
        make_panel({true, true}, {1.0, 2.0}, {3.0, 4.0});
    CHECK_THROWS_AS(regression_did(all_treated), ValidationError);
}

TEST_CASE("parallel trend test accepts parallel and flags divergent trends") {
    // Both groups climb by exactly 2: interaction 0, p-value 1 by symmetry of
    // a zero statistic.
    PanelDataset parallel;
    for (int i = 0; i < 6; ++i) {
        const bool g = i < 3;
        const std::string id = "u" + std::to_string(i);
        const double base = g ? 5.0 + i : 1.0 + i;
        parallel.records.push_back({id, g, 0, base});
        parallel.records.push_back({id, g, 1, base + 2.0});
    }
    const TrendTest flat = parallel_trend_test(parallel);
    CHECK(flat.estimate == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(flat.p_value == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(flat.df == 8);

    // Strongly divergent trends with tiny noise are decisively rejected.
    PanelDataset divergent;
    Pcg32 rng(RngStream{606, 0, 0});
    for (int i = 0; i < 30; ++i) {
        const bool g = i < 15;
        const std::string id = "u" + std::to_string(i);
        divergent.records.push_back({id, g, 0, 0.01 * rng.normal()});
        divergent.records.push_back({id, g, 1, (g ? 4.0 : 0.0) + 0.01 * rng.normal()});
    }
    const TrendTest diverging = parallel_trend_test(divergent);
    CHECK(diverging.estimate == doctest::Approx(4.0).epsilon(0.01));
    CHECK(diverging.p_value < 0.001);
    CHECK(diverging.t_stat > 10.0);

    // The estimate equals the group-means double difference.
    const TrendTest hand = parallel_trend_test(
        make_panel({true, true, false, false}, {1.0, 3.0, 0.0, 2.0}, {4.0, 8.0, 1.0, 3.0}));
    CHECK(hand.estimate == doctest::Approx((6.0 - 2.0) - (2.0 - 1.0)).epsilon(1e-10));
}

TEST_CASE("parallel trend test tolerates unbalanced panels but validates cells") {
    // Units observed in only one period are fine as long as every
    // group-by-period cell is populated.
    PanelDataset ragged;
    ragged.records.push_back({"a", true, 0, 1.0});
    ragged.records.push_back({"b", true, 1, 2.0});
    ragged.records.push_back({"c", false, 0, 0.5});
    ragged.records.push_back({"d", false, 1, 1.0});
    ragged.records.push_back({"e", false, 1, 1.5});
    CHECK_NOTHROW(parallel_trend_test(ragged));

    PanelDataset empty_cell = ragged;
    empty_cell.records.erase(empty_cell.records.begin());  // no treated pre
    CHECK_THROWS_AS(parallel_trend_test(empty_cell), ValidationError);

    PanelDataset dup = ragged;
    dup.records.push_back({"a", true, 0, 9.0});
    CHECK_THROWS_AS(parallel_trend_test(dup), ValidationError);

    PanelDataset third = ragged;
    third.records.push_back({"f", false, 2, 1.0});
    CHECK_THROWS_AS(parallel_trend_test(third), ValidationError);
}

TEST_CASE("parallel trend test rejects a true null about five percent of the time") {
    const int reps = 2000;
    int rejections = 0;
    for (int r = 0; r < reps; ++r) {
        Pcg32 rng(RngStream{515151, static_cast<std::uint64_t>(r), 0});
        PanelDataset panel;
        for (int i = 0; i < 20; ++i) {
            const bool g = i < 10;
            const std::string id = "u" + std::to_string(i);
            panel.records.push_back({id, g, 0, rng.normal()});
            panel.records.push_back({id, g, 1, rng.normal()});
        }
        if (parallel_trend_test(panel).p_value < 0.05) ++rejections;
    }
    CHECK(std::fabs(rejections / static_cast<double>(reps) - 0.05) < 0.02);
}

TEST_CASE("pairs from assignment join outcomes in pair order") {
    PanelDataset panel;
    const std::vector<std::string> treated_ids = {"t0", "t1"};
    const std::vector<std::string> control_ids = {"c0", "c1", "c2"};
    auto add = [&panel](const std::string &id, bool g, double pre, double post) {
        panel.records.push_back({id, g, 0, pre});
        panel.records.push_back({id, g, 1, post});
    };
    add("t0", true, 1.0, 10.0);
    add("t1", true, 2.0, 20.0);
    add("c0", false, 0.1, 0.2);
    add("c1", false, 0.3, 0.6);
    add("c2", false, 0.5, 1.0);

    matching::PairAssignment assignment;
    assignment.k = 1;
    assignment.pairs = {{0, {2}}, {1, {0}}};  // t0 -> c2, t1 -> c0
    const MatchedOutcomePairs pairs =
        pairs_from_assignment(panel, assignment, treated_ids, control_ids, 0, 1);
    REQUIRE(pairs.n_pairs() == 2);
    CHECK(pairs.treated_pre == std::vector<double>{1.0, 2.0});
    CHECK(pairs.treated_post == std::vector<double>{10.0, 20.0});
    CHECK(pairs.control_pre == std::vector<double>{0.5, 0.1});
    CHECK(pairs.control_post == std::vector<double>{1.0, 0.2});

    // The paired estimate is invariant to the order of the pairs.
    matching::PairAssignment flipped;
    flipped.k = 1;
    flipped.pairs = {{1, {0}}, {0, {2}}};
    const MatchedOutcomePairs swapped =
        pairs_from_assignment(panel, flipped, treated_ids, control_ids, 0, 1);
    CHECK(paired_did(pairs).point == doctest::Approx(paired_did(swapped).point));

    matching::PairAssignment twok;
    twok.k = 2;
    twok.pairs = {{0, {0, 1}}, {1, {2, 0}}};
    CHECK_THROWS_AS(pairs_from_assignment(panel, twok, treated_ids, control_ids, 0, 1),
                    std::domain_error);
    CHECK_THROWS_AS(pairs_from_assignment(panel, assignment, treated_ids, control_ids, 0, 0),
                    std::domain_error);

    PanelDataset sparse = panel;
    sparse.records.erase(sparse.records.begin() + 1);  // drop t0's post outcome
    CHECK_THROWS_WITH_AS(
        pairs_from_assignment(sparse, assignment, treated_ids, control_ids, 0, 1),
        doctest::Contains("t0"), ValidationError);
}
