#include "matchdid/simulation.hpp"

#include <cmath>
#include <stdexcept>

#include "matchdid/core_stats.hpp"
#include "matchdid/errors.hpp"

namespace matchdid::sim {

namespace {

// Salt for the one-off slope draw used when freeze_beta is set; chosen to
// be outside anything substream() can produce from small salts.
constexpr std::uint64_t kFrozenBetaSalt = 0xF5EEBE7A5A1Full;

std::vector<double> draw_uniforms(Pcg32 &rng, int d, double lo, double hi) {
    std::vector<double> out(d);
    for (int j = 0; j < d; ++j) out[j] = rng.uniform(lo, hi);
    return out;
}

double dot_row(const Matrix &m, int row, const std::vector<double> &v) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(row, j) * v[j];
    return s;
}

void validate_common(int d, double rho, double beta_low, double beta_high, const char *where) {
    if (d < 1) throw std::domain_error(std::string(where) + ": d must be at least 1");
    if (!(beta_low <= beta_high) || !std::isfinite(beta_low) || !std::isfinite(beta_high))
        throw std::domain_error(std::string(where) + ": invalid slope range");
    equicorrelation_matrix(d, rho);  // validates rho for this dimension
}

}  // namespace

std::string strategy_name(Strategy strategy) {
    switch (strategy) {
        case Strategy::kNone: return "none";
        case Strategy::kHalfCovariates: return "half";
        case Strategy::kFullCovariates: return "full";
        case Strategy::kOutcome: return "outcome";
    }
    throw std::domain_error("strategy_name: unknown strategy");
}

Strategy strategy_from_name(const std::string &name) {
    if (name == "none") return Strategy::kNone;
    if (name == "half") return Strategy::kHalfCovariates;
    if (name == "full") return Strategy::kFullCovariates;
    if (name == "outcome") return Strategy::kOutcome;
    throw std::domain_error("strategy_from_name: unknown strategy '" + name + "'");
}

SimulatedStudy gen_covariate_shift(const CovariateShiftConfig &cfg, const RngStream &stream) {
    validate_common(cfg.d, cfg.rho, cfg.beta_low, cfg.beta_high, "gen_covariate_shift");
    if (cfg.n_treated < 1 || cfg.n_control < 1)
        throw std::domain_error("gen_covariate_shift: both groups need at least one unit");
    if (!std::isfinite(cfg.delta) || !std::isfinite(cfg.treated_mean_factor))
        throw std::domain_error("gen_covariate_shift: non-finite parameter");

    Pcg32 rng(stream);
    std::vector<double> beta;
    if (cfg.freeze_beta) {
        // Same slopes for every replication of a master seed: keyed by the
        // seed only, independent of stream_id.
        Pcg32 beta_rng(RngStream{stream.seed, 0, kFrozenBetaSalt});
        beta = draw_uniforms(beta_rng, cfg.d, cfg.beta_low, cfg.beta_high);
    } else {
        beta = draw_uniforms(rng, cfg.d, cfg.beta_low, cfg.beta_high);
    }

    const Matrix sigma = equicorrelation_matrix(cfg.d, cfg.rho);
    const Matrix z_control =
        mvn_sample(rng, std::vector<double>(cfg.d, 1.0), sigma, cfg.n_control);
    const Matrix z_treated = mvn_sample(
        rng, std::vector<double>(cfg.d, cfg.treated_mean_factor), sigma, cfg.n_treated);

    const int n = cfg.n_treated + cfg.n_control;
    SimulatedStudy study;
    study.kind = StudyKind::kCovariateShift;
    study.sample.covariates = Matrix(n, cfg.d);
    study.sample.treated.assign(n, false);
    study.sample.unit_ids.resize(n);
    for (int i = 0; i < cfg.n_treated; ++i) {
        for (int j = 0; j < cfg.d; ++j) study.sample.covariates(i, j) = z_treated(i, j);
        study.sample.treated[i] = true;
        study.sample.unit_ids[i] = "t" + std::to_string(i);
    }
    for (int i = 0; i < cfg.n_control; ++i) {
        const int row = cfg.n_treated + i;
        for (int j = 0; j < cfg.d; ++j) study.sample.covariates(row, j) = z_control(i, j);
        study.sample.unit_ids[row] = "c" + std::to_string(i);
    }
    study.sample.covariate_names.resize(cfg.d);
    for (int j = 0; j < cfg.d; ++j) study.sample.covariate_names[j] = "z" + std::to_string(j + 1);

    study.pre_outcomes.resize(n);
    for (int i = 0; i < n; ++i) study.pre_outcomes[i] = rng.normal();
    study.post_outcomes.resize(n);
    for (int i = 0; i < n; ++i) {
        const double growth = dot_row(study.sample.covariates, i, beta);
        study.post_outcomes[i] =
            growth + (study.sample.treated[i] ? cfg.delta : 0.0) + rng.normal();
    }
    return study;
}

SimulatedStudy gen_event_overlap(const EventOverlapConfig &cfg, const RngStream &stream) {
    validate_common(cfg.d, cfg.rho, cfg.beta_low, cfg.beta_high, "gen_event_overlap");
    if (cfg.n_total < 50) throw std::domain_error("gen_event_overlap: n_total must be at least 50");
    if (!std::isfinite(cfg.intercept) || !std::isfinite(cfg.delta_treat) ||
        !std::isfinite(cfg.delta_hist))
        throw std::domain_error("gen_event_overlap: non-finite parameter");

    const Matrix sigma = equicorrelation_matrix(cfg.d, cfg.rho);
    const int n = cfg.n_total;
    constexpr int kMaxAttempts = 10;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Pcg32 rng(attempt == 0 ? stream : stream.substream(attempt));
        const std::vector<double> beta = draw_uniforms(rng, cfg.d, cfg.beta_low, cfg.beta_high);
        const std::vector<double> beta_hist =
            cfg.independent_beta ? draw_uniforms(rng, cfg.d, cfg.beta_low, cfg.beta_high) : beta;
        const std::vector<double> beta_cov =
            cfg.rtm_mode ? draw_uniforms(rng, cfg.d, cfg.beta_low, cfg.beta_high)
                         : std::vector<double>();

        const Matrix z = mvn_sample(rng, std::vector<double>(cfg.d, 1.0), sigma, n);

        std::vector<double> p_treat(n), p_hist(n);
        for (int i = 0; i < n; ++i) {
            p_treat[i] = 1.0 - std_normal_cdf(cfg.intercept + dot_row(z, i, beta));
            p_hist[i] = cfg.independent_beta
                            ? 1.0 - std_normal_cdf(cfg.intercept + dot_row(z, i, beta_hist))
                            : p_treat[i];
        }
        std::vector<bool> treated(n), impacted(n);
        int n_treated = 0;
        for (int i = 0; i < n; ++i) {
            treated[i] = rng.bernoulli(p_treat[i]);
            n_treated += treated[i] ? 1 : 0;
        }
        for (int i = 0; i < n; ++i) impacted[i] = rng.bernoulli(p_hist[i]);
        if (n_treated == 0 || n_treated == n) continue;  // degenerate; try a sub-stream

        SimulatedStudy study;
        study.kind = StudyKind::kEventOverlap;
        study.sample.covariates = z;
        study.sample.treated = treated;
        study.sample.unit_ids.resize(n);
        for (int i = 0; i < n; ++i) study.sample.unit_ids[i] = "u" + std::to_string(i);
        study.sample.covariate_names.resize(cfg.d);
        for (int j = 0; j < cfg.d; ++j)
            study.sample.covariate_names[j] = "z" + std::to_string(j + 1);
        study.hist_impacted = impacted;
        study.true_event_probs = p_hist;

        study.pre_outcomes.resize(n);
        study.post_outcomes.resize(n);
        std::vector<double> level(n, 0.0);
        if (cfg.rtm_mode)
            for (int i = 0; i < n; ++i) level[i] = dot_row(z, i, beta_cov);
        for (int i = 0; i < n; ++i) study.pre_outcomes[i] = level[i] + rng.normal();
        for (int i = 0; i < n; ++i)
            study.post_outcomes[i] = level[i] + (impacted[i] ? cfg.delta_hist : 0.0) +
                                     (treated[i] ? cfg.delta_treat : 0.0) + rng.normal();
        return study;
    }
    throw std::runtime_error(
        "gen_event_overlap: no non-degenerate treatment draw in " +
        std::to_string(kMaxAttempts) + " attempts; check the intercept");
}

double calibrate_intercept(const EventOverlapConfig &cfg, double target_treated_fraction,
                           const RngStream &stream) {
    validate_common(cfg.d, cfg.rho, cfg.beta_low, cfg.beta_high, "calibrate_intercept");
    if (!(target_treated_fraction > 0.0 && target_treated_fraction < 0.9))
        throw std::domain_error("calibrate_intercept: target must lie in (0, 0.9)");

    // Common random draws of s = beta'Z; the expected treated fraction at
    // intercept c is then estimated by mean Phi(-(c + s)), monotone in c.
    constexpr int kDraws = 100000;
    const Matrix l = cholesky_lower(equicorrelation_matrix(cfg.d, cfg.rho));
    Pcg32 rng(stream);
    std::vector<double> s(kDraws);
    std::vector<double> zraw(cfg.d), beta(cfg.d);
    for (int b = 0; b < kDraws; ++b) {
        for (int j = 0; j < cfg.d; ++j) beta[j] = rng.uniform(cfg.beta_low, cfg.beta_high);
        for (int j = 0; j < cfg.d; ++j) zraw[j] = rng.normal();
        double acc = 0.0;
        for (int j = 0; j < cfg.d; ++j) {
            double zj = 1.0;
            for (int m = 0; m <= j; ++m) zj += l(j, m) * zraw[m];
            acc += beta[j] * zj;
        }
        s[b] = acc;
    }
    const auto fraction_at = [&](double c) {
        double acc = 0.0;
        for (double v : s) acc += std_normal_cdf(-(c + v));
        return acc / kDraws;
    };

    double lo = -20.0, hi = 20.0;
    if (!(fraction_at(lo) >= target_treated_fraction &&
          fraction_at(hi) <= target_treated_fraction))
        throw std::domain_error("calibrate_intercept: target fraction not reachable");
    for (int iter = 0; iter < 100 && hi - lo > 1e-10; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (fraction_at(mid) >= target_treated_fraction)
            lo = mid;
        else
            hi = mid;
    }
    const double c = 0.5 * (lo + hi);
    if (std::fabs(fraction_at(c) - target_treated_fraction) > 0.005)
        throw std::runtime_error("calibrate_intercept: bisection failed to reach the target");
    return c;
}

double calibrate_slope_scale(const EventOverlapConfig &cfg, double target_treated_fraction,
                             const RngStream &stream) {
    validate_common(cfg.d, cfg.rho, cfg.beta_low, cfg.beta_high, "calibrate_slope_scale");
    if (!(target_treated_fraction > 0.0 && target_treated_fraction < 0.9))
        throw std::domain_error("calibrate_slope_scale: target must lie in (0, 0.9)");

    // Common random draws of t = beta'Z; the expected treated fraction at
    // slope scale s is then estimated by mean Phi(-(c + s t)), which is
    // monotone decreasing in s whenever the mean of t is positive.
    constexpr int kDraws = 100000;
    const Matrix l = cholesky_lower(equicorrelation_matrix(cfg.d, cfg.rho));
    Pcg32 rng(stream);
    std::vector<double> t(kDraws);
    std::vector<double> zraw(cfg.d), beta(cfg.d);
    for (int b = 0; b < kDraws; ++b) {
        for (int j = 0; j < cfg.d; ++j) beta[j] = rng.uniform(cfg.beta_low, cfg.beta_high);
        for (int j = 0; j < cfg.d; ++j) zraw[j] = rng.normal();
        double acc = 0.0;
        for (int j = 0; j < cfg.d; ++j) {
            double zj = 1.0;
            for (int m = 0; m <= j; ++m) zj += l(j, m) * zraw[m];
            acc += beta[j] * zj;
        }
        t[b] = acc;
    }
    const auto fraction_at = [&](double s) {
        double acc = 0.0;
        for (double v : t) acc += std_normal_cdf(-(cfg.intercept + s * v));
        return acc / kDraws;
    };

    double lo = 0.0, hi = 8.0;
    if (!(fraction_at(lo) >= target_treated_fraction &&
          fraction_at(hi) <= target_treated_fraction))
        throw std::domain_error(
            "calibrate_slope_scale: target fraction not reachable by scaling the slopes");
    for (int iter = 0; iter < 100 && hi - lo > 1e-10; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (fraction_at(mid) >= target_treated_fraction)
            lo = mid;
        else
            hi = mid;
    }
    const double s = 0.5 * (lo + hi);
    if (std::fabs(fraction_at(s) - target_treated_fraction) > 0.005)
        throw std::runtime_error("calibrate_slope_scale: bisection failed to reach the target");
    return s;
}

StrategyResult run_strategy(const SimulatedStudy &study, Strategy strategy, double true_effect,
                            double alpha) {
    if (!std::isfinite(true_effect))
        throw std::domain_error("run_strategy: non-finite true effect");
    const int n = study.sample.n();
    if (static_cast<int>(study.pre_outcomes.size()) != n ||
        static_cast<int>(study.post_outcomes.size()) != n)
        throw std::domain_error("run_strategy: outcomes do not match the sample");

    StrategyResult result;
    result.strategy = strategy;

    if (strategy == Strategy::kNone) {
        did::PanelDataset panel;
        panel.records.reserve(2 * static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            panel.records.push_back({study.sample.unit_ids[i], study.sample.treated[i] == true, 0,
                                     study.pre_outcomes[i]});
            panel.records.push_back({study.sample.unit_ids[i], study.sample.treated[i] == true, 1,
                                     study.post_outcomes[i]});
        }
        result.estimate = did::regression_did(panel, alpha);
    } else {
        const auto treated_rows = study.sample.treated_indices();
        const auto control_rows = study.sample.control_indices();
        matching::DistanceMatrix dist;
        if (strategy == Strategy::kOutcome) {
            std::vector<double> pre_treated, pre_control;
            for (int i : treated_rows) pre_treated.push_back(study.pre_outcomes[i]);
            for (int i : control_rows) pre_control.push_back(study.pre_outcomes[i]);
            dist = matching::outcome_distances(pre_treated, pre_control);
        } else {
            const int m = strategy == Strategy::kHalfCovariates ? (study.sample.d() + 1) / 2
                                                                : study.sample.d();
            const matching::CovariateSample sub = study.sample.with_columns(m);
            const matching::PropensityModel model = matching::logistic_fit(sub);
            if (study.kind == StudyKind::kCovariateShift) {
                dist = matching::rank_mahalanobis_distances(sub);
                dist = matching::apply_caliper(dist, model, sub);
            } else {
                dist = matching::propensity_distances(model, sub);
            }
        }
        const matching::PairAssignment assignment = matching::optimal_match(dist, 1);

        did::MatchedOutcomePairs pairs;
        for (const auto &pair : assignment.pairs) {
            const int it = treated_rows[pair.treated_index];
            const int ic = control_rows[pair.control_indices[0]];
            pairs.treated_pre.push_back(study.pre_outcomes[it]);
            pairs.treated_post.push_back(study.post_outcomes[it]);
            pairs.control_pre.push_back(study.pre_outcomes[ic]);
            pairs.control_post.push_back(study.post_outcomes[ic]);
        }
        result.estimate = did::paired_did(pairs, alpha);
    }

    result.covered = result.estimate.ci_low <= true_effect && true_effect <= result.estimate.ci_high;
    result.ci_length = result.estimate.ci_high - result.estimate.ci_low;
    return result;
}

std::vector<ReplicationSummary> monte_carlo(const ScenarioConfig &scenario,
                                            const std::vector<Strategy> &strategies, int n_reps,
                                            std::uint64_t master_seed) {
    if (n_reps < 2) throw std::domain_error("monte_carlo: need at least two replications");
    if (strategies.empty()) throw std::domain_error("monte_carlo: no strategies given");

    const double true_effect = std::visit(
        [](const auto &cfg) {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, CovariateShiftConfig>)
                return cfg.delta;
            else
                return cfg.delta_treat;
        },
        scenario);

    const std::size_t n_strategies = strategies.size();
    std::vector<std::vector<double>> points(n_strategies);
    std::vector<std::vector<double>> lengths(n_strategies);
    std::vector<int> covered(n_strategies, 0);
    for (auto &v : points) v.reserve(n_reps);
    for (auto &v : lengths) v.reserve(n_reps);

    for (int r = 0; r < n_reps; ++r) {
        const RngStream stream{master_seed, static_cast<std::uint64_t>(r), 0};
        SimulatedStudy study;
        try {
            study = std::visit(
                [&](const auto &cfg) {
                    using T = std::decay_t<decltype(cfg)>;
                    if constexpr (std::is_same_v<T, CovariateShiftConfig>)
                        return gen_covariate_shift(cfg, stream);
                    else
                        return gen_event_overlap(cfg, stream);
                },
                scenario);
        } catch (const std::exception &e) {
            throw std::runtime_error("monte_carlo: replication " + std::to_string(r) +
                                     " failed to generate: " + e.what());
        }
        for (std::size_t s = 0; s < n_strategies; ++s) {
            try {
                const StrategyResult res = run_strategy(study, strategies[s], true_effect);
                points[s].push_back(res.estimate.point);
                lengths[s].push_back(res.ci_length);
                covered[s] += res.covered ? 1 : 0;
            } catch (const std::exception &e) {
                throw std::runtime_error("monte_carlo: replication " + std::to_string(r) +
                                         ", strategy " + strategy_name(strategies[s]) +
                                         " failed: " + e.what());
            }
        }
    }

    std::vector<ReplicationSummary> out(n_strategies);
    for (std::size_t s = 0; s < n_strategies; ++s) {
        const SummaryStats stats = summary_stats(points[s]);
        out[s].strategy = strategies[s];
        out[s].n_reps = n_reps;
        out[s].mean = stats.mean;
        out[s].sd = stats.sd;
        out[s].median = stats.median;
        out[s].mad_scaled = stats.mad_scaled;
        out[s].coverage = static_cast<double>(covered[s]) / n_reps;
        out[s].mean_ci_length = mean_of(lengths[s]);
    }
    return out;
}

BiasDecomposition bias_decomposition(const SimulatedStudy &study,
                                     const matching::PairAssignment &assignment) {
    if (study.kind != StudyKind::kEventOverlap || study.true_event_probs.empty())
        throw std::domain_error(
            "bias_decomposition: needs an event-overlap study with event probabilities");
    if (assignment.pairs.empty())
        throw std::domain_error("bias_decomposition: empty assignment");
    const auto treated_rows = study.sample.treated_indices();
    const auto control_rows = study.sample.control_indices();

    BiasDecomposition out;
    int n_pairs = 0;
    int n_controls = 0;
    for (const auto &pair : assignment.pairs) {
        if (pair.treated_index < 0 || pair.treated_index >= static_cast<int>(treated_rows.size()))
            throw std::domain_error("bias_decomposition: assignment does not match study");
        const int it = treated_rows[pair.treated_index];
        out.term_treated +=
            (study.hist_impacted[it] ? 1.0 : 0.0) - study.true_event_probs[it];
        ++n_pairs;
        for (int c : pair.control_indices) {
            if (c < 0 || c >= static_cast<int>(control_rows.size()))
                throw std::domain_error("bias_decomposition: assignment does not match study");
            const int ic = control_rows[c];
            out.term_control +=
                (study.hist_impacted[ic] ? 1.0 : 0.0) - study.true_event_probs[ic];
            out.term_prob_gap += study.true_event_probs[it] - study.true_event_probs[ic];
            ++n_controls;
        }
    }
    out.term_treated /= n_pairs;
    out.term_control /= n_controls;
    out.term_prob_gap /= n_controls;
    return out;
}

}  // namespace matchdid::sim
