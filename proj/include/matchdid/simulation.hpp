#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "matchdid/did.hpp"
#include "matchdid/matching.hpp"
#include "matchdid/rng.hpp"

namespace matchdid::sim {

// Analysis strategies compared by the Monte Carlo studies.
//   kNone           two-way fixed-effects DID on all units, no matching
//   kHalfCovariates 1:1 matching on the first ceil(d/2) covariates
//   kFullCovariates 1:1 matching on all covariates
//   kOutcome        1:1 matching on the pre-period outcome itself
enum class Strategy { kNone, kHalfCovariates, kFullCovariates, kOutcome };

std::string strategy_name(Strategy strategy);
Strategy strategy_from_name(const std::string &name);

// Design where treated units differ from controls in covariate levels and
// the covariates drive post-period growth: Z ~ N(mean, equicorrelation),
// treated covariate means are shifted by a factor, pre outcome is pure
// noise, and post outcome is beta'Z plus the treatment effect for treated
// units. Slopes beta are drawn uniformly per replication unless frozen.
struct CovariateShiftConfig {
    int n_treated = 32;
    int n_control = 320;
    int d = 2;
    double rho = 0.2;
    double treated_mean_factor = 1.25;  // treated covariate mean, control mean is 1
    double beta_low = 2.0;
    double beta_high = 3.0;
    double delta = 2.0;  // true treatment effect
    bool freeze_beta = false;  // one beta per master seed instead of per replication
};

// Design where treatment and an unrelated historical event share the same
// covariate-driven propensity: both are Bernoulli with
// p_i = 1 - Phi(intercept + beta'Z_i), so unmatched comparisons absorb the
// event effect delta_hist into the treatment estimate. rtm_mode adds a
// covariate-driven level beta_cov'Z_i to both periods, making the
// pre-period outcome informative about event risk (a regression-to-the-mean
// trap for outcome matching). independent_beta draws a separate slope
// vector for the event propensity.
struct EventOverlapConfig {
    int n_total = 400;
    int d = 8;
    double rho = 0.2;
    double beta_low = 0.2;
    double beta_high = 0.3;
    double intercept = 0.0;  // with the default slopes, about 9% of units are treated
    double delta_treat = -2.0;  // true treatment effect
    double delta_hist = -2.0;   // effect of the historical event
    bool rtm_mode = false;
    bool independent_beta = false;
};

using ScenarioConfig = std::variant<CovariateShiftConfig, EventOverlapConfig>;

enum class StudyKind { kCovariateShift, kEventOverlap };

// One simulated two-period study. Units are stored treated-first; draw
// order within a replication is fixed (slopes, covariates, event flags,
// pre noise, post noise) so a given stream always reproduces the same
// study. hist_impacted / true_event_probs are filled for event-overlap
// studies only.
struct SimulatedStudy {
    StudyKind kind = StudyKind::kCovariateShift;
    matching::CovariateSample sample;
    std::vector<double> pre_outcomes;
    std::vector<double> post_outcomes;
    std::vector<bool> hist_impacted;
    std::vector<double> true_event_probs;
};

// One strategy's estimate on one study.
struct StrategyResult {
    Strategy strategy = Strategy::kNone;
    did::DidEstimate estimate;
    bool covered = false;      // CI contains the true effect
    double ci_length = 0.0;
};

// One strategy summarized across replications.
struct ReplicationSummary {
    Strategy strategy = Strategy::kNone;
    int n_reps = 0;
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    double mad_scaled = 0.0;
    double coverage = 0.0;
    double mean_ci_length = 0.0;
};

// Decomposition of the matched estimator's event-exposure imbalance:
// mean(H - p) over matched treated units, the same over matched controls,
// and mean(p_treated - p_control) over pairs. The expected bias of the
// matched DID is delta_hist times (term_treated - term_control), and the
// systematic part of that gap is term_prob_gap.
struct BiasDecomposition {
    double term_treated = 0.0;
    double term_control = 0.0;
    double term_prob_gap = 0.0;
};

SimulatedStudy gen_covariate_shift(const CovariateShiftConfig &cfg, const RngStream &stream);

// Throws std::runtime_error if 10 successive sub-streams fail to produce at
// least one treated and one control unit.
SimulatedStudy gen_event_overlap(const EventOverlapConfig &cfg, const RngStream &stream);

// Finds the propensity intercept for which the expected treated fraction
// equals target (to within +/- 0.005), by bisection against a fixed set of
// common random draws. target must lie in (0, 0.9).
double calibrate_intercept(const EventOverlapConfig &cfg, double target_treated_fraction,
                           const RngStream &stream);

// Finds the multiplier on the slope range [beta_low, beta_high] for which
// the expected treated fraction equals target (to within +/- 0.005), with
// the intercept held fixed. Unlike an intercept shift, shrinking the slopes
// reaches a higher treated fraction while *narrowing* the propensity
// distribution, so treated and control propensities overlap more and
// matching has more close controls to choose from. target must lie in
// (0, 0.9) and below the zero-slope fraction.
double calibrate_slope_scale(const EventOverlapConfig &cfg, double target_treated_fraction,
                             const RngStream &stream);

// Runs one analysis strategy on one study: builds the matched pairs (if
// any), estimates the effect, and scores CI coverage of true_effect.
StrategyResult run_strategy(const SimulatedStudy &study, Strategy strategy, double true_effect,
                            double alpha = 0.05);

// Replicated experiment: replication r draws its study from stream
// (master_seed, r), runs every strategy on it, and the per-strategy results
// are summarized across replications. Results do not depend on execution
// order; any failure aborts with the replication index and strategy in the
// message.
std::vector<ReplicationSummary> monte_carlo(const ScenarioConfig &scenario,
                                            const std::vector<Strategy> &strategies, int n_reps,
                                            std::uint64_t master_seed);

// Event-exposure balance of a 1:k assignment on an event-overlap study.
BiasDecomposition bias_decomposition(const SimulatedStudy &study,
                                     const matching::PairAssignment &assignment);

}  // namespace matchdid::sim
