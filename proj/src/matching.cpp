#include "matchdid/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "matchdid/errors.hpp"

namespace matchdid::matching {

namespace {

void validate_sample(const CovariateSample &sample, const char *where) {
    const int n = sample.n();
    if (n < 1 || sample.d() < 1)
        throw std::domain_error(std::string(where) + ": sample must have units and covariates");
    if (static_cast<int>(sample.treated.size()) != n)
        throw std::domain_error(std::string(where) + ": treated flags do not match unit count");
    if (static_cast<int>(sample.unit_ids.size()) != n)
        throw std::domain_error(std::string(where) + ": unit ids do not match unit count");
    if (static_cast<int>(sample.covariate_names.size()) != sample.d())
        throw std::domain_error(std::string(where) + ": covariate names do not match columns");
    if (!sample.covariates.all_finite())
        throw std::domain_error(std::string(where) + ": non-finite covariate");
}

void require_both_groups(const CovariateSample &sample, const char *where) {
    if (sample.n_treated() < 1 || sample.n_control() < 1)
        throw std::domain_error(std::string(where) + ": both treated and control units required");
}

// Minimum-cost rectangular assignment (rows <= cols) by shortest augmenting
// paths with dual potentials. Runs one augmentation phase per row; each
// phase is a Dijkstra-like scan over columns, O(rows * cols) typical and
// O(rows^2 * cols) worst case overall.
std::vector<int> solve_rectangular_assignment(const Matrix &cost) {
    const int r = cost.rows();
    const int c = cost.cols();
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; p[j] is the row matched to column j (0 = free), and
    // column 0 is a virtual anchor holding the row being inserted.
    std::vector<double> u(r + 1, 0.0), v(c + 1, 0.0), minv(c + 1);
    std::vector<int> p(c + 1, 0), way(c + 1, 0);
    std::vector<char> used(c + 1);
    for (int i = 1; i <= r; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), char(0));
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            const double ui0 = u[i0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= c; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - ui0 - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= c; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        // Walk the augmenting path backwards, flipping matched edges.
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> col_of_row(r, -1);
    for (int j = 1; j <= c; ++j)
        if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
    return col_of_row;
}

// Rank check on the design via a throwaway least-squares pass; throws
// SingularityError naming the offending column.
void require_full_rank(const Matrix &design, const std::vector<std::string> &names) {
    ols_fit(design, std::vector<double>(design.rows(), 0.0), names);
}

struct LogisticState {
    std::vector<double> beta;
    double loglik = 0.0;
    bool converged = false;
};

double logistic_loglik(const Matrix &x, const std::vector<bool> &y, const std::vector<double> &beta,
                       std::vector<double> &eta) {
    const int n = x.rows();
    const int p = x.cols();
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        double e = 0.0;
        for (int j = 0; j < p; ++j) e += x(i, j) * beta[j];
        eta[i] = e;
        // log(1 + exp(e)) computed without overflow on either side.
        const double log1pexp = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += (y[i] ? e : 0.0) - log1pexp;
    }
    return ll;
}

// Newton iteration with step halving on the (optionally L2-penalized)
// logistic likelihood. The penalty applies to slopes only, never the
// intercept.
LogisticState logistic_newton(const Matrix &x, const std::vector<bool> &y, double lambda,
                              int max_iter) {
    const int n = x.rows();
    const int p = x.cols();
    LogisticState st;
    st.beta.assign(p, 0.0);
    std::vector<double> eta(n), prob(n), grad(p), delta(p), trial(p), eta_trial(n);
    st.loglik = logistic_loglik(x, y, st.beta, eta);
    for (int iter = 0; iter < max_iter; ++iter) {
        for (int i = 0; i < n; ++i) prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            const double resid = (y[i] ? 1.0 : 0.0) - prob[i];
            for (int j = 0; j < p; ++j) grad[j] += x(i, j) * resid;
        }
        for (int j = 1; j < p; ++j) grad[j] -= lambda * st.beta[j];
        double gnorm = 0.0;
        for (int j = 0; j < p; ++j) gnorm += grad[j] * grad[j];
        if (std::sqrt(gnorm) < 1e-8) {
            st.converged = true;
            return st;
        }
        Matrix hess(p, p, 0.0);
        for (int i = 0; i < n; ++i) {
            const double w = std::max(prob[i] * (1.0 - prob[i]), 1e-10);
            for (int j = 0; j < p; ++j) {
                const double wx = w * x(i, j);
                for (int m = j; m < p; ++m) hess(j, m) += wx * x(i, m);
            }
        }
        for (int j = 0; j < p; ++j)
            for (int m = 0; m < j; ++m) hess(j, m) = hess(m, j);
        for (int j = 1; j < p; ++j) hess(j, j) += lambda;

        Matrix l;
        try {
            l = cholesky_lower(hess);
        } catch (const DecompositionError &) {
            return st;  // not converged; caller decides what to do
        }
        // Solve (L L') delta = grad.
        for (int j = 0; j < p; ++j) {
            double s = grad[j];
            for (int m = 0; m < j; ++m) s -= l(j, m) * delta[m];
            delta[j] = s / l(j, j);
        }
        for (int j = p - 1; j >= 0; --j) {
            double s = delta[j];
            for (int m = j + 1; m < p; ++m) s -= l(m, j) * delta[m];
            delta[j] = s / l(j, j);
        }
        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            for (int j = 0; j < p; ++j) trial[j] = st.beta[j] + scale * delta[j];
            double ll = logistic_loglik(x, y, trial, eta_trial);
            for (int j = 1; j < p; ++j) ll -= 0.5 * lambda * trial[j] * trial[j];
            if (ll > st.loglik - 1e-12) {
                st.beta = trial;
                st.loglik = ll;
                eta = eta_trial;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) return st;  // stalled
    }
    return st;
}

double median_of_matrix(const Matrix &m) {
    std::vector<double> flat(m.data());
    return median_of(std::move(flat));
}

}  // namespace

int CovariateSample::n_treated() const {
    int k = 0;
    for (bool t : treated) k += t ? 1 : 0;
    return k;
}

int CovariateSample::n_control() const { return n() - n_treated(); }

std::vector<int> CovariateSample::treated_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < n(); ++i)
        if (treated[i]) idx.push_back(i);
    return idx;
}

std::vector<int> CovariateSample::control_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < n(); ++i)
        if (!treated[i]) idx.push_back(i);
    return idx;
}

CovariateSample CovariateSample::with_columns(int m) const {
    if (m < 1 || m > d())
        throw std::domain_error("CovariateSample::with_columns: column count out of range");
    CovariateSample out;
    out.covariates = Matrix(n(), m);
    for (int i = 0; i < n(); ++i)
        for (int j = 0; j < m; ++j) out.covariates(i, j) = covariates(i, j);
    out.treated = treated;
    out.unit_ids = unit_ids;
    out.covariate_names.assign(covariate_names.begin(), covariate_names.begin() + m);
    return out;
}

PropensityModel logistic_fit(const CovariateSample &sample) {
    validate_sample(sample, "logistic_fit");
    require_both_groups(sample, "logistic_fit");
    const int n = sample.n();
    const int d = sample.d();
    if (n < d + 2) throw std::domain_error("logistic_fit: need more units than coefficients");

    Matrix x(n, d + 1, 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j + 1) = sample.covariates(i, j);
    std::vector<std::string> names;
    names.reserve(d + 1);
    names.emplace_back("intercept");
    for (const auto &c : sample.covariate_names) names.push_back(c);
    require_full_rank(x, names);

    PropensityModel model;
    LogisticState st = logistic_newton(x, sample.treated, 0.0, 100);
    // Under separation the iteration can also "converge" spuriously: once
    // every probability saturates to exactly 0 or 1 the gradient vanishes,
    // leaving arbitrary huge coefficients. A linear predictor beyond +/- 30
    // (probability within 1e-13 of the boundary) only happens on that
    // divergent path, so treat it the same as non-convergence.
    bool saturated = false;
    if (st.converged) {
        std::vector<double> eta(n);
        logistic_loglik(x, sample.treated, st.beta, eta);
        for (double e : eta) saturated = saturated || std::fabs(e) > 30.0;
    }
    if (!st.converged || saturated) {
        // Likely separation: the unpenalized optimum is at infinity. Refit
        // with a weak ridge penalty, which always has a finite optimum.
        st = logistic_newton(x, sample.treated, 1e-4 * n, 200);
        if (!st.converged)
            throw std::runtime_error("logistic_fit: penalized fit failed to converge");
        model.ridge_fallback = true;
    }
    model.coefficients = st.beta;
    model.logit_scores.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double e = 0.0;
        for (int j = 0; j <= d; ++j) e += x(i, j) * st.beta[j];
        model.logit_scores[i] = e;
    }
    model.caliper_width = 0.2 * sd_of(model.logit_scores);
    return model;
}

DistanceMatrix rank_mahalanobis_distances(const CovariateSample &sample) {
    validate_sample(sample, "rank_mahalanobis_distances");
    require_both_groups(sample, "rank_mahalanobis_distances");
    const int n = sample.n();
    const int d = sample.d();
    if (n < 2) throw std::domain_error("rank_mahalanobis_distances: need at least two units");

    const Matrix ranks = rank_transform(sample.covariates);
    std::vector<double> colmean(d, 0.0);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) colmean[j] += ranks(i, j);
        colmean[j] /= n;
    }
    Matrix cov(d, d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double rj = ranks(i, j) - colmean[j];
            for (int m = j; m < d; ++m) cov(j, m) += rj * (ranks(i, m) - colmean[m]);
        }
    for (int j = 0; j < d; ++j)
        for (int m = j; m < d; ++m) {
            cov(j, m) /= (n - 1);
            cov(m, j) = cov(j, m);
        }

    // Rescale so each diagonal equals the variance of untied ranks; this
    // keeps one heavily tied covariate from dominating the metric while
    // preserving the correlation structure.
    const double target = (static_cast<double>(n) * n - 1.0) / 12.0;
    std::vector<double> scale(d, 0.0);
    for (int j = 0; j < d; ++j) {
        if (cov(j, j) <= 1e-12 * target)
            throw SingularityError("rank_mahalanobis_distances: covariate '" +
                                   sample.covariate_names[j] + "' is constant");
        scale[j] = std::sqrt(target / cov(j, j));
    }
    for (int j = 0; j < d; ++j)
        for (int m = 0; m < d; ++m) cov(j, m) *= scale[j] * scale[m];

    Matrix l;
    try {
        l = cholesky_lower(cov);
    } catch (const DecompositionError &) {
        throw SingularityError(
            "rank_mahalanobis_distances: covariates are collinear after rank transform");
    }
    // Exact collinearity can survive the factorization when rounding leaves
    // a pivot at ~1e-16 instead of zero; treat such pivots as singular too,
    // or the inverse blows the distances up by ~1e8.
    for (int j = 0; j < d; ++j)
        if (l(j, j) <= 1e-6 * std::sqrt(target))
            throw SingularityError(
                "rank_mahalanobis_distances: covariates are collinear after rank transform");

    DistanceMatrix out;
    out.treated_rows = sample.treated_indices();
    out.control_rows = sample.control_indices();
    out.distances = Matrix(static_cast<int>(out.treated_rows.size()),
                           static_cast<int>(out.control_rows.size()));
    std::vector<double> w(d);
    for (std::size_t t = 0; t < out.treated_rows.size(); ++t) {
        const int it = out.treated_rows[t];
        for (std::size_t c = 0; c < out.control_rows.size(); ++c) {
            const int ic = out.control_rows[c];
            for (int j = 0; j < d; ++j) {
                double s = ranks(it, j) - ranks(ic, j);
                for (int m = 0; m < j; ++m) s -= l(j, m) * w[m];
                w[j] = s / l(j, j);
            }
            double q = 0.0;
            for (int j = 0; j < d; ++j) q += w[j] * w[j];
            out.distances(static_cast<int>(t), static_cast<int>(c)) = std::sqrt(q);
        }
    }
    return out;
}

DistanceMatrix propensity_distances(const PropensityModel &model, const CovariateSample &sample) {
    validate_sample(sample, "propensity_distances");
    require_both_groups(sample, "propensity_distances");
    if (static_cast<int>(model.logit_scores.size()) != sample.n())
        throw std::domain_error("propensity_distances: model was not fitted on this sample");
    DistanceMatrix out;
    out.treated_rows = sample.treated_indices();
    out.control_rows = sample.control_indices();
    out.distances = Matrix(static_cast<int>(out.treated_rows.size()),
                           static_cast<int>(out.control_rows.size()));
    for (std::size_t t = 0; t < out.treated_rows.size(); ++t) {
        const double lt = model.logit_scores[out.treated_rows[t]];
        for (std::size_t c = 0; c < out.control_rows.size(); ++c)
            out.distances(static_cast<int>(t), static_cast<int>(c)) =
                std::fabs(lt - model.logit_scores[out.control_rows[c]]);
    }
    return out;
}

DistanceMatrix outcome_distances(const std::vector<double> &treated_outcomes,
                                 const std::vector<double> &control_outcomes) {
    if (treated_outcomes.empty() || control_outcomes.empty())
        throw std::domain_error("outcome_distances: both groups need at least one unit");
    for (double v : treated_outcomes)
        if (!std::isfinite(v)) throw std::domain_error("outcome_distances: non-finite outcome");
    for (double v : control_outcomes)
        if (!std::isfinite(v)) throw std::domain_error("outcome_distances: non-finite outcome");
    DistanceMatrix out;
    out.treated_rows.resize(treated_outcomes.size());
    out.control_rows.resize(control_outcomes.size());
    for (std::size_t i = 0; i < treated_outcomes.size(); ++i)
        out.treated_rows[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < control_outcomes.size(); ++i)
        out.control_rows[i] = static_cast<int>(i);
    out.distances = Matrix(static_cast<int>(treated_outcomes.size()),
                           static_cast<int>(control_outcomes.size()));
    for (std::size_t t = 0; t < treated_outcomes.size(); ++t)
        for (std::size_t c = 0; c < control_outcomes.size(); ++c)
            out.distances(static_cast<int>(t), static_cast<int>(c)) =
                std::fabs(treated_outcomes[t] - control_outcomes[c]);
    return out;
}

DistanceMatrix apply_caliper(const DistanceMatrix &dist, const PropensityModel &model,
                             const CovariateSample &sample, double penalty_scale) {
    if (!(penalty_scale >= 0.0) || !std::isfinite(penalty_scale))
        throw std::domain_error("apply_caliper: penalty_scale must be non-negative and finite");
    if (static_cast<int>(model.logit_scores.size()) != sample.n())
        throw std::domain_error("apply_caliper: model was not fitted on this sample");
    const auto treated_rows = sample.treated_indices();
    const auto control_rows = sample.control_indices();
    if (treated_rows != dist.treated_rows || control_rows != dist.control_rows)
        throw std::domain_error("apply_caliper: distance matrix does not match sample");

    DistanceMatrix out = dist;
    const double width = model.caliper_width;
    for (int t = 0; t < out.distances.rows(); ++t) {
        const double lt = model.logit_scores[treated_rows[t]];
        for (int c = 0; c < out.distances.cols(); ++c) {
            const double gap = std::fabs(lt - model.logit_scores[control_rows[c]]);
            if (gap > width) out.distances(t, c) += penalty_scale * (gap - width);
        }
    }
    return out;
}

DistanceMatrix apply_caliper(const DistanceMatrix &dist, const PropensityModel &model,
                             const CovariateSample &sample) {
    return apply_caliper(dist, model, sample, 1000.0 * median_of_matrix(dist.distances));
}

PairAssignment optimal_match(const DistanceMatrix &dist, int k) {
    if (k < 1) throw std::domain_error("optimal_match: k must be at least 1");
    const int nt = dist.distances.rows();
    const int nc = dist.distances.cols();
    for (int t = 0; t < nt; ++t)
        for (int c = 0; c < nc; ++c) {
            const double v = dist.distances(t, c);
            if (!std::isfinite(v) || v < 0.0)
                throw std::domain_error("optimal_match: distances must be finite and non-negative");
        }
    if (static_cast<long long>(k) * nt > nc)
        throw InfeasibleError("optimal_match: need at least " + std::to_string(k) + " * " +
                              std::to_string(nt) + " = " + std::to_string(k * nt) +
                              " controls, have " + std::to_string(nc));

    std::vector<int> col_of_row;
    if (k == 1) {
        col_of_row = solve_rectangular_assignment(dist.distances);
    } else {
        Matrix replicated(nt * k, nc);
        for (int t = 0; t < nt; ++t)
            for (int q = 0; q < k; ++q)
                for (int c = 0; c < nc; ++c) replicated(t * k + q, c) = dist.distances(t, c);
        col_of_row = solve_rectangular_assignment(replicated);
    }

    PairAssignment out;
    out.k = k;
    out.pairs.resize(nt);
    for (int t = 0; t < nt; ++t) {
        out.pairs[t].treated_index = t;
        out.pairs[t].control_indices.assign(col_of_row.begin() + static_cast<std::size_t>(t) * k,
                                            col_of_row.begin() +
                                                static_cast<std::size_t>(t + 1) * k);
        std::sort(out.pairs[t].control_indices.begin(), out.pairs[t].control_indices.end());
        for (int c : out.pairs[t].control_indices) out.total_distance += dist.distances(t, c);
    }
    return out;
}

std::vector<BalanceRow> standardized_differences(const CovariateSample &sample,
                                                 const PairAssignment *assignment) {
    validate_sample(sample, "standardized_differences");
    require_both_groups(sample, "standardized_differences");
    const auto treated_rows = sample.treated_indices();
    const auto control_rows = sample.control_indices();

    std::vector<int> matched_rows;
    if (assignment != nullptr) {
        std::set<int> seen;
        for (const auto &pair : assignment->pairs)
            for (int c : pair.control_indices) {
                if (c < 0 || c >= static_cast<int>(control_rows.size()))
                    throw std::domain_error(
                        "standardized_differences: assignment does not match sample");
                if (!seen.insert(c).second)
                    throw std::domain_error(
                        "standardized_differences: control used twice in assignment");
                matched_rows.push_back(control_rows[c]);
            }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<BalanceRow> table(sample.d());
    for (int j = 0; j < sample.d(); ++j) {
        BalanceRow &row = table[j];
        row.covariate = sample.covariate_names[j];
        std::vector<double> vt, vc, vm;
        for (int i : treated_rows) vt.push_back(sample.covariates(i, j));
        for (int i : control_rows) vc.push_back(sample.covariates(i, j));
        for (int i : matched_rows) vm.push_back(sample.covariates(i, j));
        row.mean_treated = mean_of(vt);
        row.mean_controls_all = mean_of(vc);
        row.mean_controls_matched = vm.empty() ? nan : mean_of(vm);
        if (vt.size() >= 2 && vc.size() >= 2) {
            const double st = sd_of(vt);
            const double sc = sd_of(vc);
            const double pooled = std::sqrt(0.5 * (st * st + sc * sc));
            if (pooled > 0.0) {
                row.std_diff_before = (row.mean_treated - row.mean_controls_all) / pooled;
                row.std_diff_after =
                    vm.empty() ? nan : (row.mean_treated - row.mean_controls_matched) / pooled;
                continue;
            }
        }
        row.std_diff_before = nan;
        row.std_diff_after = nan;
    }
    return table;
}

}  // namespace matchdid::matching
