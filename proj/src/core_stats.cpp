#include "matchdid/core_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "matchdid/errors.hpp"

namespace matchdid {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kSqrt2Pi = 2.5066282746310005024;

void require_finite(double v, const char *where) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(where) + ": non-finite input");
}

void require_all_finite(const Matrix &m, const char *where) {
    if (!m.all_finite()) throw std::domain_error(std::string(where) + ": non-finite input");
}

void require_all_finite(const std::vector<double> &v, const char *where) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::domain_error(std::string(where) + ": non-finite input");
}

// Rational approximation to the standard normal quantile (absolute error
// ~1e-9), used as the starting point for Newton refinement.
double normal_quantile_estimate(double p) {
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Continued-fraction core of the regularized incomplete beta function
// (modified Lentz). Valid for x < (a + 1) / (a + b + 2).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 3000;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

double incomplete_beta_reg(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_pdf(double t, int df) {
    const double a = 0.5 * (df + 1.0);
    const double lg = std::lgamma(a) - std::lgamma(0.5 * df);
    return std::exp(lg - a * std::log1p(t * t / df)) / std::sqrt(df * M_PI);
}

}  // namespace

double std_normal_cdf(double x) {
    require_finite(x, "std_normal_cdf");
    return 0.5 * std::erfc(-x / kSqrt2);
}

double std_normal_quantile(double p) {
    require_finite(p, "std_normal_quantile");
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("std_normal_quantile: p must lie strictly in (0, 1)");
    double x = normal_quantile_estimate(p);
    // Two Halley steps against the exact CDF; skipped in the far tails where
    // exp(x^2 / 2) would overflow and the estimate is already adequate.
    for (int iter = 0; iter < 2 && std::fabs(x) < 37.0; ++iter) {
        const double err = std_normal_cdf(x) - p;
        const double u = err * kSqrt2Pi * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double student_t_cdf(double t, int df) {
    require_finite(t, "student_t_cdf");
    if (df < 1) throw std::domain_error("student_t_cdf: df must be at least 1");
    if (t == 0.0) return 0.5;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta_reg(0.5 * df, 0.5, x);
    return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, int df) {
    require_finite(p, "student_t_quantile");
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("student_t_quantile: p must lie strictly in (0, 1)");
    if (df < 1) throw std::domain_error("student_t_quantile: df must be at least 1");
    if (p == 0.5) return 0.0;
    if (df == 1) return std::tan(M_PI * (p - 0.5));
    if (df == 2) return (2.0 * p - 1.0) * std::sqrt(2.0 / (4.0 * p * (1.0 - p)));

    const double z = std_normal_quantile(p);
    const double z3 = z * z * z;
    if (df > 100000) {
        // Cornish-Fisher style expansion in 1/df; the df^-3 remainder is far
        // below the accuracy target at this size.
        const double z5 = z3 * z * z;
        const double fdf = static_cast<double>(df);
        return z + (z3 + z) / (4.0 * fdf) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * fdf * fdf);
    }

    double x = z + (z3 + z) / (4.0 * df);
    // Establish a bracket around the root, then do safeguarded Newton.
    double lo = x;
    double hi = x;
    double step = 0.5 * std::fabs(x) + 1.0;
    while (student_t_cdf(lo, df) > p) {
        lo -= step;
        step *= 2.0;
    }
    step = 0.5 * std::fabs(x) + 1.0;
    while (student_t_cdf(hi, df) < p) {
        hi += step;
        step *= 2.0;
    }
    x = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double err = student_t_cdf(x, df) - p;
        if (err > 0.0)
            hi = x;
        else
            lo = x;
        if (std::fabs(err) < 1e-15) break;
        if (hi - lo < 1e-13 * (1.0 + std::fabs(x))) break;
        const double pdf = student_t_pdf(x, df);
        double next = (pdf > 0.0) ? x - err / pdf : x;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

Matrix cholesky_lower(const Matrix &a) {
    const int n = a.rows();
    if (n == 0 || a.cols() != n) throw DecompositionError("cholesky_lower: matrix must be square");
    require_all_finite(a, "cholesky_lower");
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scale = std::max(scale, std::fabs(a(i, j)));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::fabs(a(i, j) - a(j, i)) > 1e-12 * (1.0 + scale))
                throw DecompositionError("cholesky_lower: matrix is not symmetric");

    Matrix l(n, n, 0.0);
    for (int j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (int k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (diag <= 0.0)
            throw DecompositionError("cholesky_lower: matrix is not positive definite (pivot " +
                                     std::to_string(j) + ")");
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Matrix equicorrelation_matrix(int d, double rho) {
    if (d < 1) throw std::domain_error("equicorrelation_matrix: d must be at least 1");
    require_finite(rho, "equicorrelation_matrix");
    if (d > 1 && !(rho > -1.0 / (d - 1) && rho < 1.0))
        throw std::domain_error(
            "equicorrelation_matrix: rho must lie in (-1/(d-1), 1) for positive definiteness");
    Matrix m(d, d, rho);
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
}

Matrix mvn_sample(Pcg32 &rng, const std::vector<double> &mean, const Matrix &cov, int n) {
    const int d = static_cast<int>(mean.size());
    if (n < 1) throw std::domain_error("mvn_sample: n must be at least 1");
    if (cov.rows() != d || cov.cols() != d)
        throw std::domain_error("mvn_sample: mean length and covariance shape disagree");
    require_all_finite(mean, "mvn_sample");
    const Matrix l = cholesky_lower(cov);
    Matrix out(n, d);
    std::vector<double> z(d);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) z[k] = rng.normal();
        for (int j = 0; j < d; ++j) {
            double s = mean[j];
            for (int k = 0; k <= j; ++k) s += l(j, k) * z[k];
            out(i, j) = s;
        }
    }
    return out;
}

Matrix mvn_sample(const RngStream &stream, const std::vector<double> &mean, const Matrix &cov,
                  int n) {
    Pcg32 rng(stream);
    return mvn_sample(rng, mean, cov, n);
}

Matrix rank_transform(const Matrix &columns) {
    require_all_finite(columns, "rank_transform");
    const int n = columns.rows();
    Matrix out(n, columns.cols());
    std::vector<int> order(n);
    for (int j = 0; j < columns.cols(); ++j) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return columns(a, j) < columns(b, j); });
        int i = 0;
        while (i < n) {
            int k = i;
            while (k + 1 < n && columns(order[k + 1], j) == columns(order[i], j)) ++k;
            // Positions i..k (0-based) share the average 1-based rank.
            const double avg = 0.5 * (i + k) + 1.0;
            for (int m = i; m <= k; ++m) out(order[m], j) = avg;
            i = k + 1;
        }
    }
    return out;
}

OlsFit ols_fit(const Matrix &design, const std::vector<double> &response,
               const std::vector<std::string> &column_names) {
    const int n = design.rows();
    const int p = design.cols();
    if (static_cast<int>(response.size()) != n)
        throw std::domain_error("ols_fit: response length must match design rows");
    if (!column_names.empty() && static_cast<int>(column_names.size()) != p)
        throw std::domain_error("ols_fit: column_names length must match design columns");
    if (n < p + 1) throw std::domain_error("ols_fit: need at least cols + 1 rows");
    require_all_finite(design, "ols_fit");
    require_all_finite(response, "ols_fit");

    // Householder QR, LINPACK style: below-diagonal entries of `a` hold the
    // reflector vectors, rdiag the diagonal of R.
    Matrix a = design;
    std::vector<double> qty = response;
    std::vector<double> rdiag(p, 0.0);
    for (int j = 0; j < p; ++j) {
        double norm = 0.0;
        for (int i = j; i < n; ++i) norm = std::hypot(norm, a(i, j));
        if (norm != 0.0) {
            if (a(j, j) < 0.0) norm = -norm;
            for (int i = j; i < n; ++i) a(i, j) /= norm;
            a(j, j) += 1.0;
            for (int k = j + 1; k < p; ++k) {
                double s = 0.0;
                for (int i = j; i < n; ++i) s += a(i, j) * a(i, k);
                s = -s / a(j, j);
                for (int i = j; i < n; ++i) a(i, k) += s * a(i, j);
            }
            double s = 0.0;
            for (int i = j; i < n; ++i) s += a(i, j) * qty[i];
            s = -s / a(j, j);
            for (int i = j; i < n; ++i) qty[i] += s * a(i, j);
        }
        rdiag[j] = -norm;
    }

    double max_pivot = 0.0;
    for (int j = 0; j < p; ++j) max_pivot = std::max(max_pivot, std::fabs(rdiag[j]));
    for (int j = 0; j < p; ++j) {
        if (std::fabs(rdiag[j]) <= 1e-10 * max_pivot) {
            const std::string name =
                column_names.empty() ? ("column " + std::to_string(j)) : column_names[j];
            throw SingularityError("ols_fit: design is rank deficient at " + name);
        }
    }

    OlsFit fit;
    fit.coefficients.assign(p, 0.0);
    for (int j = p - 1; j >= 0; --j) {
        double s = qty[j];
        for (int k = j + 1; k < p; ++k) s -= a(j, k) * fit.coefficients[k];
        fit.coefficients[j] = s / rdiag[j];
    }

    double rss = 0.0;
    for (int i = p; i < n; ++i) rss += qty[i] * qty[i];
    fit.residual_df = n - p;
    fit.residual_variance = rss / fit.residual_df;

    // diag((X'X)^-1) = row sums of squares of R^-1.
    Matrix rinv(p, p, 0.0);
    for (int col = 0; col < p; ++col) {
        rinv(col, col) = 1.0 / rdiag[col];
        for (int i = col - 1; i >= 0; --i) {
            double s = 0.0;
            for (int k = i + 1; k <= col; ++k) s += a(i, k) * rinv(k, col);
            rinv(i, col) = -s / rdiag[i];
        }
    }
    fit.standard_errors.assign(p, 0.0);
    for (int j = 0; j < p; ++j) {
        double s = 0.0;
        for (int k = j; k < p; ++k) s += rinv(j, k) * rinv(j, k);
        fit.standard_errors[j] = std::sqrt(fit.residual_variance * s);
    }
    return fit;
}

double mean_of(const std::vector<double> &values) {
    if (values.empty()) throw std::domain_error("mean_of: empty input");
    require_all_finite(values, "mean_of");
    return std::accumulate(values.begin(), values.end(), 0.0) / values.size();
}

double sd_of(const std::vector<double> &values) {
    if (values.size() < 2) throw std::domain_error("sd_of: need at least two values");
    const double m = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / (values.size() - 1));
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::domain_error("median_of: empty input");
    require_all_finite(values, "median_of");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lower + upper);
}

SummaryStats summary_stats(const std::vector<double> &values) {
    if (values.size() < 2) throw std::domain_error("summary_stats: need at least two values");
    SummaryStats s;
    s.mean = mean_of(values);
    s.sd = sd_of(values);
    s.median = median_of(values);
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::fabs(values[i] - s.median);
    s.mad_scaled = 1.4826 * median_of(std::move(dev));
    return s;
}

}  // namespace matchdid
