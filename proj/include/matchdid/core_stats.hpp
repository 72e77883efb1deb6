#pragma once

#include <string>
#include <vector>

#include "matchdid/matrix.hpp"
#include "matchdid/rng.hpp"

namespace matchdid {

// Ordinary least squares fit. standard_errors are the classical
// homoskedastic ones, sqrt(residual_variance * diag((X'X)^-1)).
struct OlsFit {
    std::vector<double> coefficients;
    std::vector<double> standard_errors;
    int residual_df = 0;
    double residual_variance = 0.0;
};

// Per-sample location and scale summaries. mad_scaled is the median absolute
// deviation from the median times 1.4826, which makes it consistent for the
// standard deviation under normality.
struct SummaryStats {
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    double mad_scaled = 0.0;
};

// Standard normal CDF. Throws std::domain_error on non-finite input.
double std_normal_cdf(double x);

// Standard normal quantile for p in (0, 1): rational initial guess refined
// by Newton steps against std_normal_cdf.
double std_normal_quantile(double p);

// Student-t CDF for df >= 1, via the regularized incomplete beta function.
double student_t_cdf(double t, int df);

// Student-t quantile for p in (0, 1) and df >= 1. Inverts student_t_cdf with
// a safeguarded Newton iteration; for very large df it uses the normal
// quantile with an asymptotic correction.
double student_t_quantile(double p, int df);

// Lower-triangular Cholesky factor L with A = L L'. Throws
// DecompositionError when A is not symmetric positive definite.
Matrix cholesky_lower(const Matrix &a);

// d x d matrix with unit diagonal and constant off-diagonal rho. Requires
// -1/(d-1) < rho < 1 so that the matrix is positive definite.
Matrix equicorrelation_matrix(int d, double rho);

// n draws from N(mean, cov), one per row. cov must be symmetric positive
// definite; draws consume d normals per row from rng in row order.
Matrix mvn_sample(Pcg32 &rng, const std::vector<double> &mean, const Matrix &cov, int n);

// Convenience overload: seeds a fresh generator from the stream, so a fixed
// stream always reproduces the same matrix.
Matrix mvn_sample(const RngStream &stream, const std::vector<double> &mean, const Matrix &cov,
                  int n);

// Column-wise average ranks (1-based; ties share the mean of the positions
// they occupy). Input and output have the same shape.
Matrix rank_transform(const Matrix &columns);

// OLS of response on the columns of design (no implicit intercept; include a
// column of ones if one is wanted). Requires rows >= cols + 1 and finite
// entries. Throws SingularityError naming the first rank-deficient column.
// column_names, when given, must match design.cols() and is used for error
// messages only.
OlsFit ols_fit(const Matrix &design, const std::vector<double> &response,
               const std::vector<std::string> &column_names = {});

// Mean, unbiased SD, median, and scaled MAD. Requires at least two values.
SummaryStats summary_stats(const std::vector<double> &values);

double mean_of(const std::vector<double> &values);
double sd_of(const std::vector<double> &values);
double median_of(std::vector<double> values);

}  // namespace matchdid
