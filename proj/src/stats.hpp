#pragma once

#include <span>
#include <vector>

#include "errors.hpp"

namespace convflat {

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of Student's t with df degrees of freedom (exact, via the
/// incomplete beta function).
double student_t_cdf(double t, double df);

double normal_cdf(double x);

/// Average ranks (1-based), ties get the mean of their positions.
std::vector<double> average_ranks(std::span<const double> xs);

/// Regression and correlation summary between two columns.
struct CorrelationStats {
    double slope = 0;
    double intercept = 0;
    double slope_std_error = 0;
    double slope_p_value = 0;
    double r_squared = 0;
    double pearson_r = 0;
    double pearson_ci_low = 0;
    double pearson_ci_high = 0;
    double pearson_p_value = 0;
    double spearman_rho = 0;
    double spearman_p_value = 0;
    long long n = 0;
};

/// OLS slope/intercept, Pearson r with Fisher-z 95% CI and two-sided
/// t-test p-value, Spearman rho on average ranks. p-values switch from the
/// exact t CDF to the normal approximation for n > 200.
/// Throws validation_error for n < 3, non-finite values, or zero variance.
CorrelationStats correlate(std::span<const double> x, std::span<const double> y);

} // namespace convflat
