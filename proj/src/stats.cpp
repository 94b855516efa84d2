#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace convflat {

namespace {

// Lentz's method for the continued fraction of the incomplete beta function
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 400;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw validation_error("incomplete beta: parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (df <= 0.0) throw validation_error("t cdf: degrees of freedom must be positive");
    const double x = df / (df + t * t);
    const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> average_ranks(std::span<const double> xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

double two_sided_p(double t, double df, long long n) {
    if (!std::isfinite(t)) return 0.0;
    // documented switch point: normal tail approximation above n = 200
    if (n > 200) return 2.0 * normal_cdf(-std::fabs(t));
    return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

struct Moments {
    double mean_x = 0, mean_y = 0, sxx = 0, syy = 0, sxy = 0;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
    Moments m;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        m.mean_x += x[i];
        m.mean_y += y[i];
    }
    m.mean_x /= n;
    m.mean_y /= n;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - m.mean_x;
        const double dy = y[i] - m.mean_y;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

double pearson_from(std::span<const double> x, std::span<const double> y) {
    const Moments m = moments(x, y);
    if (m.sxx <= 0.0 || m.syy <= 0.0) throw validation_error("correlate: zero variance column");
    double r = m.sxy / std::sqrt(m.sxx * m.syy);
    return std::clamp(r, -1.0, 1.0);
}

} // namespace

CorrelationStats correlate(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw validation_error("correlate: column length mismatch");
    const long long n = static_cast<long long>(x.size());
    if (n < 3) throw validation_error("correlate: need at least 3 points");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw validation_error("correlate: non-finite value");

    const Moments m = moments(x, y);
    if (m.sxx <= 0.0 || m.syy <= 0.0) throw validation_error("correlate: zero variance column");

    CorrelationStats s;
    s.n = n;
    s.slope = m.sxy / m.sxx;
    s.intercept = m.mean_y - s.slope * m.mean_x;
    s.pearson_r = std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
    s.r_squared = s.pearson_r * s.pearson_r;

    const double df = static_cast<double>(n - 2);
    const double sse = std::max(m.syy - s.slope * m.sxy, 0.0);
    const double sigma2 = sse / df;
    s.slope_std_error = std::sqrt(sigma2 / m.sxx);
    const double t_slope = s.slope_std_error > 0.0
                               ? s.slope / s.slope_std_error
                               : std::numeric_limits<double>::infinity();
    s.slope_p_value = two_sided_p(t_slope, df, n);

    const double denom = 1.0 - s.r_squared;
    const double t_r = denom > 0.0 ? s.pearson_r * std::sqrt(df / denom)
                                   : std::numeric_limits<double>::infinity();
    s.pearson_p_value = two_sided_p(t_r, df, n);

    // Fisher z 95% interval
    if (n > 3 && std::fabs(s.pearson_r) < 1.0) {
        const double z = std::atanh(s.pearson_r);
        const double se = 1.0 / std::sqrt(static_cast<double>(n - 3));
        constexpr double z975 = 1.959963984540054;
        s.pearson_ci_low = std::tanh(z - z975 * se);
        s.pearson_ci_high = std::tanh(z + z975 * se);
    } else {
        s.pearson_ci_low = std::fabs(s.pearson_r) >= 1.0 ? s.pearson_r : -1.0;
        s.pearson_ci_high = std::fabs(s.pearson_r) >= 1.0 ? s.pearson_r : 1.0;
    }

    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    s.spearman_rho = pearson_from(rx, ry);
    const double denom_s = 1.0 - s.spearman_rho * s.spearman_rho;
    const double t_s = denom_s > 0.0 ? s.spearman_rho * std::sqrt(df / denom_s)
                                     : std::numeric_limits<double>::infinity();
    s.spearman_p_value = two_sided_p(t_s, df, n);
    return s;
}

} // namespace convflat
