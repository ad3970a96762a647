#include "mgam/special.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mgam {

// Push x above 10 with the shift recurrences, then use the standard
// asymptotic series in 1/x^2 (Bernoulli coefficients through B14).

double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma: x must be > 0");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double r = 1.0 / (x * x);
    double series = r * (1.0 / 12.0 +
                    r * (-1.0 / 120.0 +
                    r * (1.0 / 252.0 +
                    r * (-1.0 / 240.0 +
                    r * (1.0 / 132.0 +
                    r * (-691.0 / 32760.0 +
                    r * (1.0 / 12.0)))))));
    return acc + std::log(x) - 0.5 / x - series;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("trigamma: x must be > 0");
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double r = 1.0 / (x * x);
    // 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}
    double series = (1.0 +
                    r * (1.0 / 6.0 +
                    r * (-1.0 / 30.0 +
                    r * (1.0 / 42.0 +
                    r * (-1.0 / 30.0 +
                    r * (5.0 / 66.0 +
                    r * (-691.0 / 2730.0 +
                    r * (7.0 / 6.0)))))))) / x;
    return acc + 0.5 * r + series;
}

double tetragamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("tetragamma: x must be > 0");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    const double r = 1.0 / (x * x);
    // -1/x^2 - 1/x^3 - sum (2n+1) B_{2n} / x^{2n+2}
    double series = r * r * (0.5 +
                    r * (-1.0 / 6.0 +
                    r * (1.0 / 6.0 +
                    r * (-3.0 / 10.0 +
                    r * (5.0 / 6.0 +
                    r * (-8983.0 / 2730.0))))));
    return acc - r - r / x - series;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("normal_quantile: p must be in (0,1)");

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
    const double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement against the exact CDF.
    for (int it = 0; it < 2; ++it) {
        const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

} // namespace mgam
