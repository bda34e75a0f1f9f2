#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dimtrunc {

// Lanczos approximation (g = 7, 9 coefficients), ~1e-13 relative accuracy.
namespace detail {

inline constexpr double kLanczosG = 7.0;
inline constexpr double kLanczosCoef[9] = {
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
};

inline double lanczos_sum(double x) {
    double a = kLanczosCoef[0];
    for (int i = 1; i < 9; ++i) a += kLanczosCoef[i] / (x + i);
    return a;
}

}  // namespace detail

/// ln Γ(x) for x > 0.
inline double log_gamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("log_gamma: requires x > 0");
    if (x < 0.5) {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
    }
    const double z = x - 1.0;
    const double t = z + detail::kLanczosG + 0.5;
    return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t +
           std::log(detail::lanczos_sum(z));
}

inline double gamma_fn(double x) {
    if (!(x > 0.0)) throw std::domain_error("gamma_fn: requires x > 0");
    return std::exp(log_gamma(x));
}

/// Regularized lower incomplete gamma P(a, x) = γ(a, x) / Γ(a).
/// Series expansion for x < a + 1, Lentz continued fraction otherwise.
inline double reg_lower_gamma(double a, double x) {
    if (!(a > 0.0)) throw std::domain_error("reg_lower_gamma: requires a > 0");
    if (x < 0.0) throw std::domain_error("reg_lower_gamma: requires x >= 0");
    if (x == 0.0) return 0.0;

    const double log_prefactor = a * std::log(x) - x - log_gamma(a);
    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr int max_iter = 500;

    if (x < a + 1.0) {
        // P(a,x) = x^a e^{-x} / Γ(a) * Σ_{n>=0} x^n / (a (a+1) ... (a+n))
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int n = 0; n < max_iter; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::exp(log_prefactor) * sum;
    }

    // Q(a,x) via modified Lentz for the continued fraction
    // x^a e^{-x}/Γ(a) * 1/(x+1-a- 1(1-a)/(x+3-a- ...))
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= max_iter; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    const double q = std::exp(log_prefactor) * h;
    return 1.0 - q;
}

}  // namespace dimtrunc
