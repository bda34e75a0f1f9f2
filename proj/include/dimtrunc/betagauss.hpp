#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "dimtrunc/special.hpp"

namespace dimtrunc {

namespace detail {

// Adaptive Simpson on [lo, hi] with absolute tolerance.
inline double adaptive_simpson_rec(const std::function<double(double)>& f,
                                   double lo, double hi, double flo,
                                   double fmid, double fhi, double whole,
                                   double tol, int depth) {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson_rec(f, lo, mid, flo, flm, fmid, left, 0.5 * tol,
                                depth - 1) +
           adaptive_simpson_rec(f, mid, hi, fmid, frm, fhi, right, 0.5 * tol,
                                depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f,
                               double lo, double hi, double tol,
                               int depth = 48) {
    const double mid = 0.5 * (lo + hi);
    const double flo = f(lo), fmid = f(mid), fhi = f(hi);
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    return adaptive_simpson_rec(f, lo, hi, flo, fmid, fhi, whole, tol, depth);
}

}  // namespace detail

/// Symmetric one-parameter family with density proportional to
/// exp(-|y|^beta / beta); beta = 1 is Laplace, beta = 2 standard normal.
class BetaGaussian {
  public:
    explicit BetaGaussian(double beta) : beta_(beta) {
        if (!(beta >= 1.0))
            throw std::domain_error("BetaGaussian: requires beta >= 1");
        norm_const_ = 2.0 * std::pow(beta, 1.0 / beta) *
                      gamma_fn(1.0 + 1.0 / beta);
    }

    double beta() const { return beta_; }

    /// exp(-|y|^beta/beta) / (2 beta^{1/beta} Gamma(1 + 1/beta))
    double pdf(double y) const {
        const double ay = std::abs(y);
        return std::exp(-std::pow(ay, beta_) / beta_) / norm_const_;
    }

    /// F(y) = (1 + sign(y) P(1/beta, |y|^beta/beta)) / 2
    double cdf(double y) const {
        if (y == 0.0) return 0.5;
        const double ay = std::abs(y);
        const double p = reg_lower_gamma(1.0 / beta_, std::pow(ay, beta_) / beta_);
        return y > 0.0 ? 0.5 * (1.0 + p) : 0.5 * (1.0 - p);
    }

    double inv_cdf(double u) const {
        if (!(u > 0.0 && u < 1.0))
            throw std::domain_error("inv_cdf: requires 0 < u < 1");
        if (u == 0.5) return 0.0;
        if (beta_ == 1.0) {
            // Laplace closed form
            return u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
        }
        if (beta_ == 2.0) return inv_normal(u);
        // Exploit symmetry and solve on the positive branch.
        const double up = u < 0.5 ? 1.0 - u : u;
        const double y = inv_cdf_positive(up);
        return u < 0.5 ? -y : y;
    }

    /// E|Y|^nu = beta^{nu/beta} Gamma((nu+1)/beta) / Gamma(1/beta)
    double abs_moment(int nu) const {
        if (nu < 0) throw std::domain_error("abs_moment: requires nu >= 0");
        return std::exp(static_cast<double>(nu) / beta_ * std::log(beta_) +
                        log_gamma((nu + 1.0) / beta_) - log_gamma(1.0 / beta_));
    }

  private:
    // Newton refinement of a rational initial guess (Acklam's approximation
    // for the standard normal quantile).
    double inv_normal(double u) const {
        static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                        -2.759285104469687e+02, 1.383577518672690e+02,
                                        -3.066479806614716e+01, 2.506628277459239e+00};
        static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                        -1.556989798598866e+02, 6.680131188771972e+01,
                                        -1.328068155288572e+01};
        static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                        -2.400758277161838e+00, -2.549732539343734e+00,
                                        4.374664141464968e+00,  2.938163982698783e+00};
        static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                        2.445134137142996e+00, 3.754408661907416e+00};
        constexpr double plow = 0.02425;
        double x;
        if (u < plow) {
            const double q = std::sqrt(-2.0 * std::log(u));
            x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        } else if (u <= 1.0 - plow) {
            const double q = u - 0.5, r = q * q;
            x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
        } else {
            const double q = std::sqrt(-2.0 * std::log(1.0 - u));
            x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        // One Newton step against the exact cdf.
        const double e = cdf(x) - u;
        const double dens = pdf(x);
        if (dens > 0.0) x -= e / dens;
        return x;
    }

    // Bisection-seeded safeguarded Newton on the cdf, u in [0.5, 1).
    double inv_cdf_positive(double u) const {
        double lo = 0.0, hi = 1.0;
        while (cdf(hi) < u) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e6) throw std::runtime_error("inv_cdf: bracket failure");
        }
        for (int i = 0; i < 20; ++i) {
            const double mid = 0.5 * (lo + hi);
            (cdf(mid) < u ? lo : hi) = mid;
        }
        double y = 0.5 * (lo + hi);
        for (int i = 0; i < 60; ++i) {
            const double e = cdf(y) - u;
            (e < 0.0 ? lo : hi) = y;
            const double dens = pdf(y);
            double step = dens > 0.0 ? e / dens : 0.0;
            double next = y - step;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - y) <= 1e-14 * (1.0 + std::abs(y))) return next;
            y = next;
        }
        return y;
    }

    double beta_;
    double norm_const_;
};

/// Parameters of the exponentially weighted absolute moment
/// C = ∫ |y|^nu e^{alpha |y|} pdf(y) dy.
struct WeightedMomentSpec {
    double alpha = 0.0;  // exponential weight, >= 0
    int nu = 0;          // moment order, >= 0

    WeightedMomentSpec(double alpha_, int nu_) : alpha(alpha_), nu(nu_) {
        if (!(alpha >= 0.0))
            throw std::domain_error("WeightedMomentSpec: requires alpha >= 0");
        if (nu < 0) throw std::domain_error("WeightedMomentSpec: requires nu >= 0");
    }
};

/// C_{alpha,beta,nu} by adaptive quadrature on [0, Y], doubled by symmetry.
/// Diverges for beta = 1 with alpha >= 1.
inline double exp_weighted_moment(const BetaGaussian& dist,
                                  const WeightedMomentSpec& spec) {
    const double beta = dist.beta();
    if (beta == 1.0 && spec.alpha >= 1.0)
        throw std::domain_error(
            "exp_weighted_moment: divergent for beta = 1, alpha >= 1");
    if (spec.alpha == 0.0) return dist.abs_moment(spec.nu);

    // Single-exponential evaluation: the naive pow * exp * pdf form turns
    // into inf * 0 = NaN once the tail cut passes the overflow point of
    // exp(alpha y).
    const double log_norm =
        std::log(2.0) + std::log(beta) / beta + log_gamma(1.0 + 1.0 / beta);
    const auto integrand = [&](double y) {
        if (y <= 0.0) return spec.nu == 0 ? dist.pdf(0.0) : 0.0;
        return std::exp(spec.nu * std::log(y) + spec.alpha * y -
                        std::pow(y, beta) / beta - log_norm);
    };

    // Tail cut: below round-off for all tested parameters, then extended
    // until the integrand itself is negligible.
    double tail = std::pow(beta * 40.0, 1.0 / beta);
    if (spec.alpha < 1.0) tail /= (1.0 - spec.alpha);
    double y_max = std::max(50.0, tail);
    while (integrand(y_max) * y_max > 1e-18) y_max *= 1.5;

    // Coarse pass to set the absolute tolerance, then graded panels.
    double rough = 0.0;
    {
        const int n = 512;
        const double h = y_max / n;
        for (int i = 0; i < n; ++i) rough += integrand((i + 0.5) * h) * h;
    }
    const double tol = std::max(1e-14, 1e-12 * std::abs(rough));

    double sum = 0.0;
    double lo = 0.0;
    double hi = std::min(1.0, y_max);
    while (lo < y_max) {
        sum += detail::adaptive_simpson(integrand, lo, hi, tol / 8.0);
        lo = hi;
        hi = std::min(2.0 * hi, y_max);
    }
    return 2.0 * sum;
}

}  // namespace dimtrunc
