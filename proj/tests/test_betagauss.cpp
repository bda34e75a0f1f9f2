#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dimtrunc/betagauss.hpp"
#include "dimtrunc/special.hpp"

using namespace dimtrunc;

namespace {

// Test-side composite Simpson, independent of the implementation path.
template <typename F>
double simpson(F f, double lo, double hi, int intervals) {
    const double h = (hi - lo) / intervals;
    double acc = f(lo) + f(hi);
    for (int i = 1; i < intervals; ++i)
        acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace

TEST_CASE("gamma special functions") {
    CHECK(gamma_fn(1.0) == Catch::Approx(1.0).epsilon(1e-13));
    CHECK(gamma_fn(0.5) == Catch::Approx(std::sqrt(M_PI)).epsilon(1e-13));
    CHECK(gamma_fn(5.0) == Catch::Approx(24.0).epsilon(1e-13));
    CHECK(log_gamma(100.0) == Catch::Approx(std::lgamma(100.0)).epsilon(1e-13));

    CHECK(reg_lower_gamma(1.0, 0.0) == 0.0);
    CHECK(reg_lower_gamma(1.0, 2.0) ==
          Catch::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
    // P(1/2, x^2/2) = erf(x / sqrt(2)) at x = 1
    CHECK(reg_lower_gamma(0.5, 0.5) ==
          Catch::Approx(std::erf(1.0 / std::sqrt(2.0))).epsilon(1e-12));
    // monotone in x
    double prev = 0.0;
    for (double x = 0.1; x < 20.0; x += 0.3) {
        const double p = reg_lower_gamma(2.5, x);
        CHECK(p >= prev);
        CHECK(p <= 1.0 + 1e-15);
        prev = p;
    }
    CHECK_THROWS_AS(reg_lower_gamma(0.0, 1.0), std::domain_error);
}

TEST_CASE("pdf closed form") {
    CHECK(BetaGaussian(1.0).pdf(0.0) == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(BetaGaussian(2.0).pdf(0.0) ==
          Catch::Approx(0.3989422804014327).epsilon(1e-14));
    CHECK(BetaGaussian(2.0).pdf(1.0) ==
          Catch::Approx(0.24197072451914337).epsilon(1e-13));
    const BetaGaussian d(3.0);
    CHECK(d.pdf(-1.7) == d.pdf(1.7));
    CHECK(d.pdf(40.0) >= 0.0);
    CHECK_THROWS_AS(BetaGaussian(0.9), std::domain_error);
}

TEST_CASE("pdf normalization by quadrature") {
    for (double beta : {1.0, 1.5, 2.0, 3.0, 8.0}) {
        const BetaGaussian d(beta);
        const double mass =
            simpson([&](double y) { return d.pdf(y); }, -50.0, 50.0, 400000);
        CHECK(mass == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("cdf") {
    CHECK(BetaGaussian(2.0).cdf(0.0) == 0.5);
    CHECK(BetaGaussian(1.0).cdf(std::log(2.0)) == Catch::Approx(0.75).epsilon(1e-14));

    // adaptive-quadrature oracle of the density from far left
    const BetaGaussian d(2.0);
    const double oracle =
        simpson([&](double y) { return d.pdf(y); }, -40.0, 1.96, 500000);
    CHECK(d.cdf(1.96) == Catch::Approx(oracle).margin(1e-10));
    CHECK(d.cdf(1.96) == Catch::Approx(0.9750021).margin(1e-7));

    // F(-y) = 1 - F(y), strictly increasing where it does not saturate in
    // double precision (large beta makes the tails drop off super-fast)
    for (double beta : {1.0, 1.7, 2.0, 4.0}) {
        const BetaGaussian dd(beta);
        double prev = 0.0;
        for (double y = -3.0; y <= 3.0; y += 0.25) {
            CHECK(dd.cdf(-y) == Catch::Approx(1.0 - dd.cdf(y)).margin(1e-14));
            CHECK(dd.cdf(y) > prev);
            prev = dd.cdf(y);
        }
    }
}

TEST_CASE("inv_cdf") {
    CHECK(BetaGaussian(2.0).inv_cdf(0.5) == 0.0);
    CHECK(BetaGaussian(1.0).inv_cdf(0.25) ==
          Catch::Approx(-0.6931471805599453).epsilon(1e-14));
    CHECK(BetaGaussian(2.0).inv_cdf(0.975) ==
          Catch::Approx(1.9599640).margin(1e-6));
    CHECK_THROWS_AS(BetaGaussian(2.0).inv_cdf(0.0), std::domain_error);
    CHECK_THROWS_AS(BetaGaussian(2.0).inv_cdf(1.0), std::domain_error);
    CHECK_THROWS_AS(BetaGaussian(2.0).inv_cdf(-0.1), std::domain_error);

    // round trip and antisymmetry, 10^4 random u per beta
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> unif(1e-12, 1.0 - 1e-12);
    for (double beta : {1.0, 1.5, 2.0, 3.5}) {
        const BetaGaussian d(beta);
        for (int i = 0; i < 10000; ++i) {
            const double u = unif(rng);
            const double y = d.inv_cdf(u);
            CHECK(std::abs(d.cdf(y) - u) <= 1e-10);
            CHECK(d.inv_cdf(1.0 - u) == Catch::Approx(-y).margin(1e-9));
        }
    }
}

TEST_CASE("beta = 2 agrees with the standard normal") {
    const BetaGaussian d(2.0);
    for (double y = -3.0; y <= 3.0; y += 0.37) {
        const double phi = 0.5 * std::erfc(-y / std::sqrt(2.0));
        CHECK(d.cdf(y) == Catch::Approx(phi).margin(1e-9));
    }
    CHECK(d.inv_cdf(0.5 * std::erfc(-1.2 / std::sqrt(2.0))) ==
          Catch::Approx(1.2).margin(1e-9));
    CHECK(d.abs_moment(2) == Catch::Approx(1.0).margin(1e-9));
    CHECK(d.abs_moment(4) == Catch::Approx(3.0).margin(1e-9));
}

TEST_CASE("abs_moment closed form") {
    CHECK(BetaGaussian(2.0).abs_moment(2) == Catch::Approx(1.0).epsilon(1e-13));
    CHECK(BetaGaussian(1.0).abs_moment(3) == Catch::Approx(6.0).epsilon(1e-13));
    CHECK(BetaGaussian(2.0).abs_moment(1) ==
          Catch::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-13));
    CHECK_THROWS_AS(BetaGaussian(2.0).abs_moment(-1), std::domain_error);
}

TEST_CASE("exp_weighted_moment") {
    // alpha = 0 reduces to the plain absolute moment
    for (double beta : {1.0, 2.0, 3.0})
        for (int nu : {0, 1, 2, 4})
            CHECK(exp_weighted_moment(BetaGaussian(beta), WeightedMomentSpec(0.0, nu)) ==
                  Catch::Approx(BetaGaussian(beta).abs_moment(nu)).epsilon(1e-12));

    // Laplace identity: integral of e^{alpha|y|} against the density is 1/(1-alpha)
    CHECK(exp_weighted_moment(BetaGaussian(1.0), WeightedMomentSpec(0.5, 0)) ==
          Catch::Approx(2.0).margin(1e-10));

    // brute-force trapezoid oracle on [-40, 40] with 10^7 points
    {
        const BetaGaussian d(2.0);
        const double alpha = 0.3;
        const auto g = [&](double y) {
            return std::abs(y) * std::exp(alpha * std::abs(y)) * d.pdf(y);
        };
        const int n = 10000000;
        const double h = 80.0 / n;
        double oracle = 0.5 * (g(-40.0) + g(40.0));
        for (int i = 1; i < n; ++i) oracle += g(-40.0 + i * h);
        oracle *= h;
        CHECK(exp_weighted_moment(d, WeightedMomentSpec(alpha, 1)) ==
              Catch::Approx(oracle).margin(1e-9));
    }

    // divergence flagged
    CHECK_THROWS_AS(exp_weighted_moment(BetaGaussian(1.0), WeightedMomentSpec(1.0, 0)),
                    std::domain_error);

    // never below the unweighted moment
    for (double beta : {1.0, 2.0, 4.0})
        for (double alpha : {0.1, 0.5, 0.9})
            for (int nu : {0, 2})
                CHECK(exp_weighted_moment(BetaGaussian(beta),
                                          WeightedMomentSpec(alpha, nu)) >=
                      BetaGaussian(beta).abs_moment(nu) - 1e-12);
}

TEST_CASE("weighted moments monotone in alpha") {
    for (double beta : {1.0, 1.5, 2.0, 4.0})
        for (int nu : {0, 1, 3}) {
            double prev = 0.0;
            for (double alpha : {0.0, 0.2, 0.4, 0.6, 0.8}) {
                const double c =
                    exp_weighted_moment(BetaGaussian(beta), WeightedMomentSpec(alpha, nu));
                CHECK(c >= prev - 1e-12);
                prev = c;
            }
        }
}

TEST_CASE("weighted moments bounded independently of beta") {
    for (double alpha : {0.0, 0.25, 0.5, 0.9})
        for (int nu = 0; nu <= 4; ++nu) {
            const double ref =
                exp_weighted_moment(BetaGaussian(1.0), WeightedMomentSpec(alpha, nu));
            for (double beta : {1.0, 1.25, 2.0, 4.0, 8.0})
                CHECK(exp_weighted_moment(BetaGaussian(beta),
                                          WeightedMomentSpec(alpha, nu)) <= ref + 1e-8);
        }
}

TEST_CASE("WeightedMomentSpec validation") {
    CHECK_THROWS_AS(WeightedMomentSpec(-0.1, 0), std::domain_error);
    CHECK_THROWS_AS(WeightedMomentSpec(0.5, -1), std::domain_error);
}
