#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dimtrunc/lattice.hpp"

using namespace dimtrunc;

namespace {

// Definition-level criterion evaluation with fmod, independent of the
// table/bitmask path inside cbc_vector.
double e2_direct(const std::vector<std::uint64_t>& z, std::uint64_t n,
                 const ProductWeights& w) {
    double sum = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        double prod = 1.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double x = std::fmod(static_cast<double>(i) * z[j] / n, 1.0);
            prod *= 1.0 + w.gamma[j] * (x * x - x + 1.0 / 6.0);
        }
        sum += prod;
    }
    return -1.0 + sum / n;
}

}  // namespace

TEST_CASE("korobov_vector") {
    CHECK(korobov_vector(8, 1, 3) == std::vector<std::uint64_t>{1, 1, 1});
    CHECK(korobov_vector(8, 3, 3) == std::vector<std::uint64_t>{1, 3, 1});
    CHECK(korobov_vector(16, 5, 4) == std::vector<std::uint64_t>{1, 5, 9, 13});
    CHECK_THROWS_AS(korobov_vector(8, 2, 3), std::domain_error);
    CHECK_THROWS_AS(korobov_vector(7, 3, 3), std::domain_error);
}

TEST_CASE("cbc_vector basics") {
    // only one odd candidate for n = 2
    CHECK(cbc_vector(2, 1, ProductWeights({1.0})) == std::vector<std::uint64_t>{1});

    // first component is always 1 (all candidates tie, smallest wins)
    for (std::uint64_t n : {4, 16, 64})
        CHECK(cbc_vector(n, 3, ProductWeights::decay(3, 1.5))[0] == 1);
}

TEST_CASE("cbc matches exhaustive search, n = 8, s = 2") {
    const ProductWeights w = ProductWeights::decay(2, 1.5);  // gamma_j = j^-3
    const auto z = cbc_vector(8, 2, w);
    double best = 1e300;
    std::vector<std::uint64_t> best_pair;
    for (std::uint64_t z1 = 1; z1 < 8; z1 += 2)
        for (std::uint64_t z2 = 1; z2 < 8; z2 += 2) {
            const double e2 = e2_direct({z1, z2}, 8, w);
            if (e2 < best - 1e-15) {
                best = e2;
                best_pair = {z1, z2};
            }
        }
    CHECK(e2_direct(z, 8, w) == Catch::Approx(best).margin(1e-14));
}

TEST_CASE("worst-case error hand evaluation, n = 4, z = (1)") {
    // -1 + (1/4) sum_i (1 + B2(i/4))
    const double b2_0 = 1.0 / 6.0;
    const double b2_q = 0.0625 - 0.25 + 1.0 / 6.0;
    const double b2_h = 0.25 - 0.5 + 1.0 / 6.0;
    const double expected = -1.0 + (4.0 + b2_0 + 2.0 * b2_q + b2_h) / 4.0;
    const std::vector<std::uint64_t> z = {1};
    CHECK(worst_case_error_sq(z, 4, ProductWeights({1.0})) ==
          Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("criterion matches direct re-evaluation for n <= 64") {
    for (std::uint64_t n : {8, 16, 32, 64}) {
        const ProductWeights w = ProductWeights::decay(4, 2.0);
        const auto z = cbc_vector(n, 4, w);
        CHECK(worst_case_error_sq(z, n, w) ==
              Catch::Approx(e2_direct(z, n, w)).margin(1e-12));
    }
}

TEST_CASE("lattice points") {
    const LatticeRule rule(4, {1, 1});
    Shift zero;
    zero.delta = {0.0, 0.0};
    const auto pts = lattice_points(rule, zero);
    REQUIRE(pts.size() == 4);
    CHECK(pts[1][0] == Catch::Approx(0.25));
    CHECK(pts[2][1] == Catch::Approx(0.5));
    CHECK(pts[3][0] == Catch::Approx(0.75));

    Shift sh;
    sh.delta = {0.1, 0.9};
    const auto shifted = lattice_points(rule, sh);
    CHECK(shifted[3][0] == Catch::Approx(0.85));
    CHECK(shifted[3][1] == Catch::Approx(0.65));

    // coordinate average with zero shift is (n-1)/(2n)
    double avg = 0.0;
    for (const auto& p : pts) avg += p[0];
    CHECK(avg / 4.0 == Catch::Approx(3.0 / 8.0).epsilon(1e-14));

    Shift tiny;
    tiny.delta = {0.5};
    std::vector<double> out(2);
    CHECK_THROWS_AS(lattice_point(rule, tiny, 0, out), std::domain_error);
}

TEST_CASE("LatticeRule validation") {
    CHECK_THROWS_AS(LatticeRule(6, {1}), std::domain_error);
    CHECK_THROWS_AS(LatticeRule(8, {2}), std::domain_error);
    CHECK_THROWS_AS(LatticeRule(8, {9}), std::domain_error);
}

TEST_CASE("centered_shift") {
    const Shift c = centered_shift(random_shift(5, 8), 16);
    for (double d : c.delta) {
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
        // lands exactly on the centered grid
        CHECK(std::abs(d * 16.0 - std::floor(d * 16.0) - 0.5) < 1e-12);
    }
    CHECK_THROWS_AS(centered_shift(c, 3), std::domain_error);

    // every 1-D projection becomes a midpoint rule: coordinate mean is 1/2
    const LatticeRule rule(16, {1});
    std::vector<double> pt(1);
    double mean = 0.0;
    for (int i = 0; i < 16; ++i) {
        lattice_point(rule, c, i, pt);
        mean += pt[0];
    }
    CHECK(mean / 16.0 == Catch::Approx(0.5).margin(1e-14));
}

TEST_CASE("symmetric_shift") {
    const LatticeRule rule(32, cbc_vector(32, 3, ProductWeights::decay(3, 1.5)));
    const Shift sh = symmetric_shift(rule, 11);
    CHECK(symmetric_shift(rule, 11).delta == sh.delta);
    CHECK(symmetric_shift(rule, 12).delta != sh.delta);

    const auto pts = lattice_points(rule, sh);
    for (const auto& p : pts)
        for (double x : p) {
            CHECK(x > 0.0);
            CHECK(x < 1.0);
            // every coordinate on the centered grid {(k + 1/2)/n}
            CHECK(std::abs(x * 32.0 - std::floor(x * 32.0) - 0.5) < 1e-13);
        }

    // node set exactly invariant under t -> 1 - t
    for (const auto& p : pts) {
        bool found = false;
        for (const auto& q : pts) {
            bool match = true;
            for (std::size_t j = 0; j < p.size(); ++j)
                if (q[j] != 1.0 - p[j]) { match = false; break; }
            if (match) { found = true; break; }
        }
        CHECK(found);
    }

    // so odd maps of the coordinates average to exactly zero
    for (std::size_t j = 0; j < rule.dim(); ++j) {
        double acc = 0.0;
        for (const auto& p : pts) acc += 2.0 * p[j] - 1.0;
        CHECK(acc == 0.0);
    }
}

TEST_CASE("random_shift") {
    const Shift a = random_shift(42, 16);
    const Shift b = random_shift(42, 16);
    const Shift c = random_shift(43, 16);
    CHECK(a.delta == b.delta);
    int differing = 0;
    for (int j = 0; j < 16; ++j) {
        CHECK(a.delta[j] >= 0.0);
        CHECK(a.delta[j] < 1.0);
        if (a.delta[j] != c.delta[j]) ++differing;
    }
    CHECK(differing == 16);
}

TEST_CASE("shift-averaged unbiasedness for a product integrand") {
    const int s = 4;
    const std::uint64_t n = 64;
    const LatticeRule rule(n, cbc_vector(n, s, ProductWeights::decay(s, 1.0)));
    const int n_shifts = 64;
    std::vector<double> estimates(n_shifts);
    std::vector<double> pt(s);
    for (int k = 0; k < n_shifts; ++k) {
        const Shift sh = random_shift(1000 + k, s);
        double acc = 0.0;
        for (std::uint64_t i = 0; i < n; ++i) {
            lattice_point(rule, sh, i, pt);
            double prod = 1.0;
            for (int j = 0; j < s; ++j) prod *= pt[j];
            acc += prod;
        }
        estimates[k] = acc / n;
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= n_shifts;
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= (n_shifts - 1);
    const double std_err = std::sqrt(var / n_shifts);
    CHECK(std::abs(mean - std::pow(2.0, -s)) <= 3.0 * std_err);
}

TEST_CASE("cubature convergence for a smooth periodic integrand") {
    // product of 1 + c_j B2(t_j): exact integral 1, full Fourier spectrum
    // (a band-limited integrand would be integrated exactly by the rule);
    // error should decay faster than n^-0.9
    const int s = 4;
    std::vector<double> log_n, log_err;
    std::vector<double> pt(s);
    const Shift sh = random_shift(7, s);
    for (int k = 8; k <= 14; k += 2) {
        const std::uint64_t n = 1ull << k;
        const LatticeRule rule(n, cbc_vector(n, s, ProductWeights::decay(s, 1.0)));
        double acc = 0.0;
        for (std::uint64_t i = 0; i < n; ++i) {
            lattice_point(rule, sh, i, pt);
            double prod = 1.0;
            for (int j = 0; j < s; ++j)
                prod *= 1.0 + 3.0 * std::pow(j + 1.0, -2.0) *
                                  (pt[j] * (pt[j] - 1.0) + 1.0 / 6.0);
            acc += prod;
        }
        const double err = std::abs(acc / n - 1.0);
        if (err < 1e-14) break;
        log_n.push_back(std::log2(static_cast<double>(n)));
        log_err.push_back(std::log2(err));
    }
    REQUIRE(log_n.size() >= 3);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < log_n.size(); ++i) {
        sx += log_n[i];
        sy += log_err[i];
        sxx += log_n[i] * log_n[i];
        sxy += log_n[i] * log_err[i];
    }
    const double m = static_cast<double>(log_n.size());
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(slope < -0.9);
}

TEST_CASE("ProductWeights validation") {
    CHECK_THROWS_AS(ProductWeights({1.0, 2.0}), std::domain_error);
    CHECK_THROWS_AS(ProductWeights({0.0}), std::domain_error);
    CHECK_THROWS_AS(ProductWeights({}), std::domain_error);
}
