#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace dimtrunc {

namespace detail {

inline bool is_power_of_two(std::uint64_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// splitmix64; fixed here so node streams are bit-reproducible across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline double to_unit_interval(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Bernoulli polynomial B2 on [0,1).
inline double bernoulli2(double x) { return x * x - x + 1.0 / 6.0; }

}  // namespace detail

/// Rank-1 lattice rule: point i, coordinate j is frac(i * z_j / n).
struct LatticeRule {
    std::uint64_t n;             // node count, power of two
    std::vector<std::uint64_t> z;  // generating vector, all components odd

    LatticeRule(std::uint64_t n_, std::vector<std::uint64_t> z_)
        : n(n_), z(std::move(z_)) {
        if (!detail::is_power_of_two(n))
            throw std::domain_error("LatticeRule: n must be a power of two >= 2");
        if (z.empty()) throw std::domain_error("LatticeRule: empty generating vector");
        for (auto zj : z)
            if (zj % 2 == 0 || zj == 0 || zj >= n)
                throw std::domain_error("LatticeRule: components must be odd, in [1, n)");
    }

    std::size_t dim() const { return z.size(); }
};

/// Random shift modulo 1, reproducible from its seed.
struct Shift {
    std::vector<double> delta;  // components in [0,1)
    std::uint64_t seed = 0;
};

/// Nonincreasing positive per-dimension weights for the CBC criterion.
struct ProductWeights {
    std::vector<double> gamma;

    explicit ProductWeights(std::vector<double> g) : gamma(std::move(g)) {
        if (gamma.empty()) throw std::domain_error("ProductWeights: empty");
        for (std::size_t j = 0; j < gamma.size(); ++j) {
            if (!(gamma[j] > 0.0))
                throw std::domain_error("ProductWeights: weights must be positive");
            if (j > 0 && gamma[j] > gamma[j - 1])
                throw std::domain_error("ProductWeights: weights must be nonincreasing");
        }
    }

    /// gamma_j = j^{-2 theta} + floor, the default pairing with a decay
    /// exponent. A nonzero floor keeps every pair of coordinates visible to
    /// the CBC criterion (pair weight >= floor^2): with rapidly decaying
    /// weights alone, pairs of late dimensions carry negligible weight and
    /// the construction can hand them near-degenerate 2-D projections
    /// (e.g. mirrored components z_k = n - z_j, whose coordinates are fully
    /// anticorrelated).
    static ProductWeights decay(std::size_t s, double theta, double floor = 0.0) {
        std::vector<double> g(s);
        for (std::size_t j = 0; j < s; ++j)
            g[j] = std::pow(static_cast<double>(j + 1), -2.0 * theta) + floor;
        return ProductWeights(std::move(g));
    }
};

/// z_j = a^{j-1} mod n for odd a.
inline std::vector<std::uint64_t> korobov_vector(std::uint64_t n, std::uint64_t a,
                                                 std::size_t s) {
    if (!detail::is_power_of_two(n))
        throw std::domain_error("korobov_vector: n must be a power of two >= 2");
    if (a % 2 == 0 || a == 0)
        throw std::domain_error("korobov_vector: a must be odd and nonzero");
    if (s < 1) throw std::domain_error("korobov_vector: s >= 1");
    a %= n;  // odd stays odd modulo a power of two
    std::vector<std::uint64_t> z(s);
    std::uint64_t zj = 1;
    for (std::size_t j = 0; j < s; ++j) {
        z[j] = zj;
        zj = (zj * a) % n;
    }
    return z;
}

/// Squared shift-averaged worst-case error in the weighted unanchored
/// Sobolev space: e^2(z) = -1 + (1/n) sum_i prod_j (1 + gamma_j B2(frac(i z_j / n))).
inline double worst_case_error_sq(std::span<const std::uint64_t> z, std::uint64_t n,
                                  const ProductWeights& w) {
    if (w.gamma.size() < z.size())
        throw std::domain_error("worst_case_error_sq: too few weights");
    double sum = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        double prod = 1.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double x = static_cast<double>((i * z[j]) % n) / static_cast<double>(n);
            prod *= 1.0 + w.gamma[j] * detail::bernoulli2(x);
        }
        sum += prod;
    }
    return -1.0 + sum / static_cast<double>(n);
}

/// Component-by-component construction: greedy minimization of e^2, one
/// coordinate at a time, over odd candidates; ties go to the smallest
/// candidate. frac(i z / n) permutes the grid {i/n}, so B2 values are
/// precomputed once and indexed by (i * z) mod n.
inline std::vector<std::uint64_t> cbc_vector(std::uint64_t n, std::size_t s,
                                             const ProductWeights& w) {
    if (!detail::is_power_of_two(n))
        throw std::domain_error("cbc_vector: n must be a power of two >= 2");
    if (s < 1) throw std::domain_error("cbc_vector: s >= 1");
    if (w.gamma.size() < s) throw std::domain_error("cbc_vector: too few weights");

    const std::uint64_t mask = n - 1;
    std::vector<double> b2(n);
    for (std::uint64_t i = 0; i < n; ++i)
        b2[i] = detail::bernoulli2(static_cast<double>(i) / static_cast<double>(n));

    std::vector<double> running(n, 1.0);  // prod over chosen coords, per node
    std::vector<std::uint64_t> z;
    z.reserve(s);
    // Once the weights decay below the criterion's sensitivity the running
    // product freezes and the plain argmin would reuse earlier components
    // (or their low-order rationals) for every further dimension, giving
    // those coordinate pairs degenerate 2-D projections: z_k = z_j or
    // n - z_j makes the pair fully (anti)correlated, and 3 z_j or 3^{-1} z_j
    // nearly so. Such candidates are blocked while unblocked ones remain.
    std::vector<bool> used(n, false);
    std::size_t free_slots = n / 2;  // odd residues not yet marked
    const auto mark = [&](std::uint64_t v) {
        for (std::uint64_t u : {v % n, (n - v % n) % n})
            if (!used[u]) {
                used[u] = true;
                --free_slots;
            }
    };
    // Odd multipliers are invertible modulo a power of two.
    const auto inverse = [n](std::uint64_t a) {
        std::uint64_t x = 1;
        while ((a * x) % n != 1) x += 2;
        return x;
    };
    const std::uint64_t low_order[] = {3, inverse(3), 5, inverse(5),
                                       7, inverse(7)};
    for (std::size_t j = 0; j < s; ++j) {
        // e2(cand) = A + (gamma_j / n) * S(cand) with A independent of the
        // candidate, so ranking by S = sum_i running_i B2((i cand)/n) is
        // exact and keeps full resolution even when gamma_j underflows the
        // e2 round-off (comparing e2 directly would tie almost everything
        // and hand out duplicate components, whose 2-D projections are
        // degenerate).
        std::uint64_t best_z = 0;
        double best_s = 0.0;
        for (int pass = 0; pass < 2 && best_z == 0; ++pass) {
            for (std::uint64_t cand = 1; cand < n; cand += 2) {
                if (pass == 0 && used[cand]) continue;
                double sum = 0.0;
                for (std::uint64_t i = 0; i < n; ++i)
                    sum += running[i] * b2[(i * cand) & mask];
                // Slack above summation round-off so exact ties (permuted
                // node sets) go to the smallest candidate.
                if (best_z == 0 ||
                    sum < best_s - 1e-10 * (1.0 + std::abs(best_s))) {
                    best_s = sum;
                    best_z = cand;
                }
            }
        }
        const double g = w.gamma[j];
        for (std::uint64_t i = 0; i < n; ++i)
            running[i] *= 1.0 + g * b2[(i * best_z) & mask];
        mark(best_z);
        // Block low-order rational multiples too, as long as enough odd
        // candidates remain for the dimensions still to be chosen.
        for (std::uint64_t q : low_order) {
            if (free_slots < 2 + (s - j)) break;
            mark(q * best_z);
        }
        z.push_back(best_z);
    }
    return z;
}

/// Deterministic shift with one splittable splitmix64 stream per dimension.
inline Shift random_shift(std::uint64_t seed, std::size_t s) {
    Shift shift;
    shift.seed = seed;
    shift.delta.resize(s);
    const std::uint64_t base = detail::splitmix64(seed);
    for (std::size_t j = 0; j < s; ++j)
        shift.delta[j] = detail::to_unit_interval(
            detail::splitmix64(base + j * 0x9E3779B97F4A7C15ULL));
    return shift;
}

/// Snaps each shift component onto the centered grid {(k + 1/2)/n}. The
/// shift stays random over n offsets per dimension, but every 1-D
/// projection of the shifted rule becomes a midpoint rule, which integrates
/// zero-mean antisymmetric factors (like y_j itself) exactly instead of
/// with an O(1/n) bias. With a single shift that bias would otherwise
/// dominate small differences of means.
inline Shift centered_shift(Shift shift, std::uint64_t n) {
    if (!detail::is_power_of_two(n))
        throw std::domain_error("centered_shift: n must be a power of two >= 2");
    for (auto& d : shift.delta)
        d = (std::floor(d * static_cast<double>(n)) + 0.5) /
            static_cast<double>(n);
    return shift;
}

/// Seeded shift that makes the shifted node set of `rule` exactly symmetric
/// under t -> 1 - t: delta_j = (n - c z_j mod n)/(2n) + b_j/2 with one odd
/// draw c and per-dimension bits b_j, so node i pairs with node (c - i) mod n.
/// Every coordinate lands on the centered grid {(k + 1/2)/n} (never 0), and
/// any integrand that is odd under per-coordinate reflection around 1/2 --
/// including every odd-order term of maps like Phi^{-1}(t) or 2t - 1 -- is
/// integrated to exactly zero, instead of with the O(1/n) single-shift bias
/// that would otherwise dominate small differences of means.
inline Shift symmetric_shift(const LatticeRule& rule, std::uint64_t seed) {
    const std::uint64_t n = rule.n;
    Shift shift;
    shift.seed = seed;
    shift.delta.resize(rule.dim());
    const std::uint64_t base = detail::splitmix64(seed);
    const std::uint64_t c = (detail::splitmix64(base) % n) | 1ULL;
    const double inv_2n = 0.5 / static_cast<double>(n);
    for (std::size_t j = 0; j < rule.dim(); ++j) {
        // c and z_j odd, n a power of two, so (c z_j) mod n is odd and
        // nonzero: delta_j sits strictly inside (0, 1).
        const std::uint64_t r = n - (c * rule.z[j]) % n;
        const std::uint64_t bit =
            detail::splitmix64(base + (j + 1) * 0x9E3779B97F4A7C15ULL) & 1ULL;
        shift.delta[j] = static_cast<double>(r) * inv_2n +
                         (bit ? 0.5 : 0.0);
    }
    return shift;
}

/// Writes point i of the shifted rule into out (first rule.dim() coordinates).
inline void lattice_point(const LatticeRule& rule, const Shift& shift,
                          std::uint64_t i, std::span<double> out) {
    if (shift.delta.size() < rule.dim())
        throw std::domain_error("lattice_point: shift dimension too small");
    if (out.size() < rule.dim())
        throw std::domain_error("lattice_point: output span too small");
    const double inv_n = 1.0 / static_cast<double>(rule.n);
    const std::uint64_t mask = rule.n - 1;
    for (std::size_t j = 0; j < rule.dim(); ++j) {
        double t = static_cast<double>((i * rule.z[j]) & mask) * inv_n + shift.delta[j];
        if (t >= 1.0) t -= 1.0;
        out[j] = t;
    }
}

/// All n points of the shifted rule.
inline std::vector<std::vector<double>> lattice_points(const LatticeRule& rule,
                                                       const Shift& shift) {
    std::vector<std::vector<double>> pts(rule.n, std::vector<double>(rule.dim()));
    for (std::uint64_t i = 0; i < rule.n; ++i) lattice_point(rule, shift, i, pts[i]);
    return pts;
}

}  // namespace dimtrunc
