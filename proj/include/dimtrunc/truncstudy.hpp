#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dimtrunc/betagauss.hpp"
#include "dimtrunc/fem2d.hpp"
#include "dimtrunc/lattice.hpp"
#include "dimtrunc/randfield.hpp"

namespace dimtrunc {

struct TooFewPoints : std::runtime_error {
    explicit TooFewPoints(const std::string& what) : std::runtime_error(what) {}
};

enum class Qoi { H1MeanField, NonlinearGnl };
enum class LatticeKind { Cbc, Korobov };

struct StudyConfig {
    FieldSpec field;
    int fem_level = 4;
    std::vector<int> s_list;          // strictly increasing truncation dims
    int s_ref = 512;                  // reference dimension, > max(s_list)
    std::uint64_t n_nodes = 8192;     // lattice size, power of two
    std::uint64_t seed = 20240901;
    double beta = 2.0;                // lognormal study only
    Qoi qoi = Qoi::H1MeanField;
    LatticeKind lattice_kind = LatticeKind::Cbc;
    std::uint64_t korobov_a = 1571;   // fallback generator for large n
    int threads = 0;                  // 0 = hardware concurrency
    double cg_tol = 1e-10;
    int cg_max_iters = 0;

    void validate() const {
        if (s_list.size() < 1) throw std::domain_error("StudyConfig: empty s_list");
        for (std::size_t i = 0; i + 1 < s_list.size(); ++i)
            if (s_list[i] >= s_list[i + 1])
                throw std::domain_error("StudyConfig: s_list must be strictly increasing");
        if (s_ref < s_list.back())
            throw std::domain_error("StudyConfig: s_ref must be >= max(s_list)");
        if (!detail::is_power_of_two(n_nodes))
            throw std::domain_error("StudyConfig: n_nodes must be a power of two");
        if (field.max_dim < s_ref)
            throw std::domain_error("StudyConfig: field.max_dim must cover s_ref");
    }
};

/// Default dimensions 2^1..2^8 against reference 2^9.
inline std::vector<int> default_s_list(int s_ref = 512) {
    std::vector<int> s;
    for (int v = 2; v < s_ref; v *= 2) s.push_back(v);
    return s;
}

inline StudyConfig lognormal_config(double theta) {
    StudyConfig cfg{FieldSpec(FieldKind::Lognormal, 1.0, theta, 512)};
    cfg.s_list = default_s_list();
    cfg.qoi = Qoi::H1MeanField;
    return cfg;
}

inline StudyConfig affine_config(double theta) {
    StudyConfig cfg{FieldSpec(FieldKind::Affine, 1.5, theta, 512)};
    cfg.s_list = default_s_list();
    cfg.qoi = Qoi::NonlinearGnl;
    cfg.beta = 0.0;
    return cfg;
}

struct RateFit {
    double slope = 0.0;
    int s_lo = 0, s_hi = 0;       // retained range
    int dropped_small = 0;        // below the error floor
    int dropped_tail = 0;         // trailing saturation
};

/// Least-squares slope of log2(error) against log2(s), after discarding
/// points below the error floor and trailing points where the error
/// increases (cubature-error saturation).
inline RateFit fit_rate(std::span<const std::pair<double, double>> points,
                        double min_error = 1e-8) {
    std::vector<std::pair<double, double>> pts;
    RateFit fit;
    for (const auto& [s, e] : points) {
        if (e < min_error) {
            ++fit.dropped_small;
            continue;
        }
        pts.emplace_back(s, e);
    }
    while (pts.size() >= 2 && pts.back().second >= pts[pts.size() - 2].second) {
        pts.pop_back();
        ++fit.dropped_tail;
    }
    if (pts.size() < 3)
        throw TooFewPoints("fit_rate: fewer than 3 points survive trimming");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [s, e] : pts) {
        const double x = std::log2(s), y = std::log2(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.s_lo = static_cast<int>(pts.front().first);
    fit.s_hi = static_cast<int>(pts.back().first);
    return fit;
}

/// Limiting truncation-error exponent -2/p + 1 as p approaches 1/theta.
inline double theoretical_rate(double theta) {
    if (!(theta > 1.0)) throw std::domain_error("theoretical_rate: requires theta > 1");
    return 1.0 - 2.0 * theta;
}

struct StechkinReport {
    double lhs = 0.0, rhs = 0.0;
    bool holds = false;
};

/// Tail bound (sum_{k>N} a_k^q)^{1/q} <= N^{-1/p+1/q} (sum_k a_k^p)^{1/p}
/// for nonincreasing nonnegative sequences.
inline StechkinReport stechkin_check(std::span<const double> a, double p, double q,
                                     int N) {
    if (!(p > 0.0 && p <= q)) throw std::domain_error("stechkin_check: need 0 < p <= q");
    if (N < 1) throw std::domain_error("stechkin_check: need N >= 1");
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] < 0.0) throw std::domain_error("stechkin_check: negative entry");
        if (k > 0 && a[k] > a[k - 1])
            throw std::domain_error("stechkin_check: sequence not nonincreasing");
    }
    double tail_q = 0.0, full_p = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double tp = std::pow(a[k], p);
        if (tp < 1e-300) break;
        full_p += tp;
        if (static_cast<int>(k) >= N) tail_q += std::pow(a[k], q);
    }
    StechkinReport rep;
    rep.lhs = std::pow(tail_q, 1.0 / q);
    rep.rhs = std::pow(static_cast<double>(N), -1.0 / p + 1.0 / q) *
              std::pow(full_p, 1.0 / p);
    rep.holds = rep.lhs <= rep.rhs + 1e-12;
    return rep;
}

struct StudyEntry {
    int s = 0;
    double error = 0.0;
    double wall_ms = 0.0;
    bool at_machine_precision = false;  // |error| < 1e-15 (affine study)
};

struct StudyResult {
    std::vector<StudyEntry> entries;
    double fitted_slope = 0.0;
    int fit_lo = 0, fit_hi = 0;
    std::uint64_t n_nodes = 0;
    int s_ref = 0;
    int fem_level = 0;
    double theta = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t solve_count = 0;
    double total_wall_ms = 0.0;
};

namespace detail {

// Chunked, node-index-ordered accumulation: per-chunk partials are summed
// sequentially within each chunk and merged pairwise in chunk order, so
// results are identical for any thread count.
inline constexpr std::uint64_t kChunkNodes = 256;

inline void pairwise_merge(std::vector<std::vector<double>>& chunks, std::size_t lo,
                           std::size_t hi, std::vector<double>& out) {
    if (hi - lo == 1) {
        out = std::move(chunks[lo]);
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::vector<double> left, right;
    pairwise_merge(chunks, lo, mid, left);
    pairwise_merge(chunks, mid, hi, right);
    out.resize(left.size());
    for (std::size_t i = 0; i < left.size(); ++i) out[i] = left[i] + right[i];
}

template <typename PerChunk>
void run_chunked(std::uint64_t n_nodes, int threads, PerChunk per_chunk) {
    const std::uint64_t n_chunks = (n_nodes + kChunkNodes - 1) / kChunkNodes;
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) threads = 1;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::uint64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                const std::uint64_t lo = c * kChunkNodes;
                const std::uint64_t hi = std::min(n_nodes, lo + kChunkNodes);
                per_chunk(c, lo, hi);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n_chunks);
                return;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
}

inline LatticeRule make_rule(const StudyConfig& cfg) {
    if (cfg.lattice_kind == LatticeKind::Korobov)
        return LatticeRule(cfg.n_nodes,
                           korobov_vector(cfg.n_nodes, cfg.korobov_a, cfg.s_ref));
    // Naive CBC is kept to desk scale; Korobov covers the rest.
    if (cfg.n_nodes > (1u << 14) || cfg.s_ref > (1 << 9))
        throw std::domain_error(
            "make_rule: CBC limited to n <= 2^14, s <= 2^9; use Korobov");
    return LatticeRule(cfg.n_nodes,
                       cbc_vector(cfg.n_nodes, cfg.s_ref,
                                  ProductWeights::decay(cfg.s_ref, cfg.field.theta)));
}

}  // namespace detail

/// Optional externally constructed generating vector (lets callers reuse a
/// CBC vector across studies with the same n, s_ref and theta).
struct StudyRun {
    StudyConfig cfg;
    const LatticeRule* rule = nullptr;
};

/// Cell descriptors of the criss-cross triangulation, in element order
/// (vertex 0 is the southwest corner of the owning square for both
/// orientations).
inline std::vector<CellGeom> cell_geoms(const TriMesh& mesh) {
    std::vector<CellGeom> cells(mesh.elements.size());
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto sw = mesh.node_coord(mesh.elements[e][0]);
        cells[e] = CellGeom{sw[0], sw[1], mesh.h(), (e & 1) != 0};
    }
    return cells;
}

namespace detail {

template <typename MapNode>
StudyResult run_study_impl(const StudyConfig& cfg, const LatticeRule* ext_rule,
                           MapNode map_node) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    LatticeRule rule = ext_rule ? *ext_rule : make_rule(cfg);
    if (rule.n != cfg.n_nodes || rule.dim() < static_cast<std::size_t>(cfg.s_ref))
        throw std::domain_error("run_study: lattice rule does not match config");
    const Shift shift = symmetric_shift(rule, cfg.seed);

    FemWorkspace fem(cfg.fem_level, [](std::array<double, 2> x) { return x[1]; },
                     cfg.cg_tol, cfg.cg_max_iters);
    // Lognormal coefficient per element: a0 * exp(mean(g) + var(g)/2) with the
    // exact within-cell mean of the log-field g and the diagonal part of its
    // within-cell variance. This matches the cell average of exp(g) to second
    // order in the within-cell fluctuation and keeps unresolved basis
    // frequencies from aliasing into the coefficient at full amplitude, which
    // any point rule does. Affine coefficient: centroid sampling, a0 + g.
    const bool lognormal = cfg.field.kind == FieldKind::Lognormal;
    const std::vector<CellGeom> cells = cell_geoms(fem.mesh());
    const BasisTable basis = lognormal
                                 ? BasisTable(cfg.field, cells, CellMoment::Mean)
                                 : BasisTable(cfg.field, fem.centroids());
    std::optional<BasisTable> var_table;
    if (lognormal) var_table.emplace(cfg.field, cells, CellMoment::Variance);
    const std::size_t n_elems = fem.element_count();
    const std::size_t n_nodes_mesh = fem.mesh().node_count();

    std::vector<int> levels(cfg.s_list.begin(), cfg.s_list.end());
    levels.push_back(cfg.s_ref);
    const std::size_t n_levels = levels.size();
    const std::size_t n_s = cfg.s_list.size();
    const bool mean_field = cfg.qoi == Qoi::H1MeanField;

    const std::uint64_t n_chunks =
        (cfg.n_nodes + kChunkNodes - 1) / kChunkNodes;
    // Per-chunk accumulators: difference fields (flattened per s) or scalar
    // QoI differences, plus per-s solve wall time.
    std::vector<std::vector<double>> chunk_fields(
        n_chunks, std::vector<double>(mean_field ? n_s * n_nodes_mesh : n_s, 0.0));
    std::vector<std::vector<double>> chunk_wall(n_chunks,
                                                std::vector<double>(n_s + 1, 0.0));
    std::atomic<std::uint64_t> solve_count{0};

    run_chunked(cfg.n_nodes, cfg.threads, [&](std::uint64_t chunk, std::uint64_t lo,
                                              std::uint64_t hi) {
        std::vector<double> t(cfg.s_ref), y(cfg.s_ref), coeff(n_elems);
        std::vector<double> y_sq(lognormal ? cfg.s_ref : 0);
        std::vector<std::vector<double>> snapshots, var_snaps;
        std::vector<FemFunction> solutions(n_levels);
        auto& acc = chunk_fields[chunk];
        auto& wall = chunk_wall[chunk];
        for (std::uint64_t i = lo; i < hi; ++i) {
            lattice_point(rule, shift, i, t);
            map_node(t, y);
            basis.prefix_sums(y, levels, snapshots);
            if (lognormal) {
                for (int j = 0; j < cfg.s_ref; ++j) y_sq[j] = y[j] * y[j];
                var_table->prefix_sums(y_sq, levels, var_snaps);
            }
            for (std::size_t k = 0; k < n_levels; ++k) {
                for (std::size_t e = 0; e < n_elems; ++e) {
                    const double g = snapshots[k][e];
                    if (lognormal) {
                        coeff[e] = cfg.field.a0 * std::exp(g + 0.5 * var_snaps[k][e]);
                    } else {
                        coeff[e] = cfg.field.a0 + g;
                        if (coeff[e] <= 1e-12)
                            throw NonPositiveCoefficient(
                                "node " + std::to_string(i) + ", s = " +
                                std::to_string(levels[k]) +
                                ": affine coefficient nonpositive");
                    }
                }
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    solutions[k] = fem.solve_with_coefficients(coeff);
                } catch (const NoConvergence& e) {
                    throw NoConvergence(e.achieved_residual,
                                        "node " + std::to_string(i) + ", s = " +
                                            std::to_string(levels[k]));
                }
                solve_count.fetch_add(1);
                wall[k] += std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
            }
            const FemFunction& ref = solutions[n_levels - 1];
            if (mean_field) {
                for (std::size_t k = 0; k < n_s; ++k) {
                    double* dst = acc.data() + k * n_nodes_mesh;
                    const auto& us = solutions[k].values;
                    for (std::size_t r = 0; r < n_nodes_mesh; ++r)
                        dst[r] += ref.values[r] - us[r];
                }
            } else {
                const double q_ref = fem.qoi_nl(ref);
                for (std::size_t k = 0; k < n_s; ++k)
                    acc[k] += q_ref - fem.qoi_nl(solutions[k]);
            }
        }
    });

    std::vector<double> total;
    pairwise_merge(chunk_fields, 0, n_chunks, total);

    StudyResult res;
    res.n_nodes = cfg.n_nodes;
    res.s_ref = cfg.s_ref;
    res.fem_level = cfg.fem_level;
    res.theta = cfg.field.theta;
    res.beta = mean_field ? cfg.beta : 0.0;
    res.seed = cfg.seed;
    res.solve_count = solve_count.load();

    const double inv_n = 1.0 / static_cast<double>(cfg.n_nodes);
    for (std::size_t k = 0; k < n_s; ++k) {
        StudyEntry entry;
        entry.s = cfg.s_list[k];
        if (mean_field) {
            FemFunction mean;
            mean.values.assign(total.begin() + k * n_nodes_mesh,
                               total.begin() + (k + 1) * n_nodes_mesh);
            for (auto& v : mean.values) v *= inv_n;
            entry.error = fem.h1_seminorm(mean);
        } else {
            entry.error = std::abs(total[k] * inv_n);
            entry.at_machine_precision = entry.error < 1e-15;
        }
        for (std::uint64_t c = 0; c < n_chunks; ++c) entry.wall_ms += chunk_wall[c][k];
        res.entries.push_back(entry);
    }

    std::vector<std::pair<double, double>> pts;
    for (const auto& e : res.entries) pts.emplace_back(e.s, e.error);
    try {
        const RateFit fit = fit_rate(pts, 100.0 * fem.cg_tol());
        res.fitted_slope = fit.slope;
        res.fit_lo = fit.s_lo;
        res.fit_hi = fit.s_hi;
    } catch (const TooFewPoints&) {
        res.fitted_slope = std::numeric_limits<double>::quiet_NaN();
    }
    res.total_wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t_start)
                            .count();
    return res;
}

}  // namespace detail

/// Lognormal study: lattice nodes mapped through the componentwise
/// beta-Gaussian quantile; error(s) is the H1 seminorm of the sample mean
/// of u_ref - u_s (norm of the mean, not mean of norms).
inline StudyResult run_lognormal_study(const StudyConfig& cfg,
                                       const LatticeRule* rule = nullptr) {
    if (cfg.qoi != Qoi::H1MeanField || cfg.field.kind != FieldKind::Lognormal)
        throw std::domain_error("run_lognormal_study: config mismatch");
    const BetaGaussian dist(cfg.beta);
    return detail::run_study_impl(
        cfg, rule, [&dist](std::span<const double> t, std::span<double> y) {
            for (std::size_t j = 0; j < t.size(); ++j) {
                // Lattice points can hit 0 exactly; nudge into (0,1).
                const double u = std::min(std::max(t[j], 1e-17), 1.0 - 1e-17);
                y[j] = dist.inv_cdf(u);
            }
        });
}

/// Affine study: nodes mapped by t -> 2t - 1; error(s) is the absolute
/// sample mean of G_nl(u_ref) - G_nl(u_s).
inline StudyResult run_affine_qoi_study(const StudyConfig& cfg,
                                        const LatticeRule* rule = nullptr) {
    if (cfg.qoi != Qoi::NonlinearGnl || cfg.field.kind != FieldKind::Affine)
        throw std::domain_error("run_affine_qoi_study: config mismatch");
    return detail::run_study_impl(
        cfg, rule, [](std::span<const double> t, std::span<double> y) {
            for (std::size_t j = 0; j < t.size(); ++j) y[j] = 2.0 * t[j] - 1.0;
        });
}

struct StrangReport {
    double max_ratio = 0.0;  // max over draws of lhs / rhs
    int violations = 0;      // ratio > 1 + 1e-9
    int draws = 0;
};

/// Discrete Strang inequality on the element-centroid grid:
/// h1(u - u_s) <= max|a - a_s| * h1(u) / min(a_s). With the centroid-rule
/// coefficient this is exact at the discrete level.
inline StrangReport strang_bound_check(const StudyConfig& cfg, int draws, int s) {
    if (s > cfg.s_ref) throw std::domain_error("strang_bound_check: s > s_ref");
    const BetaGaussian dist(cfg.beta);
    FemWorkspace fem(cfg.fem_level, [](std::array<double, 2> x) { return x[1]; },
                     cfg.cg_tol, cfg.cg_max_iters);
    const BasisTable basis(cfg.field, fem.centroids());
    const std::size_t n_elems = fem.element_count();

    StrangReport rep;
    rep.draws = draws;
    std::vector<double> y(cfg.s_ref);
    std::vector<int> levels = {s, cfg.s_ref};
    std::vector<std::vector<double>> snapshots;
    std::vector<double> coeff_s(n_elems), coeff_full(n_elems);
    for (int d = 0; d < draws; ++d) {
        const std::uint64_t base =
            detail::splitmix64(cfg.seed + 0x5851F42D4C957F2DULL * (d + 1));
        for (int j = 0; j < cfg.s_ref; ++j) {
            double u = detail::to_unit_interval(
                detail::splitmix64(base + j * 0x9E3779B97F4A7C15ULL));
            u = std::min(std::max(u, 1e-17), 1.0 - 1e-17);
            y[j] = dist.inv_cdf(u);
        }
        basis.prefix_sums(y, levels, snapshots);
        double sup_diff = 0.0, min_s = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < n_elems; ++e) {
            if (cfg.field.kind == FieldKind::Lognormal) {
                coeff_s[e] = cfg.field.a0 * std::exp(snapshots[0][e]);
                coeff_full[e] = cfg.field.a0 * std::exp(snapshots[1][e]);
            } else {
                coeff_s[e] = cfg.field.a0 + snapshots[0][e];
                coeff_full[e] = cfg.field.a0 + snapshots[1][e];
            }
            sup_diff = std::max(sup_diff, std::abs(coeff_full[e] - coeff_s[e]));
            min_s = std::min(min_s, coeff_s[e]);
        }
        const FemFunction u_full = fem.solve_with_coefficients(coeff_full);
        const FemFunction u_s = fem.solve_with_coefficients(coeff_s);
        FemFunction diff;
        diff.values.resize(u_full.values.size());
        for (std::size_t r = 0; r < diff.values.size(); ++r)
            diff.values[r] = u_full.values[r] - u_s.values[r];
        const double lhs = fem.h1_seminorm(diff);
        const double rhs = sup_diff * fem.h1_seminorm(u_full) / min_s;
        const double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? 1e300 : 0.0);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        if (ratio > 1.0 + 1e-9) ++rep.violations;
    }
    return rep;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// One row per s: s,error,n_nodes,s_ref,fem_level,theta,beta,seed,wall_ms.
/// A footer row carries the fitted slope and fit range. Timings default to
/// zero so identical configs produce byte-identical files.
inline void emit_csv(const StudyResult& res, std::ostream& os,
                     bool include_timings = false) {
    os << "s,error,n_nodes,s_ref,fem_level,theta,beta,seed,wall_ms\n";
    for (const auto& e : res.entries) {
        os << e.s << ',' << format_double(e.error) << ',' << res.n_nodes << ','
           << res.s_ref << ',' << res.fem_level << ',' << format_double(res.theta)
           << ',' << format_double(res.beta) << ',' << res.seed << ','
           << format_double(include_timings ? e.wall_ms : 0.0) << '\n';
    }
    os << "fitted_slope," << format_double(res.fitted_slope) << ",fit_range,"
       << res.fit_lo << ',' << res.fit_hi << ",,,,\n";
}

/// gnuplot script: log-log error vs s with the theoretical reference slope.
inline void emit_plot_script(const StudyResult& res, const std::string& csv_path,
                             std::ostream& os) {
    const double rate = theoretical_rate(res.theta);
    double anchor = 1.0;
    for (const auto& e : res.entries)
        if (e.error > 0.0) {
            anchor = e.error * std::pow(e.s, -rate);
            break;
        }
    os << "set logscale xy 2\n"
       << "set xlabel 's'\n"
       << "set ylabel 'dimension truncation error'\n"
       << "set datafile separator ','\n"
       << "set key top right\n"
       << "plot '" << csv_path << "' every ::1 using 1:2 with linespoints "
       << "title 'measured', \\\n"
       << "     " << format_double(anchor) << " * x**(" << format_double(rate)
       << ") with lines dashtype 2 title 'reference slope " << format_double(rate)
       << "'\n";
}

}  // namespace dimtrunc
