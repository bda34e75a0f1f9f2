#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimtrunc {

/// Raised when an affine diffusion coefficient evaluates nonpositive
/// (ellipticity violated at that point).
struct NonPositiveCoefficient : std::runtime_error {
    explicit NonPositiveCoefficient(const std::string& what)
        : std::runtime_error(what) {}
};

enum class FieldKind { Affine, Lognormal };

/// Diffusion-coefficient model on the unit square with basis
/// psi_j(x) = j^{-theta} sin(j pi x1) sin(j pi x2).
struct FieldSpec {
    FieldKind kind = FieldKind::Lognormal;
    double a0 = 1.0;      // 3/2 for the affine experiment, 1 for lognormal
    double theta = 2.0;   // decay exponent, > 1
    int max_dim = 1;      // total parameter dimension carried by samples

    FieldSpec(FieldKind kind_, double a0_, double theta_, int max_dim_)
        : kind(kind_), a0(a0_), theta(theta_), max_dim(max_dim_) {
        if (!(theta > 1.0)) throw std::domain_error("FieldSpec: requires theta > 1");
        if (max_dim < 1) throw std::domain_error("FieldSpec: requires max_dim >= 1");
    }
};

/// Parameter vector with an active-dimension mask: coordinates beyond
/// `active` are treated as zero.
struct ParamVector {
    std::vector<double> y;
    int active = 0;

    ParamVector(std::vector<double> y_, int active_)
        : y(std::move(y_)), active(active_) {
        if (active < 0 || static_cast<std::size_t>(active) > y.size())
            throw std::domain_error("ParamVector: active out of range");
    }
};

inline double basis_eval(const FieldSpec& spec, int j, std::array<double, 2> x) {
    if (j < 1) throw std::domain_error("basis_eval: requires j >= 1");
    return std::pow(static_cast<double>(j), -spec.theta) *
           std::sin(j * M_PI * x[0]) * std::sin(j * M_PI * x[1]);
}

inline double coeff_eval(const FieldSpec& spec, const ParamVector& p,
                         std::array<double, 2> x) {
    double sum = 0.0;
    for (int j = 1; j <= p.active; ++j) sum += p.y[j - 1] * basis_eval(spec, j, x);
    if (spec.kind == FieldKind::Lognormal) return spec.a0 * std::exp(sum);
    const double a = spec.a0 + sum;
    if (a <= 1e-12)
        throw NonPositiveCoefficient("coeff_eval: affine coefficient " +
                                     std::to_string(a) + " at (" +
                                     std::to_string(x[0]) + ", " +
                                     std::to_string(x[1]) + ")");
    return a;
}

inline ParamVector truncate(const ParamVector& p, int s) {
    if (s < 0 || static_cast<std::size_t>(s) > p.y.size())
        throw std::domain_error("truncate: s out of range");
    return ParamVector(p.y, s);
}

/// (j^{-theta})_{j=1..count}: the sup norms of the basis functions.
inline std::vector<double> decay_norms(const FieldSpec& spec, int count) {
    if (count < 1) throw std::domain_error("decay_norms: requires count >= 1");
    std::vector<double> b(count);
    for (int j = 1; j <= count; ++j)
        b[j - 1] = std::pow(static_cast<double>(j), -spec.theta);
    return b;
}

/// One triangle of a square cell [x0, x0+h] x [y0, y0+h] split along its
/// main diagonal; `upper` selects the triangle above the diagonal.
struct CellGeom {
    double x0 = 0.0, y0 = 0.0, h = 0.0;
    bool upper = false;
};

enum class CellMoment { Mean, Variance };

namespace detail {

// Exact integrals over one diagonal-split cell triangle. Signs are pinned by
// the square identities lower + upper = product of the 1-D integrals.

// integral of sin(u x) sin(u y)
inline double tri_int_ss(double u, const CellGeom& c) {
    const double xh = c.x0 + c.h, yh = c.y0 + c.h;
    const double s0 = c.x0 + c.y0, s2 = s0 + 2.0 * c.h, d = c.x0 - c.y0;
    const double t = 0.5 * ((std::cos(u * s0) - std::cos(u * s2)) / (2.0 * u) +
                            c.h * std::sin(u * d));
    const double dcx = std::cos(u * c.x0) - std::cos(u * xh);
    return c.upper ? (t - std::cos(u * yh) * dcx / u) / u
                   : (std::cos(u * c.y0) * dcx / u - t) / u;
}

// integral of cos(u x)
inline double tri_int_cx(double u, const CellGeom& c) {
    const double xh = c.x0 + c.h;
    const double dcos = (std::cos(u * xh) - std::cos(u * c.x0)) / (u * u);
    return c.upper ? -c.h * std::sin(u * c.x0) / u - dcos
                   : c.h * std::sin(u * xh) / u + dcos;
}

// integral of cos(u y)
inline double tri_int_cy(double u, const CellGeom& c) {
    const double yh = c.y0 + c.h;
    const double dcos = (std::cos(u * yh) - std::cos(u * c.y0)) / (u * u);
    return c.upper ? c.h * std::sin(u * yh) / u + dcos
                   : -c.h * std::sin(u * c.y0) / u - dcos;
}

// integral of cos(u x) cos(u y)
inline double tri_int_cc(double u, const CellGeom& c) {
    const double xh = c.x0 + c.h, yh = c.y0 + c.h;
    const double s0 = c.x0 + c.y0, s2 = s0 + 2.0 * c.h, d = c.x0 - c.y0;
    const double t = ((std::cos(u * s0) - std::cos(u * s2)) / (2.0 * u) -
                      c.h * std::sin(u * d)) /
                     (2.0 * u);
    const double dsx = (std::sin(u * xh) - std::sin(u * c.x0)) / (u * u);
    return c.upper ? std::sin(u * yh) * dsx - t : t - std::sin(u * c.y0) * dsx;
}

}  // namespace detail

/// Exact mean of psi_j over a cell triangle, or its within-cell variance
/// (mean of psi_j^2 minus squared mean), from closed-form antiderivatives.
/// Free of sampling error at every frequency, unlike point rules.
inline double basis_cell_moment(const FieldSpec& spec, int j, const CellGeom& cell,
                                CellMoment moment) {
    if (j < 1) throw std::domain_error("basis_cell_moment: requires j >= 1");
    if (!(cell.h > 0.0)) throw std::domain_error("basis_cell_moment: requires h > 0");
    const double u = j * M_PI;
    const double area = 0.5 * cell.h * cell.h;
    const double bj = std::pow(static_cast<double>(j), -spec.theta);
    const double mean = bj * detail::tri_int_ss(u, cell) / area;
    if (moment == CellMoment::Mean) return mean;
    // psi_j^2 via sin^2(ux) sin^2(uy) = (1 - cos(2ux)) (1 - cos(2uy)) / 4
    const double c2 = 2.0 * u;
    const double sq = bj * bj * 0.25 *
                      (area - detail::tri_int_cx(c2, cell) -
                       detail::tri_int_cy(c2, cell) + detail::tri_int_cc(c2, cell)) /
                      area;
    return std::max(0.0, sq - mean * mean);
}

/// Basis values tabulated at a fixed point set (one row per point,
/// max_dim columns); built once per mesh/spec pair so coefficient
/// evaluation over QMC nodes costs one dot product per point.
class BasisTable {
  public:
    BasisTable(const FieldSpec& spec, std::span<const std::array<double, 2>> points)
        : rows_(points.size()), cols_(spec.max_dim), values_(rows_ * cols_) {
        // Stored dimension-major: the per-dimension sweep over all points is
        // the hot loop and stays contiguous.
        for (int j = 1; j <= spec.max_dim; ++j)
            for (std::size_t r = 0; r < rows_; ++r)
                values_[(j - 1) * rows_ + r] = basis_eval(spec, j, points[r]);
    }

    /// Tabulates an exact per-cell moment of each basis function (one row
    /// per cell triangle): CellMoment::Mean or CellMoment::Variance.
    BasisTable(const FieldSpec& spec, std::span<const CellGeom> cells,
               CellMoment moment)
        : rows_(cells.size()), cols_(spec.max_dim), values_(rows_ * cols_) {
        for (int j = 1; j <= spec.max_dim; ++j)
            for (std::size_t r = 0; r < rows_; ++r)
                values_[(j - 1) * rows_ + r] =
                    basis_cell_moment(spec, j, cells[r], moment);
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double value(std::size_t r, int j) const { return values_[(j - 1) * rows_ + r]; }

    /// log-field (lognormal) or fluctuation (affine) at row r, truncated to s terms.
    double partial_sum(std::size_t r, std::span<const double> y, int s) const {
        double acc = 0.0;
        for (int j = 0; j < s; ++j) acc += y[j] * values_[j * rows_ + r];
        return acc;
    }

    /// Accumulates the expansion over all dimensions for every row at once,
    /// snapshotting at each requested truncation level. snapshots[k] receives
    /// the sums truncated to levels[k] terms (levels increasing, last <= cols).
    void prefix_sums(std::span<const double> y, std::span<const int> levels,
                     std::vector<std::vector<double>>& snapshots) const {
        snapshots.assign(levels.size(), std::vector<double>(rows_, 0.0));
        std::vector<double> acc(rows_, 0.0);
        int j = 0;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const int level = levels[k];
            if (level < j || static_cast<std::size_t>(level) > cols_)
                throw std::domain_error("prefix_sums: levels must be increasing");
            for (; j < level; ++j) {
                const double yj = y[j];
                const double* col = values_.data() + static_cast<std::size_t>(j) * rows_;
                for (std::size_t r = 0; r < rows_; ++r) acc[r] += yj * col[r];
            }
            snapshots[k] = acc;
        }
    }

  private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
};

}  // namespace dimtrunc
