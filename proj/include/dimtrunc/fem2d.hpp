#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimtrunc {

/// Raised when the conjugate gradient solver exhausts its iteration cap.
struct NoConvergence : std::runtime_error {
    double achieved_residual;
    explicit NoConvergence(double res, const std::string& context = "")
        : std::runtime_error("solve: no convergence, relative residual " +
                             std::to_string(res) +
                             (context.empty() ? "" : " (" + context + ")")),
          achieved_residual(res) {}
};

/// Uniform triangulation of (0,1)^2 at mesh size h = 2^{-m}: row-major
/// lattice nodes, every grid square split along its SW-NE diagonal.
struct TriMesh {
    int level;                                   // m
    int nx;                                      // nodes per side, 2^m + 1
    std::vector<std::array<int, 3>> elements;    // vertex ids, square-major
    std::vector<bool> boundary;                  // per node

    int node_count() const { return nx * nx; }
    double h() const { return 1.0 / (nx - 1); }

    std::array<double, 2> node_coord(int id) const {
        const double h_ = h();
        return {(id % nx) * h_, (id / nx) * h_};
    }

    std::array<double, 2> centroid(int e) const {
        const auto& el = elements[e];
        const auto p0 = node_coord(el[0]), p1 = node_coord(el[1]),
                   p2 = node_coord(el[2]);
        return {(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0};
    }
};

inline TriMesh build_mesh(int m) {
    if (m < 1 || m > 8) throw std::domain_error("build_mesh: requires 1 <= m <= 8");
    TriMesh mesh;
    mesh.level = m;
    mesh.nx = (1 << m) + 1;
    const int nx = mesh.nx;
    mesh.boundary.resize(nx * nx);
    for (int iy = 0; iy < nx; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            mesh.boundary[iy * nx + ix] =
                ix == 0 || ix == nx - 1 || iy == 0 || iy == nx - 1;
    mesh.elements.reserve(2 * (nx - 1) * (nx - 1));
    for (int iy = 0; iy < nx - 1; ++iy)
        for (int ix = 0; ix < nx - 1; ++ix) {
            const int sw = iy * nx + ix, se = sw + 1, nw = sw + nx, ne = nw + 1;
            mesh.elements.push_back({sw, se, ne});  // lower
            mesh.elements.push_back({sw, ne, nw});  // upper
        }
    return mesh;
}

/// Compressed sparse row, symmetric patterns only by construction here.
struct CsrMatrix {
    int n = 0;
    std::vector<int> row_ptr;
    std::vector<int> col;
    std::vector<double> val;

    void multiply(std::span<const double> x, std::span<double> y) const {
        for (int r = 0; r < n; ++r) {
            double acc = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                acc += val[k] * x[col[k]];
            y[r] = acc;
        }
    }

    double quadratic_form(std::span<const double> x) const {
        double acc = 0.0;
        for (int r = 0; r < n; ++r) {
            double row = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                row += val[k] * x[col[k]];
            acc += x[r] * row;
        }
        return acc;
    }

    int find_slot(int r, int c) const {
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            if (col[k] == c) return k;
        throw std::logic_error("CsrMatrix: entry not in pattern");
    }
};

namespace detail {

// Local unit-coefficient stiffness matrices; h-independent for this
// triangulation. Index 0: lower (sw,se,ne), 1: upper (sw,ne,nw).
inline constexpr double kLocalStiffness[2][3][3] = {
    {{0.5, -0.5, 0.0}, {-0.5, 1.0, -0.5}, {0.0, -0.5, 0.5}},
    {{0.5, 0.0, -0.5}, {0.0, 0.5, -0.5}, {-0.5, -0.5, 1.0}},
};

// CSR pattern from element connectivity over an index map (-1 = excluded).
inline CsrMatrix build_pattern(const TriMesh& mesh, std::span<const int> index,
                               int n) {
    std::vector<std::vector<int>> adj(n);
    auto link = [&](int a, int b) {
        if (a < 0 || b < 0) return;
        auto& row = adj[a];
        for (int c : row)
            if (c == b) return;
        row.push_back(b);
    };
    for (const auto& el : mesh.elements)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) link(index[el[i]], index[el[j]]);
    CsrMatrix mat;
    mat.n = n;
    mat.row_ptr.assign(n + 1, 0);
    for (int r = 0; r < n; ++r) {
        auto& row = adj[r];
        std::sort(row.begin(), row.end());
        mat.row_ptr[r + 1] = mat.row_ptr[r] + static_cast<int>(row.size());
    }
    mat.col.reserve(mat.row_ptr[n]);
    for (int r = 0; r < n; ++r)
        mat.col.insert(mat.col.end(), adj[r].begin(), adj[r].end());
    mat.val.assign(mat.col.size(), 0.0);
    return mat;
}

inline std::vector<int> identity_index(int n) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace detail

/// Variable-coefficient stiffness over all nodes: per element, the
/// one-point centroid rule times the constant-gradient local matrix.
inline CsrMatrix assemble_stiffness(
    const TriMesh& mesh, const std::function<double(std::array<double, 2>)>& coeff) {
    const int n = mesh.node_count();
    const auto index = detail::identity_index(n);
    CsrMatrix mat = detail::build_pattern(mesh, index, n);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const double a = coeff(mesh.centroid(e));
        const auto& local = detail::kLocalStiffness[e & 1];
        const auto& el = mesh.elements[e];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                mat.val[mat.find_slot(el[i], el[j])] += a * local[i][j];
    }
    return mat;
}

/// Load vector over all nodes by the 3-point edge-midpoint rule (exact for
/// f times P1 up to total degree 2).
inline std::vector<double> assemble_load(
    const TriMesh& mesh, const std::function<double(std::array<double, 2>)>& f) {
    std::vector<double> load(mesh.node_count(), 0.0);
    const double area = mesh.h() * mesh.h() / 2.0;
    for (const auto& el : mesh.elements) {
        const auto p0 = mesh.node_coord(el[0]), p1 = mesh.node_coord(el[1]),
                   p2 = mesh.node_coord(el[2]);
        const double f01 = f({0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])});
        const double f12 = f({0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])});
        const double f20 = f({0.5 * (p2[0] + p0[0]), 0.5 * (p2[1] + p0[1])});
        load[el[0]] += area / 6.0 * (f01 + f20);
        load[el[1]] += area / 6.0 * (f01 + f12);
        load[el[2]] += area / 6.0 * (f12 + f20);
    }
    return load;
}

/// Consistent P1 mass matrix over all nodes.
inline CsrMatrix assemble_mass(const TriMesh& mesh) {
    const int n = mesh.node_count();
    const auto index = detail::identity_index(n);
    CsrMatrix mat = detail::build_pattern(mesh, index, n);
    const double area = mesh.h() * mesh.h() / 2.0;
    for (const auto& el : mesh.elements)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                mat.val[mat.find_slot(el[i], el[j])] +=
                    area / 12.0 * (i == j ? 2.0 : 1.0);
    return mat;
}

/// Nodal values over the full mesh; boundary entries zero for solutions.
struct FemFunction {
    std::vector<double> values;
};

/// Dirichlet-reduced system over the interior nodes.
struct FemSystem {
    const TriMesh* mesh = nullptr;
    std::vector<int> interior_index;  // node id -> interior id, -1 on boundary
    std::vector<int> interior_nodes;  // interior id -> node id
    CsrMatrix stiffness;              // interior x interior
    std::vector<double> load;         // interior
};

namespace detail {

inline std::pair<std::vector<int>, std::vector<int>> interior_maps(
    const TriMesh& mesh) {
    std::vector<int> index(mesh.node_count(), -1);
    std::vector<int> nodes;
    for (int i = 0; i < mesh.node_count(); ++i)
        if (!mesh.boundary[i]) {
            index[i] = static_cast<int>(nodes.size());
            nodes.push_back(i);
        }
    return {std::move(index), std::move(nodes)};
}

}  // namespace detail

inline FemSystem make_system(const TriMesh& mesh, const CsrMatrix& full_stiffness,
                             std::span<const double> full_load) {
    FemSystem sys;
    sys.mesh = &mesh;
    std::tie(sys.interior_index, sys.interior_nodes) = detail::interior_maps(mesh);
    const int n_int = static_cast<int>(sys.interior_nodes.size());
    sys.stiffness = detail::build_pattern(mesh, sys.interior_index, n_int);
    for (int r = 0; r < n_int; ++r) {
        const int node_r = sys.interior_nodes[r];
        for (int k = full_stiffness.row_ptr[node_r];
             k < full_stiffness.row_ptr[node_r + 1]; ++k) {
            const int c = sys.interior_index[full_stiffness.col[k]];
            if (c >= 0)
                sys.stiffness.val[sys.stiffness.find_slot(r, c)] =
                    full_stiffness.val[k];
        }
    }
    sys.load.resize(n_int);
    for (int r = 0; r < n_int; ++r) sys.load[r] = full_load[sys.interior_nodes[r]];
    return sys;
}

namespace detail {

/// Jacobi-preconditioned CG on an SPD interior system.
inline std::vector<double> pcg(const CsrMatrix& mat, std::span<const double> rhs,
                               double tol, int max_iters) {
    const int n = mat.n;
    std::vector<double> x(n, 0.0), r(rhs.begin(), rhs.end()), z(n), p(n), q(n);
    std::vector<double> inv_diag(n);
    for (int i = 0; i < n; ++i)
        inv_diag[i] = 1.0 / mat.val[mat.find_slot(i, i)];
    double rhs_norm = 0.0;
    for (double v : r) rhs_norm += v * v;
    rhs_norm = std::sqrt(rhs_norm);
    if (rhs_norm == 0.0) return x;

    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = 0.0;
    for (int i = 0; i < n; ++i) rz += r[i] * z[i];

    double res = rhs_norm;
    for (int it = 0; it < max_iters; ++it) {
        mat.multiply(p, q);
        double pq = 0.0;
        for (int i = 0; i < n; ++i) pq += p[i] * q[i];
        const double alpha = rz / pq;
        double rr = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rr += r[i] * r[i];
        }
        res = std::sqrt(rr);
        if (res <= tol * rhs_norm) return x;
        double rz_new = 0.0;
        for (int i = 0; i < n; ++i) {
            z[i] = inv_diag[i] * r[i];
            rz_new += r[i] * z[i];
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw NoConvergence(res / rhs_norm);
}

}  // namespace detail

inline FemFunction solve(const FemSystem& sys, double tol = 1e-10,
                         int max_iters = 0) {
    if (max_iters <= 0) max_iters = 10 * sys.stiffness.n;
    const auto x = detail::pcg(sys.stiffness, sys.load, tol, max_iters);
    FemFunction u;
    u.values.assign(sys.mesh->node_count(), 0.0);
    for (std::size_t i = 0; i < sys.interior_nodes.size(); ++i)
        u.values[sys.interior_nodes[i]] = x[i];
    return u;
}

/// sqrt(v^T A1 v) with A1 the unit-coefficient stiffness over all nodes.
inline double h1_seminorm(const CsrMatrix& unit_stiffness, const FemFunction& v) {
    return std::sqrt(std::max(0.0, unit_stiffness.quadratic_form(v.values)));
}

inline double h1_seminorm(const TriMesh& mesh, const FemFunction& v) {
    const CsrMatrix a1 = assemble_stiffness(mesh, [](std::array<double, 2>) {
        return 1.0;
    });
    return h1_seminorm(a1, v);
}

/// v^T M v = integral of v_h^2 with the consistent P1 mass matrix.
inline double qoi_nl(const CsrMatrix& mass, const FemFunction& v) {
    return mass.quadratic_form(v.values);
}

inline double qoi_nl(const TriMesh& mesh, const FemFunction& v) {
    return qoi_nl(assemble_mass(mesh), v);
}

/// Reusable per-mesh state for solving many variable-coefficient systems:
/// fixed interior pattern, per-element scatter slots, shared matrices.
class FemWorkspace {
  public:
    FemWorkspace(int level, std::function<double(std::array<double, 2>)> f,
                 double cg_tol = 1e-10, int cg_max_iters = 0)
        : mesh_(build_mesh(level)), cg_tol_(cg_tol), cg_max_iters_(cg_max_iters) {
        std::tie(interior_index_, interior_nodes_) = detail::interior_maps(mesh_);
        const int n_int = static_cast<int>(interior_nodes_.size());
        pattern_ = detail::build_pattern(mesh_, interior_index_, n_int);
        if (cg_max_iters_ <= 0) cg_max_iters_ = 10 * n_int;

        // Scatter table: (csr slot, unit local value) per interior pair.
        scatter_offsets_.assign(mesh_.elements.size() + 1, 0);
        for (std::size_t e = 0; e < mesh_.elements.size(); ++e) {
            const auto& el = mesh_.elements[e];
            const auto& local = detail::kLocalStiffness[e & 1];
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const int r = interior_index_[el[i]], c = interior_index_[el[j]];
                    if (r >= 0 && c >= 0) {
                        scatter_slots_.push_back(pattern_.find_slot(r, c));
                        scatter_values_.push_back(local[i][j]);
                    }
                }
            scatter_offsets_[e + 1] = static_cast<int>(scatter_slots_.size());
        }

        const auto full_load = assemble_load(mesh_, f);
        load_.resize(n_int);
        for (int r = 0; r < n_int; ++r) load_[r] = full_load[interior_nodes_[r]];

        unit_stiffness_ =
            assemble_stiffness(mesh_, [](std::array<double, 2>) { return 1.0; });
        mass_ = assemble_mass(mesh_);
        centroids_.resize(mesh_.elements.size());
        for (std::size_t e = 0; e < mesh_.elements.size(); ++e)
            centroids_[e] = mesh_.centroid(e);
    }

    const TriMesh& mesh() const { return mesh_; }
    std::span<const std::array<double, 2>> centroids() const { return centroids_; }
    const CsrMatrix& unit_stiffness() const { return unit_stiffness_; }
    const CsrMatrix& mass() const { return mass_; }
    std::size_t element_count() const { return mesh_.elements.size(); }

    /// Solves with per-element (centroid-rule) coefficient values.
    FemFunction solve_with_coefficients(std::span<const double> elem_coeff) const {
        CsrMatrix mat = pattern_;  // values start at zero
        for (std::size_t e = 0; e < mesh_.elements.size(); ++e) {
            const double a = elem_coeff[e];
            for (int k = scatter_offsets_[e]; k < scatter_offsets_[e + 1]; ++k)
                mat.val[scatter_slots_[k]] += a * scatter_values_[k];
        }
        const auto x = detail::pcg(mat, load_, cg_tol_, cg_max_iters_);
        FemFunction u;
        u.values.assign(mesh_.node_count(), 0.0);
        for (std::size_t i = 0; i < interior_nodes_.size(); ++i)
            u.values[interior_nodes_[i]] = x[i];
        return u;
    }

    double h1_seminorm(const FemFunction& v) const {
        return dimtrunc::h1_seminorm(unit_stiffness_, v);
    }

    double qoi_nl(const FemFunction& v) const {
        return dimtrunc::qoi_nl(mass_, v);
    }

    double cg_tol() const { return cg_tol_; }

  private:
    TriMesh mesh_;
    double cg_tol_;
    int cg_max_iters_;
    std::vector<int> interior_index_;
    std::vector<int> interior_nodes_;
    CsrMatrix pattern_;
    std::vector<int> scatter_offsets_;
    std::vector<int> scatter_slots_;
    std::vector<double> scatter_values_;
    std::vector<double> load_;
    CsrMatrix unit_stiffness_;
    CsrMatrix mass_;
    std::vector<std::array<double, 2>> centroids_;
};

/// H1-seminorm distance between a discrete solution and a smooth exact
/// solution, by the edge-midpoint rule applied to |grad u_h - grad u*|^2.
inline double h1_error_vs_exact(
    const TriMesh& mesh, const FemFunction& u,
    const std::function<std::array<double, 2>(std::array<double, 2>)>& grad_exact) {
    const double h = mesh.h();
    const double area = h * h / 2.0;
    double acc = 0.0;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& el = mesh.elements[e];
        const auto p0 = mesh.node_coord(el[0]), p1 = mesh.node_coord(el[1]),
                   p2 = mesh.node_coord(el[2]);
        const double v0 = u.values[el[0]], v1 = u.values[el[1]], v2 = u.values[el[2]];
        // Constant P1 gradient on the element.
        double gx, gy;
        if ((e & 1) == 0) {  // lower (sw,se,ne)
            gx = (v1 - v0) / h;
            gy = (v2 - v1) / h;
        } else {  // upper (sw,ne,nw)
            gx = (v1 - v2) / h;
            gy = (v2 - v0) / h;
        }
        const std::array<std::array<double, 2>, 3> mids = {{
            {0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])},
            {0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])},
            {0.5 * (p2[0] + p0[0]), 0.5 * (p2[1] + p0[1])},
        }};
        for (const auto& q : mids) {
            const auto ge = grad_exact(q);
            const double dx = gx - ge[0], dy = gy - ge[1];
            acc += area / 3.0 * (dx * dx + dy * dy);
        }
    }
    return std::sqrt(acc);
}

}  // namespace dimtrunc
