#ifndef SINGMAX_ELLIPTIC_HPP
#define SINGMAX_ELLIPTIC_HPP

#include "singmax/coefficients.hpp"

namespace singmax {

// Flux-form finite-difference discretization of -div(A grad .) with
// homogeneous Dirichlet data, stored as per-edge coefficients (harmonic node
// averages). The resulting stencil is a symmetric M-matrix, which is what
// makes every discrete comparison argument downstream work.
class DiscreteOperator {
public:
    DiscreteOperator(MeshPtr mesh, const CoefficientField& field)
        : mesh_(std::move(mesh)) {
        if (&field.mesh() != mesh_.get())
            throw config_error("assemble: coefficient field lives on a different mesh");
        if (!field.diagonal())
            throw config_error("assemble: off-diagonal coefficient entries are not supported "
                               "by the flux-form stencil (preset family is diagonal)");
        const auto bounds = field.validate_ellipticity();
        alpha_ = bounds.alpha;
        beta_ = bounds.beta;
        const int res = mesh_->resolution();
        const int dim = mesh_->dimension();
        auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };
        edge_x_.assign(std::size_t(res - 1) * (dim == 2 ? res : 1), 0.0);
        for (int j = 0; j < (dim == 2 ? res : 1); ++j)
            for (int i = 0; i + 1 < res; ++i)
                edge_x_[std::size_t(j) * (res - 1) + i] =
                    harmonic(field.a11(mesh_->index(i, j)), field.a11(mesh_->index(i + 1, j)));
        if (dim == 2) {
            edge_y_.assign(std::size_t(res) * (res - 1), 0.0);
            for (int j = 0; j + 1 < res; ++j)
                for (int i = 0; i < res; ++i)
                    edge_y_[std::size_t(j) * res + i] =
                        harmonic(field.a22(mesh_->index(i, j)), field.a22(mesh_->index(i, j + 1)));
        }
    }

    const Mesh& mesh() const { return *mesh_; }
    MeshPtr mesh_ptr() const { return mesh_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    // Every-other-node coarsening: consecutive edges compose serially
    // (harmonic mean), which reproduces the flux-form assembly at spacing 2h.
    // Used for quadrature-error estimates.
    DiscreteOperator coarsen() const {
        const int res = mesh_->resolution();
        if ((res - 1) % 2 != 0)
            throw config_error("coarsen: resolution-1 must be even");
        const int cres = (res - 1) / 2 + 1;
        MeshPtr cm = build_mesh(mesh_->dimension(), mesh_->lo(), mesh_->hi(), cres);
        DiscreteOperator c(cm, alpha_, beta_);
        auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };
        c.edge_x_.assign(std::size_t(cres - 1) * (mesh_->dimension() == 2 ? cres : 1), 0.0);
        for (int j = 0; j < (mesh_->dimension() == 2 ? cres : 1); ++j)
            for (int i = 0; i + 1 < cres; ++i)
                c.edge_x_[std::size_t(j) * (cres - 1) + i] =
                    harmonic(edge_x(2 * i, 2 * j), edge_x(2 * i + 1, 2 * j));
        if (mesh_->dimension() == 2) {
            c.edge_y_.assign(std::size_t(cres) * (cres - 1), 0.0);
            for (int j = 0; j + 1 < cres; ++j)
                for (int i = 0; i < cres; ++i)
                    c.edge_y_[std::size_t(j) * cres + i] =
                        harmonic(edge_y(2 * i, 2 * j), edge_y(2 * i, 2 * j + 1));
        }
        return c;
    }

    double edge_x(int i, int j) const { return edge_x_[std::size_t(j) * (mesh_->resolution() - 1) + i]; }
    double edge_y(int i, int j) const { return edge_y_[std::size_t(j) * mesh_->resolution() + i]; }

    // y = K x on interior nodes; x is a full nodal vector whose boundary
    // entries are read as stored (callers keep them at 0 for Dirichlet data).
    void apply(const std::vector<double>& x, std::vector<double>& y,
               const std::vector<double>* extra_diag = nullptr) const {
        const Mesh& m = *mesh_;
        const double ih2 = 1.0 / (m.spacing() * m.spacing());
        y.assign(m.node_count(), 0.0);
        for (std::size_t k = 0; k < m.node_count(); ++k) {
            if (m.is_boundary(k)) continue;
            const auto [i, j] = m.split(k);
            double v = (edge_x(i - 1, j) + edge_x(i, j)) * x[k] -
                       edge_x(i - 1, j) * x[m.index(i - 1, j)] - edge_x(i, j) * x[m.index(i + 1, j)];
            if (m.dimension() == 2)
                v += (edge_y(i, j - 1) + edge_y(i, j)) * x[k] -
                     edge_y(i, j - 1) * x[m.index(i, j - 1)] - edge_y(i, j) * x[m.index(i, j + 1)];
            y[k] = v * ih2;
            if (extra_diag) y[k] += (*extra_diag)[k] * x[k];
        }
    }

    // Stencil row of an interior node as (column, value) pairs, for tests and
    // structure checks.
    std::vector<std::pair<std::size_t, double>> row(std::size_t k) const {
        const Mesh& m = *mesh_;
        if (m.is_boundary(k)) throw config_error("row: boundary node has no stencil row");
        const auto [i, j] = m.split(k);
        const double ih2 = 1.0 / (m.spacing() * m.spacing());
        std::vector<std::pair<std::size_t, double>> r;
        double diag = (edge_x(i - 1, j) + edge_x(i, j)) * ih2;
        r.push_back({m.index(i - 1, j), -edge_x(i - 1, j) * ih2});
        r.push_back({m.index(i + 1, j), -edge_x(i, j) * ih2});
        if (m.dimension() == 2) {
            diag += (edge_y(i, j - 1) + edge_y(i, j)) * ih2;
            r.push_back({m.index(i, j - 1), -edge_y(i, j - 1) * ih2});
            r.push_back({m.index(i, j + 1), -edge_y(i, j) * ih2});
        }
        r.push_back({k, diag});
        return r;
    }

private:
    DiscreteOperator(MeshPtr mesh, double alpha, double beta)
        : mesh_(std::move(mesh)), alpha_(alpha), beta_(beta) {}

    MeshPtr mesh_;
    double alpha_ = 0.0, beta_ = 0.0;
    std::vector<double> edge_x_, edge_y_; // harmonic edge coefficients
};

inline DiscreteOperator assemble(MeshPtr mesh, const CoefficientField& field) {
    return DiscreteOperator(std::move(mesh), field);
}

// Discrete energy form h^dim * a^T K b, the quadrature used for every
// "integral of A grad u grad v" in functionals and identities. Boundary
// entries are masked to zero so only admissible (Dirichlet) content counts.
inline double energy_product(const DiscreteOperator& op, const GridFunction& a,
                             const GridFunction& b) {
    const Mesh& m = op.mesh();
    std::vector<double> bm = b.values();
    for (std::size_t k = 0; k < bm.size(); ++k)
        if (m.is_boundary(k)) bm[k] = 0.0;
    std::vector<double> kb;
    op.apply(bm, kb);
    double s = 0.0;
    for (std::size_t k = 0; k < kb.size(); ++k)
        if (!m.is_boundary(k)) s += a[k] * kb[k];
    return s * m.cell_volume();
}

namespace detail {

// Thomas elimination for the 1D interior tridiagonal system.
inline void solve_tridiagonal(const DiscreteOperator& op, const std::vector<double>& extra_diag,
                              const std::vector<double>& rhs, std::vector<double>& x) {
    const Mesh& m = op.mesh();
    const int n = m.resolution() - 2;
    const double ih2 = 1.0 / (m.spacing() * m.spacing());
    std::vector<double> diag(n), sub(n), sup(n), r(n);
    for (int i = 0; i < n; ++i) {
        const std::size_t k = m.index(i + 1);
        diag[i] = (op.edge_x(i, 0) + op.edge_x(i + 1, 0)) * ih2;
        if (!extra_diag.empty()) diag[i] += extra_diag[k];
        sub[i] = -op.edge_x(i, 0) * ih2;
        sup[i] = -op.edge_x(i + 1, 0) * ih2;
        r[i] = rhs[k];
    }
    for (int i = 1; i < n; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        r[i] -= w * r[i - 1];
    }
    std::vector<double> u(n);
    u[n - 1] = r[n - 1] / diag[n - 1];
    for (int i = n - 2; i >= 0; --i) u[i] = (r[i] - sup[i] * u[i + 1]) / diag[i];
    x.assign(m.node_count(), 0.0);
    for (int i = 0; i < n; ++i) x[m.index(i + 1)] = u[i];
}

inline double interior_norm2(const Mesh& m, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k)
        if (!m.is_boundary(k)) s += v[k] * v[k];
    return std::sqrt(s);
}

// Jacobi-preconditioned CG over the interior unknowns.
inline int solve_cg(const DiscreteOperator& op, const std::vector<double>& extra_diag,
                    const std::vector<double>& rhs, std::vector<double>& x, double tol,
                    int max_iters) {
    const Mesh& m = op.mesh();
    const std::size_t n = m.node_count();
    const double ih2 = 1.0 / (m.spacing() * m.spacing());
    std::vector<double> idiag(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (m.is_boundary(k)) continue;
        const auto [i, j] = m.split(k);
        double d = (op.edge_x(i - 1, j) + op.edge_x(i, j)) * ih2;
        if (m.dimension() == 2) d += (op.edge_y(i, j - 1) + op.edge_y(i, j)) * ih2;
        if (!extra_diag.empty()) d += extra_diag[k];
        idiag[k] = 1.0 / d;
    }
    x.assign(n, 0.0);
    std::vector<double> res = rhs, z(n, 0.0), p(n, 0.0), kp;
    for (std::size_t k = 0; k < n; ++k)
        if (m.is_boundary(k)) res[k] = 0.0;
    const double rhs_norm = interior_norm2(m, res);
    if (rhs_norm == 0.0) return 0;
    double rz = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        z[k] = idiag[k] * res[k];
        rz += res[k] * z[k];
    }
    p = z;
    for (int it = 1; it <= max_iters; ++it) {
        op.apply(p, kp, extra_diag.empty() ? nullptr : &extra_diag);
        double pkp = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            if (!m.is_boundary(k)) pkp += p[k] * kp[k];
        const double a = rz / pkp;
        for (std::size_t k = 0; k < n; ++k) {
            if (m.is_boundary(k)) continue;
            x[k] += a * p[k];
            res[k] -= a * kp[k];
        }
        if (interior_norm2(m, res) <= tol * rhs_norm) return it;
        double rz_new = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (m.is_boundary(k)) continue;
            z[k] = idiag[k] * res[k];
            rz_new += res[k] * z[k];
        }
        const double b = rz_new / rz;
        rz = rz_new;
        for (std::size_t k = 0; k < n; ++k)
            if (!m.is_boundary(k)) p[k] = z[k] + b * p[k];
    }
    throw solver_error("cg: no convergence after " + std::to_string(max_iters) +
                       " iterations, relative residual " +
                       fmt17(interior_norm2(m, res) / rhs_norm));
}

} // namespace detail

// Solve (K + diag(extra)) u = rhs with u = 0 on the boundary. Direct
// tridiagonal elimination in 1D, preconditioned CG in 2D.
inline GridFunction solve_linear(const DiscreteOperator& op, const GridFunction& rhs, double tol,
                                 const std::vector<double>* extra_diag = nullptr,
                                 int* iterations = nullptr) {
    if (&rhs.mesh() != &op.mesh()) throw config_error("solve_linear: rhs mesh mismatch");
    if (!(tol > 0.0)) throw config_error("solve_linear: tol must be > 0");
    if (!all_finite(rhs.values())) throw invariant_error("solve_linear: non-finite rhs");
    static const std::vector<double> no_extra;
    const std::vector<double>& extra = extra_diag ? *extra_diag : no_extra;
    std::vector<double> x;
    int iters = 0;
    if (op.mesh().dimension() == 1) {
        detail::solve_tridiagonal(op, extra, rhs.values(), x);
        iters = 1;
    } else {
        const int cap = std::max(200, 40 * op.mesh().resolution() * op.mesh().resolution());
        iters = detail::solve_cg(op, extra, rhs.values(), x, tol, cap);
    }
    if (iterations) *iterations = iters;
    return GridFunction(op.mesh_ptr(), std::move(x));
}

// Relative residual ||K u - rhs||_2 / ||rhs||_2 over interior nodes.
inline double linear_residual(const DiscreteOperator& op, const GridFunction& u,
                              const GridFunction& rhs,
                              const std::vector<double>* extra_diag = nullptr) {
    std::vector<double> ku;
    op.apply(u.values(), ku, extra_diag);
    const Mesh& m = op.mesh();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ku.size(); ++k) {
        if (m.is_boundary(k)) continue;
        num += (ku[k] - rhs[k]) * (ku[k] - rhs[k]);
        den += rhs[k] * rhs[k];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

struct EigenPair {
    double lambda1;
    GridFunction phi1;  // positive inside, zero on the boundary, sup norm 1
    double grad_inf;    // discrete |grad phi1|_inf
    double c1, c2;      // tightest constants with c1*d <= phi1 <= c2*d
    int iterations;
    double residual;    // ||K phi - lambda phi||_2 / ||phi||_2
};

// Principal Dirichlet eigenpair by inverse power iteration (shift 0),
// stopping on the eigen-residual ||K phi - lambda phi|| <= tol * lambda. The
// 1/h^2 cancellation noise in applying K floors the attainable residual, so
// tol below ~1e-11 is not meaningful at fine resolutions.
inline EigenPair principal_eigenpair(const DiscreteOperator& op, double tol = 1e-10,
                                     int max_iters = 500) {
    if (!(tol > 0.0)) throw config_error("principal_eigenpair: tol must be > 0");
    const Mesh& m = op.mesh();
    GridFunction x(op.mesh_ptr());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = m.is_boundary(k) ? 0.0 : m.dist(k);
    double lambda = 0.0;
    int it = 0;
    bool converged = false;
    std::vector<double> kx;
    for (it = 1; it <= max_iters; ++it) {
        GridFunction y = solve_linear(op, x, 1e-13);
        double norm = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) norm += y[k] * y[k];
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < y.size(); ++k) y[k] /= norm;
        op.apply(y.values(), kx);
        double num = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) num += y[k] * kx[k];
        lambda = num; // ||y||_2 = 1
        double res = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            if (m.is_boundary(k)) continue;
            res += (kx[k] - lambda * y[k]) * (kx[k] - lambda * y[k]);
        }
        x = y;
        if (std::sqrt(res) <= tol * lambda) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw solver_error("principal_eigenpair: inverse power iteration did not converge");
    // Normalize to sup norm 1, positive inside.
    double sup = 0.0, signed_sup = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (std::abs(x[k]) > sup) {
            sup = std::abs(x[k]);
            signed_sup = x[k];
        }
    for (std::size_t k = 0; k < x.size(); ++k) x[k] /= signed_sup;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (m.is_boundary(k)) x[k] = 0.0;
    op.apply(x.values(), kx);
    double rnum = 0.0, rden = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (m.is_boundary(k)) continue;
        rnum += (kx[k] - lambda * x[k]) * (kx[k] - lambda * x[k]);
        rden += x[k] * x[k];
    }
    const double residual = std::sqrt(rnum) / std::sqrt(rden);
    const GridFunction g2 = gradient_magnitude_squared(x);
    double ginf = 0.0;
    for (std::size_t k = 0; k < g2.size(); ++k) ginf = std::max(ginf, g2[k]);
    ginf = std::sqrt(ginf);
    double c1 = std::numeric_limits<double>::infinity(), c2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (m.is_boundary(k)) continue;
        const double q = x[k] / m.dist(k);
        c1 = std::min(c1, q);
        c2 = std::max(c2, q);
    }
    if (!(c1 > 0.0))
        throw invariant_error("principal_eigenpair: eigenfunction not strictly positive inside");
    return {lambda, std::move(x), ginf, c1, c2, it, residual};
}

} // namespace singmax

#endif
