#ifndef SINGMAX_GRID_HPP
#define SINGMAX_GRID_HPP

#include <functional>

#include "singmax/mesh.hpp"

namespace singmax {

// Nodal scalar field on a mesh.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(MeshPtr mesh, double fill = 0.0)
        : mesh_(std::move(mesh)), v_(mesh_->node_count(), fill) {}
    GridFunction(MeshPtr mesh, std::vector<double> values)
        : mesh_(std::move(mesh)), v_(std::move(values)) {
        if (v_.size() != mesh_->node_count())
            throw config_error("grid function: value count does not match mesh");
        if (!all_finite(v_))
            throw invariant_error("grid function: non-finite nodal value");
    }

    static GridFunction sample(MeshPtr mesh, const std::function<double(double, double)>& f) {
        GridFunction g(mesh);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto& p = mesh->node(k);
            g[k] = f(p[0], p[1]);
        }
        return g;
    }

    const Mesh& mesh() const { return *mesh_; }
    MeshPtr mesh_ptr() const { return mesh_; }
    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t k) const { return v_[k]; }
    double& operator[](std::size_t k) { return v_[k]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    bool same_mesh(const GridFunction& o) const {
        return mesh_.get() == o.mesh_.get() || mesh_->compatible(*o.mesh_);
    }

private:
    MeshPtr mesh_;
    std::vector<double> v_;
};

// Trapezoidal (1D) / tensor-trapezoidal (2D) quadrature; exact for affine data.
inline double integrate(const Mesh& mesh, const GridFunction& f) {
    if (&f.mesh() != &mesh)
        throw config_error("integrate: function does not live on this mesh");
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += mesh.weight(k) * f[k];
    return s;
}
inline double integrate(const GridFunction& f) { return integrate(f.mesh(), f); }

// Quadrature restricted to interior nodes (weight h^dim each); the rule used
// for integrands singular at the boundary and for discrete weak forms.
inline double integrate_interior(const GridFunction& f) {
    const Mesh& m = f.mesh();
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k)
        if (!m.is_boundary(k)) s += f[k];
    return s * m.cell_volume();
}

// Interior-node quadrature weight for integrands that cannot be evaluated on
// the boundary: nodes next to a face absorb the adjacent boundary half-cell
// (1.5h along that axis), so constants integrate to the exact domain measure.
inline double interior_weight(const Mesh& mesh, std::size_t k) {
    const auto [i, j] = mesh.split(k);
    const int res = mesh.resolution();
    const double h = mesh.spacing();
    auto axis = [&](int idx) {
        double w = h;
        if (idx == 1) w += h / 2;
        if (idx == res - 2) w += h / 2;
        return w;
    };
    double w = axis(i);
    if (mesh.dimension() == 2) w *= axis(j);
    return w;
}

// Quadrature of d(x)^exponent over interior nodes. exponent <= -1 is not
// integrable (the borderline mirrors the gamma < 3 restriction upstream).
inline double weighted_distance_integral(const Mesh& mesh, double exponent) {
    if (exponent <= -1.0)
        throw config_error("weighted_distance_integral: exponent " + fmt17(exponent) +
                           " <= -1 violates integrability");
    double s = 0.0;
    for (std::size_t k = 0; k < mesh.node_count(); ++k)
        if (!mesh.is_boundary(k)) s += interior_weight(mesh, k) * std::pow(mesh.dist(k), exponent);
    return s;
}

// Nodal |grad f|^2 by centered differences inside, one-sided at the faces.
inline GridFunction gradient_magnitude_squared(const GridFunction& f) {
    const Mesh& m = f.mesh();
    const int res = m.resolution();
    const double h = m.spacing();
    GridFunction g(f.mesh_ptr());
    auto axis_diff = [&](int i, int n, double fm, double f0, double fp) {
        if (i == 0) return (fp - f0) / h;
        if (i == n - 1) return (f0 - fm) / h;
        return (fp - fm) / (2 * h);
    };
    for (std::size_t k = 0; k < f.size(); ++k) {
        const auto [i, j] = m.split(k);
        const double fx = axis_diff(i, res, i > 0 ? f[m.index(i - 1, j)] : 0.0, f[k],
                                    i < res - 1 ? f[m.index(i + 1, j)] : 0.0);
        double gg = fx * fx;
        if (m.dimension() == 2) {
            const double fy = axis_diff(j, res, j > 0 ? f[m.index(i, j - 1)] : 0.0, f[k],
                                        j < res - 1 ? f[m.index(i, j + 1)] : 0.0);
            gg += fy * fy;
        }
        g[k] = gg;
    }
    return g;
}

struct Norms {
    double linf;
    double l2;
    double h1_seminorm;
};

inline Norms norms(const GridFunction& f) {
    double linf = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) linf = std::max(linf, std::abs(f[k]));
    GridFunction sq(f.mesh_ptr());
    for (std::size_t k = 0; k < f.size(); ++k) sq[k] = f[k] * f[k];
    const double l2 = std::sqrt(std::max(0.0, integrate(sq)));
    const double h1 = std::sqrt(std::max(0.0, integrate(gradient_magnitude_squared(f))));
    return {linf, l2, h1};
}

inline double max_value(const GridFunction& f) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < f.size(); ++k) m = std::max(m, f[k]);
    return m;
}

inline double min_interior(const GridFunction& f) {
    double m = std::numeric_limits<double>::infinity();
    const Mesh& mesh = f.mesh();
    for (std::size_t k = 0; k < f.size(); ++k)
        if (!mesh.is_boundary(k)) m = std::min(m, f[k]);
    return m;
}

inline double l2_distance(const GridFunction& a, const GridFunction& b) {
    if (!a.same_mesh(b)) throw config_error("l2_distance: mesh mismatch");
    GridFunction d(a.mesh_ptr());
    for (std::size_t k = 0; k < a.size(); ++k) d[k] = (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(std::max(0.0, integrate(d)));
}

// H1 seminorm restricted to the closed region {d(x) >= margin}.
inline double h1_seminorm_region(const GridFunction& f, double margin) {
    const Mesh& m = f.mesh();
    const GridFunction g = gradient_magnitude_squared(f);
    double s = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < f.size(); ++k)
        if (m.dist(k) >= margin) {
            s += g[k];
            any = true;
        }
    if (!any) throw config_error("h1_seminorm_region: empty region at margin " + fmt17(margin));
    return std::sqrt(s * m.cell_volume());
}

inline GridFunction positive_part_shift(const GridFunction& u, double eps) {
    GridFunction w(u.mesh_ptr());
    for (std::size_t k = 0; k < u.size(); ++k) w[k] = std::max(u[k] - eps, 0.0);
    return w;
}

// Low-frequency random Fourier field vanishing on the boundary; refinement
// stable, used for perturbation directions and randomized initial iterates.
inline GridFunction random_smooth(MeshPtr mesh, Rng& rng, int max_mode = 5) {
    const double lo = mesh->lo(), len = mesh->hi() - mesh->lo();
    std::vector<double> cx(max_mode), cy(max_mode);
    for (int k = 0; k < max_mode; ++k) cx[k] = rng.uniform(-1.0, 1.0) / ((k + 1) * (k + 1));
    for (int k = 0; k < max_mode; ++k) cy[k] = rng.uniform(-1.0, 1.0) / ((k + 1) * (k + 1));
    return GridFunction::sample(mesh, [&](double x, double y) {
        const double xs = (x - lo) / len, ys = (y - lo) / len;
        double v = 0.0;
        if (mesh->dimension() == 1) {
            for (int k = 0; k < max_mode; ++k) v += cx[k] * std::sin((k + 1) * M_PI * xs);
        } else {
            for (int k = 0; k < max_mode; ++k)
                v += cx[k] * std::sin((k + 1) * M_PI * xs) * std::sin(M_PI * ys) +
                     cy[k] * std::sin(M_PI * xs) * std::sin((k + 1) * M_PI * ys);
        }
        return v;
    });
}

} // namespace singmax

#endif
