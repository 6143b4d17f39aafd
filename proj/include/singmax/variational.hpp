#ifndef SINGMAX_VARIATIONAL_HPP
#define SINGMAX_VARIATIONAL_HPP

#include "singmax/coupled.hpp"

namespace singmax {

// Level-k truncation and its residual, T_k(s) + G_k(s) = s.
inline double truncate(double s, double k) {
    if (!(k > 0.0)) throw config_error("truncate: level must be > 0");
    return std::clamp(s, -k, k);
}
inline double residual_above(double s, double k) { return s - truncate(s, k); }

// Discrete value of
//   J(w,z) = 1/2 int(A grad w grad w - (1/r) M grad z grad z)
//            + int(z+ |w|^r / r - (w+)^(1-gamma) / (1-gamma)).
// Gradient terms use the operator energy forms so the saddle identities hold
// at the discrete level; zero-order terms use interior quadrature. Only
// defined for gamma < 1, where (w+)^(1-gamma) is finite for all nodal data.
inline double evaluate_functional(const GridFunction& w, const GridFunction& z,
                                  const DiscreteOperator& opA, const DiscreteOperator& opM,
                                  const RegimeParams& params) {
    if (!(params.gamma < 1.0))
        throw config_error("evaluate_functional: defined for gamma < 1 only");
    if (!w.same_mesh(z)) throw config_error("evaluate_functional: mesh mismatch");
    const Mesh& m = w.mesh();
    const double r = params.r;
    double zero_order = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (m.is_boundary(k)) continue;
        const double zp = std::max(z[k], 0.0);
        const double wp = std::max(w[k], 0.0);
        zero_order += zp * std::pow(std::abs(w[k]), r) / r -
                      std::pow(wp, 1.0 - params.gamma) / (1.0 - params.gamma);
    }
    zero_order *= m.cell_volume();
    return 0.5 * energy_product(opA, w, w) - energy_product(opM, z, z) / (2.0 * r) + zero_order;
}

// Order-h^2 estimate of the quadrature error of J(u,v) by evaluating on the
// every-other-node coarsening; drives the saddle tolerance.
inline double functional_quadrature_error(const GridFunction& u, const GridFunction& v,
                                          const DiscreteOperator& opA, const DiscreteOperator& opM,
                                          const RegimeParams& params) {
    const Mesh& m = u.mesh();
    const DiscreteOperator cA = opA.coarsen();
    const DiscreteOperator cM = opM.coarsen();
    MeshPtr coarse = cA.mesh_ptr();
    const int cres = coarse->resolution();
    auto restrict_fn = [&](const GridFunction& f) {
        GridFunction g(coarse);
        for (int j = 0; j < (m.dimension() == 2 ? cres : 1); ++j)
            for (int i = 0; i < cres; ++i)
                g[coarse->index(i, j)] = f[m.index(2 * i, 2 * j)];
        return g;
    };
    const double Jh = evaluate_functional(u, v, opA, opM, params);
    const double J2h = evaluate_functional(restrict_fn(u), restrict_fn(v), cA, cM, params);
    return std::abs(Jh - J2h) / 3.0;
}

struct SaddleSample {
    int direction; // -1 for the deterministic directions
    double t;
    double J;
};

struct SaddleReport {
    double J_at_solution = 0.0;
    double max_J_over_z = -std::numeric_limits<double>::infinity();
    double min_J_over_w = std::numeric_limits<double>::infinity();
    int n_directions = 0;
    double tolerance = 0.0;
    int violations = 0;
    double worst_z_excess = 0.0, worst_w_excess = 0.0;
    int worst_z_direction = -1, worst_w_direction = -1;
    std::vector<SaddleSample> z_samples, w_samples;
};

// Check J(u,z) <= J(u,v) <= J(w,v) over random smooth perturbations
// z = v + t*eta, w = (u + t*zeta)+ on a log grid of t, plus the deterministic
// directions z = 0, z = 2v, w = 0, w = 2u. Violations beyond the coupled
// quadrature tolerance are findings, not errors.
inline SaddleReport saddle_test(const SolutionPair& pair, const DiscreteOperator& opA,
                                const DiscreteOperator& opM, int n_directions,
                                std::uint64_t seed) {
    if (pair.params.regime != Regime::energy_mild || !(pair.params.gamma < 1.0) ||
        !(pair.params.r >= 1.0))
        throw config_error("saddle_test: requires gamma in (0,1) and r >= 1");
    if (n_directions < 1) throw config_error("saddle_test: need at least one direction");
    const GridFunction& u = pair.u;
    const GridFunction& v = pair.v;
    SaddleReport rep;
    rep.n_directions = n_directions;
    rep.J_at_solution = evaluate_functional(u, v, opA, opM, pair.params);
    const double quad_err = functional_quadrature_error(u, v, opA, opM, pair.params);
    rep.tolerance = 10.0 * (quad_err + 1e-13 * (1.0 + std::abs(rep.J_at_solution)));

    auto check_z = [&](const GridFunction& z, int dir, double t) {
        const double J = evaluate_functional(u, z, opA, opM, pair.params);
        rep.z_samples.push_back({dir, t, J});
        rep.max_J_over_z = std::max(rep.max_J_over_z, J);
        const double excess = J - rep.J_at_solution;
        if (excess > rep.worst_z_excess) {
            rep.worst_z_excess = excess;
            rep.worst_z_direction = dir;
        }
        if (excess > rep.tolerance) ++rep.violations;
    };
    auto check_w = [&](const GridFunction& w, int dir, double t) {
        const double J = evaluate_functional(w, v, opA, opM, pair.params);
        rep.w_samples.push_back({dir, t, J});
        rep.min_J_over_w = std::min(rep.min_J_over_w, J);
        const double excess = rep.J_at_solution - J;
        if (excess > rep.worst_w_excess) {
            rep.worst_w_excess = excess;
            rep.worst_w_direction = dir;
        }
        if (excess > rep.tolerance) ++rep.violations;
    };

    const Mesh& m = u.mesh();
    GridFunction zero(u.mesh_ptr(), 0.0);
    GridFunction v2 = v, u2 = u;
    for (std::size_t k = 0; k < v2.size(); ++k) v2[k] *= 2.0;
    for (std::size_t k = 0; k < u2.size(); ++k) u2[k] *= 2.0;
    check_z(zero, -1, 0.0);
    check_z(v2, -1, 1.0);
    check_w(zero, -1, 0.0);
    check_w(u2, -1, 1.0);

    Rng rng(seed);
    const double u_scale = norms(u).linf, v_scale = std::max(norms(v).linf, 1e-6);
    const double t_grid[] = {1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0};
    for (int dir = 0; dir < n_directions; ++dir) {
        GridFunction eta = random_smooth(u.mesh_ptr(), rng);
        GridFunction zeta = random_smooth(u.mesh_ptr(), rng);
        const double se = v_scale / std::max(norms(eta).linf, 1e-12);
        const double sz = u_scale / std::max(norms(zeta).linf, 1e-12);
        for (double t : t_grid) {
            GridFunction z(u.mesh_ptr()), w(u.mesh_ptr());
            for (std::size_t k = 0; k < z.size(); ++k) {
                z[k] = v[k] + t * se * eta[k];
                w[k] = m.is_boundary(k) ? 0.0 : std::max(u[k] + t * sz * zeta[k], 0.0);
            }
            check_z(z, dir, t);
            check_w(w, dir, t);
        }
    }
    return rep;
}

// The fixed smooth profile the unboundedness probe scales.
inline GridFunction probe_profile(MeshPtr mesh) {
    const double lo = mesh->lo(), len = mesh->hi() - mesh->lo();
    const int dim = mesh->dimension();
    return GridFunction::sample(mesh, [=](double x, double y) {
        double s = std::sin(M_PI * (x - lo) / len);
        if (dim == 2) s *= std::sin(M_PI * (y - lo) / len);
        return s;
    });
}

// Nodal-gradient quadrature of int (a11 wx^2 + a22 wy^2): the direct route,
// independent of the operator energy form it cross-checks.
inline double gradient_energy_quadrature(const CoefficientField& A, const GridFunction& w) {
    const Mesh& m = w.mesh();
    const int res = m.resolution();
    const double h = m.spacing();
    auto axis_diff = [&](int i, int n, double fm, double f0, double fp) {
        if (i == 0) return (fp - f0) / h;
        if (i == n - 1) return (f0 - fm) / h;
        return (fp - fm) / (2 * h);
    };
    GridFunction g(w.mesh_ptr());
    for (std::size_t k = 0; k < w.size(); ++k) {
        const auto [i, j] = m.split(k);
        const double wx = axis_diff(i, res, i > 0 ? w[m.index(i - 1, j)] : 0.0, w[k],
                                    i < res - 1 ? w[m.index(i + 1, j)] : 0.0);
        double e = A.a11(k) * wx * wx;
        if (m.dimension() == 2) {
            const double wy = axis_diff(j, res, j > 0 ? w[m.index(i, j - 1)] : 0.0, w[k],
                                        j < res - 1 ? w[m.index(i, j + 1)] : 0.0);
            e += A.a22(k) * wy * wy;
        }
        g[k] = e;
    }
    return integrate(g);
}

struct UnboundednessProbe {
    double sup_estimate;
    double inf_estimate;
    double growth_coeff; // fitted quadratic coefficient of J(t w0, v)
    double decay_coeff;  // fitted quadratic coefficient of J(u, t w0), negative
    bool monotone_growth;
    bool monotone_decay;
    std::vector<SaddleSample> growth_samples, decay_samples;
};

// Evaluate J(t w0, v) and J(u, t w0) on a doubling ladder; the functional is
// unbounded both ways and asymptotically quadratic in t.
inline UnboundednessProbe unboundedness_probe(const SolutionPair& pair,
                                              const DiscreteOperator& opA,
                                              const DiscreteOperator& opM, double t_max) {
    if (!(t_max >= 4.0)) throw config_error("unboundedness_probe: t_max must be >= 4");
    GridFunction w0 = probe_profile(pair.u.mesh_ptr());
    UnboundednessProbe probe{};
    probe.monotone_growth = probe.monotone_decay = true;
    std::vector<double> ts;
    for (double t = 1.0; t <= t_max; t *= 2.0) ts.push_back(t);
    double prev_g = -std::numeric_limits<double>::infinity();
    double prev_d = std::numeric_limits<double>::infinity();
    for (double t : ts) {
        GridFunction tw(pair.u.mesh_ptr());
        for (std::size_t k = 0; k < tw.size(); ++k) tw[k] = t * w0[k];
        const double Jg = evaluate_functional(tw, pair.v, opA, opM, pair.params);
        const double Jd = evaluate_functional(pair.u, tw, opA, opM, pair.params);
        probe.growth_samples.push_back({0, t, Jg});
        probe.decay_samples.push_back({0, t, Jd});
        if (Jg <= prev_g) probe.monotone_growth = false;
        if (Jd >= prev_d) probe.monotone_decay = false;
        prev_g = Jg;
        prev_d = Jd;
    }
    probe.sup_estimate = prev_g;
    probe.inf_estimate = prev_d;
    const std::size_t K = ts.size();
    if (K >= 3) {
        auto quad_fit = [&](const std::vector<SaddleSample>& s) {
            const double t2 = s[K - 1].t, t1 = s[K - 2].t, t0 = s[K - 3].t;
            const double num = s[K - 1].J - 2.0 * s[K - 2].J + s[K - 3].J;
            return num / (t2 * t2 - 2.0 * t1 * t1 + t0 * t0);
        };
        probe.growth_coeff = quad_fit(probe.growth_samples);
        probe.decay_coeff = quad_fit(probe.decay_samples);
    }
    return probe;
}

// Discrete quotient [int u^2/d^2] / [int |grad u|^2] for u vanishing on the
// boundary; on the interval this cannot exceed the Hardy constant 4 up to
// O(h) quadrature effects.
inline double hardy_quotient(const GridFunction& u) {
    const Mesh& m = u.mesh();
    for (std::size_t k = 0; k < u.size(); ++k)
        if (m.is_boundary(k) && std::abs(u[k]) > 1e-13)
            throw config_error("hardy_quotient: u must vanish on the boundary");
    double num = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k)
        if (!m.is_boundary(k))
            num += interior_weight(m, k) * u[k] * u[k] / (m.dist(k) * m.dist(k));
    const double den = integrate(gradient_magnitude_squared(u));
    if (den == 0.0) throw config_error("hardy_quotient: zero gradient");
    return num / den;
}

struct ExponentFit {
    double tau_fit;
    double c_fit;
    double r2;
    int nodes_used;
};

// Log-log least squares of u against d over the boundary layer {0 < d <
// layer}, skipping the two nodes nearest each face where one-sided stencils
// pollute the slope.
inline ExponentFit fit_boundary_exponent(const GridFunction& u, double layer) {
    const Mesh& m = u.mesh();
    const double half = (m.hi() - m.lo()) / 2.0;
    if (!(layer > 0.0 && layer < half))
        throw config_error("fit_boundary_exponent: layer must lie in (0, half-width)");
    const double dmin = 2.0 * m.spacing() * (1.0 + 1e-12);
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double d = m.dist(k);
        if (m.is_boundary(k) || d < dmin || d >= layer) continue;
        if (!(u[k] > 0.0))
            throw config_error("fit_boundary_exponent: nonpositive u inside the layer");
        lx.push_back(std::log(d));
        ly.push_back(std::log(u[k]));
    }
    if (lx.size() < 5)
        throw config_error("fit_boundary_exponent: fewer than 5 usable layer nodes");
    const std::size_t n = lx.size();
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += lx[i];
        sy += ly[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ly[i] - (intercept + slope * lx[i]);
        ss_res += e * e;
    }
    const double r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
    return {slope, std::exp(intercept), r2, int(n)};
}

} // namespace singmax

#endif
