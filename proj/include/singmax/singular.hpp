#ifndef SINGMAX_SINGULAR_HPP
#define SINGMAX_SINGULAR_HPP

#include <functional>
#include <optional>

#include "singmax/elliptic.hpp"
#include "singmax/regime.hpp"

namespace singmax {

// Sup-norm cap b = min{ v_linf^(1/(1-r-gamma)), c0 }. The power exponent is
// negative for every admissible regime, so v_linf = 0 falls back to c0.
inline double linfty_cap(double v_linf, const RegimeParams& params, double c0) {
    if (!(v_linf >= 0.0)) throw config_error("linfty_cap: v_linf must be >= 0");
    if (!(c0 > 0.0)) throw config_error("linfty_cap: c0 must be > 0");
    const double denom = 1.0 - params.r - params.gamma;
    if (!(denom < 0.0))
        throw invariant_error("linfty_cap: regime must satisfy gamma + r > 1");
    if (v_linf == 0.0) return c0;
    return std::min(std::pow(v_linf, 1.0 / denom), c0);
}

// Combined source (1 - v u^(gamma+r-1)) / (1/n + u)^gamma of the regularized
// single equation; also the scalar comparison map (frozen v, varying u).
inline double singular_rhs(double u_value, double v_value, double n, const RegimeParams& params) {
    if (!(u_value >= 0.0)) throw config_error("singular_rhs: negative u value");
    if (!(n > 0.0)) throw config_error("singular_rhs: n must be > 0");
    const double p = params.gamma + params.r - 1.0;
    const double num = 1.0 - v_value * (u_value == 0.0 && p == 0.0 ? 1.0 : std::pow(u_value, p));
    return num / std::pow(1.0 / n + u_value, params.gamma);
}

struct InnerReport {
    int iterations = 0;
    double residual = 0.0;
    double cap = 0.0;
    double final_damping = 0.0;
    double contact_fraction = 0.0; // nodes where the cap binds at convergence
};

namespace detail {

// One damped, adaptively backtracked Picard loop shared by the two
// regularized schemes. `build` fills the lagged diagonal mass and the right
// hand side from the current iterate; `residual` measures the target weak
// form. Iterates are kept inside [0, hi_clip]. When the cap binds (variable
// potentials can make the capped problem a genuine obstacle problem) the
// full-solve sweep chatters at the free boundary; a projected nonlinear
// Gauss-Seidel phase then finishes the job, monotone for the M-matrix.
inline GridFunction picard_solve(const DiscreteOperator& op, GridFunction u,
                                 const RegularizationSchedule& sched, double hi_clip,
                                 const std::function<void(const GridFunction&, std::vector<double>&,
                                                          GridFunction&)>& build,
                                 const std::function<double(const GridFunction&)>& residual,
                                 InnerReport* report) {
    const Mesh& m = op.mesh();
    const double theta_min = 1e-4;
    double theta = sched.damping;
    double res = residual(u);
    int it = 0, stall = 0;
    std::vector<double> mass(m.node_count(), 0.0);
    GridFunction rhs(op.mesh_ptr());
    const double lin_tol = std::min(sched.lin_tol, sched.inner_tol * 1e-2);

    const double ih2 = 1.0 / (m.spacing() * m.spacing());
    auto pgs_sweep = [&]() {
        build(u, mass, rhs);
        for (std::size_t k = 0; k < u.size(); ++k) {
            if (m.is_boundary(k)) continue;
            const auto [i, j] = m.split(k);
            double diag = (op.edge_x(i - 1, j) + op.edge_x(i, j)) * ih2;
            double neigh = op.edge_x(i - 1, j) * ih2 * u[m.index(i - 1, j)] +
                           op.edge_x(i, j) * ih2 * u[m.index(i + 1, j)];
            if (m.dimension() == 2) {
                diag += (op.edge_y(i, j - 1) + op.edge_y(i, j)) * ih2;
                neigh += op.edge_y(i, j - 1) * ih2 * u[m.index(i, j - 1)] +
                         op.edge_y(i, j) * ih2 * u[m.index(i, j + 1)];
            }
            u[k] = std::clamp((rhs[k] + neigh) / (diag + mass[k]), 0.0, hi_clip);
        }
    };

    while (res > sched.inner_tol && it < sched.max_inner) {
        ++it;
        build(u, mass, rhs);
        const GridFunction w = solve_linear(op, rhs, lin_tol, &mass);
        double theta_try = theta;
        GridFunction u_try(op.mesh_ptr());
        double res_try = 0.0;
        while (true) {
            for (std::size_t k = 0; k < u.size(); ++k) {
                const double vk = (1.0 - theta_try) * u[k] + theta_try * w[k];
                u_try[k] = m.is_boundary(k) ? 0.0 : std::clamp(vk, 0.0, hi_clip);
            }
            res_try = residual(u_try);
            if (res_try < res || theta_try <= theta_min) break;
            theta_try /= 2;
        }
        stall = res_try < res ? 0 : stall + 1;
        u = std::move(u_try);
        res = res_try;
        theta = std::min(sched.damping, theta_try * 1.5);
        if (stall > 10) {
            const long cap_sweeps = 400L * m.resolution();
            for (long done = 0; res > sched.inner_tol && done < cap_sweeps; done += 100) {
                for (int s = 0; s < 100; ++s) pgs_sweep();
                res = residual(u);
            }
            if (res > sched.inner_tol)
                throw solver_error("inner iteration diverged, last residual " + fmt17(res));
            break;
        }
    }
    if (res > sched.inner_tol)
        throw solver_error("inner iteration: no convergence after " + std::to_string(it) +
                           " sweeps, last residual " + fmt17(res));
    if (report) {
        report->iterations = it;
        report->residual = res;
        report->cap = hi_clip;
        report->final_damping = theta;
    }
    return u;
}

inline GridFunction torsion_start(const DiscreteOperator& op, double cap,
                                  const RegularizationSchedule& sched) {
    GridFunction one(op.mesh_ptr(), 1.0);
    GridFunction t = solve_linear(op, one, sched.lin_tol);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = std::clamp(t[k], 0.0, cap);
    return t;
}

} // namespace detail

// Relative interior residual of the regularized weak form K u = F(u). For
// spatially varying v the cap b = |v|^(1/(1-r-gamma)) can genuinely bind
// where v is locally small; there the capped problem is the obstacle problem
// u <= b with K u - F(u) <= 0 on the contact set, so contact nodes only
// charge the positive part of the defect. Constant potentials never touch
// the cap and reduce to the plain equation residual.
inline double regularized_residual(const DiscreteOperator& op, const GridFunction& u,
                                   const GridFunction& v, double n, const RegimeParams& params,
                                   double cap = std::numeric_limits<double>::infinity(),
                                   double* contact_fraction = nullptr) {
    const Mesh& m = op.mesh();
    std::vector<double> ku;
    op.apply(u.values(), ku);
    double num = 0.0, den = 0.0;
    std::size_t contact = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (m.is_boundary(k)) continue;
        const double f = singular_rhs(u[k], v[k], n, params);
        double r = ku[k] - f;
        if (u[k] >= cap * (1.0 - 1e-12)) {
            ++contact;
            r = std::max(r, 0.0);
        }
        num += r * r;
        den += f * f;
    }
    if (contact_fraction) *contact_fraction = double(contact) / double(u.size());
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

namespace detail {

// Lagged diagonal for the damped sweep: the negated derivative of the
// combined source, clamped nonnegative (sign-consistent, keeps the M-matrix).
// The right hand side adds the mass back at the current iterate, so any such
// diagonal leaves the fixed point of K u = F(u) exact.
inline GridFunction regularized_sweep(const DiscreteOperator& op, const GridFunction& v, double n,
                                      const RegimeParams& params,
                                      const RegularizationSchedule& sched, double cap,
                                      GridFunction start, InnerReport* report) {
    const Mesh& m = op.mesh();
    const double g = params.gamma, p = g + params.r - 1.0, shift = 1.0 / n;
    auto build = [&](const GridFunction& uk, std::vector<double>& mass, GridFunction& rhs) {
        for (std::size_t k = 0; k < uk.size(); ++k) {
            if (m.is_boundary(k)) {
                mass[k] = 0.0;
                rhs[k] = 0.0;
                continue;
            }
            const double s = uk[k];
            const double se = std::max(s, 1e-14);
            const double d0 = std::pow(shift + s, -g);
            const double d1 = std::pow(shift + s, -g - 1.0);
            const double f = (1.0 - v[k] * std::pow(s, p)) * d0;
            const double mk = v[k] * p * std::pow(se, p - 1.0) * d0 +
                              g * std::max(1.0 - v[k] * std::pow(s, p), 0.0) * d1;
            mass[k] = mk;
            rhs[k] = f + mk * s;
        }
    };
    auto residual = [&](const GridFunction& uk) {
        return regularized_residual(op, uk, v, n, params, cap);
    };
    GridFunction u = picard_solve(op, std::move(start), sched, cap, build, residual, report);
    if (report)
        regularized_residual(op, u, v, n, params, cap, &report->contact_fraction);
    return u;
}

} // namespace detail

// Solve the regularized single equation at fixed n with frozen potential v:
//   K u = (1 - v u^(gamma+r-1)) / (1/n + u)^gamma,  0 <= u <= cap.
// Iterates are clipped to [0, cap], realizing the truncation above the cap;
// the converged iterate satisfies the untruncated weak form to inner_tol.
inline GridFunction solve_regularized(const DiscreteOperator& op, const GridFunction& v, double n,
                                      const RegimeParams& params,
                                      const RegularizationSchedule& sched,
                                      const GridFunction* warm_start = nullptr,
                                      InnerReport* report = nullptr) {
    if (&v.mesh() != &op.mesh()) throw config_error("solve_regularized: v mesh mismatch");
    if (!(n > 0.0)) throw config_error("solve_regularized: n must be > 0");
    for (std::size_t k = 0; k < v.size(); ++k)
        if (v[k] < 0.0) throw config_error("solve_regularized: v must be >= 0 nodewise");
    sched.validate();
    const Norms vn = norms(v);
    const double b = linfty_cap(vn.linf, params, sched.c0);
    const Mesh& m = op.mesh();
    GridFunction u = warm_start ? *warm_start : detail::torsion_start(op, b, sched);
    for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = m.is_boundary(k) ? 0.0 : std::clamp(u[k], 0.0, b);
    if (!warm_start && n > 20.0) {
        // Cold starts at stiff n sit outside the damped sweep's basin; ramp
        // the regularization up and warm-start each stage.
        RegularizationSchedule loose = sched;
        loose.inner_tol = std::max(sched.inner_tol * 1e3, 1e-8);
        for (double stage = 10.0; stage < 0.999 * n; stage *= 10.0)
            u = detail::regularized_sweep(op, v, stage, params, loose, b, std::move(u), nullptr);
    }
    u = detail::regularized_sweep(op, v, n, params, sched, b, std::move(u), report);
    if (max_value(u) > b + 1e-12)
        throw invariant_error("solve_regularized: cap violated beyond tolerance");
    if (!(min_interior(u) > 0.0))
        throw invariant_error("solve_regularized: interior positivity lost");
    return u;
}

// Relative interior residual of K u + v u^(r-1) = (u + 1/n)^-gamma.
inline double distributional_residual(const DiscreteOperator& op, const GridFunction& u,
                                      const GridFunction& v, double n,
                                      const RegimeParams& params) {
    const Mesh& m = op.mesh();
    std::vector<double> ku;
    op.apply(u.values(), ku);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (m.is_boundary(k)) continue;
        const double f = std::pow(u[k] + 1.0 / n, -params.gamma);
        const double absorb = v[k] * std::pow(std::max(u[k], 1e-14), params.r - 1.0);
        num += (ku[k] + absorb - f) * (ku[k] + absorb - f);
        den += f * f;
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

namespace detail {

inline GridFunction distributional_sweep(const DiscreteOperator& op, const GridFunction& v,
                                         double n, const RegimeParams& params,
                                         const RegularizationSchedule& sched, GridFunction start,
                                         InnerReport* report) {
    const Mesh& m = op.mesh();
    const double g = params.gamma, r = params.r, shift = 1.0 / n;
    auto build = [&](const GridFunction& uk, std::vector<double>& mass, GridFunction& rhs) {
        for (std::size_t k = 0; k < uk.size(); ++k) {
            if (m.is_boundary(k)) {
                mass[k] = 0.0;
                rhs[k] = 0.0;
                continue;
            }
            const double s = uk[k];
            const double se = std::max(s, 1e-14);
            const double f = std::pow(s + shift, -g) - v[k] * std::pow(se, r - 1.0);
            const double mk = g * std::pow(s + shift, -g - 1.0) +
                              v[k] * (r - 1.0) * std::pow(se, r - 2.0);
            mass[k] = std::max(mk, 0.0);
            rhs[k] = f + mass[k] * s;
        }
    };
    auto residual = [&](const GridFunction& uk) {
        return distributional_residual(op, uk, v, n, params);
    };
    return picard_solve(op, std::move(start), sched, sched.c0, build, residual, report);
}

} // namespace detail

// One step of the strongly singular scheme at fixed n:
//   K u + v u^(r-1) = (u + 1/n)^-gamma,
// the source regularized by the shift while the absorption stays unshifted.
inline GridFunction solve_distributional_step(const DiscreteOperator& op, const GridFunction& v,
                                              double n, const RegimeParams& params,
                                              const RegularizationSchedule& sched,
                                              const GridFunction* warm_start = nullptr,
                                              InnerReport* report = nullptr) {
    if (&v.mesh() != &op.mesh()) throw config_error("solve_distributional_step: v mesh mismatch");
    if (!(n > 0.0)) throw config_error("solve_distributional_step: n must be > 0");
    sched.validate();
    const Mesh& m = op.mesh();
    const double ucap = sched.c0;
    GridFunction u = warm_start ? *warm_start : detail::torsion_start(op, ucap, sched);
    for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = m.is_boundary(k) ? 0.0 : std::clamp(u[k], 0.0, ucap);
    if (!warm_start && n > 20.0) {
        RegularizationSchedule loose = sched;
        loose.inner_tol = std::max(sched.inner_tol * 1e3, 1e-8);
        for (double stage = 10.0; stage < 0.999 * n; stage *= 10.0)
            u = detail::distributional_sweep(op, v, stage, params, loose, std::move(u), nullptr);
    }
    u = detail::distributional_sweep(op, v, n, params, sched, std::move(u), report);
    if (!(min_interior(u) > 0.0))
        throw invariant_error("solve_distributional_step: interior positivity lost");
    return u;
}

struct ContinuationStep {
    double n;
    double linf;
    double h1;
    double l2_diff; // vs previous schedule step; NaN on the first step
    int inner_iters;
    double residual;
};

struct ConvergenceTrace {
    std::vector<ContinuationStep> steps;
    bool monotone_tail = true; // L2 differences non-increasing over the last half
};

// Warm-started sweep over the n-schedule; the l2 differences over the last
// half of the schedule are expected to decrease, recorded as a flag rather
// than an error.
inline std::pair<GridFunction, ConvergenceTrace> continuation_solve(
    const DiscreteOperator& op, const GridFunction& v, const RegimeParams& params,
    const RegularizationSchedule& sched) {
    sched.validate();
    ConvergenceTrace trace;
    std::optional<GridFunction> u;
    for (double n : sched.n_values) {
        InnerReport rep;
        GridFunction next =
            params.regime == Regime::distributional
                ? solve_distributional_step(op, v, n, params, sched, u ? &*u : nullptr, &rep)
                : solve_regularized(op, v, n, params, sched, u ? &*u : nullptr, &rep);
        const Norms nn = norms(next);
        const double diff = u ? l2_distance(next, *u) : std::numeric_limits<double>::quiet_NaN();
        trace.steps.push_back({n, nn.linf, nn.h1_seminorm, diff, rep.iterations, rep.residual});
        u = std::move(next);
    }
    const std::size_t k0 = trace.steps.size() / 2;
    for (std::size_t k = std::max<std::size_t>(k0, 2); k < trace.steps.size(); ++k) {
        const double prev = trace.steps[k - 1].l2_diff, cur = trace.steps[k].l2_diff;
        if (std::isfinite(prev) && std::isfinite(cur) && cur > prev * (1.0 + 1e-9))
            trace.monotone_tail = false;
    }
    return {std::move(*u), std::move(trace)};
}

// Largest c3 > 0 with
//   lambda1 c3^(1+g) tau + beta c3^(1+g) tau(1-tau) |grad phi1|^2
//   + v_linf c3^(r-1+g) - 1 <= 0,
// located by bisection on the increasing left hand side.
inline double subsolution_constant(const EigenPair& eig, double beta, double v_linf,
                                   const RegimeParams& params) {
    if (!(params.gamma > 1.0))
        throw config_error("subsolution_constant: requires gamma > 1");
    if (!(v_linf >= 0.0)) throw config_error("subsolution_constant: v_linf must be >= 0");
    const double tau = params.tau();
    const double g1 = 1.0 + params.gamma;
    const double g2 = params.r - 1.0 + params.gamma;
    auto lhs = [&](double c) {
        return eig.lambda1 * std::pow(c, g1) * tau +
               beta * std::pow(c, g1) * tau * (1.0 - tau) * eig.grad_inf * eig.grad_inf +
               v_linf * std::pow(c, g2) - 1.0;
    };
    double hi = 1.0;
    int guard = 0;
    while (lhs(hi) < 0.0) {
        hi *= 2.0;
        if (++guard > 200) throw solver_error("subsolution_constant: no positive root bracket");
    }
    double lo = hi / 2.0;
    guard = 0;
    while (lhs(lo) > 0.0) {
        lo /= 2.0;
        if (++guard > 2000) throw solver_error("subsolution_constant: no positive root bracket");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2.0;
        (lhs(mid) <= 0.0 ? lo : hi) = mid;
    }
    return lo;
}

// Barrier max{ c3 phi1^tau - 1/n, 0 }; the positive part is all that can
// constrain nonnegative solutions.
inline GridFunction build_subsolution(const EigenPair& eig, double c3, double n,
                                      const RegimeParams& params) {
    if (!(params.gamma > 1.0)) throw config_error("build_subsolution: requires gamma > 1");
    const double tau = params.tau();
    GridFunction w(eig.phi1.mesh_ptr());
    for (std::size_t k = 0; k < w.size(); ++k)
        w[k] = std::max(c3 * std::pow(eig.phi1[k], tau) - 1.0 / n, 0.0);
    return w;
}

struct BarrierReport {
    double min_margin;         // min over nodes of u - w
    double violation_fraction; // fraction of nodes with margin < -margin_tol
    double implied_c;          // largest c with u >= c d^tau at all interior nodes
    double tau;
    double margin_tol;
};

inline BarrierReport verify_barrier(const GridFunction& u, const GridFunction& w, double tau,
                                    double margin_tol = 0.0) {
    if (!u.same_mesh(w)) throw config_error("verify_barrier: mesh mismatch");
    const Mesh& m = u.mesh();
    double min_margin = std::numeric_limits<double>::infinity();
    std::size_t violations = 0;
    double implied_c = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double margin = u[k] - w[k];
        min_margin = std::min(min_margin, margin);
        if (margin < -margin_tol) ++violations;
        if (!m.is_boundary(k))
            implied_c = std::min(implied_c, std::max(u[k], 0.0) / std::pow(m.dist(k), tau));
    }
    return {min_margin, double(violations) / double(u.size()), implied_c, tau, margin_tol};
}

// Min of u over the compact region {d(x) >= omega_margin}.
inline double interior_positivity(const GridFunction& u, double omega_margin) {
    if (!(omega_margin > 0.0)) throw config_error("interior_positivity: margin must be > 0");
    const Mesh& m = u.mesh();
    double mn = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t k = 0; k < u.size(); ++k)
        if (m.dist(k) >= omega_margin) {
            mn = std::min(mn, u[k]);
            any = true;
        }
    if (!any)
        throw config_error("interior_positivity: empty region at margin " + fmt17(omega_margin));
    return mn;
}

} // namespace singmax

#endif
