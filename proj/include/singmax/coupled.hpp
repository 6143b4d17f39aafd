#ifndef SINGMAX_COUPLED_HPP
#define SINGMAX_COUPLED_HPP

#include "singmax/diagnostics.hpp"
#include "singmax/singular.hpp"

namespace singmax {

// Full description of one system solve: exponents, cutoff, schedule, mesh and
// coefficient descriptors, outer-iteration knobs, seed.
struct SystemConfig {
    RegimeParams params = RegimeParams::classify(0.5, 1.0);
    RegularizationSchedule sched;
    double sigma = 20.0; // cutoff level of the source truncation, must exceed c0
    double outer_tol = 1e-8;
    int max_outer = 60;
    int dimension = 1;
    double lo = 0.0, hi = 1.0;
    int resolution = 257;
    std::string coeff_a = "identity";
    std::string coeff_m = "identity";
    std::uint64_t seed = 0;

    void validate() const {
        sched.validate();
        if (!(sigma > sched.c0))
            throw config_error("system: sigma = " + fmt17(sigma) +
                               " must exceed the cap constant c0 = " + fmt17(sched.c0));
        if (!(outer_tol > 0.0)) throw config_error("system: outer_tol must be > 0");
        if (max_outer < 1) throw config_error("system: max_outer must be >= 1");
    }

    MeshPtr make_mesh() const { return build_mesh(dimension, lo, hi, resolution); }
};

struct OuterStep {
    double u_diff;     // ||u_k - u_{k-1}||_L2
    double v_diff;     // ||v_k - v_{k-1}||_L2
    double u_residual; // weak-form residual of the u equation at the final n
    double v_residual; // linear residual of the v equation
    int inner_iters;
};

struct SolutionPair {
    MeshPtr mesh;
    GridFunction u, v;
    RegimeParams params;
    double cap_b = 0.0;
    double sigma = 0.0;
    std::vector<OuterStep> outer_trace;
    ConvergenceTrace continuation;
    DiagnosticsReport diagnostics;
    // distributional ladders, one row per schedule step
    std::vector<double> margins;
    std::vector<std::vector<double>> local_h1;
    std::vector<double> epsilons;
    std::vector<std::vector<double>> eps_h1;
};

// Discrete int |grad u|^2 xi^2 for a cutoff profile xi in [0,1].
inline double local_energy(const GridFunction& u, const GridFunction& cutoff) {
    if (!u.same_mesh(cutoff)) throw config_error("local_energy: mesh mismatch");
    for (std::size_t k = 0; k < cutoff.size(); ++k)
        if (cutoff[k] < 0.0 || cutoff[k] > 1.0)
            throw config_error("local_energy: cutoff must take values in [0,1]");
    GridFunction g = gradient_magnitude_squared(u);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= cutoff[k] * cutoff[k];
    return integrate(g);
}

namespace detail {

inline GridFunction truncated_power_source(const GridFunction& u, double sigma, double r) {
    GridFunction s(u.mesh_ptr());
    for (std::size_t k = 0; k < u.size(); ++k)
        s[k] = std::pow(std::clamp(u[k], 0.0, sigma), r);
    return s;
}

inline int total_inner(const ConvergenceTrace& t) {
    int n = 0;
    for (const auto& s : t.steps) n += s.inner_iters;
    return n;
}

} // namespace detail

// Alternating solve of the energy-regime system: the linear potential
// equation with truncated source, then the full regularization continuation
// for the singular equation at frozen potential. Stops when both L2 step
// differences fall below outer_tol.
inline SolutionPair solve_system(const SystemConfig& cfg,
                                 const GridFunction* initial_u = nullptr,
                                 std::pair<GridFunction, GridFunction>* first_iterate = nullptr) {
    cfg.validate();
    if (cfg.params.regime == Regime::distributional)
        throw config_error("solve_system: distributional regime needs solve_system_distributional");
    MeshPtr mesh = cfg.make_mesh();
    const CoefficientField A = coefficient_preset(mesh, cfg.coeff_a);
    const CoefficientField M = coefficient_preset(mesh, cfg.coeff_m);
    const DiscreteOperator opA = assemble(mesh, A);
    const DiscreteOperator opM = assemble(mesh, M);
    const double n_max = cfg.sched.n_values.back();

    SolutionPair out;
    out.mesh = mesh;
    out.params = cfg.params;
    out.sigma = cfg.sigma;

    GridFunction v(mesh, 0.0);
    GridFunction u(mesh);
    if (initial_u) {
        if (initial_u->size() != mesh->node_count())
            throw config_error("solve_system: initial iterate does not match the mesh");
        u = GridFunction(mesh, initial_u->values());
        for (std::size_t k = 0; k < u.size(); ++k)
            u[k] = mesh->is_boundary(k) ? 0.0 : std::clamp(u[k], 0.0, cfg.sched.c0);
    } else {
        u = continuation_solve(opA, v, cfg.params, cfg.sched).first;
    }

    bool converged = false;
    for (int k = 1; k <= cfg.max_outer; ++k) {
        const GridFunction src = detail::truncated_power_source(u, cfg.sigma, cfg.params.r);
        GridFunction v_new = solve_linear(opM, src, cfg.sched.lin_tol);
        auto [u_new, trace] = continuation_solve(opA, v_new, cfg.params, cfg.sched);
        const double du = l2_distance(u_new, u);
        const double dv = l2_distance(v_new, v);
        const double cap = linfty_cap(norms(v_new).linf, cfg.params, cfg.sched.c0);
        out.outer_trace.push_back({du, dv,
                                   regularized_residual(opA, u_new, v_new, n_max, cfg.params, cap),
                                   linear_residual(opM, v_new, src), detail::total_inner(trace)});
        u = std::move(u_new);
        v = std::move(v_new);
        out.continuation = std::move(trace);
        if (k == 1 && first_iterate) *first_iterate = {u, v};
        if (du < cfg.outer_tol && dv < cfg.outer_tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw solver_error("solve_system: outer alternation did not converge within " +
                           std::to_string(cfg.max_outer) + " iterations (last u step " +
                           fmt17(out.outer_trace.back().u_diff) + ")");
    const double max_u = max_value(u);
    if (max_u >= cfg.sigma)
        throw config_error("solve_system: source truncation active at termination, max u = " +
                           fmt17(max_u) + " >= sigma = " + fmt17(cfg.sigma) +
                           "; raise sigma above the observed maximum");

    out.cap_b = linfty_cap(norms(v).linf, cfg.params, cfg.sched.c0);
    out.u = std::move(u);
    out.v = std::move(v);

    // Base gates; regime-specific diagnostics are appended by callers.
    DiagnosticsReport& d = out.diagnostics;
    const double cap_excess = max_value(out.u) - out.cap_b;
    d.add("linfty-cap", "linfty-cap", cap_excess <= 1e-10, cap_excess, 1e-10,
          "max u minus cap b = min{|v|^(1/(1-r-gamma)), c0}");
    const double margin = 0.1 * (cfg.hi - cfg.lo) / 2.0;
    const double pos = interior_positivity(out.u, margin);
    d.add("interior-positivity", "interior-positivity", pos > 0.0, pos, 0.0,
          "min u over {d >= " + fmt17(margin) + "}");
    const auto& last = out.outer_trace.back();
    d.add("weak-residual-u", "plumbing", last.u_residual <= 10 * cfg.sched.inner_tol,
          last.u_residual, 10 * cfg.sched.inner_tol);
    d.add("weak-residual-v", "plumbing", last.v_residual <= 10 * cfg.sched.lin_tol,
          last.v_residual, 10 * cfg.sched.lin_tol);
    d.add("cutoff-inactive", "cutoff-inactive", max_value(out.u) < cfg.sigma, max_value(out.u),
          cfg.sigma, "max u stays below the truncation level");
    const Norms un = norms(out.u);
    if (cfg.params.regime == Regime::energy_mild) {
        const double measured = opA.alpha() * un.h1_seminorm * un.h1_seminorm;
        const double bound =
            1.05 * mesh->domain_measure() * std::pow(std::max(max_value(out.u), 1e-300),
                                                     1.0 - cfg.params.gamma);
        d.add("energy-bound", "energy-bound", measured <= bound, measured, bound,
              "alpha |grad u|^2 against |domain| max(u)^(1-gamma)");
    } else {
        const auto& st = out.continuation.steps;
        const double rel = std::abs(st.back().h1 - st[st.size() - 2].h1) /
                           std::max(st.back().h1, 1e-300);
        d.add("energy-stability", "energy-bound", rel < 0.05, rel, 0.05,
              "relative H1 change over the last two continuation steps");
    }
    // Self-map residual: one extra alternation moves the pair by less than
    // the outer tolerance.
    {
        const GridFunction src = detail::truncated_power_source(out.u, cfg.sigma, cfg.params.r);
        GridFunction v_x = solve_linear(opM, src, cfg.sched.lin_tol);
        GridFunction u_x = continuation_solve(opA, v_x, cfg.params, cfg.sched).first;
        const double moved = std::max(l2_distance(u_x, out.u), l2_distance(v_x, out.v));
        d.add("self-map-residual", "plumbing", moved < cfg.outer_tol, moved, cfg.outer_tol,
              "L2 movement of one extra outer iteration");
    }
    return out;
}

// Distributional regime: for each n of the schedule the coupled regularized
// system is alternated to convergence (warm started across levels), and the
// local-energy ladders are recorded per level. Convergence of the boundary
// membership is judged on the last two levels.
inline SolutionPair solve_system_distributional(const SystemConfig& cfg) {
    cfg.validate();
    if (cfg.params.regime != Regime::distributional)
        throw config_error("solve_system_distributional: regime must be distributional");
    MeshPtr mesh = cfg.make_mesh();
    const CoefficientField A = coefficient_preset(mesh, cfg.coeff_a);
    const CoefficientField M = coefficient_preset(mesh, cfg.coeff_m);
    const DiscreteOperator opA = assemble(mesh, A);
    const DiscreteOperator opM = assemble(mesh, M);

    SolutionPair out;
    out.mesh = mesh;
    out.params = cfg.params;
    out.sigma = cfg.sigma;
    out.margins = {0.1, 0.2, 0.3};
    out.epsilons = {0.05, 0.1, 0.2};

    GridFunction v(mesh, 0.0);
    std::optional<GridFunction> u;
    for (double n : cfg.sched.n_values) {
        InnerReport rep;
        GridFunction u_level =
            solve_distributional_step(opA, v, n, cfg.params, cfg.sched, u ? &*u : nullptr, &rep);
        int level_inner = rep.iterations;
        bool converged = false;
        for (int k = 1; k <= cfg.max_outer; ++k) {
            const GridFunction src = detail::truncated_power_source(u_level, cfg.sigma, cfg.params.r);
            GridFunction v_new = solve_linear(opM, src, cfg.sched.lin_tol);
            GridFunction u_new =
                solve_distributional_step(opA, v_new, n, cfg.params, cfg.sched, &u_level, &rep);
            const double du = l2_distance(u_new, u_level);
            const double dv = l2_distance(v_new, v);
            level_inner += rep.iterations;
            out.outer_trace.push_back({du, dv,
                                       distributional_residual(opA, u_new, v_new, n, cfg.params),
                                       linear_residual(opM, v_new, src), rep.iterations});
            u_level = std::move(u_new);
            v = std::move(v_new);
            if (du < cfg.outer_tol && dv < cfg.outer_tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw solver_error("solve_system_distributional: alternation stalled at n = " +
                               fmt17(n));
        const Norms nn = norms(u_level);
        const double diff =
            u ? l2_distance(u_level, *u) : std::numeric_limits<double>::quiet_NaN();
        out.continuation.steps.push_back({n, nn.linf, nn.h1_seminorm, diff, level_inner,
                                          distributional_residual(opA, u_level, v, n, cfg.params)});
        std::vector<double> lrow, erow;
        for (double m : out.margins) lrow.push_back(h1_seminorm_region(u_level, m));
        for (double e : out.epsilons)
            erow.push_back(norms(positive_part_shift(u_level, e)).h1_seminorm);
        out.local_h1.push_back(std::move(lrow));
        out.eps_h1.push_back(std::move(erow));
        u = std::move(u_level);
    }
    out.u = std::move(*u);
    out.v = std::move(v);
    out.cap_b = cfg.sched.c0;

    DiagnosticsReport& d = out.diagnostics;
    const double margin = 0.1 * (cfg.hi - cfg.lo) / 2.0;
    const double pos = interior_positivity(out.u, margin);
    d.add("interior-positivity", "interior-positivity", pos > 0.0, pos, 0.0);
    const double max_u = max_value(out.u), max_v = max_value(out.v);
    GridFunction sig_src(mesh, std::pow(cfg.sigma, cfg.params.r));
    const double k_sigma = max_value(solve_linear(opM, sig_src, cfg.sched.lin_tol));
    d.add("global-bound", "global-bound", max_u + max_v <= cfg.sched.c0 + k_sigma + 1e-9,
          max_u + max_v, cfg.sched.c0 + k_sigma, "sup u + sup v against c0 + K(sigma)");
    d.add("cutoff-inactive", "cutoff-inactive", max_u < cfg.sigma, max_u, cfg.sigma);
    const std::size_t K = out.local_h1.size();
    double local_change = 0.0;
    for (std::size_t j = 0; j < out.margins.size(); ++j)
        if (out.margins[j] == 0.2)
            local_change = std::abs(out.local_h1[K - 1][j] - out.local_h1[K - 2][j]) /
                           std::max(out.local_h1[K - 1][j], 1e-300);
    d.add("local-energy-stability", "local-energy", local_change < 0.05, local_change, 0.05,
          "relative change of H1 over {d >= 0.2} across the last two levels");
    double eps_change = 0.0;
    for (std::size_t j = 0; j < out.epsilons.size(); ++j)
        eps_change = std::max(eps_change,
                              std::abs(out.eps_h1[K - 1][j] - out.eps_h1[K - 2][j]) /
                                  std::max(out.eps_h1[K - 1][j], 1e-300));
    d.add("boundary-membership", "boundary-membership", eps_change < 0.01, eps_change, 0.01,
          "relative H1 change of (u-eps)+ across the last two levels");
    const auto& last = out.outer_trace.back();
    d.add("weak-residual-u", "plumbing", last.u_residual <= 10 * cfg.sched.inner_tol,
          last.u_residual, 10 * cfg.sched.inner_tol);
    d.add("weak-residual-v", "plumbing", last.v_residual <= 10 * cfg.sched.lin_tol,
          last.v_residual, 10 * cfg.sched.lin_tol);
    return out;
}

struct UniquenessReport {
    int trials = 0;
    double max_u_distance = 0.0;
    double max_v_distance = 0.0;
    double convexity_violation = 0.0; // max nodewise violation of the r >= 1 inequality
    bool gated = false;               // the collapse gate applies only for r >= 1
    double gate = 0.0;
    bool pass = true;
    std::vector<double> initial_spread; // pairwise L2 distances of the first iterates
};

// Nodewise convexity inequality behind the uniqueness argument:
//   (v a^{r-1} - w b^{r-1})(a - b) >= (1/r)(a^r - b^r)(v - w), r >= 1.
inline double convexity_violation(const GridFunction& u1, const GridFunction& v1,
                                  const GridFunction& u2, const GridFunction& v2, double r) {
    double worst = 0.0;
    for (std::size_t k = 0; k < u1.size(); ++k) {
        const double a = std::max(u1[k], 0.0), b = std::max(u2[k], 0.0);
        const double pa = a == 0.0 && r == 1.0 ? 1.0 : std::pow(a, r - 1.0);
        const double pb = b == 0.0 && r == 1.0 ? 1.0 : std::pow(b, r - 1.0);
        const double lhs = (v1[k] * pa - v2[k] * pb) * (a - b);
        const double rhs = (std::pow(a, r) - std::pow(b, r)) * (v1[k] - v2[k]) / r;
        worst = std::max(worst, rhs - lhs);
    }
    return worst;
}

// Randomized-restart experiment: solve the system from `trials` clipped
// smooth random initial iterates; for r >= 1 the converged pairs must
// collapse within 10 * outer_tol.
inline UniquenessReport uniqueness_experiment(const SystemConfig& cfg, int trials) {
    if (trials < 2) throw config_error("uniqueness_experiment: need at least 2 trials");
    cfg.validate();
    MeshPtr mesh = cfg.make_mesh();
    std::vector<SolutionPair> runs;
    std::vector<std::pair<GridFunction, GridFunction>> first;
    for (int t = 0; t < trials; ++t) {
        Rng rng(cfg.seed + std::uint64_t(t));
        GridFunction u0 = random_smooth(mesh, rng);
        const double amp = rng.uniform(0.05, 1.0);
        const double scale = amp * cfg.sched.c0 / std::max(norms(u0).linf, 1e-12);
        for (std::size_t k = 0; k < u0.size(); ++k) u0[k] = std::abs(u0[k]) * scale;
        std::pair<GridFunction, GridFunction> fi;
        runs.push_back(solve_system(cfg, &u0, &fi));
        first.push_back(std::move(fi));
    }
    UniquenessReport rep;
    rep.trials = trials;
    rep.gated = cfg.params.r >= 1.0;
    rep.gate = 10.0 * cfg.outer_tol;
    for (int i = 0; i < trials; ++i)
        for (int j = i + 1; j < trials; ++j) {
            rep.max_u_distance = std::max(rep.max_u_distance, l2_distance(runs[i].u, runs[j].u));
            rep.max_v_distance = std::max(rep.max_v_distance, l2_distance(runs[i].v, runs[j].v));
            rep.initial_spread.push_back(l2_distance(first[i].first, first[j].first));
            if (cfg.params.r >= 1.0) {
                rep.convexity_violation = std::max(
                    rep.convexity_violation,
                    std::max(convexity_violation(first[i].first, first[i].second, first[j].first,
                                                 first[j].second, cfg.params.r),
                             convexity_violation(runs[i].u, runs[i].v, runs[j].u, runs[j].v,
                                                 cfg.params.r)));
            }
        }
    rep.pass = !rep.gated || (rep.max_u_distance < rep.gate && rep.max_v_distance < rep.gate);
    return rep;
}

} // namespace singmax

#endif
