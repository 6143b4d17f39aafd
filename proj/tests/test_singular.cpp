#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "singmax/oracle1d.hpp"
#include "singmax/singular.hpp"

using namespace singmax;

namespace {
DiscreteOperator identity_op(MeshPtr m) { return assemble(m, coefficient_preset(m, "identity")); }

RegularizationSchedule quick_schedule() {
    RegularizationSchedule s;
    s.n_values = {10.0, 100.0, 1000.0};
    return s;
}
} // namespace

TEST_CASE("regime classification") {
    CHECK(RegimeParams::classify(0.5, 1.0).regime == Regime::energy_mild);
    CHECK(RegimeParams::classify(1.0, 0.5).regime == Regime::energy_mild);
    CHECK(RegimeParams::classify(2.0, 1.0).regime == Regime::energy_strong);
    CHECK(RegimeParams::classify(4.0, 1.0).regime == Regime::distributional);
    CHECK(RegimeParams::distributional(1.5, 1.0).regime == Regime::distributional);
    CHECK_THROWS_WITH_AS(RegimeParams::classify(0.5, 0.2),
                         doctest::Contains("r > max(0, 1-gamma)"), config_error);
    CHECK_THROWS_AS(RegimeParams::classify(-1.0, 1.0), config_error);
    CHECK_THROWS_AS(RegimeParams::classify(2.0, 0.0), config_error);
    CHECK_THROWS_AS(RegimeParams::distributional(0.5, 1.0), config_error);
    CHECK(RegimeParams::classify(3.0, 1.0).tau() == doctest::Approx(0.5));
}

TEST_CASE("schedule validation") {
    RegularizationSchedule s;
    s.n_values = {10.0};
    CHECK_THROWS_AS(s.validate(), config_error);
    s.n_values = {10.0, 5.0};
    CHECK_THROWS_AS(s.validate(), config_error);
    s.n_values = {10.0, 100.0};
    s.damping = 0.0;
    CHECK_THROWS_AS(s.validate(), config_error);
}

TEST_CASE("sup-norm cap") {
    const auto mild = RegimeParams::classify(0.5, 1.0);
    CHECK(linfty_cap(1.0, mild, 10.0) == doctest::Approx(1.0));
    CHECK(linfty_cap(4.0, mild, 10.0) == doctest::Approx(0.0625)); // 4^(-2)
    const auto strong = RegimeParams::classify(2.0, 1.0);
    CHECK(linfty_cap(0.25, strong, 10.0) == doctest::Approx(2.0)); // 0.25^(-1/2)
    CHECK(linfty_cap(0.0, strong, 10.0) == doctest::Approx(10.0));
    CHECK(linfty_cap(1e-9, strong, 10.0) == doctest::Approx(10.0)); // c0 binds
    CHECK_THROWS_AS(linfty_cap(-1.0, mild, 10.0), config_error);
    CHECK_THROWS_AS(linfty_cap(1.0, mild, 0.0), config_error);
}

TEST_CASE("combined source values") {
    const auto p11 = RegimeParams::classify(1.0, 1.0);
    CHECK(singular_rhs(0.0, 123.0, 1.0, p11) == doctest::Approx(1.0));
    const auto mild = RegimeParams::classify(0.5, 1.0);
    CHECK(singular_rhs(1.0, 1.0, 50.0, mild) == doctest::Approx(0.0).epsilon(1e-12));
    const auto strong = RegimeParams::classify(2.0, 1.0);
    CHECK(singular_rhs(0.5, 1.0, 10.0, strong) == doctest::Approx(0.75 / 0.36));
    CHECK_THROWS_AS(singular_rhs(-0.1, 1.0, 10.0, mild), config_error);
}

TEST_CASE("scalar comparison map is strictly decreasing on (0, b]") {
    Rng rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        const double gamma = rng.log_uniform(0.25, 4.5);
        const double r = std::max(0.0, 1.0 - gamma) + rng.log_uniform(0.25, 2.0);
        const RegimeParams p{gamma, r, Regime::energy_mild};
        const double v = rng.uniform(0.2, 3.0);
        const double n = rng.log_uniform(10.0, 1e4);
        const double b = linfty_cap(v, p, 10.0);
        double prev = std::numeric_limits<double>::infinity();
        for (int i = 1; i <= 500; ++i) {
            const double s = b * (1.0 - 1e-9) * i / 500.0;
            const double f = singular_rhs(s, v, n, p);
            CHECK(f < prev);
            prev = f;
        }
    }
}

TEST_CASE("regularized solve matches the 1D oracle") {
    // v = 0, gamma = 1, r = 2, n = 1e3, resolution 513
    auto m = build_mesh(1, 0.0, 1.0, 513);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(1.0, 2.0);
    auto sched = quick_schedule();
    GridFunction v(m, 0.0);
    InnerReport rep;
    GridFunction u = solve_regularized(op, v, 1000.0, params, sched, nullptr, &rep);
    CHECK(rep.residual <= sched.inner_tol);

    OracleProblem p;
    p.params = params;
    p.n = 1000.0;
    p.v_preset = "zero";
    p.base_cells = 5120;
    const OracleSolution ref = oracle_solve_single(p);
    CHECK(ref.accuracy < 1e-6);
    double err = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k)
        err = std::max(err, std::abs(u[k] - ref.u_at(m->node(k)[0])));
    CHECK(err < 1e-3);
}

TEST_CASE("cap clamps the solution when the potential is large") {
    // gamma = 1, r = 2 puts the cap at |v|^(-1/2): v = 1e4 -> b = 0.01
    auto m = build_mesh(1, 0.0, 1.0, 129);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(1.0, 2.0);
    auto sched = quick_schedule();
    GridFunction v(m, 1e4);
    GridFunction u = solve_regularized(op, v, 1000.0, params, sched);
    CHECK(max_value(u) <= 0.01 + 1e-12);
    CHECK(min_interior(u) > 0.0);
}

TEST_CASE("warm start agrees with the cold start") {
    auto m = build_mesh(1, 0.0, 1.0, 257);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(2.0, 1.0);
    auto sched = quick_schedule();
    GridFunction v(m, 1.0);
    GridFunction cold = solve_regularized(op, v, 1000.0, params, sched);
    GridFunction warm_src = solve_regularized(op, v, 100.0, params, sched);
    GridFunction warm = solve_regularized(op, v, 1000.0, params, sched, &warm_src);
    double diff = 0.0;
    for (std::size_t k = 0; k < cold.size(); ++k)
        diff = std::max(diff, std::abs(cold[k] - warm[k]));
    CHECK(diff <= 2.0 * sched.inner_tol * std::max(1.0, max_value(cold)) * 100);
}

TEST_CASE("rejects negative potential and bad n") {
    auto m = build_mesh(1, 0.0, 1.0, 33);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(0.5, 1.0);
    auto sched = quick_schedule();
    GridFunction v(m, -1.0);
    CHECK_THROWS_AS(solve_regularized(op, v, 10.0, params, sched), config_error);
    GridFunction ok(m, 0.0);
    CHECK_THROWS_AS(solve_regularized(op, ok, 0.0, params, sched), config_error);
}

TEST_CASE("continuation in the mild regime stays inside the energy bound") {
    auto m = build_mesh(1, 0.0, 1.0, 257);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(0.5, 1.0);
    auto sched = quick_schedule();
    GridFunction v(m, 1.0);
    auto [u, trace] = continuation_solve(op, v, params, sched);
    CHECK(trace.steps.size() == 3);
    CHECK(trace.monotone_tail);
    const double c_meas = trace.steps.back().linf;
    for (const auto& s : trace.steps) {
        // alpha int |grad u|^2 <= |domain| * max(u)^(1-gamma), with slack for
        // the nodal-gradient quadrature
        CHECK(op.alpha() * s.h1 * s.h1 <= 1.05 * std::pow(c_meas, 1.0 - params.gamma));
    }
}

TEST_CASE("continuation in the strong regime has bounded energies") {
    auto m = build_mesh(1, 0.0, 1.0, 257);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(2.0, 1.0);
    RegularizationSchedule sched;
    sched.n_values = {10.0, 100.0, 1000.0, 10000.0};
    GridFunction v(m, 1.0);
    auto [u, trace] = continuation_solve(op, v, params, sched);
    double h1_min = 1e300, h1_max = 0.0;
    for (const auto& s : trace.steps) {
        h1_min = std::min(h1_min, s.h1);
        h1_max = std::max(h1_max, s.h1);
    }
    CHECK(h1_max / h1_min < 1.5);
    CHECK(std::abs(trace.steps.back().h1 - trace.steps[trace.steps.size() - 2].h1) /
              trace.steps.back().h1 <
          0.05);
}

TEST_CASE("distributional continuation splits global and local energies") {
    auto m = build_mesh(1, 0.0, 1.0, 257);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(4.0, 1.0);
    RegularizationSchedule sched;
    sched.n_values = {10.0, 100.0, 1000.0, 10000.0};
    GridFunction v(m, 1.0);
    auto [u, trace] = continuation_solve(op, v, params, sched);
    // global H1 grows along the schedule
    for (std::size_t i = 1; i < trace.steps.size(); ++i)
        CHECK(trace.steps[i].h1 > trace.steps[i - 1].h1 * 0.999);
    // interior H1 over {d >= 0.1} stabilizes; recompute at the last two n
    GridFunction u_prev =
        solve_distributional_step(op, v, sched.n_values[sched.n_values.size() - 2], params, sched);
    const double l1 = h1_seminorm_region(u_prev, 0.1);
    const double l2 = h1_seminorm_region(u, 0.1);
    CHECK(std::abs(l2 - l1) / l2 < 0.05);
}

TEST_CASE("monotone dependence on the potential") {
    auto m = build_mesh(1, 0.0, 1.0, 129);
    auto op = identity_op(m);
    auto sched = quick_schedule();
    Rng rng(99);
    for (int trial = 0; trial < 4; ++trial) {
        const double gamma = rng.uniform(0.4, 2.5);
        const double r = std::max(0.0, 1.0 - gamma) + rng.uniform(0.3, 1.5);
        const auto params = RegimeParams::classify(gamma, r);
        GridFunction v2(m), bump = random_smooth(m, rng);
        for (std::size_t k = 0; k < v2.size(); ++k) {
            v2[k] = rng.uniform(0.1, 1.0);
            bump[k] = std::abs(bump[k]);
        }
        GridFunction v1 = v2;
        for (std::size_t k = 0; k < v1.size(); ++k) v1[k] += bump[k];
        GridFunction u1 = solve_regularized(op, v1, 1000.0, params, sched);
        GridFunction u2 = solve_regularized(op, v2, 1000.0, params, sched);
        for (std::size_t k = 0; k < u1.size(); ++k)
            CHECK(u1[k] <= u2[k] + 10 * sched.inner_tol);
    }
}

TEST_CASE("iterates are nondecreasing in n (reported property)") {
    auto m = build_mesh(1, 0.0, 1.0, 129);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(2.0, 1.0);
    auto sched = quick_schedule();
    GridFunction v(m, 1.0);
    GridFunction prev = solve_regularized(op, v, sched.n_values[0], params, sched);
    for (std::size_t i = 1; i < sched.n_values.size(); ++i) {
        GridFunction next = solve_regularized(op, v, sched.n_values[i], params, sched, &prev);
        for (std::size_t k = 0; k < next.size(); ++k) CHECK(next[k] >= prev[k] - 1e-8);
        prev = next;
    }
}

TEST_CASE("subsolution constant against a scalar bisection oracle") {
    // lambda1 = pi^2, beta = 1, |grad phi1| = pi, gamma = 3, r = 1, v = 1:
    // root of pi^2 c^4/2 + pi^2 c^4/4 + c^3 - 1 = 0
    EigenPair eig{};
    eig.lambda1 = M_PI * M_PI;
    eig.grad_inf = M_PI;
    const auto params = RegimeParams::classify(3.0, 1.0);
    const double c3 = subsolution_constant(eig, 1.0, 1.0, params);

    auto lhs = [](double c) {
        return M_PI * M_PI * c * c * c * c / 2 + M_PI * M_PI * c * c * c * c / 4 + c * c * c - 1;
    };
    double lo = 0.0, hi = 1.0;
    while (lhs(hi) < 0) hi *= 2;
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2;
        (lhs(mid) <= 0 ? lo : hi) = mid;
    }
    CHECK(c3 == doctest::Approx(lo).epsilon(1e-12));
    // bracketing property
    CHECK(lhs(c3 / 2) < 0.0);
    CHECK(lhs(2 * c3) > 0.0);
}

TEST_CASE("subsolution constant decreases as the potential grows") {
    EigenPair eig{};
    eig.lambda1 = M_PI * M_PI;
    eig.grad_inf = M_PI;
    const auto params = RegimeParams::classify(2.0, 1.0);
    const double c_1 = subsolution_constant(eig, 1.0, 1.0, params);
    const double c_10 = subsolution_constant(eig, 1.0, 10.0, params);
    const double c_100 = subsolution_constant(eig, 1.0, 100.0, params);
    CHECK(c_1 >= c_10);
    CHECK(c_10 >= c_100);
    CHECK_THROWS_AS(subsolution_constant(eig, 1.0, 1.0, RegimeParams::classify(0.5, 1.0)),
                    config_error);
}

TEST_CASE("subsolution barrier construction") {
    auto m = build_mesh(1, 0.0, 1.0, 257);
    auto op = identity_op(m);
    const EigenPair eig = principal_eigenpair(op);
    const auto params = RegimeParams::classify(3.0, 1.0);
    const double c3 = 0.4;
    GridFunction w = build_subsolution(eig, c3, 100.0, params);
    CHECK(w[0] == 0.0);
    CHECK(w[w.size() - 1] == 0.0);
    // peak value c3 * max(phi1)^tau - 1/n with sup phi1 = 1
    CHECK(max_value(w) == doctest::Approx(c3 - 0.01).epsilon(1e-6));
    // n -> infinity limit
    GridFunction w_inf = build_subsolution(eig, c3, 1e14, params);
    for (std::size_t k = 0; k < w.size(); ++k)
        CHECK(w_inf[k] == doctest::Approx(c3 * std::pow(eig.phi1[k], 0.5)).epsilon(1e-10));
}

TEST_CASE("barrier verification report") {
    auto m = build_mesh(1, 0.0, 1.0, 65);
    GridFunction u = GridFunction::sample(m, [](double x, double) { return std::min(x, 1 - x); });
    BarrierReport same = verify_barrier(u, u, 1.0);
    CHECK(same.min_margin == 0.0);
    CHECK(same.violation_fraction == 0.0);
    CHECK(same.implied_c == doctest::Approx(1.0));

    GridFunction cap(m, 0.0);
    for (std::size_t k = 0; k < cap.size(); ++k) cap[k] = m->is_boundary(k) ? 0.0 : 0.9;
    GridFunction small(m, 0.0);
    for (std::size_t k = 0; k < small.size(); ++k) small[k] = 0.1 * u[k];
    const BarrierReport dom = verify_barrier(cap, small, 1.0);
    CHECK(dom.min_margin >= 0.0);
    CHECK(dom.violation_fraction == 0.0);
}

TEST_CASE("pipeline barrier holds for the frozen-potential strong solve") {
    auto m = build_mesh(1, 0.0, 1.0, 513);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(2.0, 1.0);
    RegularizationSchedule sched;
    sched.n_values = {10.0, 100.0, 1000.0, 10000.0};
    GridFunction v(m, 1.0);
    auto [u, trace] = continuation_solve(op, v, params, sched);
    const EigenPair eig = principal_eigenpair(op);
    const double c3 = subsolution_constant(eig, op.beta(), norms(v).linf, params);
    GridFunction w = build_subsolution(eig, c3, sched.n_values.back(), params);
    const BarrierReport rep = verify_barrier(u, w, params.tau(), 10 * sched.inner_tol);
    CHECK(rep.violation_fraction == 0.0);
    CHECK(rep.implied_c > 0.0);
}

TEST_CASE("2D regularized solve keeps the cap, positivity, and symmetry") {
    auto m = build_mesh(2, 0.0, 1.0, 33);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(0.5, 1.0);
    RegularizationSchedule sched;
    sched.lin_tol = 1e-11;
    GridFunction v(m, 1.0);
    InnerReport rep;
    GridFunction u = solve_regularized(op, v, 1000.0, params, sched, nullptr, &rep);
    CHECK(rep.residual <= sched.inner_tol);
    CHECK(max_value(u) <= linfty_cap(1.0, params, sched.c0) + 1e-12);
    CHECK(min_interior(u) > 0.0);
    // symmetric data, symmetric solution (up to the linear-solver tolerance)
    const int res = m->resolution();
    double asym = 0.0;
    for (int j = 0; j < res; ++j)
        for (int i = 0; i < res; ++i) {
            asym = std::max(asym, std::abs(u[m->index(i, j)] - u[m->index(res - 1 - i, j)]));
            asym = std::max(asym, std::abs(u[m->index(i, j)] - u[m->index(j, i)]));
        }
    CHECK(asym < 1e-7);
}

TEST_CASE("2D barrier pinches the strong-regime solve (indicative on the square)") {
    auto m = build_mesh(2, 0.0, 1.0, 33);
    auto op = identity_op(m);
    const auto params = RegimeParams::classify(2.0, 1.0);
    RegularizationSchedule sched;
    sched.lin_tol = 1e-11;
    GridFunction v(m, 1.0);
    auto [u, trace] = continuation_solve(op, v, params, sched);
    const EigenPair eig = principal_eigenpair(op, 1e-9);
    const double c3 = subsolution_constant(eig, op.beta(), 1.0, params);
    const GridFunction w = build_subsolution(eig, c3, sched.n_values.back(), params);
    const BarrierReport rep = verify_barrier(u, w, params.tau(), 10 * sched.inner_tol);
    CHECK(rep.violation_fraction == 0.0);
}

TEST_CASE("interior positivity") {
    auto m = build_mesh(1, 0.0, 1.0, 65);
    GridFunction d = GridFunction::sample(m, [](double x, double) { return std::min(x, 1 - x); });
    CHECK(interior_positivity(d, 0.25) == doctest::Approx(0.25));
    CHECK(interior_positivity(GridFunction(m, 0.0), 0.25) == 0.0);
    CHECK_THROWS_AS(interior_positivity(d, 0.75), config_error);

    auto op = identity_op(m);
    const auto params = RegimeParams::classify(0.5, 1.0);
    auto sched = quick_schedule();
    GridFunction v(m, 1.0);
    GridFunction u = solve_regularized(op, v, 1000.0, params, sched);
    double prev = interior_positivity(u, 0.1);
    CHECK(prev > 0.0);
    for (double margin : {0.2, 0.3, 0.4}) {
        const double cur = interior_positivity(u, margin);
        CHECK(cur >= prev - 1e-15);
        prev = cur;
    }
}
