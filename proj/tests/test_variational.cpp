#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "singmax/oracle1d.hpp"
#include "singmax/variational.hpp"

using namespace singmax;

namespace {
struct MildSetup {
    SystemConfig cfg;
    SolutionPair pair;
    DiscreteOperator opA, opM;

    static MildSetup make(int resolution) {
        SystemConfig cfg;
        cfg.params = RegimeParams::classify(0.5, 1.0);
        cfg.resolution = resolution;
        cfg.sched.n_values = {10.0, 100.0, 1000.0};
        SolutionPair pair = solve_system(cfg);
        DiscreteOperator opA = assemble(pair.mesh, coefficient_preset(pair.mesh, cfg.coeff_a));
        DiscreteOperator opM = assemble(pair.mesh, coefficient_preset(pair.mesh, cfg.coeff_m));
        return {cfg, std::move(pair), std::move(opA), std::move(opM)};
    }
};
} // namespace

TEST_CASE("truncation and its residual") {
    CHECK(truncate(3.0, 2.0) == 2.0);
    CHECK(residual_above(3.0, 2.0) == 1.0);
    CHECK(truncate(-5.0, 2.0) == -2.0);
    CHECK(truncate(0.5, 1.0) == 0.5);
    CHECK(residual_above(0.5, 1.0) == 0.0);
    CHECK_THROWS_AS(truncate(1.0, 0.0), config_error);
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double s = rng.uniform(-20.0, 20.0), k = rng.uniform(1e-3, 5.0);
        CHECK(truncate(s, k) + residual_above(s, k) == doctest::Approx(s).epsilon(1e-15));
        CHECK(std::abs(truncate(s, k)) <= k);
        if (std::abs(s) <= k) CHECK(residual_above(s, k) == 0.0);
        else CHECK(residual_above(s, k) != 0.0);
    }
}

TEST_CASE("functional values on degenerate inputs") {
    auto mesh = build_mesh(1, 0.0, 1.0, 65);
    auto opA = assemble(mesh, coefficient_preset(mesh, "identity"));
    auto opM = assemble(mesh, coefficient_preset(mesh, "identity"));
    const auto params = RegimeParams::classify(0.5, 1.0);
    GridFunction zero(mesh, 0.0);
    CHECK(evaluate_functional(zero, zero, opA, opM, params) == 0.0);

    Rng rng(8);
    GridFunction z = random_smooth(mesh, rng);
    const double j0 = evaluate_functional(zero, z, opA, opM, params);
    CHECK(j0 == doctest::Approx(-energy_product(opM, z, z) / (2 * params.r)).epsilon(1e-13));
    CHECK(j0 <= 0.0);
    CHECK_THROWS_AS(evaluate_functional(zero, z, opA, opM, RegimeParams::classify(1.0, 1.0)),
                    config_error);
}

TEST_CASE("functional is a concave parabola in the z slot") {
    auto s = MildSetup::make(129);
    Rng rng(9);
    GridFunction dir = random_smooth(s.pair.mesh, rng);
    auto j_at = [&](double t) {
        GridFunction z(s.pair.mesh);
        for (std::size_t k = 0; k < z.size(); ++k) z[k] = t * dir[k] + s.pair.v[k];
        return evaluate_functional(s.pair.u, z, s.opA, s.opM, s.cfg.params);
    };
    for (double t : {0.3, 1.0, 2.0}) {
        const double second = j_at(t + 0.1) - 2 * j_at(t) + j_at(t - 0.1);
        CHECK(second <= 1e-10);
    }
}

TEST_CASE("zero-order map is midpoint convex in w for r >= 1") {
    auto s = MildSetup::make(129);
    Rng rng(10);
    const double r = s.cfg.params.r, g = s.cfg.params.gamma;
    auto q_of = [&](const GridFunction& w) {
        double acc = 0.0;
        const Mesh& m = *s.pair.mesh;
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (m.is_boundary(k)) continue;
            acc += s.pair.v[k] * std::pow(w[k], r) / r - std::pow(w[k], 1 - g) / (1 - g);
        }
        return acc * m.cell_volume();
    };
    for (int trial = 0; trial < 5; ++trial) {
        GridFunction w1(s.pair.mesh), w2(s.pair.mesh);
        for (std::size_t k = 0; k < w1.size(); ++k) {
            w1[k] = rng.uniform(0.0, 1.0);
            w2[k] = rng.uniform(0.0, 1.0);
        }
        GridFunction mid(s.pair.mesh);
        for (std::size_t k = 0; k < mid.size(); ++k) mid[k] = (w1[k] + w2[k]) / 2;
        CHECK(q_of(mid) <= (q_of(w1) + q_of(w2)) / 2 + 1e-12);
    }
}

TEST_CASE("functional value agrees with a high-resolution quadrature oracle") {
    auto s = MildSetup::make(257);
    const double J = evaluate_functional(s.pair.u, s.pair.v, s.opA, s.opM, s.cfg.params);

    OracleProblem p;
    p.params = s.cfg.params;
    p.n = s.cfg.sched.n_values.back();
    p.coupled = true;
    p.base_cells = 2560;
    p.cache_dir = "oracle_cache";
    const OracleSolution ref = oracle_solve_coupled(p);
    // trapezoid quadrature of the same integrand on the fine oracle grid
    const std::size_t n = ref.x.size();
    const double h = ref.x[1] - ref.x[0];
    double J_ref = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double du = (ref.u[i + 1] - ref.u[i]) / h;
        const double dv = (ref.v[i + 1] - ref.v[i]) / h;
        const double um = (ref.u[i + 1] + ref.u[i]) / 2, vm = (ref.v[i + 1] + ref.v[i]) / 2;
        J_ref += h * (0.5 * du * du - dv * dv / (2 * s.cfg.params.r) + vm * um -
                      std::pow(um, 0.5) / 0.5);
    }
    CHECK(J == doctest::Approx(J_ref).epsilon(1e-3));
}

TEST_CASE("saddle inequality holds at the solution") {
    auto s = MildSetup::make(257);
    const double J0 = evaluate_functional(s.pair.u, s.pair.v, s.opA, s.opM, s.cfg.params);
    // zero perturbation reproduces J exactly
    CHECK(evaluate_functional(s.pair.u, s.pair.v, s.opA, s.opM, s.cfg.params) ==
          doctest::Approx(J0).epsilon(1e-14));

    const SaddleReport rep = saddle_test(s.pair, s.opA, s.opM, 25, 123);
    CHECK(rep.violations == 0);
    CHECK(rep.max_J_over_z <= J0 + rep.tolerance);
    CHECK(rep.min_J_over_w >= J0 - rep.tolerance);
    CHECK(rep.z_samples.size() == 2 + 25 * 6);
    // J(0, v) >= J(u, v): the w = 0 deterministic direction
    GridFunction zero(s.pair.mesh, 0.0);
    CHECK(evaluate_functional(zero, s.pair.v, s.opA, s.opM, s.cfg.params) >= J0 - rep.tolerance);
}

TEST_CASE("saddle test rejects out-of-scope regimes") {
    SystemConfig cfg;
    cfg.params = RegimeParams::classify(2.0, 1.0);
    cfg.resolution = 65;
    cfg.sched.n_values = {10.0, 100.0};
    SolutionPair pair = solve_system(cfg);
    auto opA = assemble(pair.mesh, coefficient_preset(pair.mesh, "identity"));
    CHECK_THROWS_AS(saddle_test(pair, opA, opA, 5, 1), config_error);
}

TEST_CASE("unboundedness probe shows quadratic growth and decay") {
    auto s = MildSetup::make(257);
    const UnboundednessProbe probe = unboundedness_probe(s.pair, s.opA, s.opM, 1 << 20);
    CHECK(probe.monotone_growth);
    CHECK(probe.monotone_decay);
    CHECK(probe.sup_estimate > 1e6);
    CHECK(probe.inf_estimate < -1e6);
    const CoefficientField A = coefficient_preset(s.pair.mesh, "identity");
    const GridFunction w0 = probe_profile(s.pair.mesh);
    const double ref = 0.5 * gradient_energy_quadrature(A, w0);
    CHECK(probe.growth_coeff == doctest::Approx(ref).epsilon(0.02));
    CHECK(-probe.decay_coeff ==
          doctest::Approx(gradient_energy_quadrature(A, w0) / (2 * s.cfg.params.r)).epsilon(0.02));
}

TEST_CASE("hardy quotient") {
    auto mesh = build_mesh(1, 0.0, 1.0, 257);
    GridFunction tent = GridFunction::sample(mesh, [](double x, double) { return std::min(x, 1 - x); });
    const double tq = hardy_quotient(tent);
    CHECK(tq <= 4.0);
    CHECK(tq == doctest::Approx(1.0).epsilon(0.02));

    GridFunction s = GridFunction::sample(mesh, [](double x, double) { return std::sin(M_PI * x); });
    const double sq = hardy_quotient(s);
    CHECK(sq <= 4.0);
    // high-resolution quadrature oracle for sin(pi x)
    const int N = 2000000;
    double num = 0.0;
    for (int i = 0; i < N; ++i) {
        const double x = (i + 0.5) / N;
        const double d = std::min(x, 1 - x);
        const double f = std::sin(M_PI * x);
        num += f * f / (d * d);
    }
    num /= N;
    const double ref = num / (M_PI * M_PI / 2);
    CHECK(sq == doctest::Approx(ref).epsilon(1e-3));

    // scaling invariance
    GridFunction s3 = s;
    for (std::size_t k = 0; k < s3.size(); ++k) s3[k] *= 3.25;
    CHECK(hardy_quotient(s3) == doctest::Approx(sq).epsilon(1e-14));

    CHECK_THROWS_AS(hardy_quotient(GridFunction(mesh, 0.0)), config_error);
    CHECK_THROWS_AS(hardy_quotient(GridFunction(mesh, 1.0)), config_error);
}

TEST_CASE("hardy quotient is stable under refinement for smooth profiles") {
    auto quotient_at = [](int res) {
        auto mesh = build_mesh(1, 0.0, 1.0, res);
        return hardy_quotient(
            GridFunction::sample(mesh, [](double x, double) { return std::sin(M_PI * x); }));
    };
    const double q1 = quotient_at(129), q2 = quotient_at(257), q3 = quotient_at(513);
    CHECK(std::abs(q3 - q2) < std::abs(q2 - q1));
    CHECK(std::abs(q3 - q2) < 5e-4);
}

TEST_CASE("boundary exponent fit") {
    auto mesh = build_mesh(1, 0.0, 1.0, 1025);
    GridFunction half = GridFunction::sample(
        mesh, [&](double x, double) { return std::sqrt(std::min(x, 1 - x)); });
    const ExponentFit f1 = fit_boundary_exponent(half, 0.05);
    CHECK(f1.tau_fit == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f1.c_fit == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f1.r2 == doctest::Approx(1.0).epsilon(1e-12));

    GridFunction lin = GridFunction::sample(
        mesh, [&](double x, double) { return std::min(x, 1 - x); });
    CHECK(fit_boundary_exponent(lin, 0.05).tau_fit == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(fit_boundary_exponent(half, 0.6), config_error);
    auto tiny = build_mesh(1, 0.0, 1.0, 33);
    GridFunction t = GridFunction::sample(tiny, [](double x, double) { return std::min(x, 1 - x); });
    CHECK_THROWS_AS(fit_boundary_exponent(t, 0.05), config_error); // < 5 usable nodes
    GridFunction neg = GridFunction::sample(
        mesh, [](double x, double) { return std::min(x, 1 - x) - 0.01; });
    CHECK_THROWS_AS(fit_boundary_exponent(neg, 0.05), config_error);
}

TEST_CASE("direct gradient quadrature tracks the operator energy form") {
    auto mesh = build_mesh(1, 0.0, 1.0, 513);
    const CoefficientField A = coefficient_preset(mesh, "sin-perturbed:0.4");
    const DiscreteOperator op = assemble(mesh, A);
    Rng rng(77);
    const GridFunction w = random_smooth(mesh, rng);
    const double direct = gradient_energy_quadrature(A, w);
    const double form = energy_product(op, w, w);
    CHECK(direct == doctest::Approx(form).epsilon(1e-3));
}
