#ifndef SINGMAX_EXPERIMENT_HPP
#define SINGMAX_EXPERIMENT_HPP

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <thread>

#include "singmax/io.hpp"
#include "singmax/oracle1d.hpp"
#include "singmax/variational.hpp"

namespace singmax {

// ---------------------------------------------------------------------------
// INI-style configuration: [section] headers, key = value lines, '#' or ';'
// comments. Values are scalars or whitespace-separated lists. Unknown keys
// are rejected so typos cannot silently fall back to defaults.

struct IniValue {
    std::string text;
    int line = 0;
};

class IniFile {
public:
    static IniFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config '" + path + "'");
        return parse(in, path);
    }

    static IniFile parse(std::istream& in, const std::string& name) {
        IniFile f;
        f.name_ = name;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line.erase(comment);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto last = line.find_last_not_of(" \t\r");
            const std::string body = line.substr(first, last - first + 1);
            if (body.front() == '[') {
                if (body.back() != ']')
                    throw config_error(name + ":" + std::to_string(lineno) + ":" +
                                       std::to_string(int(first + body.size())) +
                                       ": unterminated section header");
                section = body.substr(1, body.size() - 2);
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw config_error(name + ":" + std::to_string(lineno) + ":" +
                                   std::to_string(int(first + 1)) + ": expected 'key = value'");
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t");
                const auto b = s.find_last_not_of(" \t");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            const std::string key = trim(body.substr(0, eq));
            const std::string value = trim(body.substr(eq + 1));
            if (key.empty())
                throw config_error(name + ":" + std::to_string(lineno) + ":" +
                                   std::to_string(int(first + 1)) + ": empty key");
            if (section.empty())
                throw config_error(name + ":" + std::to_string(lineno) +
                                   ":1: key outside any [section]");
            f.data_[section][key] = {value, lineno};
        }
        return f;
    }

    bool has(const std::string& sec, const std::string& key) const {
        const auto s = data_.find(sec);
        return s != data_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& sec, const std::string& key, const std::string& dflt) {
        consumed_[sec].insert(key);
        const auto s = data_.find(sec);
        if (s == data_.end()) return dflt;
        const auto k = s->second.find(key);
        return k == s->second.end() ? dflt : k->second.text;
    }

    double get_double(const std::string& sec, const std::string& key, double dflt) {
        const std::string t = get(sec, key, "");
        if (t.empty()) return dflt;
        return parse_double(sec, key, t);
    }

    int get_int(const std::string& sec, const std::string& key, int dflt) {
        const double v = get_double(sec, key, double(dflt));
        if (v != std::floor(v)) fail(sec, key, "expected an integer");
        return int(v);
    }

    std::vector<double> get_list(const std::string& sec, const std::string& key,
                                 std::vector<double> dflt) {
        const std::string t = get(sec, key, "");
        if (t.empty()) return dflt;
        std::vector<double> out;
        std::istringstream is(t);
        std::string tok;
        while (is >> tok) out.push_back(parse_double(sec, key, tok));
        if (out.empty()) fail(sec, key, "empty list");
        return out;
    }

    // Every key must have been consumed by a get*; anything left is a typo.
    void check_unknown() const {
        for (const auto& [sec, keys] : data_) {
            const auto c = consumed_.find(sec);
            for (const auto& [key, val] : keys)
                if (c == consumed_.end() || c->second.count(key) == 0)
                    throw config_error(name_ + ":" + std::to_string(val.line) +
                                       ":1: unknown key '" + sec + "." + key + "'");
        }
    }

private:
    double parse_double(const std::string& sec, const std::string& key, const std::string& t) {
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            fail(sec, key, "cannot parse number '" + t + "'");
        }
        return 0.0;
    }

    [[noreturn]] void fail(const std::string& sec, const std::string& key,
                           const std::string& what) const {
        int line = 0;
        const auto s = data_.find(sec);
        if (s != data_.end()) {
            const auto k = s->second.find(key);
            if (k != s->second.end()) line = k->second.line;
        }
        throw config_error(name_ + ":" + std::to_string(line) + ":1: " + sec + "." + key + ": " +
                           what);
    }

    std::string name_;
    std::map<std::string, std::map<std::string, IniValue>> data_;
    mutable std::map<std::string, std::set<std::string>> consumed_;
};

// ---------------------------------------------------------------------------

enum class ExperimentKind { single, coupled, sweep, refinement, saddle, uniqueness, distributional };

inline const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::single: return "single";
        case ExperimentKind::coupled: return "coupled";
        case ExperimentKind::sweep: return "sweep";
        case ExperimentKind::refinement: return "refinement";
        case ExperimentKind::saddle: return "saddle";
        case ExperimentKind::uniqueness: return "uniqueness";
        default: return "distributional";
    }
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::coupled;
    std::string output_dir;
    SystemConfig system;
    double fit_layer = 0.05;
    bool operator_diagnostics = false; // dump operator.json (spectrum, comparability)
    std::string v_preset = "const:1";                  // kind = single
    std::vector<double> sweep_gammas, sweep_rs;        // kind = sweep
    std::vector<int> sweep_resolutions;
    std::vector<int> refinement_resolutions;           // kind = refinement
    int saddle_directions = 200;                       // kind = saddle
    double saddle_t_max = 1048576.0;
    int uniqueness_trials = 5;                         // kind = uniqueness

    static ExperimentConfig from_file(const std::string& path) {
        IniFile ini = IniFile::parse_file(path);
        return from_ini(ini);
    }

    static ExperimentConfig from_ini(IniFile& ini) {
        ExperimentConfig c;
        const std::string kind = ini.get("experiment", "kind", "coupled");
        if (kind == "single") c.kind = ExperimentKind::single;
        else if (kind == "coupled") c.kind = ExperimentKind::coupled;
        else if (kind == "sweep") c.kind = ExperimentKind::sweep;
        else if (kind == "refinement") c.kind = ExperimentKind::refinement;
        else if (kind == "saddle") c.kind = ExperimentKind::saddle;
        else if (kind == "uniqueness") c.kind = ExperimentKind::uniqueness;
        else if (kind == "distributional") c.kind = ExperimentKind::distributional;
        else throw config_error("experiment.kind: unknown kind '" + kind + "'");
        c.output_dir = ini.get("experiment", "output", std::string("runs/") + kind);
        c.system.seed = std::uint64_t(ini.get_double("experiment", "seed", 0.0));

        const double gamma = ini.get_double("regime", "gamma", 0.5);
        const double r = ini.get_double("regime", "r", 1.0);
        const std::string type = ini.get("regime", "type", "auto");
        if (type == "auto") c.system.params = RegimeParams::classify(gamma, r);
        else if (type == "energy") {
            c.system.params = RegimeParams::classify(gamma, r);
            if (!c.system.params.energy())
                throw config_error("regime: gamma = " + fmt17(gamma) +
                                   " has no energy solutions (needs gamma < 3)");
        } else if (type == "distributional") {
            c.system.params = RegimeParams::distributional(gamma, r);
        } else {
            throw config_error("regime.type: expected auto|energy|distributional, got '" + type +
                               "'");
        }
        if (c.kind == ExperimentKind::distributional &&
            c.system.params.regime != Regime::distributional)
            c.system.params = RegimeParams::distributional(gamma, r);

        c.system.dimension = ini.get_int("mesh", "dimension", 1);
        c.system.resolution = ini.get_int("mesh", "resolution", 257);
        c.system.lo = ini.get_double("mesh", "lo", 0.0);
        c.system.hi = ini.get_double("mesh", "hi", 1.0);
        c.system.coeff_a = ini.get("coefficients", "a", "identity");
        c.system.coeff_m = ini.get("coefficients", "m", "identity");

        c.system.sched.c0 = ini.get_double("solver", "c0", 10.0);
        c.system.sigma = ini.get_double("solver", "sigma", 2.0 * c.system.sched.c0);
        c.system.outer_tol = ini.get_double("solver", "outer_tol", 1e-8);
        c.system.max_outer = ini.get_int("solver", "max_outer", 60);
        c.system.sched.lin_tol = ini.get_double("solver", "lin_tol", 1e-12);
        c.system.sched.n_values = ini.get_list("schedule", "n_values", {10.0, 100.0, 1000.0});
        c.system.sched.inner_tol = ini.get_double("schedule", "inner_tol", 1e-10);
        c.system.sched.max_inner = ini.get_int("schedule", "max_inner", 3000);
        c.system.sched.damping = ini.get_double("schedule", "damping", 0.5);

        c.fit_layer = ini.get_double("diagnostics", "layer", 0.05);
        c.operator_diagnostics = ini.get_int("diagnostics", "operator", 0) != 0;
        c.v_preset = ini.get("single", "v", "const:1");
        for (double g : ini.get_list("sweep", "gammas", {})) c.sweep_gammas.push_back(g);
        for (double g : ini.get_list("sweep", "rs", {c.system.params.r})) c.sweep_rs.push_back(g);
        for (double g : ini.get_list("sweep", "resolutions", {double(c.system.resolution)}))
            c.sweep_resolutions.push_back(int(g));
        for (double g : ini.get_list("refinement", "resolutions", {129.0, 257.0, 513.0}))
            c.refinement_resolutions.push_back(int(g));
        c.saddle_directions = ini.get_int("saddle", "directions", 200);
        c.saddle_t_max = ini.get_double("saddle", "t_max", 1048576.0);
        c.uniqueness_trials = ini.get_int("uniqueness", "trials", 5);
        ini.check_unknown();

        c.system.validate();
        if (c.kind == ExperimentKind::sweep) {
            if (c.sweep_gammas.empty())
                throw config_error("sweep.gammas: a sweep needs at least one gamma");
            // Reject the whole sweep before any solve if a single point is
            // inadmissible.
            for (double g : c.sweep_gammas)
                for (double rr : c.sweep_rs) RegimeParams::classify(g, rr);
        }
        if (c.kind == ExperimentKind::single) potential_profile_names_check(c.v_preset);
        return c;
    }

    json echo() const {
        json j;
        j["kind"] = kind_name(kind);
        j["output"] = output_dir;
        j["seed"] = system.seed;
        j["regime"] = {{"gamma", system.params.gamma},
                       {"r", system.params.r},
                       {"type", regime_name(system.params.regime)},
                       {"tau", system.params.tau()}};
        j["mesh"] = {{"dimension", system.dimension},
                     {"resolution", system.resolution},
                     {"lo", system.lo},
                     {"hi", system.hi}};
        j["coefficients"] = {{"a", system.coeff_a}, {"m", system.coeff_m}};
        j["solver"] = {{"c0", system.sched.c0},
                       {"sigma", system.sigma},
                       {"outer_tol", system.outer_tol},
                       {"max_outer", system.max_outer},
                       {"lin_tol", system.sched.lin_tol}};
        j["schedule"] = {{"n_values", system.sched.n_values},
                         {"inner_tol", system.sched.inner_tol},
                         {"max_inner", system.sched.max_inner},
                         {"damping", system.sched.damping}};
        j["diagnostics"] = {{"layer", fit_layer}, {"operator", operator_diagnostics ? 1 : 0}};
        switch (kind) {
            case ExperimentKind::single: j["single"] = {{"v", v_preset}}; break;
            case ExperimentKind::sweep:
                j["sweep"] = {{"gammas", sweep_gammas},
                              {"rs", sweep_rs},
                              {"resolutions", sweep_resolutions}};
                break;
            case ExperimentKind::refinement:
                j["refinement"] = {{"resolutions", refinement_resolutions}};
                break;
            case ExperimentKind::saddle:
                j["saddle"] = {{"directions", saddle_directions}, {"t_max", saddle_t_max}};
                break;
            case ExperimentKind::uniqueness:
                j["uniqueness"] = {{"trials", uniqueness_trials}};
                break;
            default: break;
        }
        return j;
    }

private:
    static void potential_profile_names_check(const std::string& name) {
        potential_profile_1d(name, 0.0, 1.0); // throws on bad preset
    }
};

// ---------------------------------------------------------------------------
// Worker pool for embarrassingly parallel sweep/refinement points.

inline int worker_count(int points) {
    if (const char* env = std::getenv("SINGMAX_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return std::min(n, points);
    }
    const int hw = int(std::thread::hardware_concurrency());
    return std::max(1, std::min(hw > 0 ? hw : 1, points));
}

inline void parallel_for(int points, const std::function<void(int)>& fn) {
    const int workers = worker_count(points);
    if (workers <= 1) {
        for (int i = 0; i < points; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = next++; i < points; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Shared post-solve diagnostics.

inline void append_hardy_gate(DiagnosticsReport& d, const GridFunction& u) {
    if (u.mesh().dimension() != 1) {
        d.add_na("hardy-quotient", "hardy-bound", "1D check only");
        return;
    }
    const double q = hardy_quotient(u);
    d.add("hardy-quotient", "hardy-bound", q <= 4.05, q, 4.05,
          "[int u^2/d^2] / [int |grad u|^2] against the interval constant 4");
}

inline void append_barrier_gates(DiagnosticsReport& d, const GridFunction& u,
                                 const GridFunction& v, const DiscreteOperator& opA,
                                 const RegimeParams& params, const RegularizationSchedule& sched,
                                 double layer, BarrierReport* barrier_out = nullptr) {
    if (!(params.gamma > 1.0)) {
        d.add_na("subsolution-barrier", "subsolution-barrier", "requires gamma > 1");
        d.add_na("boundary-exponent", "boundary-exponent", "requires gamma > 1");
        return;
    }
    const EigenPair eig = principal_eigenpair(opA);
    const double c3 = subsolution_constant(eig, opA.beta(), norms(v).linf, params);
    const GridFunction w = build_subsolution(eig, c3, sched.n_values.back(), params);
    const BarrierReport rep = verify_barrier(u, w, params.tau(), 10.0 * sched.inner_tol);
    if (barrier_out) *barrier_out = rep;
    d.add("subsolution-barrier", "subsolution-barrier", rep.violation_fraction == 0.0,
          rep.violation_fraction, 0.0,
          "fraction of nodes below c3 phi1^tau - 1/n at solver tolerance, c3 = " + fmt17(c3));
    try {
        const ExponentFit fit = fit_boundary_exponent(u, layer);
        const double tau = params.tau();
        const bool ok = std::abs(fit.tau_fit - tau) <= 0.1 * tau && fit.r2 >= 0.98;
        d.add("boundary-exponent", "boundary-exponent", ok, fit.tau_fit, tau,
              "log-log decay fit, r2 = " + fmt17(fit.r2) + ", target 2/(gamma+1) within 10%");
    } catch (const config_error& e) {
        d.add_na("boundary-exponent", "boundary-exponent", e.what());
    }
}

inline void append_continuation_gate(DiagnosticsReport& d, const ConvergenceTrace& t) {
    d.add("continuation-tail", "plumbing", t.monotone_tail, t.monotone_tail ? 1.0 : 0.0, 1.0,
          "L2 differences non-increasing over the last half of the schedule");
}

// ---------------------------------------------------------------------------
// Experiment execution. Each runner writes its artifact directory and
// returns the aggregated diagnostics.

namespace detail {

inline void write_common_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                   const Mesh& mesh) {
    ensure_dir(dir);
    json echo = cfg.echo();
    echo["mesh_descriptor"] = mesh_descriptor(mesh);
    write_json_file(dir / "config.json", echo);
    write_nodes_csv(dir / "nodes.csv", mesh);
}

// Spectrum and distance-comparability dump for -div(A grad .).
inline void write_operator_json(const std::filesystem::path& p, const DiscreteOperator& op) {
    const EigenPair e = principal_eigenpair(op);
    write_json_file(p, json{{"alpha", op.alpha()},
                            {"beta", op.beta()},
                            {"lambda1", e.lambda1},
                            {"c1", e.c1},
                            {"c2", e.c2},
                            {"grad_phi1_inf", e.grad_inf},
                            {"iterations", e.iterations},
                            {"residual", e.residual}});
}

inline void write_levels_csv(const std::filesystem::path& p, const SolutionPair& pair) {
    std::vector<std::string> header{"n", "linf", "h1", "l2_diff", "inner_iters", "residual"};
    for (double m : pair.margins) header.push_back("local_h1_d" + fmt17(m));
    for (double e : pair.epsilons) header.push_back("eps_h1_" + fmt17(e));
    CsvWriter w(p, header);
    for (std::size_t i = 0; i < pair.continuation.steps.size(); ++i) {
        const auto& s = pair.continuation.steps[i];
        std::vector<double> row{s.n, s.linf, s.h1, s.l2_diff, double(s.inner_iters), s.residual};
        for (double v : pair.local_h1[i]) row.push_back(v);
        for (double v : pair.eps_h1[i]) row.push_back(v);
        w.row(row);
    }
}

inline void print_summary(std::ostream& out, const std::string& title,
                          const DiagnosticsReport& d) {
    out << title << "\n";
    for (const auto& g : d.gates) {
        char line[256];
        std::snprintf(line, sizeof(line), "  %-28s %-14s measured=%-24.17g tol=%-24.17g %s\n",
                      g.name.c_str(), gate_status_name(g.status), g.measured, g.tolerance,
                      g.anchor.c_str());
        out << line;
    }
    out << (d.all_pass() ? "  => all gates pass\n" : "  => GATE FAILURE\n");
}

} // namespace detail

// kind = single: frozen-potential continuation with full diagnostics.
inline DiagnosticsReport run_single(const ExperimentConfig& cfg,
                                    const std::filesystem::path& dir) {
    MeshPtr mesh = cfg.system.make_mesh();
    detail::write_common_artifacts(dir, cfg, *mesh);
    const CoefficientField A = coefficient_preset(mesh, cfg.system.coeff_a);
    const DiscreteOperator opA = assemble(mesh, A);
    const GridFunction v = potential_preset(mesh, cfg.v_preset);
    auto [u, trace] = continuation_solve(opA, v, cfg.system.params, cfg.system.sched);

    DiagnosticsReport d;
    const double b = linfty_cap(norms(v).linf, cfg.system.params, cfg.system.sched.c0);
    const double cap_excess = max_value(u) - b;
    d.add("linfty-cap", "linfty-cap", cap_excess <= 1e-10, cap_excess, 1e-10);
    const double margin = 0.1 * (cfg.system.hi - cfg.system.lo) / 2.0;
    const double pos = interior_positivity(u, margin);
    d.add("interior-positivity", "interior-positivity", pos > 0.0, pos, 0.0);
    d.add("weak-residual-u", "plumbing",
          trace.steps.back().residual <= 10 * cfg.system.sched.inner_tol,
          trace.steps.back().residual, 10 * cfg.system.sched.inner_tol);
    append_continuation_gate(d, trace);
    if (cfg.system.params.regime == Regime::energy_mild) {
        const Norms un = norms(u);
        const double measured = opA.alpha() * un.h1_seminorm * un.h1_seminorm;
        const double bound = 1.05 * mesh->domain_measure() *
                             std::pow(std::max(max_value(u), 1e-300), 1.0 - cfg.system.params.gamma);
        d.add("energy-bound", "energy-bound", measured <= bound, measured, bound);
    } else if (cfg.system.params.regime == Regime::energy_strong) {
        const auto& st = trace.steps;
        const double rel =
            std::abs(st.back().h1 - st[st.size() - 2].h1) / std::max(st.back().h1, 1e-300);
        d.add("energy-stability", "energy-bound", rel < 0.05, rel, 0.05);
    }
    if (cfg.system.params.energy()) append_hardy_gate(d, u);
    BarrierReport barrier{};
    bool have_barrier = false;
    if (cfg.system.params.gamma > 1.0 && cfg.system.params.energy()) {
        append_barrier_gates(d, u, v, opA, cfg.system.params, cfg.system.sched, cfg.fit_layer,
                             &barrier);
        have_barrier = true;
    }

    write_grid_function_csv(dir / "u.csv", u);
    write_grid_function_csv(dir / "v.csv", v);
    write_trace_csv(dir / "trace.csv", trace);
    if (cfg.operator_diagnostics) detail::write_operator_json(dir / "operator.json", opA);
    json dj = diagnostics_json(d);
    if (have_barrier) dj["barrier"] = barrier_json(barrier);
    write_json_file(dir / "diagnostics.json", dj);
    return d;
}

// kind = coupled / distributional: one system solve with full artifacts.
inline DiagnosticsReport run_system(const ExperimentConfig& cfg,
                                    const std::filesystem::path& dir) {
    MeshPtr probe = cfg.system.make_mesh();
    detail::write_common_artifacts(dir, cfg, *probe);
    const bool dist = cfg.system.params.regime == Regime::distributional;
    SolutionPair pair = dist ? solve_system_distributional(cfg.system) : solve_system(cfg.system);
    DiagnosticsReport d = pair.diagnostics;
    if (!dist) {
        append_continuation_gate(d, pair.continuation);
        if (pair.u.mesh().dimension() == 1) append_hardy_gate(d, pair.u);
    }
    BarrierReport barrier{};
    bool have_barrier = false;
    if (!dist && cfg.system.params.gamma > 1.0) {
        const CoefficientField A = coefficient_preset(pair.mesh, cfg.system.coeff_a);
        const DiscreteOperator opA = assemble(pair.mesh, A);
        append_barrier_gates(d, pair.u, pair.v, opA, cfg.system.params, cfg.system.sched,
                             cfg.fit_layer, &barrier);
        have_barrier = true;
    }
    write_grid_function_csv(dir / "u.csv", pair.u);
    write_grid_function_csv(dir / "v.csv", pair.v);
    write_trace_csv(dir / "trace.csv", pair.continuation);
    write_outer_csv(dir / "outer.csv", pair.outer_trace);
    if (dist) detail::write_levels_csv(dir / "levels.csv", pair);
    if (cfg.operator_diagnostics) {
        const CoefficientField A = coefficient_preset(pair.mesh, cfg.system.coeff_a);
        detail::write_operator_json(dir / "operator.json", assemble(pair.mesh, A));
    }
    json dj = diagnostics_json(d);
    if (have_barrier) dj["barrier"] = barrier_json(barrier);
    write_json_file(dir / "diagnostics.json", dj);
    return d;
}

// kind = sweep: cartesian product of gammas x rs x resolutions, worker pool,
// one subdirectory per point plus summary.csv.
inline DiagnosticsReport run_sweep(const ExperimentConfig& cfg,
                                   const std::filesystem::path& dir) {
    ensure_dir(dir);
    write_json_file(dir / "config.json", cfg.echo());
    struct Point {
        double gamma, r;
        int resolution;
        std::string name;
    };
    std::vector<Point> points;
    for (double g : cfg.sweep_gammas)
        for (double r : cfg.sweep_rs)
            for (int res : cfg.sweep_resolutions) {
                char name[96];
                std::snprintf(name, sizeof(name), "g%g_r%g_res%d", g, r, res);
                points.push_back({g, r, res, name});
            }
    std::vector<DiagnosticsReport> reports(points.size());
    std::vector<std::string> errors(points.size());
    std::vector<double> tau_fits(points.size()), h1s(points.size());
    std::vector<int> iters(points.size());
    parallel_for(int(points.size()), [&](int i) {
        const Point& pt = points[i];
        ExperimentConfig pc = cfg;
        pc.kind = pt.gamma >= 3.0 ? ExperimentKind::distributional : ExperimentKind::coupled;
        pc.system.params = RegimeParams::classify(pt.gamma, pt.r);
        pc.system.resolution = pt.resolution;
        pc.system.seed = cfg.system.seed + 1000 * std::uint64_t(i);
        try {
            reports[i] = run_system(pc, dir / pt.name);
            const CsvTable trace = CsvTable::read(dir / pt.name / "trace.csv");
            h1s[i] = std::stod(trace.rows.back()[trace.col("h1")]);
            const CsvTable outer = CsvTable::read(dir / pt.name / "outer.csv");
            iters[i] = int(outer.rows.size());
            tau_fits[i] = std::numeric_limits<double>::quiet_NaN();
            MeshPtr mesh =
                build_mesh(pc.system.dimension, pc.system.lo, pc.system.hi, pt.resolution);
            const GridFunction u = read_grid_function_csv(dir / pt.name / "u.csv", mesh);
            try {
                tau_fits[i] = fit_boundary_exponent(u, cfg.fit_layer).tau_fit;
            } catch (const config_error&) {
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    DiagnosticsReport merged;
    CsvWriter summary(dir / "summary.csv",
                      {"gamma", "r", "resolution", "tau_fit", "h1", "iterations", "status"});
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point& pt = points[i];
        if (!errors[i].empty()) {
            merged.add("point-" + pt.name, "plumbing", false, 0.0, 0.0, errors[i]);
            summary.row(std::vector<std::string>{fmt17(pt.gamma), fmt17(pt.r),
                                                 std::to_string(pt.resolution), "nan", "nan", "0",
                                                 "error"});
            continue;
        }
        const bool ok = reports[i].all_pass();
        merged.add("point-" + pt.name, "plumbing", ok, ok ? 1.0 : 0.0, 1.0,
                   "aggregated gates of the sweep point");
        summary.row(std::vector<std::string>{fmt17(pt.gamma), fmt17(pt.r),
                                             std::to_string(pt.resolution), fmt17(tau_fits[i]),
                                             fmt17(h1s[i]), std::to_string(iters[i]),
                                             ok ? "pass" : "fail"});
    }
    return merged;
}

// kind = refinement: the same problem across a resolution ladder; checks the
// energy/local dichotomy of the H1 norms.
inline DiagnosticsReport run_refinement(const ExperimentConfig& cfg,
                                        const std::filesystem::path& dir) {
    ensure_dir(dir);
    write_json_file(dir / "config.json", cfg.echo());
    const auto& resolutions = cfg.refinement_resolutions;
    if (resolutions.size() < 2)
        throw config_error("refinement.resolutions: need at least two resolutions");
    const bool dist = cfg.system.params.regime == Regime::distributional;
    std::vector<double> h1(resolutions.size()), h1_loc(resolutions.size()),
        linf(resolutions.size());
    std::vector<DiagnosticsReport> reports(resolutions.size());
    parallel_for(int(resolutions.size()), [&](int i) {
        ExperimentConfig pc = cfg;
        pc.system.resolution = resolutions[i];
        pc.kind = dist ? ExperimentKind::distributional : ExperimentKind::coupled;
        char name[64];
        std::snprintf(name, sizeof(name), "res%d", resolutions[i]);
        reports[i] = run_system(pc, dir / name);
        MeshPtr mesh = build_mesh(pc.system.dimension, pc.system.lo, pc.system.hi, resolutions[i]);
        const GridFunction u = read_grid_function_csv(dir / name / "u.csv", mesh);
        const Norms nn = norms(u);
        h1[i] = nn.h1_seminorm;
        linf[i] = nn.linf;
        h1_loc[i] = h1_seminorm_region(u, 0.2);
    });
    CsvWriter table(dir / "refinement.csv", {"resolution", "h", "linf", "h1", "h1_d02"});
    for (std::size_t i = 0; i < resolutions.size(); ++i)
        table.row(std::vector<double>{double(resolutions[i]),
                                      (cfg.system.hi - cfg.system.lo) / (resolutions[i] - 1),
                                      linf[i], h1[i], h1_loc[i]});
    DiagnosticsReport d;
    for (std::size_t i = 0; i < resolutions.size(); ++i)
        d.add("point-res" + std::to_string(resolutions[i]), "plumbing", reports[i].all_pass(),
              reports[i].all_pass() ? 1.0 : 0.0, 1.0);
    const std::size_t K = resolutions.size();
    if (dist) {
        bool growing = true;
        for (std::size_t i = 1; i < K; ++i) growing = growing && h1[i] > h1[i - 1];
        d.add("global-energy-growth", "local-energy", growing, h1[K - 1] - h1[0], 0.0,
              "global H1 must grow under refinement outside the energy range");
        double lo = h1_loc[0], hi = h1_loc[0];
        for (double v : h1_loc) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double var = (hi - lo) / hi;
        d.add("local-refinement-stability", "local-energy", var < 0.05, var, 0.05,
              "relative spread of H1 over {d >= 0.2} across refinements");
    } else {
        const double rel = std::abs(h1[K - 1] - h1[K - 2]) / std::max(h1[K - 1], 1e-300);
        d.add("refinement-stability", "energy-bound", rel < 0.05, rel, 0.05,
              "relative H1 change over the last two refinements");
    }
    write_json_file(dir / "diagnostics.json", diagnostics_json(d));
    return d;
}

// kind = saddle: coupled solve, then the two-sided inequality and the
// unboundedness probe.
inline DiagnosticsReport run_saddle(const ExperimentConfig& cfg,
                                    const std::filesystem::path& dir) {
    MeshPtr mesh = cfg.system.make_mesh();
    detail::write_common_artifacts(dir, cfg, *mesh);
    SolutionPair pair = solve_system(cfg.system);
    const CoefficientField A = coefficient_preset(pair.mesh, cfg.system.coeff_a);
    const CoefficientField M = coefficient_preset(pair.mesh, cfg.system.coeff_m);
    const DiscreteOperator opA = assemble(pair.mesh, A);
    const DiscreteOperator opM = assemble(pair.mesh, M);
    const SaddleReport rep =
        saddle_test(pair, opA, opM, cfg.saddle_directions, cfg.system.seed + 17);
    const UnboundednessProbe probe = unboundedness_probe(pair, opA, opM, cfg.saddle_t_max);

    DiagnosticsReport d = pair.diagnostics;
    d.add("saddle-inequality", "saddle-inequality", rep.violations == 0, double(rep.violations),
          0.0, "violations beyond tolerance " + fmt17(rep.tolerance));
    const GridFunction w0 = probe_profile(pair.mesh);
    const double ref_grow = 0.5 * gradient_energy_quadrature(A, w0);
    const double ref_decay = gradient_energy_quadrature(M, w0) / (2.0 * cfg.system.params.r);
    const double grow_err = std::abs(probe.growth_coeff - ref_grow) / ref_grow;
    const double decay_err = std::abs(-probe.decay_coeff - ref_decay) / ref_decay;
    d.add("unbounded-growth", "saddle-inequality", probe.monotone_growth && grow_err <= 0.02,
          grow_err, 0.02, "fitted t^2 coefficient of J(t w0, v) vs direct quadrature");
    d.add("unbounded-decay", "saddle-inequality", probe.monotone_decay && decay_err <= 0.02,
          decay_err, 0.02, "fitted t^2 coefficient of J(u, t w0) vs direct quadrature");

    write_grid_function_csv(dir / "u.csv", pair.u);
    write_grid_function_csv(dir / "v.csv", pair.v);
    write_trace_csv(dir / "trace.csv", pair.continuation);
    CsvWriter samples(dir / "saddle_samples.csv", {"direction_id", "t", "J"});
    auto dump = [&](const char* fam, const std::vector<SaddleSample>& ss) {
        for (const auto& s : ss)
            samples.row(std::vector<std::string>{
                std::string(fam) + (s.direction < 0 ? "det" : std::to_string(s.direction)),
                fmt17(s.t), fmt17(s.J)});
    };
    dump("z", rep.z_samples);
    dump("w", rep.w_samples);
    dump("grow", probe.growth_samples);
    dump("decay", probe.decay_samples);
    json sj;
    sj["J_at_solution"] = rep.J_at_solution;
    sj["max_J_over_z"] = rep.max_J_over_z;
    sj["min_J_over_w"] = rep.min_J_over_w;
    sj["tolerance"] = rep.tolerance;
    sj["violations"] = rep.violations;
    sj["worst_z_direction"] = rep.worst_z_direction;
    sj["worst_w_direction"] = rep.worst_w_direction;
    sj["probe"] = {{"sup_estimate", probe.sup_estimate},
                   {"inf_estimate", probe.inf_estimate},
                   {"growth_coeff", probe.growth_coeff},
                   {"decay_coeff", probe.decay_coeff}};
    write_json_file(dir / "saddle.json", sj);
    write_json_file(dir / "diagnostics.json", diagnostics_json(d));
    return d;
}

// kind = uniqueness: randomized restarts and the collapse gate.
inline DiagnosticsReport run_uniqueness(const ExperimentConfig& cfg,
                                        const std::filesystem::path& dir) {
    MeshPtr mesh = cfg.system.make_mesh();
    detail::write_common_artifacts(dir, cfg, *mesh);
    const UniquenessReport rep = uniqueness_experiment(cfg.system, cfg.uniqueness_trials);
    DiagnosticsReport d;
    if (rep.gated) {
        d.add("uniqueness-collapse", "uniqueness-collapse",
              rep.max_u_distance < rep.gate && rep.max_v_distance < rep.gate,
              std::max(rep.max_u_distance, rep.max_v_distance), rep.gate,
              "max pairwise L2 distance over randomized restarts");
        d.add("convexity-inequality", "uniqueness-collapse", rep.convexity_violation <= 1e-10,
              rep.convexity_violation, 1e-10,
              "nodewise Young-type inequality on trial pairs");
    } else {
        d.add_na("uniqueness-collapse", "uniqueness-collapse",
                 "r < 1: distances recorded, no gate applies; max u distance = " +
                     fmt17(rep.max_u_distance));
    }
    json uj;
    uj["trials"] = rep.trials;
    uj["max_u_distance"] = rep.max_u_distance;
    uj["max_v_distance"] = rep.max_v_distance;
    uj["gated"] = rep.gated;
    uj["gate"] = rep.gate;
    uj["convexity_violation"] = rep.convexity_violation;
    uj["initial_spread"] = rep.initial_spread;
    write_json_file(dir / "uniqueness.json", uj);
    write_json_file(dir / "diagnostics.json", diagnostics_json(d));
    return d;
}

// Execute a parsed experiment; returns the process exit code
// (0 pass, 1 gate failure, 2 usage error).
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& out) {
    const std::filesystem::path dir = cfg.output_dir;
    DiagnosticsReport d;
    try {
        switch (cfg.kind) {
            case ExperimentKind::single: d = run_single(cfg, dir); break;
            case ExperimentKind::coupled:
            case ExperimentKind::distributional: d = run_system(cfg, dir); break;
            case ExperimentKind::sweep: d = run_sweep(cfg, dir); break;
            case ExperimentKind::refinement: d = run_refinement(cfg, dir); break;
            case ExperimentKind::saddle: d = run_saddle(cfg, dir); break;
            case ExperimentKind::uniqueness: d = run_uniqueness(cfg, dir); break;
        }
    } catch (const config_error& e) {
        out << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        out << "run failed: " << e.what() << "\n";
        return 1;
    }
    detail::print_summary(out, std::string(kind_name(cfg.kind)) + " -> " + dir.string(), d);
    return d.all_pass() ? 0 : 1;
}

inline int run_experiment_file(const std::string& config_path, std::ostream& out) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(config_path);
    } catch (const std::exception& e) {
        out << "configuration error: " << e.what() << "\n";
        return 2;
    }
    return run_experiment(cfg, out);
}

// ---------------------------------------------------------------------------
// Plot-ready CSV emission from a completed artifact directory.

inline void emit_plot_data(const std::string& artifact_dir) {
    const std::filesystem::path dir = artifact_dir;
    if (!std::filesystem::exists(dir / "config.json") || !std::filesystem::exists(dir / "u.csv") ||
        !std::filesystem::exists(dir / "trace.csv"))
        throw config_error("incomplete run directory '" + artifact_dir
                           + "': needs config.json, u.csv, trace.csv");
    const json cfg = read_json_file(dir / "config.json");
    MeshPtr mesh = mesh_from_descriptor(cfg.at("mesh_descriptor"));
    const GridFunction u = read_grid_function_csv(dir / "u.csv", mesh);
    ensure_dir(dir / "plot");
    {
        std::vector<std::pair<double, double>> pts;
        for (std::size_t k = 0; k < u.size(); ++k)
            if (!mesh->is_boundary(k) && u[k] > 0.0) pts.push_back({mesh->dist(k), u[k]});
        std::sort(pts.begin(), pts.end());
        CsvWriter w(dir / "plot" / "boundary_layer.csv", {"d", "u", "log_d", "log_u"});
        for (const auto& [dd, uu] : pts)
            w.row(std::vector<double>{dd, uu, std::log(dd), std::log(uu)});
    }
    {
        const CsvTable trace = CsvTable::read(dir / "trace.csv");
        const int nc = trace.col("n"), hc = trace.col("h1");
        CsvWriter w(dir / "plot" / "continuation.csv", {"n", "h1"});
        for (const auto& r : trace.rows)
            w.row(std::vector<std::string>{r[nc], r[hc]});
    }
    if (std::filesystem::exists(dir / "saddle_samples.csv")) {
        const CsvTable s = CsvTable::read(dir / "saddle_samples.csv");
        CsvWriter w(dir / "plot" / "saddle_curves.csv", {"direction_id", "t", "J"});
        for (const auto& r : s.rows) w.row(r);
    }
}

inline void list_presets(std::ostream& out) {
    out << "coefficient presets ([coefficients] a/m):\n";
    for (const auto& p : coefficient_preset_names()) out << "  " << p << "\n";
    out << "frozen potential presets ([single] v):\n";
    for (const auto& p : potential_preset_names()) out << "  " << p << "\n";
    out << "experiment kinds ([experiment] kind):\n";
    for (const char* k :
         {"single", "coupled", "sweep", "refinement", "saddle", "uniqueness", "distributional"})
        out << "  " << k << "\n";
}

} // namespace singmax

#endif
