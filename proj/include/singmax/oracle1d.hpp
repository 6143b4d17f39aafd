#ifndef SINGMAX_ORACLE1D_HPP
#define SINGMAX_ORACLE1D_HPP

#include <filesystem>
#include <fstream>
#include <sstream>

#include "singmax/singular.hpp"

namespace singmax {

// High-accuracy 1D reference problem. Deliberately independent of the main
// solver path: damped Newton with analytic Jacobian on fine nested grids,
// Richardson extrapolated, self-certified by grid halving.
struct OracleProblem {
    std::string coeff_a = "identity";
    std::string coeff_m = "identity";
    RegimeParams params = RegimeParams::classify(0.5, 1.0);
    double n = 1000.0;
    bool coupled = false;
    std::string v_preset = "zero"; // frozen potential, ignored in coupled mode
    double sigma = 20.0;
    double c0 = 10.0;
    int base_cells = 2560; // coarsest of the three nested grids
    double lo = 0.0, hi = 1.0;
    std::string cache_dir; // empty disables caching

    std::string canonical() const {
        std::ostringstream os;
        os << "a=" << coeff_a << ";m=" << coeff_m << ";gamma=" << fmt17(params.gamma)
           << ";r=" << fmt17(params.r) << ";regime=" << regime_name(params.regime)
           << ";n=" << fmt17(n) << ";coupled=" << (coupled ? 1 : 0) << ";v=" << v_preset
           << ";sigma=" << fmt17(sigma) << ";c0=" << fmt17(c0) << ";cells=" << base_cells
           << ";lo=" << fmt17(lo) << ";hi=" << fmt17(hi);
        return os.str();
    }

    void validate() const {
        if (base_cells < 1000) throw config_error("oracle: base grid must have >= 1000 cells");
        if (!(n > 0.0)) throw config_error("oracle: n must be > 0");
        if (!(hi > lo)) throw config_error("oracle: degenerate extents");
    }
};

struct OracleSolution {
    std::vector<double> x; // base-grid nodes
    std::vector<double> u;
    std::vector<double> v;
    double accuracy = 0.0; // grid-halving certificate, sup norm

    double value_at(const std::vector<double>& f, double xq) const {
        const double h = x[1] - x[0];
        const double s = (xq - x.front()) / h;
        const std::size_t i = std::min(std::size_t(std::max(s, 0.0)), x.size() - 2);
        const double w = s - double(i);
        if (std::abs(w) < 1e-9) return f[i];
        if (std::abs(w - 1.0) < 1e-9) return f[i + 1];
        return (1.0 - w) * f[i] + w * f[i + 1];
    }
    double u_at(double xq) const { return value_at(u, xq); }
    double v_at(double xq) const { return value_at(v, xq); }
};

namespace oracle_detail {

// Dense 1D grid with flux-form edges for a scalar coefficient profile.
struct Grid1D {
    int cells;
    double lo, h;
    std::vector<double> x;    // nodes, cells+1
    std::vector<double> edge; // harmonic edge coefficients, cells

    Grid1D(int m, double lo_, double hi_, const std::function<double(double)>& a)
        : cells(m), lo(lo_), h((hi_ - lo_) / m), x(m + 1), edge(m) {
        for (int i = 0; i <= m; ++i) x[i] = lo_ + i * h;
        for (int i = 0; i < m; ++i) {
            const double al = a(x[i]), ar = a(x[i + 1]);
            edge[i] = 2.0 * al * ar / (al + ar);
        }
    }

    // y = K u at interior nodes (u given at all nodes, boundary entries used
    // as stored).
    void apply(const std::vector<double>& u, std::vector<double>& y) const {
        y.assign(cells + 1, 0.0);
        const double ih2 = 1.0 / (h * h);
        for (int i = 1; i < cells; ++i)
            y[i] = (edge[i - 1] * (u[i] - u[i - 1]) + edge[i] * (u[i] - u[i + 1])) * ih2;
    }

    // Solve (K + diag(extra)) u = rhs, homogeneous Dirichlet.
    std::vector<double> solve(const std::vector<double>& rhs,
                              const std::vector<double>* extra = nullptr) const {
        const int n = cells - 1;
        const double ih2 = 1.0 / (h * h);
        std::vector<double> diag(n), sub(n), sup(n), r(n);
        for (int i = 0; i < n; ++i) {
            diag[i] = (edge[i] + edge[i + 1]) * ih2 + (extra ? (*extra)[i + 1] : 0.0);
            sub[i] = -edge[i] * ih2;
            sup[i] = -edge[i + 1] * ih2;
            r[i] = rhs[i + 1];
        }
        for (int i = 1; i < n; ++i) {
            const double w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            r[i] -= w * r[i - 1];
        }
        std::vector<double> sol(n);
        sol[n - 1] = r[n - 1] / diag[n - 1];
        for (int i = n - 2; i >= 0; --i) sol[i] = (r[i] - sup[i] * sol[i + 1]) / diag[i];
        std::vector<double> full(cells + 1, 0.0);
        for (int i = 0; i < n; ++i) full[i + 1] = sol[i];
        return full;
    }
};

struct Nonlinearity {
    double gamma, p, shift; // p = gamma + r - 1, shift = 1/n

    double source(double u, double v) const {
        const double up = (u == 0.0 && p == 0.0) ? 1.0 : std::pow(u, p);
        return (1.0 - v * up) * std::pow(shift + u, -gamma);
    }
    double dsource(double u, double v) const {
        const double ue = std::max(u, 1e-14);
        const double up = std::pow(ue, p);
        const double d = std::pow(shift + ue, -gamma);
        return -v * p * std::pow(ue, p - 1.0) * d -
               gamma * (1.0 - v * up) * std::pow(shift + ue, -gamma - 1.0);
    }
};

inline double res_norm(const Grid1D& g, const std::vector<double>& res) {
    double s = 0.0;
    for (int i = 1; i < g.cells; ++i) s += res[i] * res[i];
    return std::sqrt(s * g.h);
}

// Damped Newton for K u = S(u; v) with u clipped to [0, cap]. Returns false
// when the line search dies, so the caller can retry from a safer start.
inline bool newton(const Grid1D& g, const Nonlinearity& nl, const std::vector<double>& v,
                   double cap, std::vector<double>& u, int max_steps = 120) {
    std::vector<double> ku, res(g.cells + 1), extra(g.cells + 1), rhs(g.cells + 1);
    for (int step = 0; step < max_steps; ++step) {
        g.apply(u, ku);
        double scale = 1.0;
        for (int i = 1; i < g.cells; ++i) {
            const double s = nl.source(u[i], v[i]);
            res[i] = ku[i] - s;
            scale = std::max(scale, std::abs(s));
        }
        const double rn = res_norm(g, res);
        if (rn <= 1e-12 * scale) return true;
        for (int i = 1; i < g.cells; ++i) {
            extra[i] = -nl.dsource(u[i], v[i]); // >= 0: keeps the M-matrix
            rhs[i] = -res[i];
        }
        const std::vector<double> delta = g.solve(rhs, &extra);
        double t = 1.0;
        bool accepted = false;
        std::vector<double> trial(g.cells + 1, 0.0);
        for (int ls = 0; ls < 40; ++ls, t /= 2) {
            for (int i = 1; i < g.cells; ++i)
                trial[i] = std::clamp(u[i] + t * delta[i], 0.0, cap);
            g.apply(trial, ku);
            double rn_t = 0.0;
            for (int i = 1; i < g.cells; ++i) {
                const double rr = ku[i] - nl.source(trial[i], v[i]);
                rn_t += rr * rr;
            }
            if (std::sqrt(rn_t * g.h) < rn) {
                u = trial;
                accepted = true;
                break;
            }
        }
        // A dead line search below 1e-8 * scale is the 1/h^2 rounding floor,
        // far under the grid-halving certificate; anything above is a real
        // divergence.
        if (!accepted) return rn <= 1e-8 * scale;
    }
    return false;
}

// Newton with retries: fresh torsion start, then increasingly heavy Picard
// pre-smoothing before giving up.
inline std::vector<double> solve_single_on_grid(const Grid1D& g, const Nonlinearity& nl,
                                                const std::vector<double>& v, double cap,
                                                const std::vector<double>* warm) {
    std::vector<double> one(g.cells + 1, 1.0);
    auto torsion = [&]() {
        std::vector<double> t = g.solve(one);
        for (auto& s : t) s = std::clamp(s, 0.0, cap);
        return t;
    };
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::vector<double> u = (attempt == 0 && warm) ? *warm : torsion();
        for (auto& s : u) s = std::clamp(s, 0.0, cap);
        u.front() = u.back() = 0.0;
        if (attempt > 0) {
            const double theta = attempt == 1 ? 0.2 : 0.05;
            const int sweeps = attempt == 1 ? 60 : 300;
            std::vector<double> rhs(g.cells + 1, 0.0);
            for (int s = 0; s < sweeps; ++s) {
                for (int i = 1; i < g.cells; ++i) rhs[i] = nl.source(u[i], v[i]);
                const std::vector<double> w = g.solve(rhs);
                for (int i = 1; i < g.cells; ++i)
                    u[i] = std::clamp((1.0 - theta) * u[i] + theta * w[i], 0.0, cap);
            }
        }
        if (newton(g, nl, v, cap, u)) return u;
    }
    throw solver_error("oracle: Newton diverged for " + std::to_string(g.cells) + " cells");
}

} // namespace oracle_detail

namespace detail {
inline std::filesystem::path oracle_cache_path(const OracleProblem& p) {
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a(p.canonical())));
    return std::filesystem::path(p.cache_dir) / (std::string("oracle_") + hex + ".csv");
}

inline bool oracle_cache_load(const OracleProblem& p, OracleSolution& out) {
    if (p.cache_dir.empty()) return false;
    std::ifstream in(oracle_cache_path(p));
    if (!in) return false;
    std::string header;
    std::getline(in, header);
    if (header.find(p.canonical()) == std::string::npos) return false;
    std::string line;
    std::getline(in, line); // accuracy
    out.accuracy = std::stod(line.substr(line.find('=') + 1));
    std::getline(in, line); // column names
    out.x.clear();
    out.u.clear();
    out.v.clear();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        out.x.push_back(std::stod(cell));
        std::getline(row, cell, ',');
        out.u.push_back(std::stod(cell));
        std::getline(row, cell, ',');
        out.v.push_back(std::stod(cell));
    }
    return out.x.size() == std::size_t(p.base_cells) + 1;
}

inline void oracle_cache_store(const OracleProblem& p, const OracleSolution& sol) {
    if (p.cache_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(p.cache_dir, ec);
    std::ofstream out(oracle_cache_path(p));
    if (!out) return;
    out << "# " << p.canonical() << "\n";
    out << "# accuracy=" << fmt17(sol.accuracy) << "\n";
    out << "x,u,v\n";
    for (std::size_t i = 0; i < sol.x.size(); ++i)
        out << fmt17(sol.x[i]) << "," << fmt17(sol.u[i]) << "," << fmt17(sol.v[i]) << "\n";
}
} // namespace detail

// Reference solve of the frozen-potential regularized equation on three
// nested grids (m, 2m, 4m cells) with Richardson extrapolation onto the base
// nodes. The accuracy field is max|u_4m - u_2m|/3.
inline OracleSolution oracle_solve_single(const OracleProblem& p) {
    p.validate();
    OracleSolution cached;
    if (detail::oracle_cache_load(p, cached)) return cached;
    using namespace oracle_detail;
    const auto a = coefficient_profile_1d(p.coeff_a, p.lo, p.hi);
    const auto vf = potential_profile_1d(p.v_preset, p.lo, p.hi);
    const Nonlinearity nl{p.params.gamma, p.params.gamma + p.params.r - 1.0, 1.0 / p.n};

    std::vector<std::vector<double>> levels;
    double vmax = 0.0;
    std::vector<double> prev;
    for (int level = 0; level < 3; ++level) {
        const int m = p.base_cells << level;
        Grid1D g(m, p.lo, p.hi, a);
        std::vector<double> v(m + 1);
        for (int i = 0; i <= m; ++i) v[i] = vf(g.x[i]);
        for (double s : v) vmax = std::max(vmax, s);
        const double cap = linfty_cap(vmax, p.params, p.c0);
        std::vector<double> warm;
        if (!prev.empty()) { // inject the previous level onto the finer grid
            warm.assign(m + 1, 0.0);
            for (int i = 0; i <= m; ++i)
                warm[i] = i % 2 == 0 ? prev[i / 2] : 0.5 * (prev[i / 2] + prev[i / 2 + 1]);
        }
        levels.push_back(solve_single_on_grid(g, nl, v, cap, warm.empty() ? nullptr : &warm));
        prev = levels.back();
    }
    OracleSolution sol;
    const int m = p.base_cells;
    sol.x.resize(m + 1);
    sol.u.resize(m + 1);
    sol.v.resize(m + 1);
    double halving = 0.0;
    for (int i = 0; i <= m; ++i) {
        sol.x[i] = p.lo + i * (p.hi - p.lo) / m;
        const double u2 = levels[1][2 * i], u4 = levels[2][4 * i];
        sol.u[i] = u4 + (u4 - u2) / 3.0;
        sol.v[i] = vf(sol.x[i]);
        halving = std::max(halving, std::abs(u4 - u2));
    }
    sol.accuracy = halving / 3.0;
    detail::oracle_cache_store(p, sol);
    return sol;
}

// Reference solve of the coupled system: alternate the Newton single solve
// with the linear potential equation until L2 stagnation, per grid level,
// then extrapolate both profiles.
inline OracleSolution oracle_solve_coupled(const OracleProblem& p) {
    p.validate();
    OracleSolution cached;
    if (detail::oracle_cache_load(p, cached)) return cached;
    using namespace oracle_detail;
    const auto a = coefficient_profile_1d(p.coeff_a, p.lo, p.hi);
    const auto mm = coefficient_profile_1d(p.coeff_m, p.lo, p.hi);
    const Nonlinearity nl{p.params.gamma, p.params.gamma + p.params.r - 1.0, 1.0 / p.n};

    std::vector<std::vector<double>> levels_u, levels_v;
    std::vector<double> prev_u;
    for (int level = 0; level < 3; ++level) {
        const int m = p.base_cells << level;
        Grid1D ga(m, p.lo, p.hi, a);
        Grid1D gm(m, p.lo, p.hi, mm);
        std::vector<double> v(m + 1, 0.0), u, src(m + 1, 0.0);
        std::vector<double> warm;
        if (!prev_u.empty()) {
            warm.assign(m + 1, 0.0);
            for (int i = 0; i <= m; ++i)
                warm[i] = i % 2 == 0 ? prev_u[i / 2] : 0.5 * (prev_u[i / 2] + prev_u[i / 2 + 1]);
        }
        u = solve_single_on_grid(ga, nl, v, linfty_cap(0.0, p.params, p.c0),
                                 warm.empty() ? nullptr : &warm);
        bool stagnated = false;
        for (int it = 0; it < 400; ++it) {
            for (int i = 0; i <= m; ++i)
                src[i] = std::pow(std::clamp(u[i], 0.0, p.sigma), p.params.r);
            const std::vector<double> v_new = gm.solve(src);
            double vmax = 0.0;
            for (double s : v_new) vmax = std::max(vmax, s);
            std::vector<double> u_new =
                solve_single_on_grid(ga, nl, v_new, linfty_cap(vmax, p.params, p.c0), &u);
            double du = 0.0, dv = 0.0;
            for (int i = 0; i <= m; ++i) {
                du += (u_new[i] - u[i]) * (u_new[i] - u[i]);
                dv += (v_new[i] - v[i]) * (v_new[i] - v[i]);
            }
            du = std::sqrt(du * ga.h);
            dv = std::sqrt(dv * ga.h);
            u = std::move(u_new);
            v = v_new;
            if (du < 1e-11 && dv < 1e-11) {
                stagnated = true;
                break;
            }
        }
        if (!stagnated) throw solver_error("oracle: coupled alternation failed to stagnate");
        levels_u.push_back(u);
        levels_v.push_back(v);
        prev_u = u;
    }
    OracleSolution sol;
    const int m = p.base_cells;
    sol.x.resize(m + 1);
    sol.u.resize(m + 1);
    sol.v.resize(m + 1);
    double halving = 0.0;
    for (int i = 0; i <= m; ++i) {
        sol.x[i] = p.lo + i * (p.hi - p.lo) / m;
        const double u2 = levels_u[1][2 * i], u4 = levels_u[2][4 * i];
        const double v2 = levels_v[1][2 * i], v4 = levels_v[2][4 * i];
        sol.u[i] = u4 + (u4 - u2) / 3.0;
        sol.v[i] = v4 + (v4 - v2) / 3.0;
        halving = std::max(halving, std::max(std::abs(u4 - u2), std::abs(v4 - v2)));
    }
    sol.accuracy = halving / 3.0;
    detail::oracle_cache_store(p, sol);
    return sol;
}

} // namespace singmax

#endif
