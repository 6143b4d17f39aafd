#ifndef SINGMAX_REGIME_HPP
#define SINGMAX_REGIME_HPP

#include "singmax/common.hpp"

namespace singmax {

enum class Regime { energy_mild, energy_strong, distributional };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::energy_mild: return "energy-mild";
        case Regime::energy_strong: return "energy-strong";
        default: return "distributional";
    }
}

// The exponent pair (gamma, r) plus its admissibility class:
//   energy-mild    gamma in (0,1],  r > 1-gamma
//   energy-strong  gamma in (1,3),  r > 0
//   distributional gamma >= 1,      r > 0 (automatic for gamma >= 3)
struct RegimeParams {
    double gamma;
    double r;
    Regime regime;

    static RegimeParams classify(double gamma, double r) {
        if (!(gamma > 0.0)) throw config_error("regime: gamma must be > 0, got " + fmt17(gamma));
        if (gamma >= 3.0) return distributional(gamma, r);
        if (!(r > std::max(0.0, 1.0 - gamma)))
            throw config_error("regime: energy solutions require r > max(0, 1-gamma); got r = " +
                               fmt17(r) + " at gamma = " + fmt17(gamma));
        return {gamma, r, gamma <= 1.0 ? Regime::energy_mild : Regime::energy_strong};
    }

    static RegimeParams distributional(double gamma, double r) {
        if (!(gamma >= 1.0))
            throw config_error("regime: distributional scheme requires gamma >= 1, got " +
                               fmt17(gamma));
        if (!(r > 0.0))
            throw config_error("regime: distributional scheme requires r > 0, got " + fmt17(r));
        return {gamma, r, Regime::distributional};
    }

    double tau() const { return 2.0 / (gamma + 1.0); }
    bool energy() const { return regime != Regime::distributional; }
};

// The increasing ladder of regularization levels n plus the inner-iteration
// knobs shared by every regularized solve.
struct RegularizationSchedule {
    std::vector<double> n_values{10.0, 100.0, 1000.0};
    double inner_tol = 1e-10;
    int max_inner = 3000;
    double damping = 0.5;
    double c0 = 10.0; // cap constant in min{|v|^(1/(1-r-gamma)), c0}
    double lin_tol = 1e-12;

    void validate() const {
        if (n_values.size() < 2)
            throw config_error("schedule: need at least 2 regularization levels");
        for (std::size_t i = 0; i < n_values.size(); ++i) {
            if (!(n_values[i] > 0.0)) throw config_error("schedule: n values must be > 0");
            if (i > 0 && !(n_values[i] > n_values[i - 1]))
                throw config_error("schedule: n values must be strictly increasing");
        }
        if (!(inner_tol > 0.0)) throw config_error("schedule: inner_tol must be > 0");
        if (max_inner < 1) throw config_error("schedule: max_inner must be >= 1");
        if (!(damping > 0.0 && damping <= 1.0))
            throw config_error("schedule: damping must be in (0,1]");
        if (!(c0 > 0.0)) throw config_error("schedule: c0 must be > 0");
        if (!(lin_tol > 0.0)) throw config_error("schedule: lin_tol must be > 0");
    }
};

} // namespace singmax

#endif
