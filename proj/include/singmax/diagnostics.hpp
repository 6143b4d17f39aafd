#ifndef SINGMAX_DIAGNOSTICS_HPP
#define SINGMAX_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "singmax/common.hpp"

namespace singmax {

enum class GateStatus { pass, fail, not_applicable };

inline const char* gate_status_name(GateStatus s) {
    switch (s) {
        case GateStatus::pass: return "pass";
        case GateStatus::fail: return "fail";
        default: return "not-applicable";
    }
}

// One verifiable conclusion checked on a finished run. `anchor` is a stable
// slug naming the property the gate tests ("plumbing" for infrastructure).
struct Gate {
    std::string name;
    std::string anchor;
    GateStatus status;
    double measured;
    double tolerance;
    std::string detail;
};

struct DiagnosticsReport {
    std::vector<Gate> gates;

    void add(std::string name, std::string anchor, bool pass, double measured, double tolerance,
             std::string detail = {}) {
        gates.push_back({std::move(name), std::move(anchor),
                         pass ? GateStatus::pass : GateStatus::fail, measured, tolerance,
                         std::move(detail)});
    }
    void add_na(std::string name, std::string anchor, std::string detail = {}) {
        gates.push_back({std::move(name), std::move(anchor), GateStatus::not_applicable, 0.0, 0.0,
                         std::move(detail)});
    }

    bool all_pass() const {
        for (const auto& g : gates)
            if (g.status == GateStatus::fail) return false;
        return true;
    }

    const Gate* find(const std::string& name) const {
        for (const auto& g : gates)
            if (g.name == name) return &g;
        return nullptr;
    }
};

} // namespace singmax

#endif
