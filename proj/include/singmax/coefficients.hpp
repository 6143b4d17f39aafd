#ifndef SINGMAX_COEFFICIENTS_HPP
#define SINGMAX_COEFFICIENTS_HPP

#include <string>

#include "singmax/grid.hpp"

namespace singmax {

struct EllipticityBounds {
    double alpha;
    double beta;
};

// Symmetric matrix-valued coefficient sampled at the nodes. 1D stores one
// entry per node; 2D stores (a11, a22, a12). Immutable once built.
class CoefficientField {
public:
    CoefficientField(MeshPtr mesh, std::vector<double> a11, std::vector<double> a22 = {},
                     std::vector<double> a12 = {})
        : mesh_(std::move(mesh)), a11_(std::move(a11)), a22_(std::move(a22)), a12_(std::move(a12)) {
        const std::size_t n = mesh_->node_count();
        if (a11_.size() != n) throw config_error("coefficient field: a11 size mismatch");
        if (mesh_->dimension() == 2) {
            if (a22_.empty()) a22_ = a11_;
            if (a12_.empty()) a12_.assign(n, 0.0);
            if (a22_.size() != n || a12_.size() != n)
                throw config_error("coefficient field: entry size mismatch");
        }
    }

    const Mesh& mesh() const { return *mesh_; }
    MeshPtr mesh_ptr() const { return mesh_; }
    double a11(std::size_t k) const { return a11_[k]; }
    double a22(std::size_t k) const { return mesh_->dimension() == 1 ? a11_[k] : a22_[k]; }
    double a12(std::size_t k) const { return mesh_->dimension() == 1 ? 0.0 : a12_[k]; }
    bool diagonal() const {
        if (mesh_->dimension() == 1) return true;
        for (double v : a12_)
            if (std::abs(v) > 1e-14) return false;
        return true;
    }

    // Per-node eigenvalue extremes (closed form for d <= 2); fails fast on
    // degenerate ellipticity so bad inputs never reach assembly.
    EllipticityBounds validate_ellipticity() const {
        double alpha = std::numeric_limits<double>::infinity();
        double beta = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < mesh_->node_count(); ++k) {
            double lmin, lmax;
            if (mesh_->dimension() == 1) {
                lmin = lmax = a11_[k];
            } else {
                const double a = a11_[k], d = a22_[k], b = a12_[k];
                const double mid = (a + d) / 2;
                const double rad = std::sqrt((a - d) * (a - d) / 4 + b * b);
                lmin = mid - rad;
                lmax = mid + rad;
            }
            alpha = std::min(alpha, lmin);
            beta = std::max(beta, lmax);
        }
        if (!(alpha > 0.0))
            throw config_error("coefficient field: degenerate ellipticity, alpha = " + fmt17(alpha));
        return {alpha, beta};
    }

private:
    MeshPtr mesh_;
    std::vector<double> a11_, a22_, a12_;
};

inline EllipticityBounds validate_ellipticity(const CoefficientField& f) {
    return f.validate_ellipticity();
}

namespace detail {
inline double parse_preset_number(const std::string& name, const std::string& body) {
    try {
        std::size_t used = 0;
        const double v = std::stod(body, &used);
        if (used != body.size()) throw std::invalid_argument(body);
        return v;
    } catch (const std::exception&) {
        throw config_error("preset: cannot parse '" + name + "'");
    }
}
} // namespace detail

// Scalar x-profile of a 1D coefficient preset on [lo,hi]; the reference
// oracle samples exactly this family.
inline std::function<double(double)> coefficient_profile_1d(const std::string& name, double lo,
                                                            double hi) {
    if (name == "identity") return [](double) { return 1.0; };
    if (name.rfind("diag:", 0) == 0) {
        const std::string body = name.substr(5);
        if (body.find(',') != std::string::npos)
            throw config_error("coefficient preset: diag:a,b needs a 2D mesh");
        const double a = detail::parse_preset_number(name, body);
        return [a](double) { return a; };
    }
    if (name.rfind("sin-perturbed:", 0) == 0) {
        const double amp = detail::parse_preset_number(name, name.substr(14));
        if (!(amp >= 0.0 && amp < 1.0))
            throw config_error("coefficient preset: sin-perturbed amplitude must be in [0,1)");
        const double len = hi - lo;
        return [amp, lo, len](double x) { return 1.0 + amp * std::sin(2 * M_PI * (x - lo) / len); };
    }
    throw config_error("unknown coefficient preset '" + name + "'");
}

// Named presets addressable from config files:
//   identity | diag:a[,b] | sin-perturbed:amplitude
// sin-perturbed is 1 + a*sin(2*pi*x^) (times sin(2*pi*y^) in 2D) over the
// normalized coordinate, so the certified bounds are (1-a, 1+a).
inline CoefficientField coefficient_preset(MeshPtr mesh, const std::string& name) {
    const std::size_t n = mesh->node_count();
    if (mesh->dimension() == 1) {
        auto prof = coefficient_profile_1d(name, mesh->lo(), mesh->hi());
        std::vector<double> a(n);
        for (std::size_t k = 0; k < n; ++k) a[k] = prof(mesh->node(k)[0]);
        return CoefficientField(mesh, std::move(a));
    }
    if (name == "identity")
        return CoefficientField(mesh, std::vector<double>(n, 1.0));
    if (name.rfind("diag:", 0) == 0) {
        const std::string body = name.substr(5);
        const auto comma = body.find(',');
        const double a = detail::parse_preset_number(
            name, comma == std::string::npos ? body : body.substr(0, comma));
        const double b =
            comma == std::string::npos ? a : detail::parse_preset_number(name, body.substr(comma + 1));
        return CoefficientField(mesh, std::vector<double>(n, a), std::vector<double>(n, b));
    }
    if (name.rfind("sin-perturbed:", 0) == 0) {
        const double amp = detail::parse_preset_number(name, name.substr(14));
        if (!(amp >= 0.0 && amp < 1.0))
            throw config_error("coefficient preset: sin-perturbed amplitude must be in [0,1)");
        const double lo = mesh->lo(), len = mesh->hi() - mesh->lo();
        std::vector<double> a(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& p = mesh->node(k);
            a[k] = 1.0 + amp * std::sin(2 * M_PI * (p[0] - lo) / len) *
                             std::sin(2 * M_PI * (p[1] - lo) / len);
        }
        return CoefficientField(mesh, std::move(a));
    }
    throw config_error("unknown coefficient preset '" + name + "'");
}

inline std::vector<std::string> coefficient_preset_names() {
    return {"identity", "diag:a[,b]", "sin-perturbed:amplitude"};
}

// Scalar x-profile of a frozen-potential preset on [lo,hi].
inline std::function<double(double)> potential_profile_1d(const std::string& name, double lo,
                                                          double hi) {
    if (name == "zero") return [](double) { return 0.0; };
    if (name.rfind("const:", 0) == 0) {
        const double c = detail::parse_preset_number(name, name.substr(6));
        if (c < 0.0) throw config_error("potential preset: const must be >= 0");
        return [c](double) { return c; };
    }
    if (name.rfind("sin:", 0) == 0) {
        const double amp = detail::parse_preset_number(name, name.substr(4));
        if (amp < 0.0) throw config_error("potential preset: sin amplitude must be >= 0");
        const double len = hi - lo;
        return [amp, lo, len](double x) { return amp * std::sin(M_PI * (x - lo) / len); };
    }
    throw config_error("unknown potential preset '" + name + "'");
}

// Frozen-potential presets for single-equation runs:
//   zero | const:c | sin:amplitude (amplitude*sin(pi*x^) >= 0)
inline GridFunction potential_preset(MeshPtr mesh, const std::string& name) {
    if (mesh->dimension() == 1) {
        auto prof = potential_profile_1d(name, mesh->lo(), mesh->hi());
        return GridFunction::sample(mesh, [&](double x, double) { return prof(x); });
    }
    if (name == "zero") return GridFunction(mesh, 0.0);
    if (name.rfind("const:", 0) == 0) {
        const double c = detail::parse_preset_number(name, name.substr(6));
        if (c < 0.0) throw config_error("potential preset: const must be >= 0");
        return GridFunction(mesh, c);
    }
    if (name.rfind("sin:", 0) == 0) {
        const double amp = detail::parse_preset_number(name, name.substr(4));
        if (amp < 0.0) throw config_error("potential preset: sin amplitude must be >= 0");
        const double lo = mesh->lo(), len = mesh->hi() - mesh->lo();
        return GridFunction::sample(mesh, [&](double x, double y) {
            return amp * std::sin(M_PI * (x - lo) / len) * std::sin(M_PI * (y - lo) / len);
        });
    }
    throw config_error("unknown potential preset '" + name + "'");
}

inline std::vector<std::string> potential_preset_names() {
    return {"zero", "const:c", "sin:amplitude"};
}

} // namespace singmax

#endif
