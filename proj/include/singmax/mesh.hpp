#ifndef SINGMAX_MESH_HPP
#define SINGMAX_MESH_HPP

#include <algorithm>
#include <array>
#include <memory>

#include "singmax/common.hpp"

namespace singmax {

// Uniform tensor grid on an interval or a square box [lo,hi]^dim with
// homogeneous-Dirichlet boundary flags and the exact distance-to-boundary
// function. Immutable after construction; shared freely between workers.
class Mesh {
public:
    Mesh(int dimension, double lo, double hi, int resolution)
        : dim_(dimension), lo_(lo), hi_(hi), res_(resolution) {
        if (dimension != 1 && dimension != 2)
            throw config_error("mesh: dimension must be 1 or 2, got " + std::to_string(dimension));
        if (resolution < 3)
            throw config_error("mesh: resolution must be >= 3, got " + std::to_string(resolution));
        if (!(hi > lo))
            throw config_error("mesh: degenerate extents [" + fmt17(lo) + ", " + fmt17(hi) + "]");
        h_ = (hi - lo) / (resolution - 1);
        const std::size_t n = node_count();
        coords_.resize(n);
        boundary_.resize(n);
        dist_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto [i, j] = split(k);
            const double x = lo_ + i * h_;
            const double y = dim_ == 2 ? lo_ + j * h_ : 0.0;
            coords_[k] = {x, y};
            double d = std::min(x - lo_, hi_ - x);
            bool bdry = (i == 0 || i == res_ - 1);
            if (dim_ == 2) {
                d = std::min(d, std::min(y - lo_, hi_ - y));
                bdry = bdry || (j == 0 || j == res_ - 1);
            }
            boundary_[k] = bdry ? 1 : 0;
            dist_[k] = bdry ? 0.0 : d;
        }
    }

    int dimension() const { return dim_; }
    int resolution() const { return res_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double spacing() const { return h_; }
    double domain_measure() const { return dim_ == 1 ? hi_ - lo_ : (hi_ - lo_) * (hi_ - lo_); }

    std::size_t node_count() const {
        return dim_ == 1 ? std::size_t(res_) : std::size_t(res_) * res_;
    }
    std::size_t interior_count() const {
        const std::size_t m = res_ - 2;
        return dim_ == 1 ? m : m * m;
    }

    bool compatible(const Mesh& o) const {
        return dim_ == o.dim_ && res_ == o.res_ && lo_ == o.lo_ && hi_ == o.hi_;
    }

    std::size_t index(int i, int j = 0) const { return std::size_t(j) * res_ + i; }
    std::pair<int, int> split(std::size_t k) const {
        return {int(k % res_), int(k / res_)};
    }

    const std::array<double, 2>& node(std::size_t k) const { return coords_[k]; }
    bool is_boundary(std::size_t k) const { return boundary_[k] != 0; }
    double dist(std::size_t k) const { return dist_[k]; }
    const std::vector<double>& dist() const { return dist_; }

    // Trapezoid weight of node k (h/2 at faces, h^dim inside).
    double weight(std::size_t k) const {
        const auto [i, j] = split(k);
        double w = (i == 0 || i == res_ - 1) ? h_ / 2 : h_;
        if (dim_ == 2) w *= (j == 0 || j == res_ - 1) ? h_ / 2 : h_;
        return w;
    }
    double cell_volume() const { return dim_ == 1 ? h_ : h_ * h_; }

private:
    int dim_;
    double lo_, hi_, h_;
    int res_;
    std::vector<std::array<double, 2>> coords_;
    std::vector<std::uint8_t> boundary_;
    std::vector<double> dist_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

inline MeshPtr build_mesh(int dimension, double lo, double hi, int resolution) {
    return std::make_shared<const Mesh>(dimension, lo, hi, resolution);
}

} // namespace singmax

#endif
