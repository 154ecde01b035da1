#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wpcurv {

enum class Topology { Periodic, Box };

/// Uniform structured grid: per-axis point counts, physical extents and a
/// topology. Periodic axes tile a torus (spacing = extent/shape), box axes
/// include both boundary layers (spacing = extent/(shape-1)).
struct GridSpec {
    int dim = 0;
    std::vector<int> shape;      // points per axis
    std::vector<double> extent;  // physical length per axis
    std::vector<double> origin;  // coordinate of node 0 per axis
    Topology topology = Topology::Periodic;

    std::int64_t num_points() const {
        std::int64_t n = 1;
        for (int s : shape) n *= s;
        return n;
    }

    double spacing(int axis) const {
        if (topology == Topology::Periodic) return extent[axis] / shape[axis];
        return extent[axis] / (shape[axis] - 1);
    }

    double min_spacing() const {
        double h = spacing(0);
        for (int a = 1; a < dim; ++a) h = std::min(h, spacing(a));
        return h;
    }

    double coord(int axis, int index) const {
        return origin[axis] + spacing(axis) * index;
    }

    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= spacing(a);
        return v;
    }

    bool same_layout(const GridSpec& o) const {
        return dim == o.dim && shape == o.shape && topology == o.topology &&
               extent == o.extent;
    }

    /// Row-major flat index (axis 0 slowest).
    std::int64_t flat_index(const std::vector<int>& idx) const {
        std::int64_t f = 0;
        for (int a = 0; a < dim; ++a) f = f * shape[a] + idx[a];
        return f;
    }

    void unflatten(std::int64_t flat, std::vector<int>& idx) const {
        idx.resize(dim);
        for (int a = dim - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(flat % shape[a]);
            flat /= shape[a];
        }
    }

    bool on_boundary(const std::vector<int>& idx) const {
        if (topology == Topology::Periodic) return false;
        for (int a = 0; a < dim; ++a)
            if (idx[a] == 0 || idx[a] == shape[a] - 1) return true;
        return false;
    }
};

/// Builds and validates a grid. Box grids are centered at the origin by
/// default, periodic grids start at 0.
GridSpec make_grid(int dim, std::vector<int> shape, std::vector<double> extent,
                   Topology topology,
                   std::vector<double> origin = {});

}  // namespace wpcurv
