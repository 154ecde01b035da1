#include "wpcurv/fields.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace wpcurv {

GridSpec make_grid(int dim, std::vector<int> shape, std::vector<double> extent,
                   Topology topology, std::vector<double> origin) {
    if (dim < 2) throw std::invalid_argument("make_grid: dim must be >= 2");
    if (dim > 8) throw std::invalid_argument("make_grid: dim must be <= 8");
    if (static_cast<int>(shape.size()) != dim)
        throw std::invalid_argument("make_grid: shape size must equal dim");
    if (static_cast<int>(extent.size()) != dim)
        throw std::invalid_argument("make_grid: extent size must equal dim");
    for (int s : shape)
        if (s < 4) throw std::invalid_argument("make_grid: shape entries must be >= 4");
    for (double e : extent)
        if (!(e > 0.0)) throw std::invalid_argument("make_grid: extent must be positive");
    GridSpec g;
    g.dim = dim;
    g.shape = std::move(shape);
    g.extent = std::move(extent);
    g.topology = topology;
    if (origin.empty()) {
        g.origin.resize(dim);
        for (int a = 0; a < dim; ++a)
            g.origin[a] = (topology == Topology::Box) ? -0.5 * g.extent[a] : 0.0;
    } else {
        if (static_cast<int>(origin.size()) != dim)
            throw std::invalid_argument("make_grid: origin size must equal dim");
        g.origin = std::move(origin);
    }
    return g;
}

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
    if (!a.same_layout(b))
        throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

namespace {

std::vector<std::int64_t> strides_of(const GridSpec& g) {
    std::vector<std::int64_t> s(g.dim);
    std::int64_t acc = 1;
    for (int a = g.dim - 1; a >= 0; --a) {
        s[a] = acc;
        acc *= g.shape[a];
    }
    return s;
}

// First derivative of one line of n samples with spacing h.
void line_d1(const double* v, double* out, int n, double h, bool periodic) {
    const double i2h = 1.0 / (2.0 * h);
    if (periodic) {
        out[0] = (v[1] - v[n - 1]) * i2h;
        for (int k = 1; k < n - 1; ++k) out[k] = (v[k + 1] - v[k - 1]) * i2h;
        out[n - 1] = (v[0] - v[n - 2]) * i2h;
    } else {
        out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * i2h;
        for (int k = 1; k < n - 1; ++k) out[k] = (v[k + 1] - v[k - 1]) * i2h;
        out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * i2h;
    }
}

// Second derivative of one line.
void line_d2(const double* v, double* out, int n, double h, bool periodic) {
    const double ih2 = 1.0 / (h * h);
    if (periodic) {
        out[0] = (v[1] - 2.0 * v[0] + v[n - 1]) * ih2;
        for (int k = 1; k < n - 1; ++k) out[k] = (v[k + 1] - 2.0 * v[k] + v[k - 1]) * ih2;
        out[n - 1] = (v[0] - 2.0 * v[n - 1] + v[n - 2]) * ih2;
    } else {
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * ih2;
        for (int k = 1; k < n - 1; ++k) out[k] = (v[k + 1] - 2.0 * v[k] + v[k - 1]) * ih2;
        out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) * ih2;
    }
}

// Applies a per-line kernel along `axis`; in/out views are strided over the
// source values with gather/scatter through contiguous scratch buffers.
template <typename LineFn, typename Loader, typename Storer>
void apply_along_axis(const GridSpec& g, int axis, Loader load, Storer store, LineFn fn) {
    const auto strides = strides_of(g);
    const int n = g.shape[axis];
    const std::int64_t axis_stride = strides[axis];
    std::vector<double> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));

    // odometer over all axes except `axis`
    std::vector<int> idx(g.dim, 0);
    const std::int64_t nlines = g.num_points() / n;
    for (std::int64_t line = 0; line < nlines; ++line) {
        std::int64_t base = 0;
        for (int a = 0; a < g.dim; ++a) base += idx[a] * strides[a];
        for (int k = 0; k < n; ++k) in[static_cast<std::size_t>(k)] = load(base + k * axis_stride);
        fn(in.data(), out.data(), n);
        for (int k = 0; k < n; ++k) store(base + k * axis_stride, out[static_cast<std::size_t>(k)]);
        // advance odometer, skipping `axis`
        for (int a = g.dim - 1; a >= 0; --a) {
            if (a == axis) continue;
            if (++idx[a] < g.shape[a]) break;
            idx[a] = 0;
        }
    }
}

void derivative_axis(const ScalarField& u, int axis, double* out, std::int64_t out_stride) {
    const bool periodic = (u.grid.topology == Topology::Periodic);
    const double h = u.grid.spacing(axis);
    apply_along_axis(
        u.grid, axis,
        [&](std::int64_t i) { return u.values[static_cast<std::size_t>(i)]; },
        [&](std::int64_t i, double v) { out[i * out_stride] = v; },
        [&](const double* in, double* o, int n) { line_d1(in, o, n, h, periodic); });
}

}  // namespace

VectorField gradient(const ScalarField& u) {
    VectorField out(u.grid);
    gradient_into(u, out);
    return out;
}

void gradient_into(const ScalarField& u, VectorField& out) {
    require_same_grid(u.grid, out.grid, "gradient");
    const int dim = u.grid.dim;
    for (int a = 0; a < dim; ++a)
        derivative_axis(u, a, out.values.data() + a, dim);
}

SymMatrixField hessian(const ScalarField& u) {
    SymMatrixField out(u.grid);
    hessian_into(u, out);
    return out;
}

void hessian_into(const ScalarField& u, SymMatrixField& out) {
    require_same_grid(u.grid, out.grid, "hessian");
    const GridSpec& g = u.grid;
    const int dim = g.dim;
    const int ncomp = out.ncomp;
    const bool periodic = (g.topology == Topology::Periodic);

    // diagonal entries: direct second differences
    for (int a = 0; a < dim; ++a) {
        const double h = g.spacing(a);
        const int slot = SymMatrixField::tri(a, a);
        apply_along_axis(
            g, a,
            [&](std::int64_t i) { return u.values[static_cast<std::size_t>(i)]; },
            [&](std::int64_t i, double v) { out.values[static_cast<std::size_t>(i * ncomp + slot)] = v; },
            [&](const double* in, double* o, int n) { line_d2(in, o, n, h, periodic); });
    }

    // mixed entries: nested first derivatives, one scratch field per column
    ScalarField scratch(g);
    for (int b = 0; b < dim; ++b) {
        if (b == dim - 1) break;  // no a > b left
        derivative_axis(u, b, scratch.values.data(), 1);
        for (int a = b + 1; a < dim; ++a) {
            const int slot = SymMatrixField::tri(a, b);
            const double h = g.spacing(a);
            apply_along_axis(
                g, a,
                [&](std::int64_t i) { return scratch.values[static_cast<std::size_t>(i)]; },
                [&](std::int64_t i, double v) { out.values[static_cast<std::size_t>(i * ncomp + slot)] = v; },
                [&](const double* in, double* o, int n) { line_d1(in, o, n, h, periodic); });
        }
    }
}

SymMatrixField conformal_schouten(const ScalarField& u, const SymMatrixField& S0) {
    SymMatrixField out(u.grid);
    conformal_schouten_into(u, S0, out);
    return out;
}

void conformal_schouten_into(const ScalarField& u, const SymMatrixField& S0,
                             SymMatrixField& out) {
    require_same_grid(u.grid, S0.grid, "conformal_schouten");
    require_same_grid(u.grid, out.grid, "conformal_schouten");
    hessian_into(u, out);
    VectorField gu(u.grid);
    gradient_into(u, gu);

    const int dim = u.grid.dim;
    const std::int64_t npts = u.grid.num_points();
    const int ncomp = out.ncomp;
    for (std::int64_t p = 0; p < npts; ++p) {
        const double* gp = gu.values.data() + p * dim;
        double norm2 = 0.0;
        for (int a = 0; a < dim; ++a) norm2 += gp[a] * gp[a];
        double* w = out.values.data() + p * ncomp;
        const double* s = S0.values.data() + p * ncomp;
        int c = 0;
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j <= i; ++j, ++c) {
                double v = w[c] + gp[i] * gp[j] + s[c];
                if (i == j) v -= 0.5 * norm2;
                w[c] = v;
            }
        }
    }
}

SymMatrixField background_from_factor(const ScalarField& w) {
    SymMatrixField zero(w.grid);
    return conformal_schouten(w, zero);
}

double conformal_volume(const ScalarField& v) {
    const GridSpec& g = v.grid;
    const int dim = g.dim;
    const double cellvol = g.cell_volume();
    double total = 0.0;
    if (g.topology == Topology::Periodic) {
        // every point owns one cell of the torus
        const std::int64_t npts = g.num_points();
        for (std::int64_t p = 0; p < npts; ++p)
            total += std::exp(-static_cast<double>(dim) * v.values[static_cast<std::size_t>(p)]);
        return total * cellvol;
    }
    // box: interpolate v to cell centers (mean of the 2^dim corners)
    const auto strides = strides_of(g);
    std::vector<std::int64_t> corner(static_cast<std::size_t>(1) << dim, 0);
    for (std::size_t m = 0; m < corner.size(); ++m) {
        std::int64_t off = 0;
        for (int a = 0; a < dim; ++a)
            if (m & (std::size_t(1) << a)) off += strides[a];
        corner[m] = off;
    }
    std::vector<int> idx(dim, 0);
    const double inv_corners = 1.0 / static_cast<double>(corner.size());
    bool done = false;
    while (!done) {
        std::int64_t base = 0;
        for (int a = 0; a < dim; ++a) base += idx[a] * strides[a];
        double mean = 0.0;
        for (std::int64_t off : corner) mean += v.values[static_cast<std::size_t>(base + off)];
        mean *= inv_corners;
        total += std::exp(-static_cast<double>(dim) * mean);
        done = true;
        for (int a = dim - 1; a >= 0; --a) {
            if (++idx[a] < g.shape[a] - 1) { done = false; break; }
            idx[a] = 0;
        }
    }
    return total * cellvol;
}

double sup_norm(const ScalarField& f) {
    double m = 0.0;
    for (double v : f.values) m = std::max(m, std::abs(v));
    return m;
}

double min_value(const ScalarField& f) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : f.values) m = std::min(m, v);
    return m;
}

double max_value(const ScalarField& f) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : f.values) m = std::max(m, v);
    return m;
}

bool all_finite(const ScalarField& f) {
    for (double v : f.values)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const SymMatrixField& f) {
    for (double v : f.values)
        if (!std::isfinite(v)) return false;
    return true;
}

void add_scaled(ScalarField& u, double alpha, const ScalarField& d) {
    require_same_grid(u.grid, d.grid, "add_scaled");
    for (std::size_t i = 0; i < u.values.size(); ++i) u.values[i] += alpha * d.values[i];
}

}  // namespace wpcurv
