#pragma once

#include <cstdint>
#include <vector>

#include "wpcurv/grid.hpp"

namespace wpcurv {

/// One real value per grid point, row-major.
struct ScalarField {
    GridSpec grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const GridSpec& g, double fill = 0.0)
        : grid(g), values(static_cast<std::size_t>(g.num_points()), fill) {}

    double& operator[](std::int64_t i) { return values[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return values[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
};

/// One real n-vector per grid point, components innermost.
struct VectorField {
    GridSpec grid;
    std::vector<double> values;

    VectorField() = default;
    explicit VectorField(const GridSpec& g)
        : grid(g), values(static_cast<std::size_t>(g.num_points() * g.dim), 0.0) {}

    double& at(std::int64_t point, int comp) {
        return values[static_cast<std::size_t>(point * grid.dim + comp)];
    }
    double at(std::int64_t point, int comp) const {
        return values[static_cast<std::size_t>(point * grid.dim + comp)];
    }
};

/// One symmetric n x n matrix per grid point; the lower triangle is stored
/// in row order ((0,0),(1,0),(1,1),(2,0),...), components innermost.
struct SymMatrixField {
    GridSpec grid;
    int ncomp = 0;
    std::vector<double> values;

    SymMatrixField() = default;
    explicit SymMatrixField(const GridSpec& g)
        : grid(g),
          ncomp(g.dim * (g.dim + 1) / 2),
          values(static_cast<std::size_t>(g.num_points() * ncomp), 0.0) {}

    static int tri(int i, int j) {  // requires i >= j
        return i * (i + 1) / 2 + j;
    }

    double& at(std::int64_t point, int i, int j) {
        return values[static_cast<std::size_t>(point * ncomp + (i >= j ? tri(i, j) : tri(j, i)))];
    }
    double at(std::int64_t point, int i, int j) const {
        return values[static_cast<std::size_t>(point * ncomp + (i >= j ? tri(i, j) : tri(j, i)))];
    }
    double* comps(std::int64_t point) { return values.data() + point * ncomp; }
    const double* comps(std::int64_t point) const { return values.data() + point * ncomp; }
};

// ---- discrete differential operators -------------------------------------

/// Second-order first derivatives: central stencils on interior/periodic
/// points, one-sided second-order stencils on box boundaries.
VectorField gradient(const ScalarField& u);
void gradient_into(const ScalarField& u, VectorField& out);

/// Second-order second derivatives; mixed entries via nested first-derivative
/// stencils, stored symmetric by construction.
SymMatrixField hessian(const ScalarField& u);
void hessian_into(const ScalarField& u, SymMatrixField& out);

/// W(u) = hessian(u) + grad u (x) grad u - |grad u|^2/2 * I + S0.
SymMatrixField conformal_schouten(const ScalarField& u, const SymMatrixField& S0);
void conformal_schouten_into(const ScalarField& u, const SymMatrixField& S0,
                             SymMatrixField& out);

/// Schouten matrix field of e^{-2w} * flat, i.e. conformal_schouten(w, 0).
SymMatrixField background_from_factor(const ScalarField& w);

/// vol(e^{-2v} * flat) = integral of e^{-n v}, midpoint rule on cell centers.
/// v is the total conformal factor relative to the flat metric.
double conformal_volume(const ScalarField& v);

// ---- reductions and helpers ----------------------------------------------

double sup_norm(const ScalarField& f);
double min_value(const ScalarField& f);
double max_value(const ScalarField& f);
bool all_finite(const ScalarField& f);
bool all_finite(const SymMatrixField& f);

/// axpy-style update u += alpha * d (grids must match).
void add_scaled(ScalarField& u, double alpha, const ScalarField& d);

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what);

}  // namespace wpcurv
