#pragma once

#include <array>
#include <memory>
#include <span>
#include <utility>

namespace wpcurv {

inline constexpr int kMaxDim = 8;
inline constexpr int kMaxSymComp = kMaxDim * (kMaxDim + 1) / 2;

/// Small symmetric matrix value type (lower triangle, row order), sized for
/// ambient dimensions up to kMaxDim. Used pointwise by operators and solvers.
struct SmallSym {
    int n = 0;
    std::array<double, kMaxSymComp> v{};

    static int tri(int i, int j) { return i * (i + 1) / 2 + j; }  // i >= j

    double& at(int i, int j) { return v[static_cast<std::size_t>(i >= j ? tri(i, j) : tri(j, i))]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i >= j ? tri(i, j) : tri(j, i))]; }

    static SmallSym zero(int n) { SmallSym s; s.n = n; return s; }
    static SmallSym identity(int n, double scale = 1.0) {
        SmallSym s = zero(n);
        for (int i = 0; i < n; ++i) s.at(i, i) = scale;
        return s;
    }

    double trace() const {
        double t = 0.0;
        for (int i = 0; i < n; ++i) t += v[static_cast<std::size_t>(tri(i, i))];
        return t;
    }

    double max_abs() const {
        double m = 0.0;
        const int ncomp = n * (n + 1) / 2;
        for (int c = 0; c < ncomp; ++c) m = std::max(m, std::abs(v[static_cast<std::size_t>(c)]));
        return m;
    }
};

/// Eigenvalues ascending with an orthonormal frame; frame column k (stored
/// as frame[i + n*k]) is the eigenvector of lambdas[k].
struct EigenDecomp {
    int n = 0;
    std::array<double, kMaxDim> lambdas{};
    std::array<double, kMaxDim * kMaxDim> frame{};
};

enum class OperatorKind {
    GpExact,
    GpSoft,
    PucciMinus,
    PucciPlus,
    Sigma1,
    MinRicci,
    MaxRicci,
    Blend,
};

/// Which curvature operator to apply, with parameters. Blend realizes
/// F_t = t * base + (1-t) * sigma_1 and may not nest.
struct OperatorSpec {
    OperatorKind kind = OperatorKind::Sigma1;
    int n = 0;
    int p = 0;             // Gp kinds
    double tau = 0.0;      // GpSoft smoothing temperature
    double lambda0 = 0.0;  // Pucci kinds
    double Lambda0 = 0.0;
    double blend_t = 0.0;  // Blend
    std::shared_ptr<const OperatorSpec> base;  // Blend

    static OperatorSpec gp_exact(int n, int p);
    static OperatorSpec gp_soft(int n, int p, double tau);
    static OperatorSpec pucci_minus(int n, double lambda0, double Lambda0);
    static OperatorSpec pucci_plus(int n, double lambda0, double Lambda0);
    static OperatorSpec sigma1(int n);
    static OperatorSpec min_ricci(int n);
    static OperatorSpec max_ricci(int n);
    static OperatorSpec blend(double t, const OperatorSpec& base);

    void validate() const;
    /// True when the operator is concave (p <= n/2 for Gp kinds).
    bool concave_regime() const { return 2 * p <= n; }
    /// A differentiable spec usable by Newton solvers: Gp-exact kinds map to
    /// their soft counterpart at the given temperature, everything else is
    /// returned unchanged.
    OperatorSpec smoothed(double tau_value) const;
};

/// Ascending eigendecomposition of a symmetric matrix.
EigenDecomp eig_sym_ascending(const SmallSym& A);

/// Eigenvalues only, ascending; closed-form for n <= 3. Used on value-only
/// hot paths where no frame is needed.
void sym_eigenvalues_ascending(const SmallSym& A, std::span<double> lambdas);

/// G_p of an ascending eigenvalue list:
/// (n-p) * sum of the p smallest + p * sum of the rest. Equals the minimum
/// over permutations of the weighted sum for p <= n/2 and the maximum for
/// p >= n/2.
double g_p_exact(std::span<const double> ascending, int n, int p);

/// Smooth concave/convex approximation of G_p: p*sigma_1 + (n-2p) times the
/// softmin over p-element subsets at temperature tau, evaluated with the
/// elementary-symmetric-polynomial recursion in log space.
double g_p_soft(std::span<const double> lambdas, int n, int p, double tau);

/// Softmin membership weights w_i = P(index i is in the selected subset);
/// each in (0,1), summing to p. dG_soft/dlambda_i = p + (n-2p) * w_i.
void g_p_soft_weights(std::span<const double> lambdas, int n, int p, double tau,
                      std::span<double> w);

double op_value(const OperatorSpec& spec, const SmallSym& W);

/// F^{ij} = dF/dW_ij as a symmetric matrix in the eigenframe of W. Ties in
/// GpExact are resolved by averaging the sorted weights over the tied block.
SmallSym op_derivative(const OperatorSpec& spec, const SmallSym& W);

/// Single-eigendecomposition fused evaluation for solver hot paths.
double op_value_and_derivative(const OperatorSpec& spec, const SmallSym& W,
                               SmallSym& deriv);

/// Analytic per-eigendirection derivative bounds (lambda_0, Lambda_0).
std::pair<double, double> ellipticity_constants(const OperatorSpec& spec);

/// Ric = (n-2) S + tr(S) I (n >= 3).
SmallSym ricci_from_schouten(const SmallSym& S);

/// S = (Ric - tr(Ric)/(2(n-1)) I) / (n-2); inverse of ricci_from_schouten.
SmallSym schouten_from_ricci(const SmallSym& ric);

/// Relative eigenvalue gap below which GpExact derivative treats eigenvalues
/// as tied.
inline constexpr double kEigenTieTol = 1e-9;

}  // namespace wpcurv
