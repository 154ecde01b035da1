#include "wpcurv/operators.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace wpcurv {

OperatorSpec OperatorSpec::gp_exact(int n, int p) {
    OperatorSpec s;
    s.kind = OperatorKind::GpExact;
    s.n = n;
    s.p = p;
    s.validate();
    return s;
}

OperatorSpec OperatorSpec::gp_soft(int n, int p, double tau) {
    OperatorSpec s;
    s.kind = OperatorKind::GpSoft;
    s.n = n;
    s.p = p;
    s.tau = tau;
    s.validate();
    return s;
}

OperatorSpec OperatorSpec::pucci_minus(int n, double lambda0, double Lambda0) {
    OperatorSpec s;
    s.kind = OperatorKind::PucciMinus;
    s.n = n;
    s.lambda0 = lambda0;
    s.Lambda0 = Lambda0;
    s.validate();
    return s;
}

OperatorSpec OperatorSpec::pucci_plus(int n, double lambda0, double Lambda0) {
    OperatorSpec s = pucci_minus(n, lambda0, Lambda0);
    s.kind = OperatorKind::PucciPlus;
    return s;
}

OperatorSpec OperatorSpec::sigma1(int n) {
    OperatorSpec s;
    s.kind = OperatorKind::Sigma1;
    s.n = n;
    s.validate();
    return s;
}

OperatorSpec OperatorSpec::min_ricci(int n) {
    OperatorSpec s;
    s.kind = OperatorKind::MinRicci;
    s.n = n;
    s.validate();
    return s;
}

OperatorSpec OperatorSpec::max_ricci(int n) {
    OperatorSpec s;
    s.kind = OperatorKind::MaxRicci;
    s.n = n;
    s.validate();
    return s;
}

OperatorSpec OperatorSpec::blend(double t, const OperatorSpec& base) {
    OperatorSpec s;
    s.kind = OperatorKind::Blend;
    s.n = base.n;
    s.blend_t = t;
    s.base = std::make_shared<OperatorSpec>(base);
    s.validate();
    return s;
}

void OperatorSpec::validate() const {
    if (n < 2 || n > kMaxDim)
        throw std::invalid_argument("OperatorSpec: n out of range");
    switch (kind) {
        case OperatorKind::GpExact:
        case OperatorKind::GpSoft:
            if (p < 1 || p > n - 1)
                throw std::invalid_argument("OperatorSpec: p must be in 1..n-1");
            if (kind == OperatorKind::GpSoft && !(tau > 0.0))
                throw std::invalid_argument("OperatorSpec: tau must be positive");
            break;
        case OperatorKind::PucciMinus:
        case OperatorKind::PucciPlus:
            if (!(lambda0 > 0.0) || !(Lambda0 >= lambda0))
                throw std::invalid_argument("OperatorSpec: need 0 < lambda0 <= Lambda0");
            break;
        case OperatorKind::Sigma1:
        case OperatorKind::MinRicci:
        case OperatorKind::MaxRicci:
            break;
        case OperatorKind::Blend:
            if (!(blend_t >= 0.0 && blend_t <= 1.0))
                throw std::invalid_argument("OperatorSpec: blend_t must be in [0,1]");
            if (!base) throw std::invalid_argument("OperatorSpec: Blend needs a base");
            if (base->kind == OperatorKind::Blend)
                throw std::invalid_argument("OperatorSpec: Blend may not nest");
            if (base->n != n)
                throw std::invalid_argument("OperatorSpec: Blend base dimension mismatch");
            base->validate();
            break;
    }
}

OperatorSpec OperatorSpec::smoothed(double tau_value) const {
    if (kind == OperatorKind::GpExact) return gp_soft(n, p, tau_value);
    if (kind == OperatorKind::Blend && base->kind == OperatorKind::GpExact)
        return blend(blend_t, base->smoothed(tau_value));
    return *this;
}

EigenDecomp eig_sym_ascending(const SmallSym& A) {
    const int n = A.n;
    for (int c = 0; c < n * (n + 1) / 2; ++c)
        if (!std::isfinite(A.v[static_cast<std::size_t>(c)]))
            throw std::invalid_argument("eig_sym_ascending: non-finite input");

    EigenDecomp d;
    d.n = n;
    // fixed-size paths for the common small dimensions; the iterative QR
    // solver keeps frames orthonormal to machine precision near ties, which
    // computeDirect does not
    if (n == 3) {
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = A.at(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
        for (int k = 0; k < 3; ++k) {
            d.lambdas[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
            for (int i = 0; i < 3; ++i)
                d.frame[static_cast<std::size_t>(i + 3 * k)] = es.eigenvectors()(i, k);
        }
        return d;
    }
    if (n == 2) {
        Eigen::Matrix2d m;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) m(i, j) = A.at(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
        for (int k = 0; k < 2; ++k) {
            d.lambdas[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
            for (int i = 0; i < 2; ++i)
                d.frame[static_cast<std::size_t>(i + 2 * k)] = es.eigenvectors()(i, k);
        }
        return d;
    }
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = A.at(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    for (int k = 0; k < n; ++k) {
        d.lambdas[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
        for (int i = 0; i < n; ++i)
            d.frame[static_cast<std::size_t>(i + n * k)] = es.eigenvectors()(i, k);
    }
    return d;
}

void sym_eigenvalues_ascending(const SmallSym& A, std::span<double> lambdas) {
    const int n = A.n;
    if (n == 2) {
        const double a = A.at(0, 0), b = A.at(1, 0), c = A.at(1, 1);
        const double mean = 0.5 * (a + c);
        const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        lambdas[0] = mean - disc;
        lambdas[1] = mean + disc;
        return;
    }
    if (n == 3) {
        const double a00 = A.at(0, 0), a11 = A.at(1, 1), a22 = A.at(2, 2);
        const double a01 = A.at(1, 0), a02 = A.at(2, 0), a12 = A.at(2, 1);
        const double p1 = a01 * a01 + a02 * a02 + a12 * a12;
        if (p1 == 0.0) {
            lambdas[0] = a00;
            lambdas[1] = a11;
            lambdas[2] = a22;
            if (lambdas[0] > lambdas[1]) std::swap(lambdas[0], lambdas[1]);
            if (lambdas[1] > lambdas[2]) std::swap(lambdas[1], lambdas[2]);
            if (lambdas[0] > lambdas[1]) std::swap(lambdas[0], lambdas[1]);
            return;
        }
        const double q = (a00 + a11 + a22) / 3.0;
        const double p2 = (a00 - q) * (a00 - q) + (a11 - q) * (a11 - q) +
                          (a22 - q) * (a22 - q) + 2.0 * p1;
        const double pp = std::sqrt(p2 / 6.0);
        const double b00 = (a00 - q) / pp, b11 = (a11 - q) / pp, b22 = (a22 - q) / pp;
        const double b01 = a01 / pp, b02 = a02 / pp, b12 = a12 / pp;
        double detb = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
                      b02 * (b01 * b12 - b11 * b02);
        double r = detb / 2.0;
        r = std::min(1.0, std::max(-1.0, r));
        const double phi = std::acos(r) / 3.0;
        const double two_pi_3 = 2.0943951023931953;
        const double l3 = q + 2.0 * pp * std::cos(phi);
        const double l1 = q + 2.0 * pp * std::cos(phi + two_pi_3);
        lambdas[0] = l1;
        lambdas[1] = 3.0 * q - l1 - l3;
        lambdas[2] = l3;
        return;
    }
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = A.at(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    for (int k = 0; k < n; ++k) lambdas[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
}

double g_p_exact(std::span<const double> ascending, int n, int p) {
    if (p < 1 || p > n - 1) throw std::invalid_argument("g_p_exact: p out of range");
    double low = 0.0, high = 0.0;
    for (int i = 0; i < p; ++i) low += ascending[static_cast<std::size_t>(i)];
    for (int i = p; i < n; ++i) high += ascending[static_cast<std::size_t>(i)];
    return static_cast<double>(n - p) * low + static_cast<double>(p) * high;
}

namespace {

double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log of the elementary symmetric polynomial e_p over z_j = exp(logz[j]),
// optionally skipping one index. Mahler's recursion carried in log space.
double log_esf(std::span<const double> logz, int n, int p, int skip = -1) {
    std::array<double, kMaxDim + 1> L;
    L[0] = 0.0;
    for (int k = 1; k <= p; ++k) L[static_cast<std::size_t>(k)] = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        if (j == skip) continue;
        for (int k = p; k >= 1; --k)
            L[static_cast<std::size_t>(k)] = log_add_exp(
                L[static_cast<std::size_t>(k)],
                logz[static_cast<std::size_t>(j)] + L[static_cast<std::size_t>(k - 1)]);
    }
    return L[static_cast<std::size_t>(p)];
}

// softmin over p-element subset sums at temperature tau
double softmin_subsets(std::span<const double> lambdas, int n, int p, double tau) {
    std::array<double, kMaxDim> logz;
    for (int i = 0; i < n; ++i) logz[static_cast<std::size_t>(i)] = -lambdas[static_cast<std::size_t>(i)] / tau;
    return -tau * log_esf(std::span<const double>(logz.data(), static_cast<std::size_t>(n)), n, p);
}

double sum_of(std::span<const double> v, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += v[static_cast<std::size_t>(i)];
    return s;
}

}  // namespace

double g_p_soft(std::span<const double> lambdas, int n, int p, double tau) {
    if (p < 1 || p > n - 1) throw std::invalid_argument("g_p_soft: p out of range");
    if (!(tau > 0.0)) throw std::invalid_argument("g_p_soft: tau must be positive");
    const double s1 = sum_of(lambdas, n);
    return static_cast<double>(p) * s1 +
           static_cast<double>(n - 2 * p) * softmin_subsets(lambdas, n, p, tau);
}

void g_p_soft_weights(std::span<const double> lambdas, int n, int p, double tau,
                      std::span<double> w) {
    std::array<double, kMaxDim> logz;
    for (int i = 0; i < n; ++i) logz[static_cast<std::size_t>(i)] = -lambdas[static_cast<std::size_t>(i)] / tau;
    const std::span<const double> lz(logz.data(), static_cast<std::size_t>(n));
    const double Lp = log_esf(lz, n, p);
    for (int i = 0; i < n; ++i) {
        const double Lm = (p == 1) ? 0.0 : log_esf(lz, n, p - 1, i);
        w[static_cast<std::size_t>(i)] = std::exp(logz[static_cast<std::size_t>(i)] + Lm - Lp);
    }
}

namespace {

// eigenvalue-space derivative weights, ascending order
void derivative_weights(const OperatorSpec& spec, const EigenDecomp& d,
                        std::array<double, kMaxDim>& w) {
    const int n = spec.n;
    switch (spec.kind) {
        case OperatorKind::Sigma1:
            for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 1.0;
            return;
        case OperatorKind::GpSoft:
            g_p_soft_weights(std::span<const double>(d.lambdas.data(), static_cast<std::size_t>(n)),
                             n, spec.p, spec.tau, std::span<double>(w.data(), static_cast<std::size_t>(n)));
            for (int i = 0; i < n; ++i)
                w[static_cast<std::size_t>(i)] =
                    static_cast<double>(spec.p) +
                    static_cast<double>(n - 2 * spec.p) * w[static_cast<std::size_t>(i)];
            return;
        case OperatorKind::PucciMinus:
        case OperatorKind::PucciPlus: {
            double scale = 0.0;
            for (int i = 0; i < n; ++i)
                scale = std::max(scale, std::abs(d.lambdas[static_cast<std::size_t>(i)]));
            const double tol = kEigenTieTol * (1.0 + scale);
            const bool minus = (spec.kind == OperatorKind::PucciMinus);
            const double pos = minus ? spec.lambda0 : spec.Lambda0;
            const double neg = minus ? spec.Lambda0 : spec.lambda0;
            for (int i = 0; i < n; ++i) {
                const double e = d.lambdas[static_cast<std::size_t>(i)];
                if (e > tol) w[static_cast<std::size_t>(i)] = pos;
                else if (e < -tol) w[static_cast<std::size_t>(i)] = neg;
                else w[static_cast<std::size_t>(i)] = 0.5 * (pos + neg);  // kink: symmetric subgradient
            }
            return;
        }
        case OperatorKind::GpExact:
        case OperatorKind::MinRicci:
        case OperatorKind::MaxRicci: {
            int p = spec.p;
            if (spec.kind == OperatorKind::MinRicci) p = 1;
            if (spec.kind == OperatorKind::MaxRicci) p = n - 1;
            double scale = 0.0;
            for (int i = 0; i < n; ++i)
                scale = std::max(scale, std::abs(d.lambdas[static_cast<std::size_t>(i)]));
            const double tol = kEigenTieTol * (1.0 + scale);
            // sorted weights, then average across tied blocks
            for (int i = 0; i < n; ++i)
                w[static_cast<std::size_t>(i)] = (i < p) ? static_cast<double>(n - p) : static_cast<double>(p);
            int b = 0;
            while (b < n) {
                int e = b + 1;
                while (e < n && d.lambdas[static_cast<std::size_t>(e)] -
                                    d.lambdas[static_cast<std::size_t>(e - 1)] <= tol)
                    ++e;
                if (e - b > 1) {
                    double avg = 0.0;
                    for (int i = b; i < e; ++i) avg += w[static_cast<std::size_t>(i)];
                    avg /= static_cast<double>(e - b);
                    for (int i = b; i < e; ++i) w[static_cast<std::size_t>(i)] = avg;
                }
                b = e;
            }
            return;
        }
        case OperatorKind::Blend: {
            derivative_weights(*spec.base, d, w);
            for (int i = 0; i < n; ++i)
                w[static_cast<std::size_t>(i)] =
                    spec.blend_t * w[static_cast<std::size_t>(i)] + (1.0 - spec.blend_t);
            return;
        }
    }
}

double value_from_lambdas(const OperatorSpec& spec, std::span<const double> lam) {
    const int n = spec.n;
    switch (spec.kind) {
        case OperatorKind::Sigma1:
            return sum_of(lam, n);
        case OperatorKind::GpExact:
            return g_p_exact(lam, n, spec.p);
        case OperatorKind::GpSoft:
            return g_p_soft(lam, n, spec.p, spec.tau);
        case OperatorKind::MinRicci:
            return g_p_exact(lam, n, 1);
        case OperatorKind::MaxRicci:
            return g_p_exact(lam, n, n - 1);
        case OperatorKind::PucciMinus:
        case OperatorKind::PucciPlus: {
            const bool minus = (spec.kind == OperatorKind::PucciMinus);
            const double pos = minus ? spec.lambda0 : spec.Lambda0;
            const double neg = minus ? spec.Lambda0 : spec.lambda0;
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e = lam[static_cast<std::size_t>(i)];
                s += (e > 0.0 ? pos : neg) * e;
            }
            return s;
        }
        case OperatorKind::Blend:
            return spec.blend_t * value_from_lambdas(*spec.base, lam) +
                   (1.0 - spec.blend_t) * sum_of(lam, n);
    }
    return 0.0;
}

SmallSym assemble_from_weights(const EigenDecomp& d, const std::array<double, kMaxDim>& w) {
    SmallSym out = SmallSym::zero(d.n);
    const int n = d.n;
    for (int k = 0; k < n; ++k) {
        const double wk = w[static_cast<std::size_t>(k)];
        const double* q = d.frame.data() + n * k;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j)
                out.v[static_cast<std::size_t>(SmallSym::tri(i, j))] += wk * q[i] * q[j];
    }
    return out;
}

void check_dim(const OperatorSpec& spec, const SmallSym& W, const char* what) {
    if (spec.n != W.n) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace

double op_value(const OperatorSpec& spec, const SmallSym& W) {
    check_dim(spec, W, "op_value");
    if (spec.kind == OperatorKind::Sigma1) return W.trace();
    if (spec.kind == OperatorKind::Blend && spec.base->kind == OperatorKind::Sigma1)
        return W.trace();
    std::array<double, kMaxDim> lam;
    sym_eigenvalues_ascending(W, std::span<double>(lam.data(), static_cast<std::size_t>(W.n)));
    return value_from_lambdas(spec, std::span<const double>(lam.data(), static_cast<std::size_t>(W.n)));
}

SmallSym op_derivative(const OperatorSpec& spec, const SmallSym& W) {
    check_dim(spec, W, "op_derivative");
    if (spec.kind == OperatorKind::Sigma1) return SmallSym::identity(spec.n);
    const EigenDecomp d = eig_sym_ascending(W);
    std::array<double, kMaxDim> w;
    derivative_weights(spec, d, w);
    return assemble_from_weights(d, w);
}

double op_value_and_derivative(const OperatorSpec& spec, const SmallSym& W,
                               SmallSym& deriv) {
    check_dim(spec, W, "op_value_and_derivative");
    if (spec.kind == OperatorKind::Sigma1) {
        deriv = SmallSym::identity(spec.n);
        return W.trace();
    }
    const EigenDecomp d = eig_sym_ascending(W);
    std::array<double, kMaxDim> w;
    derivative_weights(spec, d, w);
    deriv = assemble_from_weights(d, w);
    return value_from_lambdas(spec, std::span<const double>(d.lambdas.data(), static_cast<std::size_t>(spec.n)));
}

std::pair<double, double> ellipticity_constants(const OperatorSpec& spec) {
    const int n = spec.n;
    switch (spec.kind) {
        case OperatorKind::GpExact:
        case OperatorKind::GpSoft: {
            const double lo = static_cast<double>(std::min(spec.p, n - spec.p));
            const double hi = static_cast<double>(std::max(spec.p, n - spec.p));
            return {lo, hi};
        }
        case OperatorKind::PucciMinus:
        case OperatorKind::PucciPlus:
            return {spec.lambda0, spec.Lambda0};
        case OperatorKind::Sigma1:
            return {1.0, 1.0};
        case OperatorKind::MinRicci:
        case OperatorKind::MaxRicci:
            return {1.0, static_cast<double>(n - 1)};
        case OperatorKind::Blend: {
            auto [lo, hi] = ellipticity_constants(*spec.base);
            return {spec.blend_t * lo + (1.0 - spec.blend_t),
                    spec.blend_t * hi + (1.0 - spec.blend_t)};
        }
    }
    return {1.0, 1.0};
}

SmallSym ricci_from_schouten(const SmallSym& S) {
    const int n = S.n;
    if (n < 3) throw std::invalid_argument("ricci_from_schouten: requires n >= 3");
    SmallSym out = S;
    const double tr = S.trace();
    const int ncomp = n * (n + 1) / 2;
    for (int c = 0; c < ncomp; ++c) out.v[static_cast<std::size_t>(c)] *= static_cast<double>(n - 2);
    for (int i = 0; i < n; ++i) out.at(i, i) += tr;
    return out;
}

SmallSym schouten_from_ricci(const SmallSym& ric) {
    const int n = ric.n;
    if (n < 3) throw std::invalid_argument("schouten_from_ricci: requires n >= 3");
    SmallSym out = ric;
    const double scalar = ric.trace();
    for (int i = 0; i < n; ++i) out.at(i, i) -= scalar / (2.0 * (n - 1));
    const int ncomp = n * (n + 1) / 2;
    for (int c = 0; c < ncomp; ++c) out.v[static_cast<std::size_t>(c)] /= static_cast<double>(n - 2);
    return out;
}

}  // namespace wpcurv
