#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wpcurv/operators.hpp"

using namespace wpcurv;
using namespace wpcurv::testing;

TEST_CASE("eig_sym_ascending invariants on random matrices") {
    std::mt19937_64 rng(42);
    for (int n = 2; n <= 6; ++n) {
        for (int trial = 0; trial < 200; ++trial) {
            SmallSym A = random_sym(rng, n, 2.0);
            EigenDecomp d = eig_sym_ascending(A);
            for (int k = 0; k + 1 < n; ++k)
                CHECK(d.lambdas[static_cast<std::size_t>(k)] <= d.lambdas[static_cast<std::size_t>(k + 1)]);
            // orthogonality
            for (int a = 0; a < n; ++a)
                for (int b = 0; b <= a; ++b) {
                    double dot = 0.0;
                    for (int i = 0; i < n; ++i)
                        dot += d.frame[static_cast<std::size_t>(i + n * a)] *
                               d.frame[static_cast<std::size_t>(i + n * b)];
                    CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-12);
                }
            // reconstruction
            const double scale = std::max(A.max_abs(), 1e-30);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    for (int k = 0; k < n; ++k)
                        acc += d.lambdas[static_cast<std::size_t>(k)] *
                               d.frame[static_cast<std::size_t>(i + n * k)] *
                               d.frame[static_cast<std::size_t>(j + n * k)];
                    CHECK(std::abs(acc - A.at(i, j)) <= 1e-10 * scale);
                }
        }
    }
    SmallSym bad = SmallSym::zero(3);
    bad.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(eig_sym_ascending(bad), std::invalid_argument);
}

TEST_CASE("fast eigenvalue path agrees with the full decomposition") {
    std::mt19937_64 rng(61);
    for (int n = 2; n <= 5; ++n) {
        for (int trial = 0; trial < 300; ++trial) {
            SmallSym A = random_sym(rng, n, trial % 3 == 0 ? 100.0 : 1.0);
            EigenDecomp d = eig_sym_ascending(A);
            std::array<double, kMaxDim> lam{};
            sym_eigenvalues_ascending(A, std::span<double>(lam.data(), static_cast<std::size_t>(n)));
            const double scale = std::max(A.max_abs(), 1.0);
            for (int k = 0; k < n; ++k)
                CHECK(std::abs(lam[static_cast<std::size_t>(k)] - d.lambdas[static_cast<std::size_t>(k)]) <=
                      1e-12 * scale);
        }
    }
}

TEST_CASE("eig sorts diagonal input") {
    SmallSym A = SmallSym::zero(3);
    A.at(0, 0) = 3;
    A.at(1, 1) = 1;
    A.at(2, 2) = 2;
    EigenDecomp d = eig_sym_ascending(A);
    CHECK(d.lambdas[0] == doctest::Approx(1));
    CHECK(d.lambdas[1] == doctest::Approx(2));
    CHECK(d.lambdas[2] == doctest::Approx(3));
}

TEST_CASE("g_p_exact spot values") {
    std::vector<double> lam{1, 2, 3};
    CHECK(g_p_exact(lam, 3, 1) == doctest::Approx(7.0));
    std::vector<double> neg{-1, -1, -1};
    CHECK(g_p_exact(neg, 3, 1) == doctest::Approx(-4.0));
    // round unit sphere: all eigenvalues 1/2 -> p(n-p)
    for (int n = 3; n <= 6; ++n) {
        std::vector<double> half(static_cast<std::size_t>(n), 0.5);
        for (int p = 1; p <= n - 1; ++p)
            CHECK(g_p_exact(half, n, p) == doctest::Approx(static_cast<double>(p * (n - p))));
    }
    CHECK_THROWS_AS(g_p_exact(lam, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(g_p_exact(lam, 3, 3), std::invalid_argument);
}

TEST_CASE("g_p_exact equals the brute-force permutation extremum") {
    std::mt19937_64 rng(7);
    for (int n = 3; n <= 6; ++n) {
        for (int p = 1; p <= n - 1; ++p) {
            for (int trial = 0; trial < 50; ++trial) {
                std::vector<double> lam = random_lambdas(rng, n, 2.0);
                std::vector<double> sorted = lam;
                std::sort(sorted.begin(), sorted.end());
                const double got = g_p_exact(sorted, n, p);
                const double want = gp_bruteforce(lam, p, 2 * p <= n);
                CHECK(got == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("g_p_exact is positively homogeneous of degree one") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> lam = random_lambdas(rng, 4, 1.0);
        std::sort(lam.begin(), lam.end());
        const double base = g_p_exact(lam, 4, 1);
        for (double t : {0.0, 0.5, 2.0, 17.0}) {
            std::vector<double> scaled = lam;
            for (auto& x : scaled) x *= t;
            CHECK(g_p_exact(scaled, 4, 1) == doctest::Approx(t * base).epsilon(1e-12));
        }
    }
}

TEST_CASE("g_p_soft sandwich and equal-eigenvalue closed form") {
    std::mt19937_64 rng(13);
    for (int n = 3; n <= 5; ++n) {
        for (int p = 1; p <= n - 1; ++p) {
            const double bound_coeff = std::abs(static_cast<double>(n - 2 * p)) * std::log(binomial(n, p));
            for (double tau : {0.1, 0.01}) {
                for (int trial = 0; trial < 100; ++trial) {
                    std::vector<double> lam = random_lambdas(rng, n, 1.5);
                    std::sort(lam.begin(), lam.end());
                    const double exact = g_p_exact(lam, n, p);
                    const double soft = g_p_soft(lam, n, p, tau);
                    CHECK(std::abs(soft - exact) <= tau * bound_coeff + 1e-12);
                    if (2 * p < n) CHECK(soft <= exact + 1e-12);   // softmin sits below the min
                    if (2 * p > n) CHECK(soft >= exact - 1e-12);
                }
            }
            // all subset sums tie: the entropy term enters with the sign of
            // the regime (below the min for p < n/2, above the max for p > n/2)
            const double c = 0.37, tau = 0.05;
            std::vector<double> lam(static_cast<std::size_t>(n), c);
            const double expected = 2.0 * p * (n - p) * c -
                                    static_cast<double>(n - 2 * p) * tau * std::log(binomial(n, p));
            CHECK(g_p_soft(lam, n, p, tau) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    std::vector<double> lam{0.0, 1.0, 2.0};
    CHECK_THROWS_AS(g_p_soft(lam, 3, 1, 0.0), std::invalid_argument);
}

TEST_CASE("g_p_soft handles extreme spreads without overflow") {
    std::vector<double> lam{-500.0, 0.0, 800.0};
    for (int p : {1, 2}) {
        const double soft = g_p_soft(lam, 3, p, 0.01);
        const double exact = g_p_exact(lam, 3, p);
        CHECK(std::isfinite(soft));
        CHECK(std::abs(soft - exact) <= 0.01 * std::log(binomial(3, p)) + 1e-9);
    }
}

TEST_CASE("g_p_soft partial derivatives stay within the ellipticity band") {
    std::mt19937_64 rng(17);
    const int n = 4;
    for (int p = 1; p <= 3; ++p) {
        const double lo = std::min(p, n - p), hi = std::max(p, n - p);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> lam = random_lambdas(rng, n, 1.0);
            std::array<double, kMaxDim> w{};
            g_p_soft_weights(lam, n, p, 0.1, std::span<double>(w.data(), 4));
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                const double di = p + (n - 2 * p) * w[static_cast<std::size_t>(i)];
                CHECK(di >= lo - 1e-9);
                CHECK(di <= hi + 1e-9);
                sum += w[static_cast<std::size_t>(i)];
                // finite-difference probe of the soft value
                std::vector<double> lp = lam, lm = lam;
                lp[static_cast<std::size_t>(i)] += 1e-6;
                lm[static_cast<std::size_t>(i)] -= 1e-6;
                const double fd = (g_p_soft(lp, n, p, 0.1) - g_p_soft(lm, n, p, 0.1)) / 2e-6;
                CHECK(fd == doctest::Approx(di).epsilon(1e-5));
            }
            CHECK(sum == doctest::Approx(static_cast<double>(p)).epsilon(1e-12));
        }
    }
}

TEST_CASE("op_value dispatch spot values") {
    SmallSym W = SmallSym::zero(2);
    W.at(0, 0) = 1;
    W.at(1, 1) = -1;
    CHECK(op_value(OperatorSpec::pucci_minus(2, 1, 2), W) == doctest::Approx(-1.0));
    CHECK(op_value(OperatorSpec::pucci_plus(2, 1, 2), W) == doctest::Approx(1.0));

    SmallSym S = SmallSym::zero(3);
    S.at(2, 2) = 1;
    CHECK(op_value(OperatorSpec::min_ricci(3), S) == doctest::Approx(1.0));
    // cross-check through the Ricci map: Ric = diag(1,1,2), smallest eigenvalue 1
    SmallSym ric = ricci_from_schouten(S);
    EigenDecomp d = eig_sym_ascending(ric);
    CHECK(d.lambdas[0] == doctest::Approx(1.0));

    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        SmallSym R = random_sym(rng, 3);
        OperatorSpec blend0 = OperatorSpec::blend(0.0, OperatorSpec::gp_exact(3, 1));
        CHECK(op_value(blend0, R) == doctest::Approx(op_value(OperatorSpec::sigma1(3), R)).epsilon(1e-12));
    }
}

TEST_CASE("pucci duality and ordering") {
    std::mt19937_64 rng(29);
    OperatorSpec mm = OperatorSpec::pucci_minus(3, 0.5, 2.5);
    OperatorSpec mp = OperatorSpec::pucci_plus(3, 0.5, 2.5);
    OperatorSpec meq = OperatorSpec::pucci_minus(3, 1.5, 1.5);
    for (int trial = 0; trial < 100; ++trial) {
        SmallSym W = random_sym(rng, 3);
        SmallSym Wneg = W;
        for (auto& v : Wneg.v) v = -v;
        CHECK(op_value(mm, Wneg) == doctest::Approx(-op_value(mp, W)).epsilon(1e-12));
        CHECK(op_value(mm, W) <= op_value(mp, W) + 1e-12);
        CHECK(op_value(meq, W) == doctest::Approx(1.5 * W.trace()).epsilon(1e-12));
    }
}

TEST_CASE("op_derivative sorted weights and tie averaging") {
    SmallSym W = SmallSym::zero(3);
    W.at(0, 0) = 1;
    W.at(1, 1) = 2;
    W.at(2, 2) = 3;
    SmallSym D = op_derivative(OperatorSpec::gp_exact(3, 1), W);
    CHECK(D.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(D.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(D.at(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(D.at(1, 0) == doctest::Approx(0.0).epsilon(1e-12));

    // fully tied: uniform average of the sorted weights = 2p(n-p)/n on the diagonal
    SmallSym I3 = SmallSym::identity(3);
    SmallSym DI = op_derivative(OperatorSpec::gp_exact(3, 1), I3);
    for (int i = 0; i < 3; ++i) CHECK(DI.at(i, i) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

    SmallSym DS = op_derivative(OperatorSpec::gp_soft(3, 1, 0.1), I3);
    for (int i = 0; i < 3; ++i) CHECK(DS.at(i, i) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("op_derivative matches central finite differences") {
    std::mt19937_64 rng(31);
    const double eps = 1e-5;
    std::vector<OperatorSpec> specs{
        OperatorSpec::gp_soft(3, 1, 0.1),
        OperatorSpec::gp_soft(4, 2, 0.05),
        OperatorSpec::pucci_minus(3, 1, 2),
        OperatorSpec::pucci_plus(3, 0.5, 3),
        OperatorSpec::blend(0.4, OperatorSpec::gp_soft(3, 1, 0.1)),
    };
    for (const auto& spec : specs) {
        int checked = 0;
        while (checked < 30) {
            SmallSym W = random_sym(rng, spec.n, 1.0);
            EigenDecomp d = eig_sym_ascending(W);
            bool ok = true;  // keep eigenvalues away from kinks for the probe
            for (int k = 0; k + 1 < spec.n; ++k)
                if (d.lambdas[static_cast<std::size_t>(k + 1)] - d.lambdas[static_cast<std::size_t>(k)] < 1e-3)
                    ok = false;
            for (int k = 0; k < spec.n; ++k)
                if (std::abs(d.lambdas[static_cast<std::size_t>(k)]) < 1e-3) ok = false;
            if (!ok) continue;
            ++checked;
            SmallSym E = random_sym(rng, spec.n, 1.0);
            SmallSym D = op_derivative(spec, W);
            double pairing = 0.0;
            for (int i = 0; i < spec.n; ++i)
                for (int j = 0; j < spec.n; ++j) pairing += D.at(i, j) * E.at(i, j);
            SmallSym Wp = W, Wm = W;
            for (std::size_t c = 0; c < Wp.v.size(); ++c) {
                Wp.v[c] += eps * E.v[c];
                Wm.v[c] -= eps * E.v[c];
            }
            const double fd = (op_value(spec, Wp) - op_value(spec, Wm)) / (2 * eps);
            CHECK(pairing == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("derivative spectrum lies within the ellipticity constants") {
    std::mt19937_64 rng(37);
    std::vector<OperatorSpec> specs{
        OperatorSpec::gp_exact(4, 1),  OperatorSpec::gp_exact(4, 2),
        OperatorSpec::gp_soft(3, 2, 0.07), OperatorSpec::pucci_minus(3, 0.8, 2.2),
        OperatorSpec::min_ricci(4),    OperatorSpec::blend(0.3, OperatorSpec::gp_exact(3, 1)),
    };
    for (const auto& spec : specs) {
        auto [lo, hi] = ellipticity_constants(spec);
        for (int trial = 0; trial < 50; ++trial) {
            SmallSym W = random_sym(rng, spec.n);
            EigenDecomp d = eig_sym_ascending(op_derivative(spec, W));
            CHECK(d.lambdas[0] >= lo - 1e-9);
            CHECK(d.lambdas[static_cast<std::size_t>(spec.n - 1)] <= hi + 1e-9);
        }
    }
}

TEST_CASE("ellipticity constants match the analytic values") {
    auto c31 = ellipticity_constants(OperatorSpec::gp_exact(3, 1));
    CHECK(c31.first == doctest::Approx(1.0));
    CHECK(c31.second == doctest::Approx(2.0));  // (1, n-1)

    auto s = ellipticity_constants(OperatorSpec::sigma1(5));
    CHECK(s.first == doctest::Approx(1.0));
    CHECK(s.second == doctest::Approx(1.0));

    auto c42 = ellipticity_constants(OperatorSpec::gp_exact(4, 2));
    CHECK(c42.first == doctest::Approx(2.0));
    CHECK(c42.second == doctest::Approx(2.0));
}

TEST_CASE("uniform ellipticity as monotonicity") {
    std::mt19937_64 rng(41);
    for (int n : {3, 4}) {
        for (int p = 1; p <= n - 1; ++p) {
            const double lo = std::min(p, n - p), hi = std::max(p, n - p);
            for (int trial = 0; trial < 100; ++trial) {
                SmallSym W = random_sym(rng, n);
                SmallSym N = random_psd(rng, n, 0.7);
                SmallSym WN = W;
                for (std::size_t c = 0; c < WN.v.size(); ++c) WN.v[c] += N.v[c];
                EigenDecomp dw = eig_sym_ascending(W);
                EigenDecomp dwn = eig_sym_ascending(WN);
                const double diff =
                    g_p_exact(std::span<const double>(dwn.lambdas.data(), static_cast<std::size_t>(n)), n, p) -
                    g_p_exact(std::span<const double>(dw.lambdas.data(), static_cast<std::size_t>(n)), n, p);
                const double trN = N.trace();
                CHECK(diff >= lo * trN - 1e-9 * (1 + std::abs(diff)));
                CHECK(diff <= hi * trN + 1e-9 * (1 + std::abs(diff)));
            }
        }
    }
}

TEST_CASE("midpoint concavity for p <= n/2 and convexity for p >= n/2") {
    std::mt19937_64 rng(43);
    for (int n : {3, 4, 5}) {
        for (int p = 1; p <= n - 1; ++p) {
            for (int trial = 0; trial < 100; ++trial) {
                SmallSym A = random_sym(rng, n), B = random_sym(rng, n);
                SmallSym M = A;
                for (std::size_t c = 0; c < M.v.size(); ++c) M.v[c] = 0.5 * (A.v[c] + B.v[c]);
                const double ga = op_value(OperatorSpec::gp_exact(n, p), A);
                const double gb = op_value(OperatorSpec::gp_exact(n, p), B);
                const double gm = op_value(OperatorSpec::gp_exact(n, p), M);
                if (2 * p <= n) CHECK(gm >= 0.5 * (ga + gb) - 1e-10);
                if (2 * p >= n) CHECK(gm <= 0.5 * (ga + gb) + 1e-10);
                if (2 * p < n) {
                    const double sa = op_value(OperatorSpec::gp_soft(n, p, 0.1), A);
                    const double sb = op_value(OperatorSpec::gp_soft(n, p, 0.1), B);
                    const double sm = op_value(OperatorSpec::gp_soft(n, p, 0.1), M);
                    CHECK(sm >= 0.5 * (sa + sb) - 1e-10);
                }
            }
        }
    }
}

TEST_CASE("ricci/schouten round trip") {
    SmallSym half = SmallSym::identity(3, 0.5);
    SmallSym ric = ricci_from_schouten(half);
    for (int i = 0; i < 3; ++i) CHECK(ric.at(i, i) == doctest::Approx(2.0));  // n-1 on the unit sphere

    SmallSym zero = SmallSym::zero(4);
    SmallSym rz = ricci_from_schouten(zero);
    for (double v : rz.v) CHECK(v == 0.0);

    std::mt19937_64 rng(47);
    for (int n : {3, 4, 5}) {
        for (int trial = 0; trial < 50; ++trial) {
            SmallSym S = random_sym(rng, n);
            SmallSym back = schouten_from_ricci(ricci_from_schouten(S));
            for (int c = 0; c < n * (n + 1) / 2; ++c)
                CHECK(std::abs(back.v[static_cast<std::size_t>(c)] - S.v[static_cast<std::size_t>(c)]) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(ricci_from_schouten(SmallSym::zero(2)), std::invalid_argument);
}

TEST_CASE("weitzenboeck weighted sum is the same function as g_p_exact") {
    std::mt19937_64 rng(53);
    for (int n : {3, 4, 5}) {
        for (int p = 1; p <= n - 1; ++p) {
            for (int trial = 0; trial < 30; ++trial) {
                std::vector<double> lam = random_lambdas(rng, n);
                std::sort(lam.begin(), lam.end());
                double sum = 0.0;
                for (int i = 0; i < n; ++i)
                    sum += ((i < p) ? static_cast<double>(n - p) : static_cast<double>(p)) *
                           lam[static_cast<std::size_t>(i)];
                CHECK(g_p_exact(lam, n, p) == doctest::Approx(sum).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("operator spec validation") {
    CHECK_THROWS_AS(OperatorSpec::gp_exact(3, 0), std::invalid_argument);
    CHECK_THROWS_AS(OperatorSpec::gp_exact(3, 3), std::invalid_argument);
    CHECK_THROWS_AS(OperatorSpec::gp_soft(3, 1, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(OperatorSpec::pucci_minus(3, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(OperatorSpec::pucci_minus(3, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(OperatorSpec::blend(1.5, OperatorSpec::sigma1(3)), std::invalid_argument);
    CHECK_THROWS_AS(
        OperatorSpec::blend(0.5, OperatorSpec::blend(0.5, OperatorSpec::sigma1(3))),
        std::invalid_argument);
}
