#include "wpcurv/solvers.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

namespace wpcurv {

void SolveConfig::validate() const {
    if (!(residual_tol > 0.0)) throw std::invalid_argument("SolveConfig: residual_tol must be positive");
    if (!(linear_tol > 0.0)) throw std::invalid_argument("SolveConfig: linear_tol must be positive");
    if (!(newton_damping > 0.0 && newton_damping < 1.0))
        throw std::invalid_argument("SolveConfig: newton_damping must be in (0,1)");
    if (!(flow_safety > 0.0 && flow_safety < 1.0))
        throw std::invalid_argument("SolveConfig: flow_safety must be in (0,1)");
    if (!(flow_dt0 > 0.0)) throw std::invalid_argument("SolveConfig: flow_dt0 must be positive");
    if (max_iters <= 0 || linear_max_iters <= 0)
        throw std::invalid_argument("SolveConfig: iteration caps must be positive");
    if (!(guard_low < guard_high))
        throw std::invalid_argument("SolveConfig: guard_low must be below guard_high");
    for (double t : t_steps)
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("SolveConfig: t_steps must lie in [0,1]");
    for (double tau : tau_schedule)
        if (!(tau > 0.0)) throw std::invalid_argument("SolveConfig: tau_schedule must be positive");
}

const char* to_string(Classification c) {
    switch (c) {
        case Classification::Converged: return "converged";
        case Classification::Stalled: return "stalled";
        case Classification::BlowupLow: return "blowup_low";
        case Classification::BlowupHigh: return "blowup_high";
        case Classification::LinearFailure: return "linear_failure";
    }
    return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void append_log(std::string& log, long iter, double res, double minu, double maxu, double step) {
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "{\"iter\":%ld,\"residual\":%.12e,\"min_u\":%.9e,\"max_u\":%.9e,"
                  "\"dt_or_step\":%.6e}\n",
                  iter, res, minu, maxu, step);
    log += buf;
}

void gather_point(const SymMatrixField& f, std::int64_t p, SmallSym& out) {
    out.n = f.grid.dim;
    const double* src = f.comps(p);
    for (int c = 0; c < f.ncomp; ++c) out.v[static_cast<std::size_t>(c)] = src[c];
}

/// Residual form: op_value(spec, M(u)) - e^{-2u} f_exp - f_fixed with
/// M(u) = W(u) plain or e^{2u} W(u) when conformal_scaled; optional
/// Dirichlet pinning u = g on the box boundary.
struct ProblemForm {
    OperatorSpec spec;
    const SymMatrixField* S0 = nullptr;
    bool conformal_scaled = false;
    ScalarField f_exp;    // coefficient of e^{-2u}; empty means zero
    ScalarField f_fixed;  // additive fixed part; empty means zero
    const ScalarField* dirichlet_values = nullptr;

    bool has_f_exp() const { return !f_exp.values.empty(); }
    bool has_f_fixed() const { return !f_fixed.values.empty(); }
};

struct Workspace {
    SymMatrixField W;  // conformal Schouten of the current iterate
    VectorField grad_u;
    SymMatrixField Fij;  // operator derivative at M(u)
    ScalarField zeroth;  // zeroth-order coefficient of the linearization
    ScalarField scale;   // multiplier of the F^{ij} dW(phi) part
    SymMatrixField hess_phi;
    VectorField grad_phi;

    explicit Workspace(const GridSpec& g)
        : W(g), grad_u(g), Fij(g), zeroth(g), scale(g), hess_phi(g), grad_phi(g) {}
};

std::vector<std::int64_t> boundary_points(const GridSpec& g) {
    std::vector<std::int64_t> pts;
    if (g.topology == Topology::Periodic) return pts;
    std::vector<int> idx;
    for (std::int64_t p = 0; p < g.num_points(); ++p) {
        g.unflatten(p, idx);
        if (g.on_boundary(idx)) pts.push_back(p);
    }
    return pts;
}

void eval_residual(const ProblemForm& form, const ScalarField& u, Workspace& ws,
                   ScalarField& out, const std::vector<std::int64_t>& bpts) {
    conformal_schouten_into(u, *form.S0, ws.W);
    const std::int64_t npts = u.grid.num_points();
    const int n = u.grid.dim;
    SmallSym M;
    std::array<double, kMaxDim> lam{};
    const std::span<double> lam_span(lam.data(), static_cast<std::size_t>(n));
    const std::span<const double> clam(lam.data(), static_cast<std::size_t>(n));
    for (std::int64_t p = 0; p < npts; ++p) {
        gather_point(ws.W, p, M);
        if (form.conformal_scaled) {
            const double s = std::exp(2.0 * u[p]);
            for (int c = 0; c < ws.W.ncomp; ++c) M.v[static_cast<std::size_t>(c)] *= s;
        }
        double val;
        switch (form.spec.kind) {
            case OperatorKind::Sigma1:
                val = M.trace();
                break;
            case OperatorKind::GpExact:
                sym_eigenvalues_ascending(M, lam_span);
                val = g_p_exact(clam, n, form.spec.p);
                break;
            case OperatorKind::GpSoft:
                sym_eigenvalues_ascending(M, lam_span);
                val = g_p_soft(clam, n, form.spec.p, form.spec.tau);
                break;
            case OperatorKind::MinRicci:
                sym_eigenvalues_ascending(M, lam_span);
                val = g_p_exact(clam, n, 1);
                break;
            case OperatorKind::MaxRicci:
                sym_eigenvalues_ascending(M, lam_span);
                val = g_p_exact(clam, n, n - 1);
                break;
            default:
                val = op_value(form.spec, M);
                break;
        }
        double r = val;
        if (form.has_f_exp()) r -= std::exp(-2.0 * u[p]) * form.f_exp[p];
        if (form.has_f_fixed()) r -= form.f_fixed[p];
        out[p] = r;
    }
    if (form.dirichlet_values) {
        for (std::int64_t p : bpts) out[p] = u[p] - (*form.dirichlet_values)[p];
    }
}

/// Precomputes the linearization state at u: F^{ij}(M(u)), grad u, the
/// zeroth-order coefficient and the dW multiplier.
void build_linearization(const ProblemForm& form, const ScalarField& u, Workspace& ws) {
    conformal_schouten_into(u, *form.S0, ws.W);
    gradient_into(u, ws.grad_u);
    const std::int64_t npts = u.grid.num_points();
    const int n = u.grid.dim;
    SmallSym M, D;
    for (std::int64_t p = 0; p < npts; ++p) {
        gather_point(ws.W, p, M);
        double zero = 0.0;
        double scale = 1.0;
        if (form.conformal_scaled) {
            const double s = std::exp(2.0 * u[p]);
            SmallSym Ms = M;
            for (int c = 0; c < ws.W.ncomp; ++c) Ms.v[static_cast<std::size_t>(c)] *= s;
            op_value_and_derivative(form.spec, Ms, D);
            // d/dphi op(e^{2u} W) = e^{2u} (2 phi <F,W> + <F, dW(phi)>)
            double fw = 0.0;
            for (int i = 0; i < n; ++i) {
                fw += D.at(i, i) * M.at(i, i);
                for (int j = 0; j < i; ++j) fw += 2.0 * D.at(i, j) * M.at(i, j);
            }
            zero += 2.0 * s * fw;
            scale = s;
        } else {
            op_value_and_derivative(form.spec, M, D);
        }
        if (form.has_f_exp()) zero += 2.0 * std::exp(-2.0 * u[p]) * form.f_exp[p];
        double* dst = ws.Fij.comps(p);
        for (int c = 0; c < ws.Fij.ncomp; ++c) dst[c] = D.v[static_cast<std::size_t>(c)];
        ws.zeroth[p] = zero;
        ws.scale[p] = scale;
    }
}

void apply_linearization(const ProblemForm& form, const ScalarField& phi, Workspace& ws,
                         ScalarField& out, const std::vector<std::int64_t>& bpts) {
    hessian_into(phi, ws.hess_phi);
    gradient_into(phi, ws.grad_phi);
    const std::int64_t npts = phi.grid.num_points();
    const int n = phi.grid.dim;
    for (std::int64_t p = 0; p < npts; ++p) {
        const double* F = ws.Fij.comps(p);
        const double* H = ws.hess_phi.comps(p);
        const double* gu = ws.grad_u.values.data() + p * n;
        const double* gp = ws.grad_phi.values.data() + p * n;
        double dot = 0.0;
        for (int a = 0; a < n; ++a) dot += gu[a] * gp[a];
        // <F, dW(phi)>, dW = hess phi + gphi (x) gu + gu (x) gphi - dot * I
        double acc = 0.0;
        double trF = 0.0;
        int c = 0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < i; ++j, ++c)
                acc += 2.0 * F[c] * (H[c] + gp[i] * gu[j] + gu[i] * gp[j]);
            acc += F[c] * (H[c] + 2.0 * gp[i] * gu[i]);
            trF += F[c];
            ++c;
        }
        acc -= trF * dot;
        out[p] = ws.scale[p] * acc + ws.zeroth[p] * phi[p];
    }
    if (form.dirichlet_values) {
        for (std::int64_t p : bpts) out[p] = phi[p];
    }
}

/// Jacobi diagonal estimate: central second-derivative weight at the point
/// plus the zeroth-order term; identity on pinned rows.
void diagonal_estimate(const ProblemForm& form, Workspace& ws, ScalarField& diag,
                       const std::vector<std::int64_t>& bpts) {
    const GridSpec& g = diag.grid;
    const int n = g.dim;
    std::array<double, kMaxDim> wh{};
    for (int a = 0; a < n; ++a) {
        const double h = g.spacing(a);
        wh[static_cast<std::size_t>(a)] = -2.0 / (h * h);
    }
    const std::int64_t npts = g.num_points();
    for (std::int64_t p = 0; p < npts; ++p) {
        const double* F = ws.Fij.comps(p);
        double acc = 0.0;
        for (int a = 0; a < n; ++a)
            acc += F[SymMatrixField::tri(a, a)] * wh[static_cast<std::size_t>(a)];
        double d = ws.scale[p] * acc + ws.zeroth[p];
        if (std::abs(d) < 1e-300) d = 1.0;
        diag[p] = d;
    }
    if (form.dirichlet_values) {
        for (std::int64_t p : bpts) diag[p] = 1.0;
    }
}

double dot(const ScalarField& a, const ScalarField& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

double norm2(const ScalarField& a) { return std::sqrt(dot(a, a)); }

/// Matrix-free BiCGSTAB with right Jacobi scaling. Returns false on
/// stagnation or breakdown.
bool bicgstab(const std::function<void(const ScalarField&, ScalarField&)>& apply,
              const ScalarField& diag, const ScalarField& b, ScalarField& x,
              double rel_tol, long max_iters) {
    const GridSpec& g = b.grid;
    ScalarField r = b, rhat = b, p(g), v(g), s(g), t(g), tmp(g);
    for (auto& xv : x.values) xv = 0.0;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) return true;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    auto precond_apply = [&](const ScalarField& in, ScalarField& out) {
        for (std::size_t i = 0; i < in.values.size(); ++i)
            tmp.values[i] = in.values[i] / diag.values[i];
        apply(tmp, out);
    };
    auto unscale = [&](ScalarField& y) {
        for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] /= diag.values[i];
    };
    for (long it = 0; it < max_iters; ++it) {
        const double rho_new = dot(rhat, r);
        if (!std::isfinite(rho_new) || std::abs(rho_new) < 1e-280) return false;
        if (it == 0) {
            p = r;
        } else {
            const double beta = (rho_new / rho) * (alpha / omega);
            for (std::size_t i = 0; i < p.values.size(); ++i)
                p.values[i] = r.values[i] + beta * (p.values[i] - omega * v.values[i]);
        }
        precond_apply(p, v);
        const double rhat_v = dot(rhat, v);
        if (!std::isfinite(rhat_v) || std::abs(rhat_v) < 1e-280) return false;
        alpha = rho_new / rhat_v;
        for (std::size_t i = 0; i < s.values.size(); ++i)
            s.values[i] = r.values[i] - alpha * v.values[i];
        if (norm2(s) <= rel_tol * bnorm) {
            for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] += alpha * p.values[i];
            unscale(x);
            return true;
        }
        precond_apply(s, t);
        const double tt = dot(t, t);
        if (!std::isfinite(tt) || tt < 1e-280) return false;
        omega = dot(t, s) / tt;
        for (std::size_t i = 0; i < x.values.size(); ++i)
            x.values[i] += alpha * p.values[i] + omega * s.values[i];
        for (std::size_t i = 0; i < r.values.size(); ++i)
            r.values[i] = s.values[i] - omega * t.values[i];
        if (norm2(r) <= rel_tol * bnorm) {
            unscale(x);
            return true;
        }
        if (!std::isfinite(omega) || std::abs(omega) < 1e-280) return false;
        rho = rho_new;
    }
    return false;
}

struct NewtonOptions {
    /// Called with each candidate iterate before its residual is evaluated;
    /// may update the form's fixed rhs (Picard lagging of nonlocal terms).
    std::function<void(const ScalarField&, ProblemForm&)> refresh;
};

/// Damped Newton on a residual form; appends to the report's history/log and
/// returns the stage classification.
Classification newton_stage(ProblemForm& form, ScalarField& u, const SolveConfig& cfg,
                            SolveReport& report, const NewtonOptions& opts = {}) {
    const GridSpec& g = u.grid;
    Workspace ws(g);
    const std::vector<std::int64_t> bpts = boundary_points(g);
    ScalarField r(g), delta(g), rhs(g), diag(g), u_try(g), r_try(g);

    if (opts.refresh) opts.refresh(u, form);
    eval_residual(form, u, ws, r, bpts);
    double rn = sup_norm(r);

    while (true) {
        report.residual_history.push_back(rn);
        append_log(report.log_jsonl, report.iterations, rn, min_value(u), max_value(u), 1.0);
        if (!std::isfinite(rn)) return Classification::Stalled;
        if (rn <= cfg.residual_tol) return Classification::Converged;
        if (min_value(u) < cfg.guard_low) return Classification::BlowupLow;
        if (max_value(u) > cfg.guard_high) return Classification::BlowupHigh;
        if (report.iterations >= cfg.max_iters) return Classification::Stalled;

        build_linearization(form, u, ws);
        diagonal_estimate(form, ws, diag, bpts);
        for (std::size_t i = 0; i < rhs.values.size(); ++i) rhs.values[i] = -r.values[i];
        auto apply = [&](const ScalarField& phi, ScalarField& out) {
            apply_linearization(form, phi, ws, out, bpts);
        };
        if (!bicgstab(apply, diag, rhs, delta, cfg.linear_tol, cfg.linear_max_iters))
            return Classification::LinearFailure;

        // backtracking on the residual sup-norm
        double step = 1.0;
        bool accepted = false;
        while (step >= 1e-10) {
            u_try = u;
            add_scaled(u_try, step, delta);
            if (opts.refresh) opts.refresh(u_try, form);
            eval_residual(form, u_try, ws, r_try, bpts);
            const double rn_try = sup_norm(r_try);
            if (std::isfinite(rn_try) && rn_try < rn * (1.0 - 1e-4 * step)) {
                u = u_try;
                std::swap(r.values, r_try.values);
                rn = rn_try;
                accepted = true;
                break;
            }
            step *= cfg.newton_damping;
        }
        ++report.iterations;
        if (!accepted) return Classification::Stalled;
    }
}

ProblemForm plain_form(const OperatorSpec& spec, const SymMatrixField& S0, const ScalarField& f) {
    ProblemForm form;
    form.spec = spec;
    form.S0 = &S0;
    form.f_exp = f;
    return form;
}

void finish_report(SolveReport& report, Classification cls, Clock::time_point start) {
    report.classification = cls;
    report.converged = (cls == Classification::Converged);
    report.wall_time = seconds_since(start);
}

}  // namespace

ScalarField residual(const ScalarField& u, const ScalarField& f, const OperatorSpec& spec,
                     const SymMatrixField& S0) {
    require_same_grid(u.grid, f.grid, "residual");
    require_same_grid(u.grid, S0.grid, "residual");
    ProblemForm form = plain_form(spec, S0, f);
    Workspace ws(u.grid);
    ScalarField out(u.grid);
    eval_residual(form, u, ws, out, {});
    return out;
}

ScalarField linearized_apply(const ScalarField& u, const ScalarField& phi,
                             const OperatorSpec& spec, const SymMatrixField& S0,
                             const ScalarField& f) {
    require_same_grid(u.grid, phi.grid, "linearized_apply");
    require_same_grid(u.grid, f.grid, "linearized_apply");
    ProblemForm form = plain_form(spec, S0, f);
    Workspace ws(u.grid);
    build_linearization(form, u, ws);
    ScalarField out(u.grid);
    apply_linearization(form, phi, ws, out, {});
    return out;
}

std::pair<ScalarField, SolveReport> newton_solve(const ScalarField& u0, const ScalarField& f,
                                                 const OperatorSpec& spec, const SymMatrixField& S0,
                                                 const SolveConfig& cfg) {
    cfg.validate();
    spec.validate();
    require_same_grid(u0.grid, f.grid, "newton_solve");
    require_same_grid(u0.grid, S0.grid, "newton_solve");
    const auto start = Clock::now();
    ScalarField u = u0;
    SolveReport report;
    ProblemForm form = plain_form(spec, S0, f);
    const Classification cls = newton_stage(form, u, cfg, report);
    finish_report(report, cls, start);
    return {std::move(u), std::move(report)};
}

std::pair<ScalarField, SolveReport> flow_solve(const ScalarField& u0, const ScalarField& f,
                                               const OperatorSpec& spec, const SymMatrixField& S0,
                                               const SolveConfig& cfg) {
    cfg.validate();
    spec.validate();
    require_same_grid(u0.grid, f.grid, "flow_solve");
    require_same_grid(u0.grid, S0.grid, "flow_solve");
    const auto start = Clock::now();
    const GridSpec& g = u0.grid;
    ScalarField u = u0;
    SolveReport report;
    ProblemForm form = plain_form(spec, S0, f);
    Workspace ws(g);
    const std::vector<std::int64_t> bpts = boundary_points(g);
    ScalarField r(g), u_prev(g);

    const double hmin = g.min_spacing();
    const double dt_cap = 0.2 * hmin * hmin / ellipticity_constants(spec).second;
    double dt = std::min(cfg.flow_dt0, dt_cap);

    eval_residual(form, u, ws, r, bpts);
    double rn = sup_norm(r);
    Classification cls = Classification::Stalled;
    const long log_stride = 100;
    const double dt_min = 1e-6 * dt_cap;

    for (long it = 0;; ++it) {
        report.residual_history.push_back(rn);
        if (it % log_stride == 0 || rn <= cfg.residual_tol)
            append_log(report.log_jsonl, it, rn, min_value(u), max_value(u), dt);
        if (!std::isfinite(rn)) { cls = Classification::Stalled; break; }
        if (rn <= cfg.residual_tol) { cls = Classification::Converged; break; }
        if (min_value(u) < cfg.guard_low) { cls = Classification::BlowupLow; break; }
        if (max_value(u) > cfg.guard_high) { cls = Classification::BlowupHigh; break; }
        if (it >= cfg.max_iters) { cls = Classification::Stalled; break; }

        // forced flow step: u += dt * (e^{2u} op(W(u)) - f) = dt * e^{2u} r
        u_prev = u;
        for (std::int64_t pidx = 0; pidx < g.num_points(); ++pidx)
            u[pidx] += dt * std::exp(2.0 * u[pidx]) * r[pidx];

        eval_residual(form, u, ws, r, bpts);
        const double rn_new = sup_norm(r);
        ++report.iterations;
        if (!std::isfinite(rn_new)) {
            // unstable step; retry from the previous state
            u = u_prev;
            eval_residual(form, u, ws, r, bpts);
            rn = sup_norm(r);
            dt *= cfg.flow_safety * cfg.flow_safety;
            if (dt < 1e-300) { cls = Classification::Stalled; break; }
            continue;
        }
        if (rn_new <= rn * (1.0 + 1e-12)) {
            dt = std::min(dt * 1.2, dt_cap);
        } else {
            // keep marching (genuine blow-ups must reach the guards) but
            // shrink the step, floored so divergence cannot stall
            dt = std::max(dt * cfg.flow_safety, dt_min);
        }
        rn = rn_new;
    }
    if (report.residual_history.empty()) report.residual_history.push_back(rn);
    finish_report(report, cls, start);
    return {std::move(u), std::move(report)};
}

std::pair<ScalarField, SolveReport> continuity_solve_negative(const OperatorSpec& spec,
                                                              const SymMatrixField& S0,
                                                              const SolveConfig& cfg) {
    cfg.validate();
    spec.validate();
    const auto start = Clock::now();
    const GridSpec& g = S0.grid;
    const std::int64_t npts = g.num_points();

    {
        SmallSym M;
        for (std::int64_t p = 0; p < npts; ++p) {
            gather_point(S0, p, M);
            if (op_value(spec, M) >= 0.0)
                throw std::invalid_argument(
                    "continuity_solve_negative: op_value(spec, S0) must be negative everywhere");
        }
    }

    const bool gp_kind = (spec.kind == OperatorKind::GpExact || spec.kind == OperatorKind::GpSoft);
    ScalarField u(g);  // t = 0 solution is exactly u = 0
    SolveReport report;

    auto stage_form = [&](const OperatorSpec& stage_spec, double t) {
        ProblemForm form;
        form.spec = stage_spec;
        form.S0 = &S0;
        form.conformal_scaled = true;
        form.f_fixed = ScalarField(g);
        SmallSym M;
        for (std::int64_t p = 0; p < npts; ++p) {
            gather_point(S0, p, M);
            form.f_fixed[p] = (1.0 - t) * op_value(stage_spec, M) - t;
        }
        return form;
    };

    std::vector<OperatorSpec> stages;
    if (gp_kind) {
        for (double tau : cfg.tau_schedule)
            stages.push_back(OperatorSpec::gp_soft(spec.n, spec.p, tau));
        stages.push_back(OperatorSpec::gp_exact(spec.n, spec.p));
    } else {
        stages.push_back(spec);
    }

    Classification cls = Classification::Converged;
    bool first_stage = true;
    for (const auto& stage_spec : stages) {
        if (first_stage) {
            for (double t : cfg.t_steps) {
                ProblemForm form = stage_form(stage_spec, t);
                cls = newton_stage(form, u, cfg, report);
                if (cls != Classification::Converged) {
                    char buf[96];
                    std::snprintf(buf, sizeof(buf), "{\"failed_at_t\":%.6f}\n", t);
                    report.log_jsonl += buf;
                    finish_report(report, cls, start);
                    return {std::move(u), std::move(report)};
                }
            }
            first_stage = false;
        } else {
            ProblemForm form = stage_form(stage_spec, 1.0);
            cls = newton_stage(form, u, cfg, report);
            if (cls != Classification::Converged) {
                finish_report(report, cls, start);
                return {std::move(u), std::move(report)};
            }
        }
    }

    {
        const OperatorSpec exact_spec = gp_kind ? OperatorSpec::gp_exact(spec.n, spec.p) : spec;
        ProblemForm form = stage_form(exact_spec, 1.0);
        Workspace ws(g);
        ScalarField r(g);
        eval_residual(form, u, ws, r, {});
        report.final_exact_residual = sup_norm(r);
        report.bounds.push_back(check_c0_bounds(u, exact_spec, S0));
    }
    finish_report(report, cls, start);
    return {std::move(u), std::move(report)};
}

namespace {

/// Linear Dirichlet-Laplace solve used to extend boundary data into the box.
ScalarField harmonic_extension(const ScalarField& boundary_values, const SolveConfig& cfg) {
    const GridSpec& g = boundary_values.grid;
    const std::vector<std::int64_t> bpts = boundary_points(g);
    ScalarField u(g);
    double mean = 0.0;
    for (std::int64_t p : bpts) mean += boundary_values[p];
    if (!bpts.empty()) mean /= static_cast<double>(bpts.size());
    for (auto& v : u.values) v = mean;
    for (std::int64_t p : bpts) u[p] = boundary_values[p];

    SymMatrixField hess(g);
    ScalarField diag(g), b(g), delta(g);
    const int n = g.dim;
    auto laplace = [&](const ScalarField& phi, ScalarField& out) {
        hessian_into(phi, hess);
        for (std::int64_t p = 0; p < g.num_points(); ++p) {
            double tr = 0.0;
            for (int a = 0; a < n; ++a) tr += hess.at(p, a, a);
            out[p] = tr;
        }
        for (std::int64_t p : bpts) out[p] = phi[p];
    };
    double d0 = 0.0;
    for (int a = 0; a < n; ++a) d0 -= 2.0 / (g.spacing(a) * g.spacing(a));
    for (auto& v : diag.values) v = d0;
    for (std::int64_t p : bpts) diag[p] = 1.0;

    laplace(u, b);
    for (auto& v : b.values) v = -v;
    for (std::int64_t p : bpts) b[p] = 0.0;
    if (!bicgstab(laplace, diag, b, delta, 1e-12, 4 * cfg.linear_max_iters))
        throw std::runtime_error("dirichlet_solve: harmonic extension failed");
    add_scaled(u, 1.0, delta);
    for (std::int64_t p : bpts) u[p] = boundary_values[p];
    return u;
}

}  // namespace

std::pair<ScalarField, SolveReport> dirichlet_solve(const DirichletProblem& problem,
                                                    const SolveConfig& cfg) {
    cfg.validate();
    problem.spec.validate();
    const GridSpec& g = problem.boundary_values.grid;
    if (g.topology != Topology::Box)
        throw std::invalid_argument("dirichlet_solve: requires box topology");
    require_same_grid(g, problem.f.grid, "dirichlet_solve");
    require_same_grid(g, problem.S0.grid, "dirichlet_solve");
    if (!all_finite(problem.boundary_values))
        throw std::invalid_argument("dirichlet_solve: non-finite boundary data");
    const auto start = Clock::now();

    SolveReport report;
    ScalarField u = harmonic_extension(problem.boundary_values, cfg);

    // f* = sigma_1(W(u0)) makes u0 the exact t = 0 solution
    ScalarField fstar(g);
    {
        SymMatrixField W = conformal_schouten(u, problem.S0);
        for (std::int64_t p = 0; p < g.num_points(); ++p) {
            double tr = 0.0;
            for (int a = 0; a < g.dim; ++a) tr += W.at(p, a, a);
            fstar[p] = tr;
        }
    }

    const bool exact_gp = (problem.spec.kind == OperatorKind::GpExact);
    const OperatorSpec march_spec = exact_gp ? problem.spec.smoothed(0.02) : problem.spec;

    auto run_stage = [&](const OperatorSpec& op, double t) {
        ProblemForm form;
        form.spec = (t >= 1.0) ? op : OperatorSpec::blend(t, op);
        form.S0 = &problem.S0;
        form.dirichlet_values = &problem.boundary_values;
        form.f_exp = problem.f;
        for (auto& v : form.f_exp.values) v *= t;
        form.f_fixed = fstar;
        for (auto& v : form.f_fixed.values) v *= (1.0 - t);
        return newton_stage(form, u, cfg, report);
    };

    Classification cls = Classification::Converged;
    for (double t : cfg.t_steps) {
        cls = run_stage(march_spec, t);
        if (cls != Classification::Converged) {
            finish_report(report, cls, start);
            return {std::move(u), std::move(report)};
        }
    }
    if (exact_gp) cls = run_stage(problem.spec, 1.0);

    if (cls == Classification::Converged) {
        ProblemForm form;
        form.spec = problem.spec;
        form.S0 = &problem.S0;
        form.dirichlet_values = &problem.boundary_values;
        form.f_exp = problem.f;
        Workspace ws(g);
        ScalarField r(g);
        eval_residual(form, u, ws, r, boundary_points(g));
        report.final_exact_residual = sup_norm(r);
    }
    finish_report(report, cls, start);
    return {std::move(u), std::move(report)};
}

std::pair<ScalarField, SolveReport> positive_case_drive(const OperatorSpec& spec,
                                                        const SymMatrixField& S0,
                                                        const SolveConfig& cfg) {
    cfg.validate();
    spec.validate();
    const auto start = Clock::now();
    const GridSpec& g = S0.grid;
    const std::int64_t npts = g.num_points();
    const int n = g.dim;

    {
        const OperatorSpec minric = OperatorSpec::min_ricci(n);
        SmallSym M;
        for (std::int64_t p = 0; p < npts; ++p) {
            gather_point(S0, p, M);
            if (op_value(minric, M) <= 0.0)
                throw std::invalid_argument(
                    "positive_case_drive: background must have positive Ricci everywhere");
        }
    }

    const OperatorSpec march_spec =
        (spec.kind == OperatorKind::GpExact) ? spec.smoothed(0.02) : spec;

    ScalarField u(g);  // t = 0 has the exact solution u = 0
    SolveReport report;
    SymMatrixField S_psi(g);
    const double inv_npts = 1.0 / static_cast<double>(npts);

    auto volume_term = [&](const ScalarField& uu) {
        // (volume average of e^{-(n+1)u})^{2/(n+1)}
        double acc = 0.0;
        for (std::int64_t p = 0; p < npts; ++p) acc += std::exp(-(n + 1.0) * uu[p]);
        acc *= inv_npts;
        return std::pow(acc, 2.0 / (n + 1.0));
    };

    Classification cls = Classification::Converged;
    for (double t : cfg.t_steps) {
        const double psi = std::min(1.0, std::max(0.0, 2.0 * t));
        // deformed background psi * S0 + (1-psi)/2 * I
        for (std::int64_t p = 0; p < npts; ++p) {
            const double* src = S0.comps(p);
            double* dst = S_psi.comps(p);
            for (int c = 0; c < S_psi.ncomp; ++c) dst[c] = psi * src[c];
            for (int a = 0; a < n; ++a) dst[SymMatrixField::tri(a, a)] += (1.0 - psi) * 0.5;
        }
        ProblemForm form;
        form.spec = (t >= 1.0 && spec.kind == OperatorKind::GpExact) ? spec : march_spec;
        form.S0 = &S_psi;
        // per-stage target constant so u = 0 solves the t = 0 member of the
        // smoothed family exactly (the lagged volume term is not
        // differentiated, so the t = 0 linearization must never be needed)
        const double kappa = op_value(form.spec, SmallSym::identity(n, 0.5));
        form.f_exp = ScalarField(g, kappa * psi);
        form.f_fixed = ScalarField(g);
        NewtonOptions opts;
        opts.refresh = [&, t, kappa](const ScalarField& uu, ProblemForm& f) {
            const double vt = kappa * (1.0 - t) * volume_term(uu);
            for (auto& v : f.f_fixed.values) v = vt;
        };
        cls = newton_stage(form, u, cfg, report, opts);
        if (cls != Classification::Converged) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "{\"failed_at_t\":%.6f}\n", t);
            report.log_jsonl += buf;
            break;
        }
    }

    if (cls == Classification::Converged) {
        // final equation against the original spec: op(W(u)) = kappa e^{-2u}
        ProblemForm form;
        form.spec = spec;
        form.S0 = &S0;
        form.f_exp = ScalarField(g, op_value(spec, SmallSym::identity(n, 0.5)));
        Workspace ws(g);
        ScalarField r(g);
        eval_residual(form, u, ws, r, {});
        report.final_exact_residual = sup_norm(r);
    }
    finish_report(report, cls, start);
    return {std::move(u), std::move(report)};
}

}  // namespace wpcurv
