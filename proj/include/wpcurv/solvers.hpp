#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "wpcurv/fields.hpp"
#include "wpcurv/operators.hpp"
#include "wpcurv/verify.hpp"

namespace wpcurv {

struct SolveConfig {
    double residual_tol = 1e-8;    // sup-norm stopping tolerance
    long max_iters = 1000000;
    double newton_damping = 0.5;   // backtracking shrink factor in (0,1)
    double flow_dt0 = 1e-3;
    double flow_safety = 0.5;      // step shrink factor on residual increase
    std::vector<double> t_steps = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> tau_schedule = {0.1, 0.02, 0.004};
    double linear_tol = 1e-10;     // inner Krylov relative tolerance
    long linear_max_iters = 800;
    double guard_low = -20.0;      // blow-up guards on min/max of u
    double guard_high = 20.0;

    void validate() const;
};

enum class Classification {
    Converged,
    Stalled,
    BlowupLow,    // min u crossed the low guard (inf u -> -infinity proxy)
    BlowupHigh,   // max u crossed the high guard
    LinearFailure,
};

const char* to_string(Classification c);

struct SolveReport {
    bool converged = false;
    long iterations = 0;
    std::vector<double> residual_history;  // sup-norms, one per iteration
    Classification classification = Classification::Stalled;
    std::vector<EstimateReport> bounds;
    double wall_time = 0.0;
    std::string log_jsonl;  // one JSON record per iteration
    /// Residual of the final iterate against the non-smoothed operator,
    /// where a smoothing schedule was used; NaN otherwise.
    double final_exact_residual = std::numeric_limits<double>::quiet_NaN();
};

struct DirichletProblem {
    ScalarField boundary_values;  // box grid; only boundary entries are read
    ScalarField f;
    SymMatrixField S0;
    OperatorSpec spec;
};

/// Pointwise residual op_value(spec, W(u)) - e^{-2u} f.
ScalarField residual(const ScalarField& u, const ScalarField& f,
                     const OperatorSpec& spec, const SymMatrixField& S0);

/// Directional derivative of the residual at u in direction phi
/// (matrix-free; no assembled Jacobian).
ScalarField linearized_apply(const ScalarField& u, const ScalarField& phi,
                             const OperatorSpec& spec, const SymMatrixField& S0,
                             const ScalarField& f);

/// Damped Newton with matrix-free BiCGSTAB inner solves and Jacobi scaling.
std::pair<ScalarField, SolveReport> newton_solve(const ScalarField& u0, const ScalarField& f,
                                                 const OperatorSpec& spec, const SymMatrixField& S0,
                                                 const SolveConfig& cfg);

/// Forced flow u_t = e^{2u} op_value(spec, W(u)) - f with adaptive explicit
/// stepping; stationary points solve the residual equation.
std::pair<ScalarField, SolveReport> flow_solve(const ScalarField& u0, const ScalarField& f,
                                               const OperatorSpec& spec, const SymMatrixField& S0,
                                               const SolveConfig& cfg);

/// Method of continuity for the negative case: marches
/// F(e^{2u} W(u)) + t - (1-t) F(S0) = 0 from the exact t=0 solution u=0 to
/// the t=1 solution of F(e^{2u} W(u)) = -1. Gp operators run through the
/// descending-tau smoothing schedule and a final non-smoothed polish; the
/// C0 sandwich check is attached to the report.
std::pair<ScalarField, SolveReport> continuity_solve_negative(const OperatorSpec& spec,
                                                              const SymMatrixField& S0,
                                                              const SolveConfig& cfg);

/// Dirichlet problem on a box: continuity family t*F + (1-t)*sigma_1 with
/// rhs interpolation against f* = sigma_1(W(u0)), boundary rows pinned.
std::pair<ScalarField, SolveReport> dirichlet_solve(const DirichletProblem& problem,
                                                    const SolveConfig& cfg);

/// Volume-normalized deformation toward min Ric = n-1 for positive
/// backgrounds; reports a t=1 solution or a blow-up classification.
std::pair<ScalarField, SolveReport> positive_case_drive(const OperatorSpec& spec,
                                                        const SymMatrixField& S0,
                                                        const SolveConfig& cfg);

}  // namespace wpcurv
