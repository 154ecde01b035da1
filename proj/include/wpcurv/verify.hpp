#pragma once

#include <limits>
#include <string>
#include <vector>

#include "wpcurv/fields.hpp"
#include "wpcurv/operators.hpp"

namespace wpcurv {

/// Outcome of one a-priori-estimate or identity check.
struct EstimateReport {
    std::string name;
    double measured = 0.0;
    double bound_or_reference = 0.0;
    bool pass = false;
    bool applicable = true;  // false when the estimate's hypotheses fail
    std::string context;
};

/// Parameters of the closed-form constant-curvature solution on R^n.
struct ModelSolutionSpec {
    int n = 3;
    int p = 1;
    double c = 0.0;       // target constant; spherical branch for c > 0
    double lambda = 1.0;  // scale
    std::vector<double> center;  // defaults to the origin
};

/// Euclidean ball of grid points.
struct Ball {
    std::vector<double> center;
    double radius = 1.0;
};

/// Samples u(x) = log((lambda^2 + |x-x0|^2) / (2 lambda sqrt((n-p)p/c)))
/// on the grid; returns u = 0 (flat branch) when c <= 0, setting
/// *flat_branch when provided.
ScalarField model_sphere_solution(const ModelSolutionSpec& spec, const GridSpec& grid,
                                  bool* flat_branch = nullptr);

/// Slack coefficient for the C0 sandwich: allowed deviation is
/// 1e-6 + kC0SlackCoeff * h^2.
inline constexpr double kC0SlackCoeff = 2.0;

/// Maximum-principle sandwich for the normalized negative problem
/// F(e^{2u} W(u)) = -1: 1/(-min F(S0)) <= e^{2u} <= 1/(-max F(S0)).
EstimateReport check_c0_bounds(const ScalarField& u, const OperatorSpec& spec,
                               const SymMatrixField& S0);

/// Measured constant of the local gradient estimate:
/// sup_{B_{r/2}} |grad u|^2 / (1 + ||f||_{C1(B_r)} e^{-2 inf_{B_r} u}).
/// Flagged not-applicable unless u solves the equation on the ball.
/// `budget` is the family regression budget; pass when measured <= budget.
EstimateReport gradient_estimate_ratio(const ScalarField& u, const ScalarField& f,
                                       const OperatorSpec& spec, const SymMatrixField& S0,
                                       const Ball& ball,
                                       double budget = std::numeric_limits<double>::infinity());

/// Measured constant of the additive Harnack bound:
/// C = exp(2 log R - min_{B_R} u - max_{B_2R} u).
EstimateReport harnack_defect(const ScalarField& u, double R,
                              const std::vector<double>& center,
                              double budget = std::numeric_limits<double>::infinity());

/// Volume ordering under pointwise-ordered negative smallest Ricci
/// eigenvalues. u1, u2 are factors over the background presented by the
/// matrix field S0; w is the background's flat-chart factor entering the
/// volume measure (zero for synthetic matrix backgrounds).
EstimateReport volume_order_check(const ScalarField& u1, const ScalarField& u2,
                                  const SymMatrixField& S0, const ScalarField& w,
                                  const OperatorSpec& spec_minricci);

/// Defect of the discrete conformal composition identity: the background
/// factor route (with covariant cross terms assembled by the discrete
/// product rule) against the direct total-factor route. Exact in the
/// continuum; the measured defect is pure discretization error.
EstimateReport conformal_invariance_check(const ScalarField& u, const ScalarField& w,
                                          const OperatorSpec& spec);

/// Volume of the round unit n-sphere.
double sphere_volume(int n);

/// Checks conformal_volume(u + w) against vol(S^n) for metrics whose
/// measured smallest Ricci eigenvalue is >= (n-1)(1 - 1e-3) pointwise.
EstimateReport bishop_volume_diagnostic(const ScalarField& u, const ScalarField& w);

/// Intrinsic smallest Ricci eigenvalue field of e^{-2v} * flat:
/// e^{2v} * ((n-2) lambda_min + trace) of W(v).
ScalarField intrinsic_min_ricci(const ScalarField& v);

std::string reports_to_json(const std::vector<EstimateReport>& reports);
std::string reports_to_csv(const std::vector<EstimateReport>& reports);

}  // namespace wpcurv
