#pragma once

// End-to-end weighting fit: assemble the balance system, drop functionally dependent
// rows, solve the dual and estimate every non-negligible effect with its variance.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "basis.hpp"
#include "constraints.hpp"
#include "dataset.hpp"
#include "design.hpp"
#include "dual_solver.hpp"
#include "errors.hpp"
#include "estimation.hpp"

namespace facweights {

struct FitOptions {
    SolverOptions solver;
    /// Keep rows flagged as dependent. The variance matrix is then singular, so variances
    /// are skipped.
    bool keep_dependent_rows = false;
    bool compute_variance = true;
};

struct WeightingFit {
    BalanceSystem system; // rows actually solved
    std::size_t dropped_rows = 0;
    DualSolution solution;
    std::vector<EffectEstimate> estimates;
    std::vector<std::string> warnings;

    bool converged() const { return solution.converged(); }
    const Eigen::VectorXd& weights() const { return solution.weights; }
};

/// Point estimates and, when the variance matrix allows it, sandwich variances.
inline std::vector<EffectEstimate> estimate_effects(const Dataset& data, const BalanceSystem& sys,
                                                    const DualSolution& sol, const Design& design,
                                                    const std::vector<EffectIndex>& effects,
                                                    std::vector<std::string>* warnings = nullptr,
                                                    bool with_variance = true) {
    std::vector<EffectEstimate> out;
    out.reserve(effects.size());
    for (const auto& e : effects) out.push_back(estimate_effect(data, sol.weights, e, design));
    if (!with_variance) return out;
    const VarianceContext ctx(sys, sol);
    if (warnings && ctx.ill_conditioned()) {
        warnings->push_back("variance matrix is ill-conditioned (condition number " +
                            std::to_string(ctx.condition_number()) + ")");
    }
    for (auto& est : out) {
        const Eigen::VectorXd dy = contrast_signs(data, est.effect, design).cwiseProduct(data.Y);
        est.set_variance(ctx.variance(dy, est.tau_hat));
    }
    return out;
}

/// Builds and solves the balance system. Estimates are left empty unless the solve
/// converged and the dataset carries an outcome.
inline WeightingFit fit_weights(const Dataset& data, const BasisSpec& basis, const Design& design,
                                const FitOptions& opts = {}) {
    data.validate();
    WeightingFit fit;
    BalanceSystem full = build_balance_system(data, basis, design);
    if (opts.keep_dependent_rows) {
        fit.system = std::move(full);
    } else {
        fit.dropped_rows = full.dependent_count();
        fit.system = full.independent_rows();
    }
    fit.solution = solve_dual(fit.system, opts.solver);
    if (!fit.converged() || data.Y.size() == 0) return fit;
    const bool with_variance = opts.compute_variance && !opts.keep_dependent_rows;
    fit.estimates = estimate_effects(data, fit.system, fit.solution, design, design.effects(), &fit.warnings,
                                     with_variance);
    return fit;
}

} // namespace facweights
