#pragma once

// Point estimates, the sandwich variance of the stacked (lambda, tau) Z-estimator,
// the regression-augmented estimator and the comparison baselines.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "basis.hpp"
#include "constraints.hpp"
#include "dataset.hpp"
#include "design.hpp"
#include "dual_solver.hpp"
#include "errors.hpp"

namespace facweights {

inline constexpr double kNormalCritical95 = 1.96;

struct EffectEstimate {
    EffectIndex effect;
    double tau_hat = 0.0;
    /// Asymptotic variance of sqrt(N) (tau_hat - tau); NaN when not computed.
    double sigma2_hat = std::numeric_limits<double>::quiet_NaN();
    double ci_low = std::numeric_limits<double>::quiet_NaN();
    double ci_high = std::numeric_limits<double>::quiet_NaN();
    Eigen::Index n = 0;

    bool has_variance() const { return std::isfinite(sigma2_hat); }

    void set_variance(double s2) {
        sigma2_hat = s2;
        const double half = kNormalCritical95 * std::sqrt(s2 / static_cast<double>(n));
        ci_low = tau_hat - half;
        ci_high = tau_hat + half;
    }
};

/// (A+ - A-) for every unit.
inline Eigen::VectorXd contrast_signs(const Dataset& data, const EffectIndex& effect, const Design& design) {
    const auto g = design.coefficients(effect);
    Eigen::VectorXd out(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const auto q = data.cell(i);
        if (!design.is_observed(q)) throw DomainError("row " + std::to_string(i) + " has an unobserved combination");
        out[i] = g[q];
    }
    return out;
}

inline EffectEstimate estimate_effect(const Dataset& data, const Eigen::VectorXd& weights,
                                      const EffectIndex& effect, const Design& design) {
    design.require_estimable(effect);
    if (weights.size() != data.size()) throw DomainError("weights do not match the dataset");
    if (data.Y.size() != data.size()) throw DataError("dataset has no outcome");
    const Eigen::VectorXd a = contrast_signs(data, effect, design);
    EffectEstimate est;
    est.effect = effect;
    est.n = data.size();
    est.tau_hat = (weights.array() * a.array() * data.Y.array()).sum() / static_cast<double>(data.size());
    return est;
}

/// Parts of the sandwich shared by every effect of one fit: M = (1/N) sum_active -1/2 B_i B_i^T
/// is factored once through its symmetric eigendecomposition.
class VarianceContext {
public:
    VarianceContext(const BalanceSystem& sys, const DualSolution& sol, double eig_tol = 1e-10)
        : sys_(&sys), weights_(sol.weights) {
        const auto n = sys.units();
        const auto p = sys.size();
        if (sol.lambda.size() != p || sol.weights.size() != n) {
            throw DomainError("dual solution does not match the balance system");
        }
        const Eigen::VectorXd u = sys.B.transpose() * sol.lambda;
        active_.resize(n);
        Eigen::Index count = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            active_[i] = u[i] < 0 ? 1.0 : 0.0;
            count += u[i] < 0;
        }
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
        Eigen::MatrixXd cols(p, count);
        for (Eigen::Index i = 0, c = 0; i < n; ++i) {
            if (u[i] < 0) cols.col(c++) = sys.B.col(i);
        }
        m.selfadjointView<Eigen::Lower>().rankUpdate(cols, -0.5 / static_cast<double>(n));
        m = m.selfadjointView<Eigen::Lower>();
        m = 0.5 * (m + m.transpose()).eval();

        eig_.compute(m);
        const Eigen::VectorXd mags = eig_.eigenvalues().cwiseAbs();
        min_abs_eigenvalue_ = mags.minCoeff();
        condition_ = mags.maxCoeff() / min_abs_eigenvalue_;
        if (!(min_abs_eigenvalue_ > eig_tol)) {
            throw VarianceError("variance matrix M is singular (smallest |eigenvalue| " +
                                std::to_string(min_abs_eigenvalue_) +
                                "); inspect the balance rows for rank deficiency");
        }
        // psi'_i = B_i w_i - b_i, one column per unit.
        psi_ = sys.B * weights_.asDiagonal();
        psi_ -= sys.unit_targets;
    }

    double min_abs_eigenvalue() const { return min_abs_eigenvalue_; }
    double condition_number() const { return condition_; }
    bool ill_conditioned() const { return condition_ > 1e10; }

    /// (1/N) sum (eta_i^T L)^2 for an effect whose per-unit contrast outcome is a_i Y_i.
    double variance(const Eigen::VectorXd& contrast_outcome, double tau_hat) const {
        const auto n = sys_->units();
        const double nn = static_cast<double>(n);
        const Eigen::VectorXd r =
            sys_->B * (active_.array() * contrast_outcome.array()).matrix() * (-0.5 / nn);
        const Eigen::VectorXd v = solve(r);
        const Eigen::VectorXd score = psi_.transpose() * v;
        const Eigen::ArrayXd resid =
            score.array() - (weights_.array() * contrast_outcome.array() - tau_hat);
        return resid.square().sum() / nn;
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& r) const {
        const Eigen::VectorXd proj = eig_.eigenvectors().transpose() * r;
        return eig_.eigenvectors() * proj.cwiseQuotient(eig_.eigenvalues());
    }

private:
    const BalanceSystem* sys_;
    Eigen::VectorXd weights_;
    Eigen::VectorXd active_;
    Eigen::MatrixXd psi_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
    double min_abs_eigenvalue_ = 0.0;
    double condition_ = 0.0;
};

inline double variance_estimate(const Dataset& data, const DualSolution& sol, const BalanceSystem& sys,
                                const EffectIndex& effect, const Design& design) {
    const auto est = estimate_effect(data, sol.weights, effect, design);
    const VarianceContext ctx(sys, sol);
    const Eigen::VectorXd dy = contrast_signs(data, effect, design).cwiseProduct(data.Y);
    return ctx.variance(dy, est.tau_hat);
}

/// Values of every balanced function q_t(X_i, z) for the units' own combinations.
inline Eigen::MatrixXd term_values(const Eigen::MatrixXd& basis_values, const std::vector<BalanceTerm>& terms,
                                   const std::vector<std::size_t>& cells, int factors) {
    Eigen::MatrixXd q(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const auto mask = terms[t].interaction.mask(factors);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                interaction_sign(mask, cells[i]) *
                basis_values(static_cast<Eigen::Index>(terms[t].basis), static_cast<Eigen::Index>(i));
        }
    }
    return q;
}

/// OLS coefficients of Y on the balanced functions q(X, Z).
inline Eigen::VectorXd outcome_regression(const Dataset& data, const BasisSpec& basis) {
    const auto terms = basis.terms(data.factors());
    const Eigen::MatrixXd q = term_values(basis.evaluate(data.X), terms, data.cells(), data.factors());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(q);
    if (qr.rank() < q.cols()) throw BaselineError("outcome regression design is rank deficient");
    return qr.solve(data.Y);
}

struct AugmentedEstimate {
    double value = 0.0;
    /// False when the weights do not balance q within tolerance, so equivalence with the
    /// weighting estimator is not guaranteed.
    bool balanced = true;
};

inline AugmentedEstimate augmented_estimate(const Dataset& data, const Eigen::VectorXd& weights,
                                            const BalanceSystem& sys, const BasisSpec& basis,
                                            const EffectIndex& effect, const Design& design,
                                            const Eigen::VectorXd& alpha, double balance_tol = 1e-8) {
    design.require_estimable(effect);
    const auto terms = basis.terms(data.factors());
    if (alpha.size() != static_cast<Eigen::Index>(terms.size())) {
        throw DomainError("expected " + std::to_string(terms.size()) + " regression coefficients");
    }
    const auto cells = data.cells();
    const Eigen::MatrixXd h = basis.evaluate(data.X);
    const Eigen::MatrixXd q = term_values(h, terms, cells, data.factors());
    const Eigen::VectorXd a = contrast_signs(data, effect, design);
    const double nn = static_cast<double>(data.size());
    const Eigen::VectorXd resid = data.Y - q * alpha;

    // sum_z g_z alpha^T sum_i q(X_i, z) = sum_t alpha_t (sum_z g_z r_J(z)) (sum_i h_s(X_i))
    const auto g = design.coefficients(effect);
    double imputed = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const auto mask = terms[t].interaction.mask(data.factors());
        double gz = 0.0;
        for (auto z : design.observed_cells()) gz += g[z] * interaction_sign(mask, z);
        imputed += alpha[static_cast<Eigen::Index>(t)] * gz * h.row(static_cast<Eigen::Index>(terms[t].basis)).sum();
    }
    AugmentedEstimate out;
    out.value = (weights.array() * a.array() * resid.array()).sum() / nn + design.effect_scale() * imputed / nn;
    out.balanced = balance_residuals(weights, sys).max_abs <= balance_tol * (1.0 + sys.b.cwiseAbs().maxCoeff());
    return out;
}

/// Twice the OLS coefficient of each effect's Z product, from the regression of Y on an
/// intercept, X and every Z product of order <= max_order.
inline std::map<EffectIndex, double> ols_regression_baseline(const Dataset& data, int max_order,
                                                             const std::vector<EffectIndex>& effect_set) {
    const auto products = effect_index_set(data.factors(), max_order);
    const auto n = data.size();
    const auto d = data.covariates();
    Eigen::MatrixXd design(n, 1 + d + static_cast<Eigen::Index>(products.size()));
    design.col(0).setOnes();
    design.middleCols(1, d) = data.X;
    for (std::size_t j = 0; j < products.size(); ++j) {
        const auto mask = products[j].mask(data.factors());
        for (Eigen::Index i = 0; i < n; ++i) {
            design(i, 1 + d + static_cast<Eigen::Index>(j)) = interaction_sign(mask, data.cell(i));
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols()) throw BaselineError("regression design matrix is rank deficient");
    const Eigen::VectorXd coef = qr.solve(data.Y);
    std::map<EffectIndex, double> out;
    for (const auto& e : effect_set) {
        auto it = std::find(products.begin(), products.end(), e);
        if (it == products.end()) throw BaselineError("effect " + e.label() + " is not in the regression");
        out[e] = 2.0 * coef[1 + d + (it - products.begin())];
    }
    return out;
}

/// mean(Y | prod_{k in effect} z_k = +1) - mean(Y | ... = -1).
inline double unadjusted_baseline(const Dataset& data, const EffectIndex& effect) {
    if (effect.empty() || effect.max_member() > data.factors()) throw DomainError("invalid effect " + effect.label());
    const auto mask = effect.mask(data.factors());
    double sum[2] = {0.0, 0.0};
    Eigen::Index count[2] = {0, 0};
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const int side = interaction_sign(mask, data.cell(i)) > 0 ? 1 : 0;
        sum[side] += data.Y[i];
        ++count[side];
    }
    if (count[0] == 0 || count[1] == 0) throw BaselineError("effect " + effect.label() + " has an empty group");
    return sum[1] / static_cast<double>(count[1]) - sum[0] / static_cast<double>(count[0]);
}

struct SmdRow {
    EffectIndex effect;
    std::string covariate;
    double before = 0.0;
    double after = 0.0;
    /// Zero pooled standard deviation; SMDs are not defined.
    bool flagged = false;
};

/// Absolute standardized mean differences between the positive and negative parts of each
/// effect, unweighted and weighted by w_i A+- (pooled unweighted SD in the denominator).
inline std::vector<SmdRow> smd_report(const Dataset& data, const Eigen::VectorXd& weights,
                                      const std::vector<EffectIndex>& effect_set, const Design& design) {
    if (weights.size() != data.size()) throw DataError("weights do not align with the data rows");
    std::vector<SmdRow> out;
    for (const auto& effect : effect_set) {
        const Eigen::VectorXd a = contrast_signs(data, effect, design);
        const Eigen::ArrayXd plus = a.cwiseMax(0.0).array();
        const Eigen::ArrayXd minus = (-a).cwiseMax(0.0).array();
        const Eigen::ArrayXd in_plus = (plus > 0).cast<double>();
        const Eigen::ArrayXd in_minus = (minus > 0).cast<double>();
        const double n_plus = in_plus.sum();
        const double n_minus = in_minus.sum();
        for (Eigen::Index d = 0; d < data.covariates(); ++d) {
            const Eigen::ArrayXd x = data.X.col(d).array();
            SmdRow row{effect, data.covariate_name(d)};
            if (n_plus < 2 || n_minus < 2) {
                row.flagged = true;
                out.push_back(row);
                continue;
            }
            const double m_plus = (in_plus * x).sum() / n_plus;
            const double m_minus = (in_minus * x).sum() / n_minus;
            const double v_plus = (in_plus * (x - m_plus).square()).sum() / (n_plus - 1);
            const double v_minus = (in_minus * (x - m_minus).square()).sum() / (n_minus - 1);
            const double sd = std::sqrt(0.5 * (v_plus + v_minus));
            if (!(sd > 0)) {
                row.flagged = true;
                out.push_back(row);
                continue;
            }
            const Eigen::ArrayXd wp = weights.array() * plus;
            const Eigen::ArrayXd wm = weights.array() * minus;
            row.before = std::abs(m_plus - m_minus) / sd;
            if (wp.sum() > 0 && wm.sum() > 0) {
                row.after = std::abs((wp * x).sum() / wp.sum() - (wm * x).sum() / wm.sum()) / sd;
            } else {
                row.after = std::numeric_limits<double>::quiet_NaN();
            }
            out.push_back(row);
        }
    }
    return out;
}

} // namespace facweights
