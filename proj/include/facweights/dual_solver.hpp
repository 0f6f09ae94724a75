#pragma once

// Minimum-norm nonnegative balancing weights
//
//   min sum_i w_i^2   s.t.  B w = b,  w >= 0
//
// solved through the unconstrained concave dual
//
//   L(lambda) = sum_i [ -1/4 (lambda^T B_i)^2 1(lambda^T B_i < 0) - lambda^T b_i ]
//
// whose maximizer gives w_i = max(0, -lambda^T B_i) / 2. The gradient of L is B w - b,
// so a stationary point is exactly a feasible weight vector.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "constraints.hpp"
#include "errors.hpp"

namespace facweights {

struct SolverOptions {
    /// Convergence when max |B w - b| <= grad_tol * N.
    double grad_tol = 1e-9;
    int max_iters = 500;
    double backtrack_shrink = 0.5;
    double sufficient_increase = 1e-4;
    int max_backtracks = 12;
    /// ||lambda|| beyond this is read as an unbounded dual (infeasible primal).
    double divergence_norm = 1e8;
    /// Ridge added to the generalized Hessian, relative to trace / P.
    double hessian_regularization = 1e-10;

    void validate() const {
        if (!(grad_tol > 0) || max_iters <= 0 || !(backtrack_shrink > 0 && backtrack_shrink < 1) ||
            !(sufficient_increase > 0 && sufficient_increase < 1) || max_backtracks <= 0 ||
            !(divergence_norm > 0) || !(hessian_regularization > 0)) {
            throw ConfigError("solver options must be positive (shrink and sufficient increase in (0,1))");
        }
    }
};

enum class SolveStatus { converged, infeasible, max_iters };

inline std::string to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iters: return "max_iters";
    }
    return "unknown";
}

struct DualSolution {
    Eigen::VectorXd lambda;
    Eigen::VectorXd gamma;   // gamma_i = lambda^T B_i 1(lambda^T B_i >= 0)
    Eigen::VectorXd weights; // w_i = (gamma_i - lambda^T B_i) / 2
    double objective = 0.0;
    double gradient_norm = 0.0; // max |B w - b|
    int iterations = 0;
    SolveStatus status = SolveStatus::max_iters;
    std::vector<double> objective_trace; // objective after each accepted step

    bool converged() const { return status == SolveStatus::converged; }
};

inline double dual_objective(const Eigen::VectorXd& lambda, const BalanceSystem& sys) {
    if (lambda.size() != sys.size()) throw DomainError("lambda length does not match the system");
    const Eigen::VectorXd u = sys.B.transpose() * lambda;
    double value = -lambda.dot(sys.b);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (u[i] < 0) value -= 0.25 * u[i] * u[i];
    }
    return value;
}

namespace detail {

inline Eigen::VectorXd weights_from_scores(const Eigen::VectorXd& u) {
    return (-u).cwiseMax(0.0) * 0.5;
}

inline double objective_from_scores(const Eigen::VectorXd& u, const Eigen::VectorXd& lambda,
                                    const Eigen::VectorXd& b) {
    double value = -lambda.dot(b);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (u[i] < 0) value -= 0.25 * u[i] * u[i];
    }
    return value;
}

/// Maximizes t -> L(lambda + t d) exactly. The derivative sum_i v_i w_i(t) - d^T b is
/// nonincreasing and piecewise linear in t. Returns +inf when it stays positive beyond
/// `t_limit` (the dual is unbounded along d).
inline double exact_line_search(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double d_dot_b,
                                double t_limit) {
    auto slope = [&](double t) {
        double s = -d_dot_b;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double ui = u[i] + t * v[i];
            if (ui < 0) s -= 0.5 * v[i] * ui;
        }
        return s;
    };
    if (slope(0.0) <= 0) return 0.0;
    double lo = 0.0;
    double hi = 1.0;
    while (slope(hi) > 0) {
        lo = hi;
        hi *= 2.0;
        if (hi > t_limit) return std::numeric_limits<double>::infinity();
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double s_lo = slope(lo);
        const double s_hi = slope(hi);
        // Secant on the piecewise-linear slope, guarded by bisection.
        double mid = lo + s_lo * (hi - lo) / (s_lo - s_hi);
        if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
        const double s_mid = slope(mid);
        if (s_mid == 0.0) return mid;
        if (s_mid > 0) {
            lo = mid;
        } else {
            hi = mid;
        }
        const double half = 0.5 * (lo + hi);
        if (slope(half) > 0) {
            lo = half;
        } else {
            hi = half;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Semismooth Newton ascent on the dual from lambda = 0.
inline DualSolution solve_dual(const BalanceSystem& sys, const SolverOptions& opts = {}) {
    opts.validate();
    const auto p = sys.size();
    const auto n = sys.units();
    if (p == 0 || n == 0) throw DomainError("balance system is empty");
    if (!sys.B.allFinite() || !sys.b.allFinite()) throw DataError("balance system has non-finite entries");

    const double tol = opts.grad_tol * static_cast<double>(n);
    DualSolution sol;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    double value = 0.0;
    Eigen::MatrixXd H(p, p);
    Eigen::MatrixXd active_cols;

    auto finish = [&](SolveStatus status) {
        sol.lambda = lambda;
        sol.weights = detail::weights_from_scores(u);
        sol.gamma = u.cwiseMax(0.0);
        sol.objective = value;
        sol.gradient_norm = (sys.B * sol.weights - sys.b).cwiseAbs().maxCoeff();
        sol.status = status;
        return sol;
    };

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        sol.iterations = iter;
        const Eigen::VectorXd w = detail::weights_from_scores(u);
        const Eigen::VectorXd grad = sys.B * w - sys.b;
        if (grad.cwiseAbs().maxCoeff() <= tol) return finish(SolveStatus::converged);

        // Negated generalized Hessian: 1/2 sum over active units of B_i B_i^T.
        Eigen::Index active = 0;
        for (Eigen::Index i = 0; i < n; ++i) active += u[i] < 0;
        Eigen::VectorXd d;
        bool newton = false;
        if (active > 0) {
            active_cols.resize(p, active);
            for (Eigen::Index i = 0, c = 0; i < n; ++i) {
                if (u[i] < 0) active_cols.col(c++) = sys.B.col(i);
            }
            H.setZero();
            H.selfadjointView<Eigen::Lower>().rankUpdate(active_cols, 0.5);
            const double ridge = opts.hessian_regularization * std::max(H.trace() / static_cast<double>(p), 1e-300);
            H.diagonal().array() += ridge;
            Eigen::LLT<Eigen::MatrixXd> llt(H.selfadjointView<Eigen::Lower>());
            if (llt.info() == Eigen::Success) {
                d = llt.solve(grad);
                newton = d.allFinite() && grad.dot(d) > 0;
            }
        }
        if (!newton) d = grad;

        const Eigen::VectorXd v = sys.B.transpose() * d;
        const double slope0 = grad.dot(d);
        const double d_dot_b = d.dot(sys.b);
        auto value_at = [&](double t) {
            double val = -(lambda + t * d).dot(sys.b);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double ui = u[i] + t * v[i];
                if (ui < 0) val -= 0.25 * ui * ui;
            }
            return val;
        };

        double t = 0.0;
        bool accepted = false;
        if (newton) {
            double trial = 1.0;
            for (int k = 0; k < opts.max_backtracks; ++k, trial *= opts.backtrack_shrink) {
                if (value_at(trial) >= value + opts.sufficient_increase * trial * slope0) {
                    t = trial;
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            const double t_limit = opts.divergence_norm / std::max(d.norm(), 1e-300);
            t = detail::exact_line_search(u, v, d_dot_b, t_limit);
            if (!std::isfinite(t)) {
                sol.iterations = iter + 1;
                return finish(SolveStatus::infeasible);
            }
            if (t == 0.0) {
                // No progress possible along d; the gradient test above failed, so we are stuck.
                sol.iterations = iter + 1;
                return finish(SolveStatus::max_iters);
            }
        }

        lambda += t * d;
        u.noalias() = sys.B.transpose() * lambda;
        value = detail::objective_from_scores(u, lambda, sys.b);
        sol.objective_trace.push_back(value);
        if (lambda.norm() > opts.divergence_norm) {
            sol.iterations = iter + 1;
            return finish(SolveStatus::infeasible);
        }
    }
    sol.iterations = opts.max_iters;
    const Eigen::VectorXd w = detail::weights_from_scores(u);
    if ((sys.B * w - sys.b).cwiseAbs().maxCoeff() <= tol) return finish(SolveStatus::converged);
    return finish(SolveStatus::max_iters);
}

} // namespace facweights
