#pragma once

// Direct primal solver for  min ||w||^2  s.t.  B w = b, w >= 0, used only to check the
// dual route. The problem is a least-distance program, reduced to a nonnegative least
// squares problem and solved with the Lawson-Hanson active-set method. Intended for
// N <= 200.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "facweights/constraints.hpp"

namespace facweights::testing {

struct PrimalResult {
    bool feasible = false;
    Eigen::VectorXd weights;
    double objective = 0.0;
};

namespace oracle_detail {

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Eigen::Index>(j)] = v[idx[j]];
    return out;
}

inline Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
    return out;
}

/// Lawson-Hanson: min ||A x - y|| s.t. x >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
    const auto n = A.cols();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<char> passive(static_cast<std::size_t>(n), 0);
    const double tol = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff() * y.cwiseAbs().maxCoeff()) *
                       static_cast<double>(n);
    for (int outer = 0; outer < 3 * n + 10; ++outer) {
        const Eigen::VectorXd grad = A.transpose() * (y - A * x);
        Eigen::Index best = -1;
        double best_val = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && grad[j] > best_val) {
                best_val = grad[j];
                best = j;
            }
        }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = 1;
        for (int inner = 0; inner < 3 * n + 10; ++inner) {
            std::vector<Eigen::Index> P;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)]) P.push_back(j);
            }
            const Eigen::MatrixXd AP = gather_cols(A, P);
            const Eigen::VectorXd sP = AP.completeOrthogonalDecomposition().solve(y);
            if (sP.minCoeff() > 0) {
                x.setZero();
                for (std::size_t j = 0; j < P.size(); ++j) x[P[j]] = sP[static_cast<Eigen::Index>(j)];
                break;
            }
            double alpha = 1.0;
            for (std::size_t j = 0; j < P.size(); ++j) {
                const double s = sP[static_cast<Eigen::Index>(j)];
                if (s <= 0) alpha = std::min(alpha, x[P[j]] / (x[P[j]] - s));
            }
            for (std::size_t j = 0; j < P.size(); ++j) {
                x[P[j]] += alpha * (sP[static_cast<Eigen::Index>(j)] - x[P[j]]);
            }
            for (std::size_t j = 0; j < P.size(); ++j) {
                if (x[P[j]] <= 1e-14) {
                    x[P[j]] = 0.0;
                    passive[static_cast<std::size_t>(P[j])] = 0;
                }
            }
        }
    }
    return x;
}

} // namespace oracle_detail

inline PrimalResult primal_oracle(const BalanceSystem& sys) {
    // Least-distance form: min ||w|| s.t. G w >= h with G = [B; -B; I], h = [b; -b; 0].
    // With E = [G^T; h^T] and f = e_{N+1}, the NNLS residual r = E u - f of min ||E u - f||
    // gives w = -r_{1..N} / r_{N+1}; r = 0 means the constraints are inconsistent.
    using namespace oracle_detail;
    const Eigen::MatrixXd& B = sys.B;
    const Eigen::VectorXd& b = sys.b;
    const auto p = B.rows();
    const auto n = B.cols();
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n + 1, 2 * p + n);
    E.block(0, 0, n, p) = B.transpose();
    E.block(0, p, n, p) = -B.transpose();
    E.block(0, 2 * p, n, n).setIdentity();
    E.block(n, 0, 1, p) = b.transpose();
    E.block(n, p, 1, p) = -b.transpose();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n + 1);
    f[n] = 1.0;

    PrimalResult res;
    const Eigen::VectorXd u = nnls(E, f);
    const Eigen::VectorXd r = E * u - f;
    if (std::abs(r[n]) < 1e-12) return res;
    Eigen::VectorXd w = -r.head(n) / r[n];
    const double feas_tol = 1e-8 * (1.0 + b.cwiseAbs().maxCoeff());
    if ((B * w - b).cwiseAbs().maxCoeff() > feas_tol) return res;
    res.feasible = true;
    res.weights = w.cwiseMax(0.0);
    res.objective = res.weights.squaredNorm();
    return res;
}

} // namespace facweights::testing
