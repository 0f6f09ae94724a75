#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "design.hpp"
#include "errors.hpp"

namespace facweights {

/// Observational sample: factor levels Z (N x K, +-1), covariates X (N x D), outcomes Y.
struct Dataset {
    Eigen::MatrixXi Z;
    Eigen::MatrixXd X;
    Eigen::VectorXd Y;
    std::vector<std::string> covariate_names;

    Eigen::Index size() const { return Z.rows(); }
    int factors() const { return static_cast<int>(Z.cols()); }
    Eigen::Index covariates() const { return X.cols(); }

    std::size_t cell(Eigen::Index i) const {
        std::size_t q = 0;
        for (Eigen::Index k = 0; k < Z.cols(); ++k) q = (q << 1) | (Z(i, k) > 0 ? 1U : 0U);
        return q;
    }

    std::vector<std::size_t> cells() const {
        std::vector<std::size_t> out(static_cast<std::size_t>(size()));
        for (Eigen::Index i = 0; i < size(); ++i) out[static_cast<std::size_t>(i)] = cell(i);
        return out;
    }

    std::string covariate_name(Eigen::Index d) const {
        if (static_cast<std::size_t>(d) < covariate_names.size()) {
            return covariate_names[static_cast<std::size_t>(d)];
        }
        return "X" + std::to_string(d + 1);
    }

    /// Throws DataError on inconsistent shapes, levels other than +-1 or non-finite values.
    void validate() const {
        const auto n = size();
        if (n == 0) throw DataError("dataset is empty");
        if (X.rows() != n) throw DataError("covariate matrix has " + std::to_string(X.rows()) +
                                           " rows, expected " + std::to_string(n));
        if (Y.size() != 0 && Y.size() != n) {
            throw DataError("outcome vector has " + std::to_string(Y.size()) + " entries, expected " +
                            std::to_string(n));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < Z.cols(); ++k) {
                if (Z(i, k) != 1 && Z(i, k) != -1) {
                    throw DataError("row " + std::to_string(i) + ": factor levels must be -1 or +1");
                }
            }
            for (Eigen::Index d = 0; d < X.cols(); ++d) {
                if (!std::isfinite(X(i, d))) {
                    throw DataError("row " + std::to_string(i) + ": non-finite covariate " +
                                    covariate_name(d));
                }
            }
            if (Y.size() && !std::isfinite(Y[i])) {
                throw DataError("row " + std::to_string(i) + ": non-finite outcome");
            }
        }
    }
};

} // namespace facweights
