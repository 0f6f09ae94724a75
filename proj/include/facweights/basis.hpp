#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "design.hpp"
#include "errors.hpp"

namespace facweights {

/// A covariate basis function h(x). `name` identifies the function: two bases with
/// the same name are treated as the same function when constraints are deduplicated.
struct BasisFunction {
    std::string name;
    std::function<double(std::span<const double>)> eval;
};

inline BasisFunction constant_basis() {
    return {"1", [](std::span<const double>) { return 1.0; }};
}

inline BasisFunction coordinate_basis(Eigen::Index d, std::string name = {}) {
    if (name.empty()) name = "X" + std::to_string(d + 1);
    return {std::move(name), [d](std::span<const double> x) { return x[static_cast<std::size_t>(d)]; }};
}

/// Product of covariate powers, e.g. {{0, 2}, {2, 1}} is X1^2 * X3.
inline BasisFunction monomial_basis(std::vector<std::pair<Eigen::Index, int>> powers,
                                    const std::vector<std::string>& names = {}) {
    std::string label;
    for (const auto& [d, p] : powers) {
        if (p < 1) throw ConfigError("monomial powers must be positive");
        if (!label.empty()) label += "*";
        label += static_cast<std::size_t>(d) < names.size() ? names[static_cast<std::size_t>(d)]
                                                             : "X" + std::to_string(d + 1);
        if (p > 1) label += "^" + std::to_string(p);
    }
    if (label.empty()) return constant_basis();
    return {label, [powers = std::move(powers)](std::span<const double> x) {
                double v = 1.0;
                for (const auto& [d, p] : powers) v *= std::pow(x[static_cast<std::size_t>(d)], p);
                return v;
            }};
}

/// Constant plus one identity basis per covariate column.
inline std::vector<BasisFunction> identity_bases(const Dataset& data, bool with_constant = true) {
    std::vector<BasisFunction> out;
    if (with_constant) out.push_back(constant_basis());
    for (Eigen::Index d = 0; d < data.covariates(); ++d) {
        out.push_back(coordinate_basis(d, data.covariate_name(d)));
    }
    return out;
}

enum class ModelFlavor { additive, heterogeneous };

inline std::string to_string(ModelFlavor f) {
    return f == ModelFlavor::additive ? "additive" : "heterogeneous";
}

inline ModelFlavor parse_flavor(const std::string& s) {
    if (s == "additive") return ModelFlavor::additive;
    if (s == "heterogeneous" || s == "interaction") return ModelFlavor::heterogeneous;
    throw ConfigError("unknown model flavor '" + s + "' (expected additive or heterogeneous)");
}

/// One balanced function q(x, z) = h_basis(x) * prod_{j in interaction} z_j.
struct BalanceTerm {
    std::size_t basis = 0;
    EffectIndex interaction;
};

/// Covariate bases plus the outcome-model family that decides which q functions are balanced.
///
/// additive:      {h_s with J = {}} and {1 with J} for every J of order 1..K'
/// heterogeneous: {h_s with J} for every s and every J of order 1..K'
class BasisSpec {
public:
    BasisSpec(std::vector<BasisFunction> covariate_bases, ModelFlavor flavor, int max_order)
        : flavor_(flavor), max_order_(max_order) {
        if (covariate_bases.empty()) throw ConfigError("at least one covariate basis is required");
        if (max_order < 1) throw ConfigError("max interaction order must be >= 1");
        for (auto& h : covariate_bases) add_function(std::move(h));
        covariate_count_ = functions_.size();
        if (flavor_ == ModelFlavor::additive) constant_index_ = add_function(constant_basis());
    }

    ModelFlavor flavor() const { return flavor_; }
    int max_order() const { return max_order_; }
    const std::vector<BasisFunction>& functions() const { return functions_; }

    std::vector<BalanceTerm> terms(int factors) const {
        const auto interactions = effect_index_set(factors, max_order_);
        std::vector<BalanceTerm> out;
        if (flavor_ == ModelFlavor::additive) {
            for (std::size_t s = 0; s < covariate_count_; ++s) out.push_back({s, EffectIndex{}});
            for (const auto& j : interactions) out.push_back({constant_index_, j});
        } else {
            for (std::size_t s = 0; s < covariate_count_; ++s) {
                for (const auto& j : interactions) out.push_back({s, j});
            }
        }
        return out;
    }

    /// Basis values, one row per function and one column per unit.
    Eigen::MatrixXd evaluate(const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd H(static_cast<Eigen::Index>(functions_.size()), X.rows());
        std::vector<double> row(static_cast<std::size_t>(X.cols()));
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            for (Eigen::Index d = 0; d < X.cols(); ++d) row[static_cast<std::size_t>(d)] = X(i, d);
            for (std::size_t s = 0; s < functions_.size(); ++s) {
                const double v = functions_[s].eval(row);
                if (!std::isfinite(v)) {
                    throw DataError("row " + std::to_string(i) + ": basis " + functions_[s].name +
                                    " is not finite");
                }
                H(static_cast<Eigen::Index>(s), i) = v;
            }
        }
        return H;
    }

private:
    std::size_t add_function(BasisFunction h) {
        for (std::size_t s = 0; s < functions_.size(); ++s) {
            if (functions_[s].name == h.name) return s;
        }
        functions_.push_back(std::move(h));
        return functions_.size() - 1;
    }

    ModelFlavor flavor_;
    int max_order_;
    std::vector<BasisFunction> functions_;
    std::size_t covariate_count_ = 0;
    std::size_t constant_index_ = 0;
};

} // namespace facweights
