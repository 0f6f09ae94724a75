#pragma once

// Factorial contrast algebra: treatment combinations, effect index sets,
// contrast vectors, the full design matrix and the effective contrasts of an
// incomplete factorial design.
//
// Combinations are enumerated lexicographically with -1 before +1 and the last
// factor varying fastest. Combination q (0-based) has factor k (1-based) at +1
// exactly when bit (K - k) of q is set.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace facweights {

inline constexpr int kMinFactors = 2;
inline constexpr int kMaxFactors = 20;

inline void check_factor_count(int factors) {
    if (factors < kMinFactors || factors > kMaxFactors) {
        throw ConfigError("factor count must be in [" + std::to_string(kMinFactors) + ", " +
                          std::to_string(kMaxFactors) + "], got " + std::to_string(factors));
    }
}

inline std::size_t combination_count(int factors) { return std::size_t{1} << factors; }

/// One assignment of all K binary factors, each level -1 or +1.
class TreatmentCombination {
public:
    TreatmentCombination() = default;

    explicit TreatmentCombination(std::vector<int> levels) : levels_(std::move(levels)) {
        check_factor_count(static_cast<int>(levels_.size()));
        for (int v : levels_) {
            if (v != -1 && v != 1) {
                throw DomainError("treatment levels must be -1 or +1, got " + std::to_string(v));
            }
        }
    }

    static TreatmentCombination from_index(int factors, std::size_t index) {
        check_factor_count(factors);
        if (index >= combination_count(factors)) {
            throw DomainError("combination index out of range");
        }
        std::vector<int> levels(static_cast<std::size_t>(factors));
        for (int k = 1; k <= factors; ++k) {
            levels[static_cast<std::size_t>(k - 1)] = ((index >> (factors - k)) & 1U) ? 1 : -1;
        }
        return TreatmentCombination(std::move(levels));
    }

    int factors() const { return static_cast<int>(levels_.size()); }
    int level(int k) const { return levels_.at(static_cast<std::size_t>(k - 1)); }
    const std::vector<int>& levels() const { return levels_; }

    /// Position in the enumeration order.
    std::size_t index() const {
        std::size_t q = 0;
        for (int v : levels_) q = (q << 1) | (v > 0 ? 1U : 0U);
        return q;
    }

    std::string to_string() const {
        std::string s = "(";
        for (std::size_t k = 0; k < levels_.size(); ++k) {
            if (k) s += ",";
            s += levels_[k] > 0 ? "+1" : "-1";
        }
        return s + ")";
    }

    friend bool operator==(const TreatmentCombination&, const TreatmentCombination&) = default;

private:
    std::vector<int> levels_;
};

/// Position of a level vector in the enumeration; levels must already be +-1.
inline std::size_t combination_index(std::span<const int> levels) {
    std::size_t q = 0;
    for (int v : levels) q = (q << 1) | (v > 0 ? 1U : 0U);
    return q;
}

/// A subset of factors (1-based, ascending). The empty set is the summary contrast.
class EffectIndex {
public:
    EffectIndex() = default;

    EffectIndex(std::initializer_list<int> members) : EffectIndex(std::vector<int>(members)) {}

    explicit EffectIndex(std::vector<int> members) : members_(std::move(members)) {
        std::sort(members_.begin(), members_.end());
        for (std::size_t i = 0; i < members_.size(); ++i) {
            if (members_[i] < 1) throw DomainError("effect members are 1-based factor indices");
            if (i > 0 && members_[i] == members_[i - 1]) {
                throw DomainError("effect members must be distinct");
            }
        }
    }

    const std::vector<int>& members() const { return members_; }
    int order() const { return static_cast<int>(members_.size()); }
    bool empty() const { return members_.empty(); }
    int max_member() const { return members_.empty() ? 0 : members_.back(); }

    bool contains(int k) const { return std::binary_search(members_.begin(), members_.end(), k); }

    bool is_subset_of(const EffectIndex& other) const {
        return std::includes(other.members_.begin(), other.members_.end(), members_.begin(),
                             members_.end());
    }

    EffectIndex minus(const EffectIndex& other) const {
        std::vector<int> out;
        std::set_difference(members_.begin(), members_.end(), other.members_.begin(),
                            other.members_.end(), std::back_inserter(out));
        return EffectIndex(std::move(out));
    }

    /// Bit mask over combination indices (factor k maps to bit K - k).
    std::uint32_t mask(int factors) const {
        std::uint32_t m = 0;
        for (int k : members_) {
            if (k > factors) {
                throw DomainError("effect member " + std::to_string(k) + " exceeds factor count " +
                                  std::to_string(factors));
            }
            m |= std::uint32_t{1} << (factors - k);
        }
        return m;
    }

    /// "0" for the summary contrast, otherwise members joined by ':' (e.g. "1:2").
    std::string label() const {
        if (members_.empty()) return "0";
        std::string s;
        for (std::size_t i = 0; i < members_.size(); ++i) {
            if (i) s += ":";
            s += std::to_string(members_[i]);
        }
        return s;
    }

    static EffectIndex parse(const std::string& label) {
        if (label.empty() || label == "0") return {};
        std::vector<int> m;
        std::size_t start = 0;
        while (start <= label.size()) {
            auto end = label.find(':', start);
            if (end == std::string::npos) end = label.size();
            try {
                m.push_back(std::stoi(label.substr(start, end - start)));
            } catch (const std::exception&) {
                throw DomainError("cannot parse effect label '" + label + "'");
            }
            start = end + 1;
        }
        return EffectIndex(std::move(m));
    }

    friend bool operator==(const EffectIndex&, const EffectIndex&) = default;
    friend auto operator<=>(const EffectIndex& a, const EffectIndex& b) {
        if (a.order() != b.order()) return a.order() <=> b.order();
        return a.members_ <=> b.members_;
    }

private:
    std::vector<int> members_;
};

/// Sign of r_J at combination q: product of the member levels.
inline int interaction_sign(std::uint32_t mask, std::size_t q) {
    return (std::popcount(mask & ~static_cast<std::uint32_t>(q)) & 1) ? -1 : 1;
}

struct ContrastVector {
    EffectIndex effect;
    std::vector<int> entries;

    Eigen::VectorXd as_vector() const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(entries.size()));
        for (std::size_t i = 0; i < entries.size(); ++i) v[static_cast<Eigen::Index>(i)] = entries[i];
        return v;
    }
};

inline std::vector<TreatmentCombination> enumerate_combinations(int factors) {
    check_factor_count(factors);
    std::vector<TreatmentCombination> out;
    out.reserve(combination_count(factors));
    for (std::size_t q = 0; q < combination_count(factors); ++q) {
        out.push_back(TreatmentCombination::from_index(factors, q));
    }
    return out;
}

inline ContrastVector contrast_vector(const EffectIndex& effect, int factors) {
    check_factor_count(factors);
    const std::uint32_t m = effect.mask(factors);
    ContrastVector g{effect, std::vector<int>(combination_count(factors))};
    for (std::size_t q = 0; q < g.entries.size(); ++q) g.entries[q] = interaction_sign(m, q);
    return g;
}

namespace detail {

inline void subsets_of_order(int factors, int order, int next, std::vector<int>& cur,
                             std::vector<EffectIndex>& out) {
    if (static_cast<int>(cur.size()) == order) {
        out.emplace_back(cur);
        return;
    }
    for (int k = next; k <= factors; ++k) {
        cur.push_back(k);
        subsets_of_order(factors, order, k + 1, cur, out);
        cur.pop_back();
    }
}

} // namespace detail

/// Effects of order 1..max_order, sorted by order then lexicographically.
inline std::vector<EffectIndex> effect_index_set(int factors, int max_order) {
    check_factor_count(factors);
    if (max_order < 1 || max_order > factors) {
        throw DomainError("max interaction order must be in [1, " + std::to_string(factors) +
                          "], got " + std::to_string(max_order));
    }
    std::vector<EffectIndex> out;
    std::vector<int> cur;
    for (int order = 1; order <= max_order; ++order) {
        detail::subsets_of_order(factors, order, 1, cur, out);
    }
    return out;
}

/// Summary contrast followed by every effect up to order K.
inline std::vector<EffectIndex> all_effects(int factors) {
    std::vector<EffectIndex> out{EffectIndex{}};
    auto rest = effect_index_set(factors, factors);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

struct DesignMatrix {
    int factors = 0;
    std::vector<EffectIndex> effects; // column order
    Eigen::MatrixXd G;                // rows: combinations, columns: effects
};

inline DesignMatrix design_matrix(int factors) {
    check_factor_count(factors);
    if (factors > 12) throw ConfigError("explicit design matrix limited to 12 factors");
    DesignMatrix d{factors, all_effects(factors), {}};
    const auto q_count = static_cast<Eigen::Index>(combination_count(factors));
    d.G.resize(q_count, q_count);
    for (Eigen::Index c = 0; c < q_count; ++c) {
        const auto m = d.effects[static_cast<std::size_t>(c)].mask(factors);
        for (Eigen::Index q = 0; q < q_count; ++q) {
            d.G(q, c) = interaction_sign(m, static_cast<std::size_t>(q));
        }
    }
    return d;
}

/// Identification of low-order effects when some combinations are never observed.
struct IncompleteDesign {
    int factors = 0;
    int max_order = 0;
    std::vector<std::size_t> observed;   // combination indices, enumeration order
    std::vector<std::size_t> unobserved; // combination indices, enumeration order
    /// Summary contrast then the non-negligible effects (rows of effective_contrasts).
    std::vector<EffectIndex> effects;
    /// G_o^T: one row per entry of `effects`, one column per observed combination.
    /// Effects are tau = G_o^T E[Y_o] / 2^(K-1).
    Eigen::MatrixXd effective_contrasts;
    /// E[Y_u] = implied_unobserved * E[Y_o].
    Eigen::MatrixXd implied_unobserved;
    Eigen::VectorXd uu_singular_values;

    double min_singular_value() const {
        return uu_singular_values.size() ? uu_singular_values.minCoeff() : 0.0;
    }
};

inline constexpr double kPseudoInverseTolerance = 1e-8;

inline IncompleteDesign build_incomplete_design(int factors, int max_order,
                                                const std::vector<TreatmentCombination>& unobserved,
                                                double tol = kPseudoInverseTolerance) {
    check_factor_count(factors);
    if (factors > 16) throw ConfigError("incomplete designs are limited to 16 factors");
    IncompleteDesign d;
    d.factors = factors;
    d.max_order = max_order;
    d.effects = effect_index_set(factors, max_order);
    d.effects.insert(d.effects.begin(), EffectIndex{});

    const std::size_t q_total = combination_count(factors);
    std::vector<char> is_unobserved(q_total, 0);
    for (const auto& z : unobserved) {
        if (z.factors() != factors) {
            throw DomainError("unobserved combination " + z.to_string() + " has wrong length");
        }
        is_unobserved[z.index()] = 1;
    }
    for (std::size_t q = 0; q < q_total; ++q) {
        (is_unobserved[q] ? d.unobserved : d.observed).push_back(q);
    }

    std::vector<EffectIndex> negligible;
    for (const auto& e : all_effects(factors)) {
        if (e.order() > max_order) negligible.push_back(e);
    }
    const auto n_plus = static_cast<Eigen::Index>(d.effects.size());
    const auto n_minus = static_cast<Eigen::Index>(negligible.size());
    const auto n_obs = static_cast<Eigen::Index>(d.observed.size());
    const auto n_unobs = static_cast<Eigen::Index>(d.unobserved.size());

    std::string cells;
    for (auto q : d.unobserved) {
        cells += (cells.empty() ? "" : " ") + TreatmentCombination::from_index(factors, q).to_string();
    }
    if (n_minus < n_unobs) {
        throw IdentificationError(
            "identification requires at least as many negligible effects (" +
            std::to_string(n_minus) + ") as unobserved combinations (" + std::to_string(n_unobs) +
            "): unobserved " + cells);
    }

    auto block = [&](const std::vector<std::size_t>& cells, const std::vector<EffectIndex>& cols) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto mask = cols[c].mask(factors);
            for (std::size_t r = 0; r < cells.size(); ++r) {
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    interaction_sign(mask, cells[r]);
            }
        }
        return m;
    };

    const Eigen::MatrixXd g_oo = block(d.observed, d.effects);
    if (n_unobs == 0) {
        d.effective_contrasts = g_oo.transpose();
        d.implied_unobserved.resize(0, n_obs);
        return d;
    }

    const Eigen::MatrixXd g_ou = block(d.unobserved, d.effects);
    const Eigen::MatrixXd g_uo = block(d.observed, negligible);
    const Eigen::MatrixXd g_uu = block(d.unobserved, negligible);

    // Pseudoinverse of G_uu^T (Q_- x Q_u) through its SVD.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g_uu.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    d.uu_singular_values = svd.singularValues();
    const double largest = d.uu_singular_values.size() ? d.uu_singular_values.maxCoeff() : 0.0;
    const double cutoff = tol * largest;
    if (d.uu_singular_values.size() < n_unobs || d.min_singular_value() < cutoff ||
        largest == 0.0) {
        throw IdentificationError(
            "G_uu lacks full row rank (min singular value " + std::to_string(d.min_singular_value()) +
            "): the non-negligible effects are not identified with unobserved combinations " + cells);
    }
    Eigen::MatrixXd s_inv = Eigen::MatrixXd::Zero(n_unobs, n_minus);
    for (Eigen::Index i = 0; i < d.uu_singular_values.size(); ++i) {
        s_inv(i, i) = 1.0 / d.uu_singular_values[i];
    }
    const Eigen::MatrixXd pinv = svd.matrixV() * s_inv * svd.matrixU().transpose(); // Q_u x Q_-

    d.implied_unobserved = -pinv * g_uo.transpose();
    d.effective_contrasts = g_oo.transpose() + g_ou.transpose() * d.implied_unobserved;
    return d;
}

/// A full or incomplete factorial design together with its non-negligible effects.
class Design {
public:
    static Design full(int factors, int max_order) {
        Design d;
        d.factors_ = factors;
        d.max_order_ = max_order;
        d.effects_ = effect_index_set(factors, max_order);
        d.observed_mask_.assign(combination_count(factors), 1);
        d.observed_.resize(combination_count(factors));
        for (std::size_t q = 0; q < d.observed_.size(); ++q) d.observed_[q] = q;
        return d;
    }

    static Design incomplete(IncompleteDesign info) {
        Design d;
        d.factors_ = info.factors;
        d.max_order_ = info.max_order;
        d.effects_.assign(info.effects.begin() + 1, info.effects.end());
        d.observed_mask_.assign(combination_count(info.factors), 0);
        for (auto q : info.observed) d.observed_mask_[q] = 1;
        d.observed_ = info.observed;
        d.incomplete_ = std::move(info);
        return d;
    }

    int factors() const { return factors_; }
    int max_order() const { return max_order_; }
    bool is_full() const { return !incomplete_.has_value(); }
    std::size_t cell_count() const { return observed_mask_.size(); }

    /// Non-negligible nonempty effects in design order.
    const std::vector<EffectIndex>& effects() const { return effects_; }
    const std::vector<std::size_t>& observed_cells() const { return observed_; }
    bool is_observed(std::size_t cell) const { return cell < observed_mask_.size() && observed_mask_[cell]; }
    const IncompleteDesign* incomplete_info() const { return incomplete_ ? &*incomplete_ : nullptr; }

    /// 1 / 2^(K-1), the scaling between contrasts and effects.
    double effect_scale() const { return 1.0 / static_cast<double>(combination_count(factors_ - 1)); }

    /// Contrast coefficient of `effect` at every combination (0 at unobserved ones).
    std::vector<double> coefficients(const EffectIndex& effect) const {
        std::vector<double> out(cell_count(), 0.0);
        if (!incomplete_) {
            const auto m = effect.mask(factors_);
            for (std::size_t q = 0; q < out.size(); ++q) out[q] = interaction_sign(m, q);
            return out;
        }
        const auto& info = *incomplete_;
        auto it = std::find(info.effects.begin(), info.effects.end(), effect);
        if (it == info.effects.end()) {
            throw DomainError("effect " + effect.label() + " is negligible in this incomplete design");
        }
        const auto row = static_cast<Eigen::Index>(it - info.effects.begin());
        for (std::size_t c = 0; c < info.observed.size(); ++c) {
            out[info.observed[c]] = info.effective_contrasts(row, static_cast<Eigen::Index>(c));
        }
        return out;
    }

    void require_estimable(const EffectIndex& effect) const {
        if (effect.empty() || effect.order() > max_order_ || effect.max_member() > factors_) {
            throw DomainError("effect " + effect.label() + " is not among the estimated effects (order <= " +
                              std::to_string(max_order_) + ")");
        }
    }

private:
    Design() = default;

    int factors_ = 0;
    int max_order_ = 0;
    std::vector<EffectIndex> effects_;
    std::vector<char> observed_mask_;
    std::vector<std::size_t> observed_;
    std::optional<IncompleteDesign> incomplete_;
};

} // namespace facweights
