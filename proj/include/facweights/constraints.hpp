#pragma once

// Balance constraints B w = b. Each row balances one function q(x, z) = h_s(x) r_J(z)
// on the positive (or negative) part of one contrast:
//
//   sum_i w_i A_{iK} q(X_i, Z_i) = 2^{-(K-1)} sum_z g_{Kz} sum_i q(X_i, z)
//
// On a full design only summary rows (K = {}) and positive-part rows are emitted;
// the negative part of each contrast equals summary minus positive.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "basis.hpp"
#include "dataset.hpp"
#include "design.hpp"
#include "errors.hpp"

namespace facweights {

enum class Side { positive, negative };

struct ContrastSplit {
    std::vector<double> plus;
    std::vector<double> minus;
};

inline ContrastSplit split_contrast(std::span<const double> g) {
    ContrastSplit s{std::vector<double>(g.size()), std::vector<double>(g.size())};
    for (std::size_t i = 0; i < g.size(); ++i) {
        s.plus[i] = std::max(g[i], 0.0);
        s.minus[i] = std::max(-g[i], 0.0);
    }
    return s;
}

inline ContrastSplit split_contrast(const ContrastVector& g) {
    std::vector<double> v(g.entries.begin(), g.entries.end());
    return split_contrast(std::span<const double>(v));
}

struct Membership {
    double plus = 0.0;
    double minus = 0.0;
};

/// How much unit with combination `cell` contributes to the two parts of `effect`.
inline Membership membership_indicator(const EffectIndex& effect, std::size_t cell, const Design& design) {
    if (!design.is_observed(cell)) {
        throw DomainError("unit claims unobserved combination " +
                          TreatmentCombination::from_index(design.factors(), cell).to_string());
    }
    if (effect.empty()) return {1.0, 0.0};
    const double g = design.coefficients(effect)[cell];
    return {std::max(g, 0.0), std::max(-g, 0.0)};
}

inline Membership membership_indicator(const EffectIndex& effect, const TreatmentCombination& z,
                                       const Design& design) {
    if (z.factors() != design.factors()) throw DomainError("combination length does not match design");
    return membership_indicator(effect, z.index(), design);
}

/// Provenance of one constraint row.
struct RowKey {
    EffectIndex effect; // empty: summary row
    std::size_t basis = 0;
    EffectIndex interaction;
    Side side = Side::positive;

    friend bool operator==(const RowKey&, const RowKey&) = default;
    friend bool operator<(const RowKey& a, const RowKey& b) {
        return std::tie(a.effect, a.basis, a.interaction, a.side) <
               std::tie(b.effect, b.basis, b.interaction, b.side);
    }
};

struct ConstraintRow {
    RowKey key;
    double target = 0.0;
    /// Linearly dependent (as a function of x and z) on earlier rows of the system.
    bool dependent = false;
};

struct BalanceSystem {
    std::vector<ConstraintRow> rows;
    Eigen::MatrixXd B;            // P x N, column i is B_i
    Eigen::VectorXd b;            // P, equals unit_targets summed over units
    Eigen::MatrixXd unit_targets; // P x N, column i is b_i
    std::vector<std::string> basis_names;
    bool full_design = true;

    Eigen::Index size() const { return B.rows(); }
    Eigen::Index units() const { return B.cols(); }

    std::string row_label(std::size_t r) const {
        const auto& k = rows[r].key;
        std::string s = k.effect.empty() ? "sum" : (k.side == Side::positive ? "+" : "-") + k.effect.label();
        s += " " + basis_names[k.basis];
        if (!k.interaction.empty()) s += "*z" + k.interaction.label();
        return s;
    }

    std::size_t dependent_count() const {
        return static_cast<std::size_t>(
            std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.dependent; }));
    }

    /// The same system without rows flagged as dependent.
    BalanceSystem independent_rows() const {
        std::vector<Eigen::Index> keep;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (!rows[r].dependent) keep.push_back(static_cast<Eigen::Index>(r));
        }
        BalanceSystem out;
        out.basis_names = basis_names;
        out.full_design = full_design;
        out.B.resize(static_cast<Eigen::Index>(keep.size()), units());
        out.unit_targets.resize(static_cast<Eigen::Index>(keep.size()), units());
        out.b.resize(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            const auto r = keep[j];
            const auto jj = static_cast<Eigen::Index>(j);
            out.rows.push_back(rows[static_cast<std::size_t>(r)]);
            out.B.row(jj) = B.row(r);
            out.unit_targets.row(jj) = unit_targets.row(r);
            out.b[jj] = b[r];
        }
        return out;
    }
};

/// z-part of a row: A_{side}(K, z) * r_J(z) over all combinations (0 where unobserved).
inline std::vector<double> row_cell_function(const RowKey& key, const Design& design) {
    const auto q_total = design.cell_count();
    std::vector<double> a(q_total, 0.0);
    if (key.effect.empty()) {
        for (auto q : design.observed_cells()) a[q] = key.side == Side::positive ? 1.0 : 0.0;
    } else {
        const auto g = design.coefficients(key.effect);
        for (std::size_t q = 0; q < q_total; ++q) {
            a[q] = key.side == Side::positive ? std::max(g[q], 0.0) : std::max(-g[q], 0.0);
        }
    }
    const auto m = key.interaction.mask(design.factors());
    for (std::size_t q = 0; q < q_total; ++q) a[q] *= interaction_sign(m, q);
    return a;
}

/// Row coefficients B_{r,i} and per-unit targets b_{i,r} for an arbitrary key.
struct EvaluatedRow {
    Eigen::VectorXd coeffs;
    Eigen::VectorXd unit_targets;
};

inline EvaluatedRow evaluate_row(const RowKey& key, const Eigen::MatrixXd& basis_values,
                                 std::span<const std::size_t> cells, const Design& design) {
    const auto f = row_cell_function(key, design);
    double cell_sum = 0.0;
    for (auto q : design.observed_cells()) cell_sum += f[q];
    const double target_scale = design.effect_scale() * cell_sum;
    const auto n = static_cast<Eigen::Index>(cells.size());
    EvaluatedRow row{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    const auto s = static_cast<Eigen::Index>(key.basis);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = basis_values(s, i);
        row.coeffs[i] = f[cells[static_cast<std::size_t>(i)]] * h;
        row.unit_targets[i] = target_scale * h;
    }
    return row;
}

namespace detail {

inline std::vector<RowKey> constraint_keys(const BasisSpec& basis, const Design& design) {
    const auto terms = basis.terms(design.factors());
    std::vector<RowKey> keys;
    auto push_unique = [&keys](RowKey k) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(std::move(k));
    };
    if (design.is_full()) {
        for (const auto& t : terms) push_unique({EffectIndex{}, t.basis, t.interaction, Side::positive});
        for (const auto& e : design.effects()) {
            for (const auto& t : terms) {
                // A+_K r_K = A+_K, so J containing K reduces to J \ K.
                const auto j = e.is_subset_of(t.interaction) ? t.interaction.minus(e) : t.interaction;
                push_unique({e, t.basis, j, Side::positive});
            }
        }
    } else {
        for (const auto& e : design.effects()) {
            for (Side side : {Side::positive, Side::negative}) {
                for (const auto& t : terms) push_unique({e, t.basis, t.interaction, side});
            }
        }
    }
    return keys;
}

/// Flags rows whose cell function lies in the span of earlier rows on the same basis.
inline void flag_dependent_rows(std::vector<ConstraintRow>& rows, const Design& design,
                                double tol = 1e-10) {
    std::map<std::size_t, std::vector<Eigen::VectorXd>> bases; // orthonormal cell functions per h
    const auto& cells = design.observed_cells();
    for (auto& row : rows) {
        const auto f = row_cell_function(row.key, design);
        Eigen::VectorXd v(static_cast<Eigen::Index>(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) v[static_cast<Eigen::Index>(c)] = f[cells[c]];
        const double norm0 = v.norm();
        auto& q = bases[row.key.basis];
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& u : q) v -= u.dot(v) * u;
        }
        const double norm = v.norm();
        if (norm0 == 0.0 || norm <= tol * std::max(1.0, norm0)) {
            row.dependent = true;
        } else {
            q.push_back(v / norm);
        }
    }
}

} // namespace detail

/// Assembles the refined balance system for `data` under `design`.
inline BalanceSystem build_balance_system(const Dataset& data, const BasisSpec& basis, const Design& design) {
    if (data.size() == 0) throw DataError("dataset is empty");
    if (data.factors() != design.factors()) {
        throw DataError("dataset has " + std::to_string(data.factors()) + " factors, design expects " +
                        std::to_string(design.factors()));
    }
    if (basis.max_order() != design.max_order()) {
        throw ConfigError("basis and design disagree on the max interaction order");
    }
    const auto cells = data.cells();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!design.is_observed(cells[i])) {
            throw DomainError("row " + std::to_string(i) + " has unobserved combination " +
                              TreatmentCombination::from_index(design.factors(), cells[i]).to_string());
        }
    }
    const Eigen::MatrixXd H = basis.evaluate(data.X);

    BalanceSystem sys;
    sys.full_design = design.is_full();
    for (const auto& h : basis.functions()) sys.basis_names.push_back(h.name);
    for (auto& k : detail::constraint_keys(basis, design)) sys.rows.push_back({std::move(k), 0.0, false});

    const auto p = static_cast<Eigen::Index>(sys.rows.size());
    const auto n = data.size();
    sys.B.resize(p, n);
    sys.unit_targets.resize(p, n);
    for (Eigen::Index r = 0; r < p; ++r) {
        auto row = evaluate_row(sys.rows[static_cast<std::size_t>(r)].key, H, cells, design);
        sys.B.row(r) = row.coeffs.transpose();
        sys.unit_targets.row(r) = row.unit_targets.transpose();
    }
    sys.b = sys.unit_targets.rowwise().sum();
    for (Eigen::Index r = 0; r < p; ++r) sys.rows[static_cast<std::size_t>(r)].target = sys.b[r];
    detail::flag_dependent_rows(sys.rows, design);
    return sys;
}

struct ResidualReport {
    Eigen::VectorXd residual; // B w - b
    double max_abs = 0.0;
    /// Largest |residual| among the rows of each effect label ("0" for summary rows).
    std::map<std::string, double> per_effect;
};

inline ResidualReport balance_residuals(const Eigen::VectorXd& weights, const BalanceSystem& sys) {
    if (weights.size() != sys.units()) {
        throw DomainError("weights have length " + std::to_string(weights.size()) + ", system has " +
                          std::to_string(sys.units()) + " units");
    }
    ResidualReport rep;
    rep.residual = sys.B * weights - sys.b;
    rep.max_abs = rep.residual.size() ? rep.residual.cwiseAbs().maxCoeff() : 0.0;
    for (std::size_t r = 0; r < sys.rows.size(); ++r) {
        auto& slot = rep.per_effect[sys.rows[r].key.effect.label()];
        slot = std::max(slot, std::abs(rep.residual[static_cast<Eigen::Index>(r)]));
    }
    return rep;
}

} // namespace facweights
