#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "facweights/dataset.hpp"
#include "facweights/design.hpp"

namespace facweights::testing {

/// One unit per combination of a full 2^K design, X constant 1.
inline Dataset one_unit_per_cell(int factors) {
    const auto q = static_cast<Eigen::Index>(combination_count(factors));
    Dataset d;
    d.Z.resize(q, factors);
    d.X = Eigen::MatrixXd::Ones(q, 1);
    d.Y = Eigen::VectorXd::Zero(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const auto z = TreatmentCombination::from_index(factors, static_cast<std::size_t>(i));
        for (int k = 0; k < factors; ++k) d.Z(i, k) = z.levels()[static_cast<std::size_t>(k)];
    }
    return d;
}

/// Random data where every combination appears: the first 2^K units cycle through the
/// cells, the rest draw levels uniformly. X ~ N(0,1), Y ~ linear in X and Z plus noise.
inline Dataset random_dataset(std::mt19937_64& rng, int factors, Eigen::Index n, Eigen::Index covariates,
                              const std::vector<std::size_t>& allowed_cells = {}) {
    std::normal_distribution<double> normal;
    Dataset d;
    d.Z.resize(n, factors);
    d.X.resize(n, covariates);
    d.Y.resize(n);
    std::vector<std::size_t> cells = allowed_cells;
    if (cells.empty()) {
        for (std::size_t q = 0; q < combination_count(factors); ++q) cells.push_back(q);
    }
    std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto q = static_cast<std::size_t>(i) < cells.size() ? cells[static_cast<std::size_t>(i)] : cells[pick(rng)];
        const auto z = TreatmentCombination::from_index(factors, q);
        for (int k = 0; k < factors; ++k) d.Z(i, k) = z.levels()[static_cast<std::size_t>(k)];
        for (Eigen::Index c = 0; c < covariates; ++c) d.X(i, c) = normal(rng);
        d.Y[i] = d.X.row(i).sum() + 2.0 * d.Z(i, 0) + normal(rng);
    }
    return d;
}

} // namespace facweights::testing
