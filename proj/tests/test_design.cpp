#include <catch_amalgamated.hpp>

#include <random>

#include "facweights/design.hpp"

using namespace facweights;

namespace {

Eigen::MatrixXd example_identification() {
    Eigen::MatrixXd m(7, 7);
    m << 2, 0, 0, 2, 0, 2, 2,
         0, -2, -2, 0, 0, 2, 2,
         0, -2, 0, 2, -2, 0, 2,
         0, 0, -2, 2, -2, 2, 0,
         2, 0, -2, 0, -2, 0, 2,
         2, -2, 0, 0, -2, 2, 0,
         2, -2, -2, 2, 0, 0, 0;
    return m;
}

} // namespace

TEST_CASE("combinations enumerate lexicographically with the last factor fastest") {
    const auto k2 = enumerate_combinations(2);
    REQUIRE(k2.size() == 4);
    CHECK(k2[0].levels() == std::vector<int>{-1, -1});
    CHECK(k2[1].levels() == std::vector<int>{-1, 1});
    CHECK(k2[2].levels() == std::vector<int>{1, -1});
    CHECK(k2[3].levels() == std::vector<int>{1, 1});

    const auto k3 = enumerate_combinations(3);
    CHECK(k3.front().levels() == std::vector<int>{-1, -1, -1});
    CHECK(k3[1].levels() == std::vector<int>{-1, -1, 1});
    CHECK(k3.back().levels() == std::vector<int>{1, 1, 1});
    for (std::size_t q = 0; q < k3.size(); ++q) CHECK(k3[q].index() == q);
}

TEST_CASE("factor count outside [2, 20] is a configuration error") {
    CHECK_THROWS_AS(enumerate_combinations(1), ConfigError);
    CHECK_THROWS_AS(enumerate_combinations(21), ConfigError);
    CHECK_THROWS_AS(TreatmentCombination(std::vector<int>{1}), ConfigError);
    CHECK_THROWS_AS(TreatmentCombination(std::vector<int>{1, 0}), DomainError);
}

TEST_CASE("contrast vectors") {
    CHECK(contrast_vector({1}, 3).entries == std::vector<int>{-1, -1, -1, -1, 1, 1, 1, 1});
    CHECK(contrast_vector({2}, 3).entries == std::vector<int>{-1, -1, 1, 1, -1, -1, 1, 1});
    CHECK(contrast_vector({3}, 3).entries == std::vector<int>{-1, 1, -1, 1, -1, 1, -1, 1});
    CHECK(contrast_vector({1, 2}, 3).entries == std::vector<int>{1, 1, -1, -1, -1, -1, 1, 1});
    CHECK(contrast_vector({}, 2).entries == std::vector<int>{1, 1, 1, 1});
    CHECK_THROWS_AS(contrast_vector({4}, 3), DomainError);

    SECTION("half the entries of a nonempty contrast are +1") {
        for (int k = 2; k <= 6; ++k) {
            for (const auto& e : effect_index_set(k, k)) {
                const auto g = contrast_vector(e, k);
                CHECK(std::count(g.entries.begin(), g.entries.end(), 1) == (1 << (k - 1)));
            }
        }
    }
}

TEST_CASE("effect index sets") {
    const auto e31 = effect_index_set(3, 1);
    REQUIRE(e31.size() == 3);
    CHECK(e31[0] == EffectIndex{1});
    CHECK(e31[2] == EffectIndex{3});
    CHECK(effect_index_set(3, 2).size() == 6);
    CHECK(effect_index_set(5, 2).size() == 15);
    CHECK(effect_index_set(5, 2)[5] == EffectIndex{1, 2});
    CHECK_THROWS_AS(effect_index_set(3, 0), DomainError);
    CHECK_THROWS_AS(effect_index_set(3, 4), DomainError);
    CHECK(EffectIndex::parse("1:2") == EffectIndex{1, 2});
    CHECK(EffectIndex{2, 1}.label() == "1:2");
    CHECK_THROWS_AS(EffectIndex({1, 1}), DomainError);
}

TEST_CASE("full K=3 design matrix matches the reference") {
    Eigen::MatrixXd expected(8, 8);
    expected << 1, -1, -1, -1, 1, 1, 1, -1,
                1, -1, -1, 1, 1, -1, -1, 1,
                1, -1, 1, -1, -1, 1, -1, 1,
                1, -1, 1, 1, -1, -1, 1, -1,
                1, 1, -1, -1, -1, -1, 1, 1,
                1, 1, -1, 1, -1, 1, -1, -1,
                1, 1, 1, -1, 1, -1, -1, -1,
                1, 1, 1, 1, 1, 1, 1, 1;
    const auto d = design_matrix(3);
    CHECK(d.G == expected);
    CHECK(d.effects[4] == EffectIndex{1, 2});
}

TEST_CASE("design matrix columns are orthogonal") {
    for (int k = 2; k <= 6; ++k) {
        const auto d = design_matrix(k);
        const Eigen::MatrixXd gram = d.G.transpose() * d.G;
        const double q = static_cast<double>(1 << k);
        CHECK(gram.isApprox(q * Eigen::MatrixXd::Identity(d.G.cols(), d.G.cols())));
        CHECK((d.G.col(0).array() == 1.0).all());
    }
}

TEST_CASE("reconstruction through G is the identity on non-negligible effects") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    for (int k = 2; k <= 5; ++k) {
        for (int kp = 1; kp <= k; ++kp) {
            const auto d = design_matrix(k);
            Eigen::VectorXd tau = Eigen::VectorXd::Zero(d.G.cols());
            for (Eigen::Index c = 0; c < tau.size(); ++c) {
                if (d.effects[static_cast<std::size_t>(c)].order() <= kp) tau[c] = normal(rng);
            }
            const Eigen::VectorXd mean = 0.5 * d.G * tau;
            const Eigen::VectorXd back = d.G.transpose() * mean / static_cast<double>(1 << (k - 1));
            CHECK((back - tau).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("incomplete K=3 example: one unobserved combination") {
    const auto info = build_incomplete_design(3, 2, {TreatmentCombination({1, 1, 1})});
    REQUIRE(info.observed.size() == 7);
    REQUIRE(info.unobserved == std::vector<std::size_t>{7});

    Eigen::RowVectorXd implied(7);
    implied << 1, -1, -1, 1, -1, 1, 1;
    CHECK((info.implied_unobserved - implied).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(info.implied_unobserved.array().round().matrix() == implied);

    CHECK((info.effective_contrasts - example_identification()).cwiseAbs().maxCoeff() < 1e-12);
    // Square invertible G_uu: the pseudoinverse is the inverse.
    CHECK(info.uu_singular_values.size() == 1);
    CHECK(info.min_singular_value() == Catch::Approx(1.0));
}

TEST_CASE("incomplete K=3 example: two unobserved combinations are not identified") {
    CHECK_THROWS_AS(build_incomplete_design(3, 2, {TreatmentCombination({1, 1, -1}), TreatmentCombination({1, 1, 1})}),
                    IdentificationError);
    // Too few negligible effects for the unobserved cells.
    CHECK_THROWS_AS(build_incomplete_design(3, 2,
                                            {TreatmentCombination({1, 1, -1}), TreatmentCombination({-1, 1, 1})}),
                    IdentificationError);
}

TEST_CASE("incomplete design with nothing unobserved equals the full contrasts") {
    const auto info = build_incomplete_design(3, 2, {});
    const auto d = design_matrix(3);
    for (std::size_t r = 0; r < info.effects.size(); ++r) {
        const auto col = std::find(d.effects.begin(), d.effects.end(), info.effects[r]) - d.effects.begin();
        CHECK(info.effective_contrasts.row(static_cast<Eigen::Index>(r)).transpose() == d.G.col(col));
    }
}

TEST_CASE("incomplete identification reproduces the full-design effects") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal;
    struct Case {
        int k;
        int kp;
        std::vector<std::size_t> missing;
    };
    const std::vector<Case> cases{{3, 2, {7}}, {3, 1, {0, 7}}, {4, 2, {15}}, {4, 2, {0, 15}}, {4, 1, {3, 5, 12}},
                                  {5, 2, {31, 0, 6}}};
    for (const auto& c : cases) {
        std::vector<TreatmentCombination> unobs;
        for (auto q : c.missing) unobs.push_back(TreatmentCombination::from_index(c.k, q));
        const auto info = build_incomplete_design(c.k, c.kp, unobs);
        const auto d = design_matrix(c.k);
        Eigen::VectorXd tau = Eigen::VectorXd::Zero(d.G.cols());
        for (Eigen::Index j = 0; j < tau.size(); ++j) {
            if (d.effects[static_cast<std::size_t>(j)].order() <= c.kp) tau[j] = normal(rng);
        }
        const Eigen::VectorXd mean = 0.5 * d.G * tau;
        Eigen::VectorXd observed(static_cast<Eigen::Index>(info.observed.size()));
        for (std::size_t j = 0; j < info.observed.size(); ++j) {
            observed[static_cast<Eigen::Index>(j)] = mean[static_cast<Eigen::Index>(info.observed[j])];
        }
        const Eigen::VectorXd identified =
            info.effective_contrasts * observed / static_cast<double>(1 << (c.k - 1));
        for (std::size_t r = 0; r < info.effects.size(); ++r) {
            const auto col = std::find(d.effects.begin(), d.effects.end(), info.effects[r]) - d.effects.begin();
            CHECK(identified[static_cast<Eigen::Index>(r)] == Catch::Approx(tau[col]).margin(1e-8));
        }
    }
}

TEST_CASE("Design exposes coefficients for full and incomplete designs") {
    const auto full = Design::full(3, 1);
    CHECK(full.effects().size() == 3);
    CHECK(full.effect_scale() == 0.25);
    CHECK(full.coefficients({1})[0] == -1.0);

    const auto inc = Design::incomplete(build_incomplete_design(3, 2, {TreatmentCombination({1, 1, 1})}));
    CHECK_FALSE(inc.is_full());
    CHECK_FALSE(inc.is_observed(7));
    const auto g1 = inc.coefficients({1});
    CHECK(g1 == std::vector<double>{0, -2, -2, 0, 0, 2, 2, 0});
    CHECK_THROWS_AS(inc.coefficients({1, 2, 3}), DomainError);
    CHECK_THROWS_AS(inc.require_estimable({1, 2, 3}), DomainError);
}
