#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "facweights/simulation.hpp"

using namespace facweights;

namespace {

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST_CASE("assignment coefficients and probabilities") {
    const auto beta = assignment_coefficients(ScenarioKind::three_factor);
    REQUIRE(beta.size() == 3);
    CHECK(beta[0] == std::array<double, 5>{0.25, 0.5, 0.0, 0.75, 1.0});
    const auto five = assignment_coefficients(ScenarioKind::five_factor);
    REQUIRE(five.size() == 5);
    CHECK(five[4] == std::array<double, 5>{0.0, 0.75, -0.5, 0.5, 0.25});
    const std::array<double, 5> zero{};
    for (const auto& b : five) CHECK(assignment_probability(b, zero) == 0.5);
}

TEST_CASE("true effects agree with a brute-force contrast over combinations") {
    // Average E[Y(z) | X] over common X draws for every z, then apply each contrast.
    std::mt19937_64 rng(101);
    std::normal_distribution<double> normal;
    const int draws = 200000;
    std::vector<std::array<double, 5>> xs(draws);
    for (auto& x : xs) {
        for (auto& v : x) v = normal(rng);
    }
    for (auto kind : {ScenarioKind::three_factor, ScenarioKind::five_factor}) {
        Scenario sc;
        sc.kind = kind;
        const int k = sc.factors();
        for (auto outcome : sc.outcomes()) {
            std::vector<double> cell_mean(combination_count(k), 0.0);
            for (std::size_t q = 0; q < cell_mean.size(); ++q) {
                const auto z = TreatmentCombination::from_index(k, q).levels();
                double s = 0.0;
                for (const auto& x : xs) s += outcome_mean(kind, outcome, x, z);
                cell_mean[q] = s / draws;
            }
            const auto truth = true_effects(kind, outcome, sc.order());
            for (const auto& [effect, tau] : truth) {
                const auto g = contrast_vector(effect, k);
                double est = 0.0;
                for (std::size_t q = 0; q < cell_mean.size(); ++q) est += g.entries[q] * cell_mean[q];
                est /= static_cast<double>(combination_count(k - 1));
                CHECK(est == Catch::Approx(tau).margin(0.08));
            }
        }
    }
    const auto three = true_effects(ScenarioKind::three_factor, Outcome::Y1, 1);
    CHECK(three.at(EffectIndex{3}) == 4.0);
    CHECK(three.at(EffectIndex{1}) == 0.0);
    CHECK(true_effects(ScenarioKind::five_factor, Outcome::Y2, 2).at(EffectIndex{4, 5}) == 2.0);
}

TEST_CASE("generated data has the configured shape and is reproducible") {
    Scenario sc;
    sc.n = 300;
    sc.outcome = Outcome::Y2;
    const auto a = generate(sc, 3);
    const auto b = generate(sc, 3);
    const auto c = generate(sc, 4);
    CHECK(a.data.size() == 300);
    CHECK(a.data.factors() == 3);
    CHECK(a.data.covariates() == 5);
    CHECK_NOTHROW(a.data.validate());
    CHECK(a.data.Y == b.data.Y);
    CHECK(a.data.Z == b.data.Z);
    CHECK(a.data.Y != c.data.Y);
    CHECK(a.truth.at(EffectIndex{3}) == 4.0);

    // Outcome choice does not change the shared (Z, X) draw.
    auto sc1 = sc;
    sc1.outcome = Outcome::Y1;
    CHECK(generate(sc1, 3).data.X == a.data.X);

    auto hetero = sc;
    hetero.heteroskedastic_c = 10.0;
    const auto h = generate(hetero, 3);
    CHECK(h.data.X != a.data.X); // the stream interleaves variance draws
}

TEST_CASE("scenario validation") {
    Scenario sc;
    sc.n = 50;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc.n = 200;
    sc.kind = ScenarioKind::five_factor;
    sc.outcome = Outcome::Y3;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc.outcome = Outcome::Y1;
    sc.heteroskedastic_c = -1.0;
    CHECK_THROWS_AS(sc.validate(), ConfigError);

    StudyConfig cfg;
    cfg.reps = 0;
    CHECK_THROWS_AS(run_study(cfg), ConfigError);
    CHECK_THROWS_AS(parse_scenario_kind("four-factor"), ConfigError);
    CHECK(parse_scenario_kind("three-factor") == ScenarioKind::three_factor);
    CHECK(parse_estimator("weighting-interaction") == Estimator::weighting_interaction);
}

TEST_CASE("study aggregation") {
    StudyConfig cfg;
    cfg.scenario.n = 400;
    cfg.scenario.seed = 9;
    cfg.reps = 30;

    const auto a = run_study(cfg);
    CHECK(a.rows.size() == 3 * 4 * 3);

    SECTION("reproducible and independent of the thread count") {
        auto threaded = cfg;
        threaded.threads = 3;
        const auto b = run_study(threaded);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t r = 0; r < a.rows.size(); ++r) {
            CHECK(a.rows[r].estimates == b.rows[r].estimates);
            CHECK(a.rows[r].bias == b.rows[r].bias);
            CHECK(a.rows[r].cons_var == b.rows[r].cons_var);
        }
        std::ostringstream sa;
        std::ostringstream sb;
        write_study_csv(sa, a);
        write_study_csv(sb, b);
        CHECK(sa.str() == sb.str());
    }

    SECTION("RMSE identity and bounds") {
        for (const auto& r : a.rows) {
            REQUIRE(r.used == 30);
            REQUIRE(r.sim_var.has_value());
            const double var = *r.sim_var / static_cast<double>(cfg.scenario.n);
            CHECK(std::abs(r.rmse * r.rmse - (r.bias * r.bias + var)) <= 1e-10 * std::max(1.0, r.rmse * r.rmse));
            CHECK(r.rmse * r.rmse >= r.bias * r.bias - 1e-12);
            if (r.coverage) {
                CHECK(*r.coverage >= 0.0);
                CHECK(*r.coverage <= 1.0);
            }
            const bool weighting =
                r.estimator == Estimator::weighting_additive || r.estimator == Estimator::weighting_interaction;
            CHECK(r.cons_var.has_value() == weighting);
        }
    }

    SECTION("CSV has one row per estimator and effect for each outcome") {
        std::ostringstream os;
        write_study_csv(os, a, Outcome::Y1);
        CHECK(count_lines(os.str()) == 1 + 4 * 3);
        CHECK(os.str().rfind("outcome,estimator,effect,bias,rmse,sim_var,cons_var,var_ratio,coverage,failures\n", 0) == 0);
    }
}

TEST_CASE("single replication leaves the simulated variance absent") {
    StudyConfig cfg;
    cfg.scenario.n = 300;
    cfg.reps = 1;
    cfg.outcomes = {Outcome::Y1};
    cfg.estimators = {Estimator::regression, Estimator::weighting_additive};
    const auto rep = run_study(cfg);
    const auto data = generate(cfg.scenario, 0).data;
    const auto coef = ols_regression_baseline(data, 1, {EffectIndex{1}});
    const auto& row = rep.row(Outcome::Y1, Estimator::regression, EffectIndex{1});
    CHECK(row.bias == coef.at(EffectIndex{1}) - 0.0);
    CHECK_FALSE(row.sim_var.has_value());
    CHECK_FALSE(rep.row(Outcome::Y1, Estimator::weighting_additive, EffectIndex{1}).var_ratio.has_value());
}

TEST_CASE("five-factor study reports every main effect and two-way interaction") {
    StudyConfig cfg;
    cfg.scenario.kind = ScenarioKind::five_factor;
    cfg.scenario.n = 2000;
    cfg.reps = 2;
    cfg.outcomes = {Outcome::Y2};
    const auto rep = run_study(cfg);
    std::ostringstream os;
    write_study_csv(os, rep, Outcome::Y2);
    CHECK(count_lines(os.str()) == 1 + 2 * 15);
}

TEST_CASE("all-failed estimator is a study error") {
    StudyConfig cfg;
    cfg.scenario.n = 200;
    cfg.reps = 2;
    cfg.estimators = {Estimator::weighting_interaction};
    cfg.fit.solver.max_iters = 1;
    CHECK_THROWS_AS(run_study(cfg), StudyError);
}

TEST_CASE("adjusted estimators are unbiased under the additive outcome") {
    StudyConfig cfg;
    cfg.scenario.n = 1000;
    cfg.scenario.seed = 2024;
    cfg.reps = 1000;
    cfg.outcomes = {Outcome::Y1};
    cfg.estimators = {Estimator::regression, Estimator::weighting_additive, Estimator::weighting_interaction};
    const auto rep = run_study(cfg);
    for (const auto& r : rep.rows) {
        const double mc_se = r.rmse / std::sqrt(static_cast<double>(r.used));
        INFO(to_string(r.estimator) << " " << r.effect.label() << " bias " << r.bias << " se " << mc_se);
        CHECK(std::abs(r.bias) < 3.0 * mc_se);
    }
}
