#pragma once

// Monte Carlo studies: the three- and five-factor data-generating processes with
// logistic assignment, and a runner that aggregates bias, RMSE, variance ratios and
// coverage per (outcome, estimator, effect).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "basis.hpp"
#include "dataset.hpp"
#include "design.hpp"
#include "errors.hpp"
#include "estimation.hpp"
#include "fit.hpp"

namespace facweights {

enum class ScenarioKind { three_factor, five_factor };
enum class Outcome { Y1, Y2, Y3 };
enum class Estimator { unadjusted, regression, weighting_additive, weighting_interaction };

inline std::string to_string(ScenarioKind k) { return k == ScenarioKind::three_factor ? "three_factor" : "five_factor"; }

inline std::string to_string(Outcome o) {
    switch (o) {
    case Outcome::Y1: return "Y1";
    case Outcome::Y2: return "Y2";
    case Outcome::Y3: return "Y3";
    }
    return "?";
}

inline std::string to_string(Estimator e) {
    switch (e) {
    case Estimator::unadjusted: return "unadjusted";
    case Estimator::regression: return "regression";
    case Estimator::weighting_additive: return "weighting_additive";
    case Estimator::weighting_interaction: return "weighting_interaction";
    }
    return "?";
}

inline ScenarioKind parse_scenario_kind(std::string s) {
    std::replace(s.begin(), s.end(), '-', '_');
    if (s == "three_factor") return ScenarioKind::three_factor;
    if (s == "five_factor") return ScenarioKind::five_factor;
    throw ConfigError("unknown scenario '" + s + "' (expected three-factor or five-factor)");
}

inline Outcome parse_outcome(const std::string& s) {
    if (s == "Y1" || s == "y1") return Outcome::Y1;
    if (s == "Y2" || s == "y2") return Outcome::Y2;
    if (s == "Y3" || s == "y3") return Outcome::Y3;
    throw ConfigError("unknown outcome '" + s + "' (expected Y1, Y2 or Y3)");
}

inline Estimator parse_estimator(std::string s) {
    std::replace(s.begin(), s.end(), '-', '_');
    if (s == "unadjusted") return Estimator::unadjusted;
    if (s == "regression") return Estimator::regression;
    if (s == "weighting_additive" || s == "additive") return Estimator::weighting_additive;
    if (s == "weighting_interaction" || s == "interaction") return Estimator::weighting_interaction;
    throw ConfigError("unknown estimator '" + s + "'");
}

inline constexpr int kSimCovariates = 5;

struct Scenario {
    ScenarioKind kind = ScenarioKind::three_factor;
    Eigen::Index n = 1000;
    Outcome outcome = Outcome::Y1;
    /// Highest interaction order estimated; 0 picks the study default (1 for three
    /// factors, 2 for five).
    int max_order = 0;
    /// Error variances drawn from U[0, C] when set.
    std::optional<double> heteroskedastic_c;
    std::uint64_t seed = 42;

    int factors() const { return kind == ScenarioKind::three_factor ? 3 : 5; }
    int order() const { return max_order > 0 ? max_order : (kind == ScenarioKind::three_factor ? 1 : 2); }

    std::vector<Outcome> outcomes() const {
        if (kind == ScenarioKind::three_factor) return {Outcome::Y1, Outcome::Y2, Outcome::Y3};
        return {Outcome::Y1, Outcome::Y2};
    }

    void validate() const {
        if (n < 100) throw ConfigError("scenario sample size must be at least 100");
        if (outcome == Outcome::Y3 && kind != ScenarioKind::three_factor) {
            throw ConfigError("outcome Y3 exists only in the three-factor scenario");
        }
        if (order() < 1 || order() > factors()) throw ConfigError("max order out of range for the scenario");
        if (heteroskedastic_c && !(*heteroskedastic_c > 0)) {
            throw ConfigError("heteroskedasticity bound C must be positive");
        }
    }
};

/// Logistic assignment coefficients, one row per factor.
inline std::vector<std::array<double, kSimCovariates>> assignment_coefficients(ScenarioKind kind) {
    std::vector<std::array<double, kSimCovariates>> beta{
        {0.25, 0.5, 0.0, 0.75, 1.0},
        {0.75, 0.25, 1.0, 0.0, 0.5},
        {1.0, 0.0, 0.75, 0.5, 0.25},
    };
    if (kind == ScenarioKind::five_factor) {
        beta.push_back({0.25, -0.25, 1.0, 0.75, 0.5});
        beta.push_back({0.0, 0.75, -0.5, 0.5, 0.25});
    }
    return beta;
}

inline double assignment_probability(const std::array<double, kSimCovariates>& beta, std::span<const double> x) {
    double eta = 0.0;
    for (int d = 0; d < kSimCovariates; ++d) eta += beta[static_cast<std::size_t>(d)] * x[static_cast<std::size_t>(d)];
    return 1.0 / (1.0 + std::exp(-eta));
}

/// E[Y(z) | X = x] for the study outcomes (z coded +-1, factor k at z[k-1]).
inline double outcome_mean(ScenarioKind kind, Outcome outcome, std::span<const double> x, std::span<const int> z) {
    double y = 0.0;
    switch (outcome) {
    case Outcome::Y1:
        y = 6 * x[0] + 5 * x[1] + 4 * x[2] + 3 * x[4] + 2 * z[2];
        break;
    case Outcome::Y2:
        y = 6 * x[0] + 5 * x[1] + 4 * x[2] * z[0] + 3 * x[4] * z[1] + 2 * z[2];
        break;
    case Outcome::Y3:
        y = 6 * std::sin(x[0]) + 5 * x[1] + 4 * x[2] * z[0] + 3 * std::max(x[3], x[4]) * z[1] + 2 * z[2];
        break;
    }
    if (kind == ScenarioKind::five_factor) y += z[3] * z[4];
    return y;
}

/// Population factorial effects of the study outcomes, keyed by effect.
inline std::map<EffectIndex, double> true_effects(ScenarioKind kind, Outcome outcome, int max_order) {
    const int k = kind == ScenarioKind::three_factor ? 3 : 5;
    std::map<EffectIndex, double> tau;
    for (const auto& e : effect_index_set(k, max_order)) tau[e] = 0.0;
    tau[EffectIndex{3}] = 4.0;
    // 3 max(X4, X5) z_2 with E[max of two iid N(0,1)] = 1 / sqrt(pi).
    if (outcome == Outcome::Y3) tau[EffectIndex{2}] = 6.0 / std::sqrt(std::numbers::pi);
    if (kind == ScenarioKind::five_factor && max_order >= 2) tau[EffectIndex{4, 5}] = 2.0;
    return tau;
}

/// One replication: shared (Z, X) and one outcome column per study outcome.
struct SimulatedDraw {
    Dataset base; // Y left empty
    std::map<Outcome, Eigen::VectorXd> outcomes;

    Dataset with_outcome(Outcome o) const {
        auto it = outcomes.find(o);
        if (it == outcomes.end()) throw ConfigError("outcome " + to_string(o) + " is not part of this scenario");
        Dataset d = base;
        d.Y = it->second;
        return d;
    }
};

/// Independent stream for replication `rep` of a study seeded with `seed`.
inline std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
    return std::mt19937_64(seq);
}

inline SimulatedDraw draw_replication(const Scenario& sc, std::uint64_t rep) {
    sc.validate();
    auto rng = replication_rng(sc.seed, rep);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    const int k = sc.factors();
    const auto beta = assignment_coefficients(sc.kind);
    const auto outcomes = sc.outcomes();

    SimulatedDraw out;
    out.base.Z.resize(sc.n, k);
    out.base.X.resize(sc.n, kSimCovariates);
    for (int d = 0; d < kSimCovariates; ++d) out.base.covariate_names.push_back("X" + std::to_string(d + 1));
    for (auto o : outcomes) out.outcomes[o].resize(sc.n);

    std::array<double, kSimCovariates> x{};
    std::vector<int> z(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < sc.n; ++i) {
        for (auto& v : x) v = normal(rng);
        for (int f = 0; f < k; ++f) {
            const double p = assignment_probability(beta[static_cast<std::size_t>(f)], x);
            z[static_cast<std::size_t>(f)] = unif(rng) < p ? 1 : -1;
        }
        for (int d = 0; d < kSimCovariates; ++d) out.base.X(i, d) = x[static_cast<std::size_t>(d)];
        for (int f = 0; f < k; ++f) out.base.Z(i, f) = z[static_cast<std::size_t>(f)];
        for (auto o : outcomes) {
            double sd = 1.0;
            if (sc.heteroskedastic_c) sd = std::sqrt(*sc.heteroskedastic_c * unif(rng));
            out.outcomes[o][i] = outcome_mean(sc.kind, o, x, z) + sd * normal(rng);
        }
    }
    return out;
}

struct GeneratedData {
    Dataset data;
    std::map<EffectIndex, double> truth;
};

/// Replication `rep` of the scenario with its own outcome column.
inline GeneratedData generate(const Scenario& sc, std::uint64_t rep) {
    const auto draw = draw_replication(sc, rep);
    return {draw.with_outcome(sc.outcome), true_effects(sc.kind, sc.outcome, sc.order())};
}

/// Bases used by the weighting estimators: a constant and one identity basis per covariate.
inline BasisSpec study_basis(const Dataset& data, ModelFlavor flavor, int max_order) {
    return BasisSpec(identity_bases(data, true), flavor, max_order);
}

inline std::vector<Estimator> default_estimators(ScenarioKind kind) {
    if (kind == ScenarioKind::three_factor) {
        return {Estimator::unadjusted, Estimator::regression, Estimator::weighting_additive,
                Estimator::weighting_interaction};
    }
    return {Estimator::regression, Estimator::weighting_interaction};
}

struct StudyConfig {
    Scenario scenario;
    std::vector<Outcome> outcomes;     // empty: every outcome of the scenario
    std::vector<Estimator> estimators; // empty: the scenario defaults
    int reps = 1000;
    unsigned threads = 1; // 0: hardware concurrency
    FitOptions fit;
};

/// Estimates of one replication for one (outcome, estimator, effect).
struct ReplicateValue {
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double sigma2 = std::numeric_limits<double>::quiet_NaN();
    bool failed = true;
};

struct StudyRow {
    Outcome outcome = Outcome::Y1;
    Estimator estimator = Estimator::unadjusted;
    EffectIndex effect;
    double truth = 0.0;
    int used = 0;
    int failures = 0;
    double bias = 0.0;
    double rmse = 0.0;
    std::optional<double> sim_var;  // N * variance of the estimates
    std::optional<double> cons_var; // mean sandwich variance
    std::optional<double> var_ratio;
    std::optional<double> coverage;
    /// sqrt(N) (estimate - truth) / sigma per successful replication (weighting only).
    std::vector<double> studentized;
    std::vector<double> estimates;
};

struct StudyReport {
    Scenario scenario;
    int reps = 0;
    double wall_time = 0.0;
    std::vector<StudyRow> rows;

    const StudyRow& row(Outcome o, Estimator e, const EffectIndex& effect) const {
        for (const auto& r : rows) {
            if (r.outcome == o && r.estimator == e && r.effect == effect) return r;
        }
        throw StudyError("no study row for " + to_string(o) + "/" + to_string(e) + "/" + effect.label());
    }

    std::vector<StudyRow> rows_for(Outcome o) const {
        std::vector<StudyRow> out;
        for (const auto& r : rows) {
            if (r.outcome == o) out.push_back(r);
        }
        return out;
    }
};

namespace detail {

/// values[outcome][estimator][effect] for one replication.
using ReplicateTable = std::vector<std::vector<std::vector<ReplicateValue>>>;

inline ReplicateTable run_replication(const StudyConfig& cfg, const std::vector<Outcome>& outcomes,
                                      const std::vector<Estimator>& estimators,
                                      const std::vector<EffectIndex>& effects, std::uint64_t rep) {
    const auto& sc = cfg.scenario;
    const auto draw = draw_replication(sc, rep);
    const auto design = Design::full(sc.factors(), sc.order());
    ReplicateTable table(outcomes.size(),
                         std::vector<std::vector<ReplicateValue>>(estimators.size(),
                                                                  std::vector<ReplicateValue>(effects.size())));
    std::vector<Dataset> data;
    for (auto o : outcomes) data.push_back(draw.with_outcome(o));

    for (std::size_t e = 0; e < estimators.size(); ++e) {
        const auto est = estimators[e];
        if (est == Estimator::unadjusted || est == Estimator::regression) {
            for (std::size_t o = 0; o < outcomes.size(); ++o) {
                try {
                    if (est == Estimator::unadjusted) {
                        for (std::size_t j = 0; j < effects.size(); ++j) {
                            table[o][e][j] = {unadjusted_baseline(data[o], effects[j]),
                                              std::numeric_limits<double>::quiet_NaN(), false};
                        }
                    } else {
                        const auto coef = ols_regression_baseline(data[o], sc.order(), effects);
                        for (std::size_t j = 0; j < effects.size(); ++j) {
                            table[o][e][j] = {coef.at(effects[j]), std::numeric_limits<double>::quiet_NaN(), false};
                        }
                    }
                } catch (const Error&) {
                    // Left marked as failed.
                }
            }
            continue;
        }
        const auto flavor = est == Estimator::weighting_additive ? ModelFlavor::additive : ModelFlavor::heterogeneous;
        try {
            const auto fit = fit_weights(draw.base, study_basis(draw.base, flavor, sc.order()), design, cfg.fit);
            if (!fit.converged()) continue;
            const VarianceContext ctx(fit.system, fit.solution);
            for (std::size_t o = 0; o < outcomes.size(); ++o) {
                for (std::size_t j = 0; j < effects.size(); ++j) {
                    const auto point = estimate_effect(data[o], fit.weights(), effects[j], design);
                    const Eigen::VectorXd dy = contrast_signs(data[o], effects[j], design).cwiseProduct(data[o].Y);
                    table[o][e][j] = {point.tau_hat, ctx.variance(dy, point.tau_hat), false};
                }
            }
        } catch (const Error&) {
            // Infeasible draws and singular variance matrices count as failures.
        }
    }
    return table;
}

} // namespace detail

inline StudyReport run_study(const StudyConfig& cfg) {
    cfg.scenario.validate();
    if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
    const auto& sc = cfg.scenario;
    const auto outcomes = cfg.outcomes.empty() ? sc.outcomes() : cfg.outcomes;
    for (auto o : outcomes) {
        if (o == Outcome::Y3 && sc.kind != ScenarioKind::three_factor) {
            throw ConfigError("outcome Y3 exists only in the three-factor scenario");
        }
    }
    const auto estimators = cfg.estimators.empty() ? default_estimators(sc.kind) : cfg.estimators;
    const auto effects = effect_index_set(sc.factors(), sc.order());

    const auto start = std::chrono::steady_clock::now();
    std::vector<detail::ReplicateTable> results(static_cast<std::size_t>(cfg.reps));
    unsigned threads = cfg.threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : cfg.threads;
    threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.reps));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < cfg.reps; r = next++) {
            results[static_cast<std::size_t>(r)] =
                detail::run_replication(cfg, outcomes, estimators, effects, static_cast<std::uint64_t>(r));
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    StudyReport report;
    report.scenario = sc;
    report.reps = cfg.reps;
    const double nn = static_cast<double>(sc.n);
    for (std::size_t o = 0; o < outcomes.size(); ++o) {
        const auto truth = true_effects(sc.kind, outcomes[o], sc.order());
        for (std::size_t e = 0; e < estimators.size(); ++e) {
            bool any_success = false;
            for (std::size_t j = 0; j < effects.size(); ++j) {
                StudyRow row;
                row.outcome = outcomes[o];
                row.estimator = estimators[e];
                row.effect = effects[j];
                row.truth = truth.at(effects[j]);
                double sum = 0.0;
                double sq = 0.0;
                double var_sum = 0.0;
                int var_count = 0;
                int covered = 0;
                for (const auto& rep : results) {
                    const auto& v = rep[o][e][j];
                    if (v.failed) {
                        ++row.failures;
                        continue;
                    }
                    ++row.used;
                    row.estimates.push_back(v.estimate);
                    const double err = v.estimate - row.truth;
                    sum += err;
                    sq += err * err;
                    if (std::isfinite(v.sigma2)) {
                        var_sum += v.sigma2;
                        ++var_count;
                        const double half = kNormalCritical95 * std::sqrt(v.sigma2 / nn);
                        covered += std::abs(err) <= half;
                        if (v.sigma2 > 0) row.studentized.push_back(std::sqrt(nn) * err / std::sqrt(v.sigma2));
                    }
                }
                if (row.used > 0) {
                    any_success = true;
                    const double m = static_cast<double>(row.used);
                    row.bias = sum / m;
                    row.rmse = std::sqrt(sq / m);
                    if (row.used > 1) {
                        double centered = 0.0;
                        const double mean_est = row.truth + row.bias;
                        for (double x : row.estimates) centered += (x - mean_est) * (x - mean_est);
                        row.sim_var = nn * centered / m;
                    }
                    if (var_count > 0) {
                        row.cons_var = var_sum / var_count;
                        row.coverage = static_cast<double>(covered) / var_count;
                        if (row.sim_var && *row.sim_var > 0) row.var_ratio = *row.cons_var / *row.sim_var;
                    }
                }
                report.rows.push_back(std::move(row));
            }
            if (!any_success) {
                throw StudyError("every replication failed for estimator " + to_string(estimators[e]) +
                                 " on outcome " + to_string(outcomes[o]));
            }
        }
    }
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

namespace detail {

inline std::string format_optional(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(10) << *v;
    return os.str();
}

} // namespace detail

inline void write_study_csv(std::ostream& os, const StudyReport& report, std::optional<Outcome> only = std::nullopt) {
    os << "outcome,estimator,effect,bias,rmse,sim_var,cons_var,var_ratio,coverage,failures\n";
    for (const auto& r : report.rows) {
        if (only && r.outcome != *only) continue;
        std::ostringstream line;
        line << std::setprecision(10) << to_string(r.outcome) << ',' << to_string(r.estimator) << ','
             << r.effect.label() << ',';
        if (r.used > 0) {
            line << r.bias << ',' << r.rmse;
        } else {
            line << ',';
        }
        line << ',' << detail::format_optional(r.sim_var) << ',' << detail::format_optional(r.cons_var) << ','
             << detail::format_optional(r.var_ratio) << ',' << detail::format_optional(r.coverage) << ','
             << r.failures;
        os << line.str() << '\n';
    }
}

} // namespace facweights
