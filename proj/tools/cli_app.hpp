#pragma once

// facweights command line: estimate, simulate, diagnose. Everything lives here so the
// tests can drive run_cli() in-process; main.cpp only forwards argv.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "facweights/simulation.hpp"

namespace facweights::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_data = 2,
    exit_identification = 3,
    exit_infeasible = 4,
    exit_nonconvergence = 5,
};

/// Solver ran but did not converge; carries the exit code and diagnostics.
class SolveFailure : public Error {
public:
    SolveFailure(int code, const std::string& what) : Error(what), code_(code) {}
    int code() const { return code_; }

private:
    int code_;
};

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based file line of each row

    std::size_t column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("column '" + name + "' not found in header");
        return static_cast<std::size_t>(it - header.begin());
    }
};

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, sep)) out.push_back(trim(field));
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            std::set<std::string> seen;
            for (const auto& h : t.header) {
                if (h.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty column name");
                if (!seen.insert(h).second) {
                    throw DataError(source + ":" + std::to_string(line_no) + ": duplicate column '" + h + "'");
                }
            }
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (t.header.empty()) throw DataError(source + ": missing header row");
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_csv(in, path);
}

inline double parse_number(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw DataError(where + ": '" + s + "' is not a finite number");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Run configuration

enum class Coding { pm1, zero_one };

struct RunConfig {
    std::string data_path;
    std::vector<std::string> factor_columns;
    std::vector<std::string> covariate_columns;
    std::string outcome_column;
    Coding coding = Coding::pm1;
    int max_order = 1;
    ModelFlavor flavor = ModelFlavor::heterogeneous;
    /// Empty cells become unobserved when set; otherwise `unobserved` is used as given.
    bool auto_unobserved = true;
    std::vector<TreatmentCombination> unobserved;
    SolverOptions solver;
    std::string out_path;
    std::string weights_out;
    std::string weights_in;

    void validate(bool need_outcome) const {
        if (data_path.empty()) throw ConfigError("--data is required");
        if (factor_columns.size() < 2) throw ConfigError("at least two factor columns are required");
        if (covariate_columns.empty()) throw ConfigError("at least one covariate column is required");
        if (need_outcome && outcome_column.empty()) throw ConfigError("--outcome is required");
        if (max_order < 1 || max_order > static_cast<int>(factor_columns.size())) {
            throw ConfigError("--max-order must be between 1 and the number of factors");
        }
        std::set<std::string> all;
        auto add = [&](const std::string& c) {
            if (!all.insert(c).second) throw ConfigError("column '" + c + "' is used more than once");
        };
        for (const auto& c : factor_columns) add(c);
        for (const auto& c : covariate_columns) add(c);
        if (!outcome_column.empty()) add(outcome_column);
        solver.validate();
    }
};

inline Coding parse_coding(const std::string& s) {
    if (s == "pm1") return Coding::pm1;
    if (s == "zero_one" || s == "01") return Coding::zero_one;
    throw ConfigError("unknown factor coding '" + s + "' (expected pm1 or zero_one)");
}

/// "+1,+1,-1;+1,+1,+1" or "auto".
inline void parse_unobserved(const std::string& spec, RunConfig& cfg) {
    if (spec == "auto") {
        cfg.auto_unobserved = true;
        cfg.unobserved.clear();
        return;
    }
    cfg.auto_unobserved = false;
    cfg.unobserved.clear();
    if (spec == "none" || spec.empty()) return;
    std::stringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ';')) {
        std::vector<int> levels;
        for (const auto& f : split_fields(cell)) {
            const double v = parse_number(f, "--unobserved");
            if (v != 1.0 && v != -1.0) throw ConfigError("--unobserved levels must be -1 or +1");
            levels.push_back(static_cast<int>(v));
        }
        cfg.unobserved.emplace_back(std::move(levels));
    }
}

/// Fills fields from a JSON config file; command-line flags are applied afterwards.
inline void apply_json_config(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    try {
        if (j.contains("data")) cfg.data_path = j["data"].get<std::string>();
        if (j.contains("factors")) cfg.factor_columns = j["factors"].get<std::vector<std::string>>();
        if (j.contains("covariates")) cfg.covariate_columns = j["covariates"].get<std::vector<std::string>>();
        if (j.contains("outcome")) cfg.outcome_column = j["outcome"].get<std::string>();
        if (j.contains("coding")) cfg.coding = parse_coding(j["coding"].get<std::string>());
        if (j.contains("max_order")) cfg.max_order = j["max_order"].get<int>();
        if (j.contains("flavor")) cfg.flavor = parse_flavor(j["flavor"].get<std::string>());
        if (j.contains("unobserved")) {
            const auto& u = j["unobserved"];
            if (u.is_string()) {
                parse_unobserved(u.get<std::string>(), cfg);
            } else {
                cfg.auto_unobserved = false;
                cfg.unobserved.clear();
                for (const auto& cell : u) cfg.unobserved.emplace_back(cell.get<std::vector<int>>());
            }
        }
        if (j.contains("solver")) {
            const auto& s = j["solver"];
            if (s.contains("grad_tol")) cfg.solver.grad_tol = s["grad_tol"].get<double>();
            if (s.contains("max_iters")) cfg.solver.max_iters = s["max_iters"].get<int>();
        }
        if (j.contains("out")) cfg.out_path = j["out"].get<std::string>();
        if (j.contains("weights_out")) cfg.weights_out = j["weights_out"].get<std::string>();
        if (j.contains("weights")) cfg.weights_in = j["weights"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

/// Reads the configured columns. Factor values are mapped to +-1 per the coding.
inline Dataset load_dataset(const RunConfig& cfg, bool with_outcome) {
    const auto table = read_csv_file(cfg.data_path);
    if (table.rows.empty()) throw DataError(cfg.data_path + ": no data rows");
    std::vector<std::size_t> fcols;
    std::vector<std::size_t> xcols;
    for (const auto& c : cfg.factor_columns) fcols.push_back(table.column(c));
    for (const auto& c : cfg.covariate_columns) xcols.push_back(table.column(c));
    const auto n = static_cast<Eigen::Index>(table.rows.size());

    Dataset data;
    data.Z.resize(n, static_cast<Eigen::Index>(fcols.size()));
    data.X.resize(n, static_cast<Eigen::Index>(xcols.size()));
    data.covariate_names = cfg.covariate_columns;
    std::optional<std::size_t> ycol;
    if (with_outcome) {
        ycol = table.column(cfg.outcome_column);
        data.Y.resize(n);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const auto where = [&](std::size_t col) {
            return cfg.data_path + ":" + std::to_string(table.line_numbers[static_cast<std::size_t>(i)]) +
                   " column '" + table.header[col] + "'";
        };
        for (std::size_t k = 0; k < fcols.size(); ++k) {
            const double v = parse_number(row[fcols[k]], where(fcols[k]));
            int level = 0;
            if (cfg.coding == Coding::zero_one) {
                if (v == 0.0 || v == 1.0) level = static_cast<int>(2 * v - 1);
            } else if (v == 1.0 || v == -1.0) {
                level = static_cast<int>(v);
            }
            if (level == 0) {
                throw DataError(where(fcols[k]) + ": factor value " + row[fcols[k]] + " is not " +
                                (cfg.coding == Coding::zero_one ? "0 or 1" : "-1 or +1"));
            }
            data.Z(i, static_cast<Eigen::Index>(k)) = level;
        }
        for (std::size_t d = 0; d < xcols.size(); ++d) {
            data.X(i, static_cast<Eigen::Index>(d)) = parse_number(row[xcols[d]], where(xcols[d]));
        }
        if (ycol) data.Y[i] = parse_number(row[*ycol], where(*ycol));
    }
    return data;
}

/// Full design when every cell has data; otherwise the incomplete design on the
/// unobserved cells (auto mode) or on the configured list.
inline Design resolve_design(const Dataset& data, const RunConfig& cfg) {
    const int k = data.factors();
    check_factor_count(k);
    std::vector<std::size_t> counts(combination_count(k), 0);
    for (auto q : data.cells()) ++counts[q];

    std::vector<TreatmentCombination> unobserved;
    if (cfg.auto_unobserved) {
        for (std::size_t q = 0; q < counts.size(); ++q) {
            if (counts[q] == 0) unobserved.push_back(TreatmentCombination::from_index(k, q));
        }
    } else {
        for (const auto& z : cfg.unobserved) {
            if (z.factors() != k) throw ConfigError("unobserved combination " + z.to_string() + " has wrong length");
            if (counts[z.index()] > 0) {
                throw DataError("combination " + z.to_string() + " is declared unobserved but has " +
                                std::to_string(counts[z.index()]) + " units");
            }
            unobserved.push_back(z);
        }
    }
    if (unobserved.empty()) return Design::full(k, cfg.max_order);
    return Design::incomplete(build_incomplete_design(k, cfg.max_order, unobserved));
}

inline std::string factor_term(const EffectIndex& e, const std::vector<std::string>& names) {
    std::string s;
    for (int f : e.members()) {
        if (!s.empty()) s += ":";
        s += names[static_cast<std::size_t>(f - 1)];
    }
    return s;
}

inline std::string fmt(double v, int digits = 10) {
    if (!std::isfinite(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline nlohmann::json json_number(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json json_optional(const std::optional<double>& v) {
    return v ? json_number(*v) : nlohmann::json(nullptr);
}

inline bool is_json_path(const std::string& path) {
    return std::filesystem::path(path).extension() == ".json";
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
}

// ---------------------------------------------------------------------------
// Weights files

inline void write_weights(std::ostream& os, const Eigen::VectorXd& w) {
    os << "unit_index,weight\n";
    char buf[64];
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", w[i]);
        os << i << ',' << buf << '\n';
    }
}

inline Eigen::VectorXd read_weights(const std::string& path, Eigen::Index expected_rows) {
    const auto table = read_csv_file(path);
    const auto idx = table.column("unit_index");
    const auto wcol = table.column("weight");
    if (static_cast<Eigen::Index>(table.rows.size()) != expected_rows) {
        throw DataError(path + ": " + std::to_string(table.rows.size()) + " weights for " +
                        std::to_string(expected_rows) + " data rows");
    }
    Eigen::VectorXd w(expected_rows);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = path + ":" + std::to_string(table.line_numbers[r]);
        const double i = parse_number(table.rows[r][idx], where);
        if (i != static_cast<double>(r)) {
            throw DataError(where + ": unit_index " + table.rows[r][idx] + " out of order (expected " +
                            std::to_string(r) + ")");
        }
        const double v = parse_number(table.rows[r][wcol], where);
        if (v < 0) throw DataError(where + ": negative weight");
        w[static_cast<Eigen::Index>(r)] = v;
    }
    return w;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateResult {
    Design design;
    WeightingFit fit;
    std::vector<std::string> factor_names;
};

inline EstimateResult run_estimate(const RunConfig& cfg, const Dataset& data) {
    data.validate();
    const auto design = resolve_design(data, cfg);
    FitOptions opts;
    opts.solver = cfg.solver;
    opts.compute_variance = false; // added below so a singular variance matrix is only a warning
    const BasisSpec basis(identity_bases(data), cfg.flavor, cfg.max_order);
    auto fit = fit_weights(data, basis, design, opts);
    if (!fit.converged()) {
        const auto res = balance_residuals(fit.weights(), fit.system);
        std::ostringstream msg;
        msg << "balancing weights " << (fit.solution.status == SolveStatus::infeasible ? "are infeasible" : "did not converge")
            << " after " << fit.solution.iterations << " iterations; max |Bw - b| = " << res.max_abs
            << "\nlargest residual per effect (0 = summary rows):";
        for (const auto& [label, r] : res.per_effect) msg << "\n  " << label << ": " << r;
        throw SolveFailure(fit.solution.status == SolveStatus::infeasible ? exit_infeasible : exit_nonconvergence,
                           msg.str());
    }
    try {
        fit.estimates = estimate_effects(data, fit.system, fit.solution, design, design.effects(), &fit.warnings);
    } catch (const VarianceError& e) {
        fit.warnings.push_back(std::string("variances unavailable: ") + e.what());
    }
    return {design, std::move(fit), cfg.factor_columns};
}

inline std::string estimates_csv(const EstimateResult& r) {
    std::ostringstream os;
    os << "effect,term,estimate,std_error,ci_low,ci_high,n\n";
    for (const auto& e : r.fit.estimates) {
        const double se = e.has_variance() ? std::sqrt(e.sigma2_hat / static_cast<double>(e.n)) : NAN;
        os << e.effect.label() << ',' << factor_term(e.effect, r.factor_names) << ',' << fmt(e.tau_hat) << ','
           << fmt(se) << ',' << fmt(e.ci_low) << ',' << fmt(e.ci_high) << ',' << e.n << '\n';
    }
    return os.str();
}

inline nlohmann::json estimates_json(const EstimateResult& r) {
    nlohmann::json j;
    j["design"] = r.design.is_full() ? "full" : "incomplete";
    nlohmann::json unobserved = nlohmann::json::array();
    if (const auto* info = r.design.incomplete_info()) {
        for (auto q : info->unobserved) unobserved.push_back(TreatmentCombination::from_index(r.design.factors(), q).levels());
    }
    j["unobserved"] = unobserved;
    j["converged"] = r.fit.converged();
    j["iterations"] = r.fit.solution.iterations;
    j["constraints"] = r.fit.system.size();
    j["dropped_dependent_constraints"] = r.fit.dropped_rows;
    j["max_balance_residual"] = balance_residuals(r.fit.weights(), r.fit.system).max_abs;
    j["warnings"] = r.fit.warnings;
    nlohmann::json effects = nlohmann::json::array();
    for (const auto& e : r.fit.estimates) {
        const double se = e.has_variance() ? std::sqrt(e.sigma2_hat / static_cast<double>(e.n)) : NAN;
        effects.push_back({{"effect", e.effect.label()},
                           {"term", factor_term(e.effect, r.factor_names)},
                           {"estimate", json_number(e.tau_hat)},
                           {"sigma2", json_number(e.sigma2_hat)},
                           {"std_error", json_number(se)},
                           {"ci_low", json_number(e.ci_low)},
                           {"ci_high", json_number(e.ci_high)},
                           {"n", e.n}});
    }
    j["effects"] = effects;
    return j;
}

// ---------------------------------------------------------------------------
// diagnose

inline std::string diagnose_csv(const std::vector<SmdRow>& rows) {
    std::ostringstream os;
    os << "effect,covariate,smd_before,smd_after\n";
    for (const auto& r : rows) {
        if (r.flagged) continue;
        os << r.effect.label() << ',' << r.covariate << ',' << fmt(r.before, 17) << ',' << fmt(r.after, 17) << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::string scenario = "three-factor";
    long long n = 1000;
    int reps = 1000;
    std::uint64_t seed = 42;
    std::string estimators;
    std::optional<double> hetero_c;
    unsigned threads = 1;
    std::string outcome = "all";
    int max_order = 0;
    std::string out;
};

inline StudyConfig study_config(const SimulateArgs& a) {
    if (a.reps < 1) throw ConfigError("--reps must be at least 1");
    StudyConfig cfg;
    cfg.scenario.kind = parse_scenario_kind(a.scenario);
    cfg.scenario.n = static_cast<Eigen::Index>(a.n);
    cfg.scenario.seed = a.seed;
    cfg.scenario.heteroskedastic_c = a.hetero_c;
    cfg.scenario.max_order = a.max_order;
    cfg.reps = a.reps;
    cfg.threads = a.threads;
    if (a.outcome != "all") {
        cfg.outcomes = {parse_outcome(a.outcome)};
        cfg.scenario.outcome = cfg.outcomes.front();
    }
    for (const auto& e : split_fields(a.estimators)) {
        if (!e.empty()) cfg.estimators.push_back(parse_estimator(e));
    }
    cfg.scenario.validate();
    return cfg;
}

inline nlohmann::json study_json(const StudyReport& rep) {
    nlohmann::json j;
    const auto& sc = rep.scenario;
    j["scenario"] = {{"kind", to_string(sc.kind)},
                     {"n", sc.n},
                     {"max_order", sc.order()},
                     {"seed", sc.seed},
                     {"heteroskedastic_c", sc.heteroskedastic_c ? nlohmann::json(*sc.heteroskedastic_c)
                                                                 : nlohmann::json(nullptr)}};
    j["reps"] = rep.reps;
    j["wall_time_seconds"] = rep.wall_time;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        rows.push_back({{"outcome", to_string(r.outcome)},
                        {"estimator", to_string(r.estimator)},
                        {"effect", r.effect.label()},
                        {"truth", r.truth},
                        {"used", r.used},
                        {"failures", r.failures},
                        {"bias", r.used ? json_number(r.bias) : nlohmann::json(nullptr)},
                        {"rmse", r.used ? json_number(r.rmse) : nlohmann::json(nullptr)},
                        {"sim_var", json_optional(r.sim_var)},
                        {"cons_var", json_optional(r.cons_var)},
                        {"var_ratio", json_optional(r.var_ratio)},
                        {"coverage", json_optional(r.coverage)}});
    }
    j["rows"] = rows;
    return j;
}

/// Writes `out` (CSV, or JSON for a .json path). With several outcomes and a CSV path,
/// one file per outcome is written as <stem>_<outcome>.csv next to a combined <stem>.json.
inline std::vector<std::string> write_study_outputs(const StudyReport& rep, const std::string& out,
                                                    std::ostream& stdout_stream) {
    std::vector<std::string> written;
    if (out.empty()) {
        write_study_csv(stdout_stream, rep);
        return written;
    }
    const std::filesystem::path path(out);
    if (is_json_path(out)) {
        write_text(out, study_json(rep).dump(2) + "\n");
        written.push_back(out);
        return written;
    }
    std::vector<Outcome> outcomes;
    for (const auto& r : rep.rows) {
        if (std::find(outcomes.begin(), outcomes.end(), r.outcome) == outcomes.end()) outcomes.push_back(r.outcome);
    }
    auto sibling = [&](const std::string& suffix) {
        return (path.parent_path() / (path.stem().string() + suffix)).string();
    };
    if (outcomes.size() == 1) {
        std::ostringstream os;
        write_study_csv(os, rep);
        write_text(out, os.str());
        written.push_back(out);
    } else {
        for (auto o : outcomes) {
            std::ostringstream os;
            write_study_csv(os, rep, o);
            const auto file = sibling("_" + to_string(o) + ".csv");
            write_text(file, os.str());
            written.push_back(file);
        }
    }
    const auto json_file = sibling(".json");
    write_text(json_file, study_json(rep).dump(2) + "\n");
    written.push_back(json_file);
    return written;
}

// ---------------------------------------------------------------------------
// Entry point

inline int error_exit(std::ostream& err, int code, const std::string& msg) {
    err << "error: " << msg << '\n';
    return code;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Balancing weights for factorial effects in observational studies"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    std::string coding = "pm1";
    std::string flavor = "heterogeneous";
    std::string unobserved = "auto";
    int max_order = 1;
    double grad_tol = SolverOptions{}.grad_tol;
    int max_iters = SolverOptions{}.max_iters;

    auto add_data_options = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file; flags override its values");
        sub->add_option("--data", cfg.data_path, "input CSV with a header row");
        sub->add_option("--factors", cfg.factor_columns, "factor columns")->delimiter(',');
        sub->add_option("--covariates", cfg.covariate_columns, "covariate columns")->delimiter(',');
        sub->add_option("--coding", coding, "factor coding: pm1 or zero_one");
        sub->add_option("--max-order", max_order, "highest interaction order K'");
        sub->add_option("--flavor", flavor, "balance constraints: additive or heterogeneous");
        sub->add_option("--unobserved", unobserved,
                        "'auto' (empty cells), 'none', or cells such as \"+1,+1,-1;+1,+1,+1\"");
    };

    auto* est = app.add_subcommand("estimate", "fit balancing weights and estimate factorial effects");
    add_data_options(est);
    est->add_option("--outcome", cfg.outcome_column, "outcome column");
    est->add_option("--out", cfg.out_path, "effects report (.csv or .json); stdout when omitted");
    est->add_option("--weights-out", cfg.weights_out, "per-unit weights CSV");
    est->add_option("--grad-tol", grad_tol, "solver tolerance on max |Bw - b| / N");
    est->add_option("--max-iters", max_iters, "solver iteration limit");

    auto* diag = app.add_subcommand("diagnose", "standardized mean differences before and after weighting");
    add_data_options(diag);
    diag->add_option("--weights", cfg.weights_in, "weights CSV written by estimate");
    diag->add_option("--out", cfg.out_path, "SMD table CSV; stdout when omitted");

    SimulateArgs sim;
    double hetero_c = 0.0;
    auto* simc = app.add_subcommand("simulate", "run a Monte Carlo study");
    simc->add_option("--scenario", sim.scenario, "three-factor or five-factor");
    simc->add_option("--n", sim.n, "units per replication");
    simc->add_option("--reps", sim.reps, "replications");
    simc->add_option("--seed", sim.seed, "study seed");
    simc->add_option("--estimators", sim.estimators, "comma-separated estimators (default: scenario set)");
    auto* hc = simc->add_option("--hetero-c", hetero_c, "draw error variances from U[0, C]");
    simc->add_option("--threads", sim.threads, "worker threads (0: all cores)");
    simc->add_option("--outcome", sim.outcome, "Y1, Y2, Y3 or all");
    simc->add_option("--max-order", sim.max_order, "highest interaction order (default: scenario)");
    simc->add_option("--out", sim.out, "CSV or .json output; stdout when omitted");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_usage;
    }

    try {
        if (simc->parsed()) {
            if (*hc) sim.hetero_c = hetero_c;
            const auto study = study_config(sim);
            const auto rep = run_study(study);
            for (const auto& f : write_study_outputs(rep, sim.out, out)) err << "wrote " << f << '\n';
            return exit_ok;
        }

        auto* sub = est->parsed() ? est : diag;
        // Config file first, then explicit flags.
        RunConfig merged;
        if (!config_path.empty()) apply_json_config(config_path, merged);
        auto given = [&](const char* name) { return sub->count(name) > 0; };
        if (given("--data")) merged.data_path = cfg.data_path;
        if (given("--factors")) merged.factor_columns = cfg.factor_columns;
        if (given("--covariates")) merged.covariate_columns = cfg.covariate_columns;
        if (given("--coding")) merged.coding = parse_coding(coding);
        if (given("--max-order")) merged.max_order = max_order;
        if (given("--flavor")) merged.flavor = parse_flavor(flavor);
        if (given("--unobserved")) parse_unobserved(unobserved, merged);
        if (given("--out")) merged.out_path = cfg.out_path;

        if (sub == est) {
            if (given("--outcome")) merged.outcome_column = cfg.outcome_column;
            if (given("--weights-out")) merged.weights_out = cfg.weights_out;
            if (given("--grad-tol")) merged.solver.grad_tol = grad_tol;
            if (given("--max-iters")) merged.solver.max_iters = max_iters;
            merged.validate(true);
            const auto data = load_dataset(merged, true);
            const auto result = run_estimate(merged, data);
            for (const auto& w : result.fit.warnings) err << "warning: " << w << '\n';
            if (!merged.weights_out.empty()) {
                std::ostringstream os;
                write_weights(os, result.fit.weights());
                write_text(merged.weights_out, os.str());
            }
            if (merged.out_path.empty()) {
                out << estimates_csv(result);
            } else if (is_json_path(merged.out_path)) {
                write_text(merged.out_path, estimates_json(result).dump(2) + "\n");
            } else {
                write_text(merged.out_path, estimates_csv(result));
            }
            return exit_ok;
        }

        if (given("--weights")) merged.weights_in = cfg.weights_in;
        merged.validate(false);
        if (merged.weights_in.empty()) throw ConfigError("--weights is required");
        const auto data = load_dataset(merged, false);
        data.validate();
        const auto design = resolve_design(data, merged);
        const auto w = read_weights(merged.weights_in, data.size());
        const auto rows = smd_report(data, w, design.effects(), design);
        for (const auto& r : rows) {
            if (r.flagged) {
                err << "warning: SMD undefined for effect " << r.effect.label() << ", covariate " << r.covariate
                    << " (zero spread or too few units)\n";
            }
        }
        if (merged.out_path.empty()) {
            out << diagnose_csv(rows);
        } else {
            write_text(merged.out_path, diagnose_csv(rows));
        }
        return exit_ok;
    } catch (const SolveFailure& e) {
        return error_exit(err, e.code(), e.what());
    } catch (const IdentificationError& e) {
        return error_exit(err, exit_identification, e.what());
    } catch (const ConfigError& e) {
        return error_exit(err, exit_usage, e.what());
    } catch (const StudyError& e) {
        return error_exit(err, exit_nonconvergence, e.what());
    } catch (const Error& e) {
        return error_exit(err, exit_data, e.what());
    }
}

} // namespace facweights::cli
