#pragma once

// Experiment front end: run configs, the subcommand bodies and the mapping
// from error types to process exit codes.

#include "dsee/dsee.hpp"
#include "dsee/dynamic_programming.hpp"
#include "dsee/error.hpp"
#include "dsee/io.hpp"
#include "dsee/regret_fit.hpp"
#include "dsee/robust.hpp"
#include "dsee/sim_env.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dsee::cli {

using io::json;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kRunConfigSchema = "dsee-run-config/1";
inline constexpr const char* kSummarySchema = "dsee-summary/1";
inline constexpr const char* kEpochSchema = "dsee-epoch/1";
inline constexpr const char* kOutputDirEnv = "DSEE_OUTPUT_DIR";

enum ExitCode : int { kOk = 0, kConfigFailure = 2, kModelFailure = 3, kRuntimeFailure = 4 };

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfigFailure;
    if (dynamic_cast<const ModelError*>(&e)) return kModelFailure;
    return kRuntimeFailure;
}

/// Either a model file or generator parameters.
struct ModelSource {
    std::optional<std::string> path;
    std::optional<GarnetParams> garnet;
};

struct RunConfig {
    ModelSource model;
    double eta = 2.0;
    std::size_t num_epochs = 0;
    double explore_scale = 1.0;
    double tol = 1e-9;
    std::uint64_t seed = 0;
    std::size_t start_state = 0;
    std::uint64_t step_cap = kDefaultStepCap;
    std::string output_dir = "dsee-out";
    bool write_events = false;
    bool write_snapshots = true;
    bool diagnostics = true;
    DiagnosticParams diag;
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

inline GarnetParams garnet_from_json(const json& g) {
    reject_unknown_keys(g,
                        {"num_states", "num_actions", "branching", "gamma", "r_max", "seed", "smoothing",
                         "reward_kind", "max_retries"},
                        "model.garnet");
    if (!g.contains("seed")) throw ConfigError("model.garnet.seed is required");
    GarnetParams p;
    p.num_states = g.at("num_states").get<std::size_t>();
    p.num_actions = g.at("num_actions").get<std::size_t>();
    p.branching = get_or(g, "branching", p.branching);
    p.gamma = get_or(g, "gamma", p.gamma);
    p.r_max = get_or(g, "r_max", p.r_max);
    p.seed = g.at("seed").get<std::uint64_t>();
    p.smoothing = get_or(g, "smoothing", p.smoothing);
    p.reward_kind = parse_reward_kind(get_or<std::string>(g, "reward_kind", to_string(p.reward_kind)));
    p.max_retries = get_or(g, "max_retries", p.max_retries);
    return p;
}

inline json garnet_to_json(const GarnetParams& p) {
    return {{"num_states", p.num_states}, {"num_actions", p.num_actions}, {"branching", p.branching},
            {"gamma", p.gamma},           {"r_max", p.r_max},             {"seed", p.seed},
            {"smoothing", p.smoothing},   {"reward_kind", to_string(p.reward_kind)}};
}

} // namespace detail

/// Parses a run config. Relative model paths resolve against `base_dir`.
inline RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir = {}) {
    try {
        detail::reject_unknown_keys(doc,
                                    {"schema", "model", "schedule", "solver", "seed", "start_state", "step_cap",
                                     "output_dir", "outputs", "diagnostics"},
                                    "run config");
        if (doc.value("schema", std::string()) != kRunConfigSchema)
            throw ConfigError(std::string("run config must declare schema '") + kRunConfigSchema + "'");
        RunConfig c;

        const json& m = doc.at("model");
        detail::reject_unknown_keys(m, {"path", "garnet"}, "model");
        if (m.contains("path") == m.contains("garnet"))
            throw ConfigError("model needs exactly one of 'path' or 'garnet'");
        if (m.contains("path")) {
            std::filesystem::path p = m.at("path").get<std::string>();
            if (p.is_relative()) p = base_dir / p;
            if (!std::filesystem::exists(p)) throw ConfigError("model file '" + p.string() + "' does not exist");
            c.model.path = p.string();
        } else {
            c.model.garnet = detail::garnet_from_json(m.at("garnet"));
        }

        const json& s = doc.at("schedule");
        detail::reject_unknown_keys(s, {"eta", "num_epochs", "explore_scale"}, "schedule");
        c.eta = s.at("eta").get<double>();
        c.num_epochs = s.at("num_epochs").get<std::size_t>();
        c.explore_scale = detail::get_or(s, "explore_scale", c.explore_scale);
        require(c.eta > 1.0, "schedule.eta must be greater than 1");
        require(c.num_epochs >= 1, "schedule.num_epochs must be at least 1");
        require(c.explore_scale > 0.0 && c.explore_scale <= 1.0, "schedule.explore_scale must lie in (0, 1]");

        if (doc.contains("solver")) {
            detail::reject_unknown_keys(doc.at("solver"), {"tol"}, "solver");
            c.tol = detail::get_or(doc.at("solver"), "tol", c.tol);
        }
        require(c.tol > 0.0, "solver.tol must be positive");

        if (!doc.contains("seed")) throw ConfigError("seed is required");
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.start_state = detail::get_or(doc, "start_state", c.start_state);
        c.step_cap = detail::get_or(doc, "step_cap", c.step_cap);
        c.output_dir = detail::get_or(doc, "output_dir", c.output_dir);

        if (doc.contains("outputs")) {
            const json& o = doc.at("outputs");
            detail::reject_unknown_keys(o, {"events", "snapshots"}, "outputs");
            c.write_events = detail::get_or(o, "events", c.write_events);
            c.write_snapshots = detail::get_or(o, "snapshots", c.write_snapshots);
        }
        if (doc.contains("diagnostics")) {
            const json& d = doc.at("diagnostics");
            detail::reject_unknown_keys(d, {"enabled", "kappa", "sigma", "c_const", "global_delta"}, "diagnostics");
            c.diagnostics = detail::get_or(d, "enabled", c.diagnostics);
            c.diag.kappa = detail::get_or(d, "kappa", c.diag.kappa);
            c.diag.sigma = detail::get_or(d, "sigma", c.diag.sigma);
            c.diag.c_const = detail::get_or(d, "c_const", c.diag.c_const);
            c.diag.global_delta = detail::get_or(d, "global_delta", c.diag.global_delta);
        }
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }
}

inline RunConfig read_run_config(const std::string& path) {
    return parse_run_config(io::read_json_file(path), std::filesystem::path(path).parent_path());
}

inline MdpModel load_model(const ModelSource& source) {
    if (source.path) return io::read_model(*source.path);
    if (source.garnet) return generate_garnet(*source.garnet);
    throw ConfigError("no model source");
}

/// Command-line flag, then the environment override, then the config value.
inline std::string resolve_output_dir(const RunConfig& c, const std::optional<std::string>& flag = std::nullopt) {
    if (flag) return *flag;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return c.output_dir;
}

inline EpochSchedule schedule_for(const RunConfig& c, const MdpModel& m) {
    return build_schedule(c.eta, c.num_epochs, m.num_states(), m.num_actions(), m.discount(), m.r_max(),
                          c.explore_scale);
}

inline json epoch_params_json(const EpochParams& e) {
    return {{"index", e.index},   {"epsilon", e.epsilon},   {"delta", e.delta},
            {"rho", e.rho},       {"threshold", e.threshold}, {"threshold_unscaled", e.threshold_real},
            {"beta", e.beta}};
}

inline json diagnostics_json(const BudgetDiagnostics& d, const DiagnosticParams& p) {
    json rows = json::array();
    for (const auto& b : d.epochs)
        rows.push_back({{"index", b.index},
                        {"n_bar", b.n_bar},
                        {"budget", b.budget},
                        {"budget_steps", b.budget_steps},
                        {"delta_alpha", b.delta_alpha},
                        {"tail_bound", b.tail_bound}});
    return {{"kappa", p.kappa},       {"sigma", p.sigma},         {"c_const", p.c_const},
            {"global_delta", p.global_delta}, {"phi_min", d.phi_min}, {"tau", d.tau},
            {"phi0_norm", d.phi0_norm}, {"epochs", std::move(rows)}};
}

inline json solution_json(const Solution& s) {
    return {{"values", io::to_json(s.values)},
            {"policy", io::to_json(s.policy)},
            {"residual", s.residual},
            {"iterations", s.iterations}};
}

/// Summary document of a finished run. Contains nothing that depends on
/// wall-clock time or the host.
inline json build_summary(const RunConfig& c, const MdpModel& model, const DseeRun& run,
                          const std::string& trace_hash, const std::optional<BudgetDiagnostics>& diag) {
    json epochs = json::array();
    std::uint64_t t_end = 0;
    for (const EpochRecord& e : run.epochs) {
        t_end += e.exploration_steps + e.params.beta;
        json row = epoch_params_json(e.params);
        row["exploration_steps"] = e.exploration_steps;
        row["gate_closed_steps"] = e.gate_closed_steps;
        row["counted_steps"] = e.exploration_steps - e.gate_closed_steps;
        row["min_count"] = e.min_count;
        row["s_end"] = e.s_end;
        row["robust_iterations"] = e.robust.iterations;
        row["robust_policy"] = io::to_json(e.robust.policy);
        row["exploitation_regret"] = e.exploitation_regret;
        row["t_end"] = t_end;
        row["cumulative_regret"] = run.trace.rows()[t_end - 1].cumulative;
        epochs.push_back(std::move(row));
    }
    json model_info = {{"num_states", model.num_states()},
                       {"num_actions", model.num_actions()},
                       {"gamma", model.discount()},
                       {"r_max", model.r_max()}};
    if (c.model.path) model_info["source"] = std::filesystem::path(*c.model.path).filename().string();
    if (c.model.garnet) model_info["garnet"] = detail::garnet_to_json(*c.model.garnet);
    model_info["fingerprint"] = [&] {
        io::Fnv1a64 h;
        h.update(io::to_json(model).dump());
        return h.hex();
    }();

    json out = {{"schema", kSummarySchema},
                {"final_cumulative_regret", run.trace.cumulative()},
                {"rmax_priced_cumulative_regret", run.rmax_priced_cumulative},
                {"total_steps", run.trace.size()},
                {"exploration_regret_per_step", run.exploration_regret},
                {"v_star", io::to_json(run.v_star)},
                {"pi_star", io::to_json(run.pi_star)},
                {"v_uniform", io::to_json(run.v_uniform)},
                {"epochs", std::move(epochs)},
                {"trace", {{"file", "trace.csv"}, {"rows", run.trace.size()}, {"fnv1a64", trace_hash}}}};
    if (const auto fit = fit_tail_slope(run.trace.rows()))
        out["tail_slope"] = {{"slope", fit->slope}, {"intercept", fit->intercept}, {"points", fit->points}};
    if (diag) out["diagnostics"] = diagnostics_json(*diag, c.diag);
    out["metadata"] = {{"version", kVersion},
                       {"config_schema", kRunConfigSchema},
                       {"seed", c.seed},
                       {"rng", std::string(Rng::algorithm)},
                       {"eta", c.eta},
                       {"num_epochs", c.num_epochs},
                       {"explore_scale", c.explore_scale},
                       {"tol", c.tol},
                       {"start_state", c.start_state},
                       {"model", std::move(model_info)}};
    return out;
}

struct RunResult {
    DseeRun run;
    json summary;
    std::string output_dir;
};

/// Executes a configured run and writes trace.csv, summary.json, model.json,
/// optional events.csv and per-epoch snapshots under the output directory.
inline RunResult cmd_run(const RunConfig& c, const std::optional<std::string>& out_flag = std::nullopt) {
    const MdpModel model = load_model(c.model);
    const EpochSchedule schedule = schedule_for(c, model);
    DseeConfig dc;
    dc.seed = c.seed;
    dc.tol = c.tol;
    dc.start_state = c.start_state;
    dc.step_cap = c.step_cap;
    dc.record_events = c.write_events;

    std::optional<BudgetDiagnostics> diag;
    if (c.diagnostics) {
        DiagnosticParams p = c.diag;
        p.start_state = c.start_state;
        diag = epoch_budget_diagnostics(model, schedule, p);
    }

    RunResult result{run_dsee(model, schedule, dc), {}, resolve_output_dir(c, out_flag)};
    const std::filesystem::path dir = result.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());

    std::ofstream trace_out(dir / "trace.csv", std::ios::binary);
    if (!trace_out) throw ConfigError("cannot write '" + (dir / "trace.csv").string() + "'");
    const std::string hash = io::write_trace_csv(trace_out, result.run.trace).hex();
    trace_out.close();
    if (!trace_out) throw ConfigError("write to trace.csv failed");

    if (c.write_events) {
        std::ofstream ev(dir / "events.csv", std::ios::binary);
        io::write_events_csv(ev, result.run.events);
        if (!ev) throw ConfigError("write to events.csv failed");
    }
    io::write_model((dir / "model.json").string(), model);
    if (c.write_snapshots) {
        std::filesystem::create_directories(dir / "epochs");
        for (const EpochRecord& e : result.run.epochs) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%02zu.json", e.params.index);
            json snap = {{"schema", kEpochSchema},
                         {"params", epoch_params_json(e.params)},
                         {"estimates", io::to_json(e.estimates)},
                         {"robust", solution_json(e.robust)},
                         {"policy_value", io::to_json(e.policy_value)},
                         {"exploitation_regret", e.exploitation_regret}};
            io::write_json_file((dir / "epochs" / name).string(), snap);
        }
    }
    result.summary = build_summary(c, model, result.run, hash, diag);
    io::write_json_file((dir / "summary.json").string(), result.summary);
    return result;
}

enum class SolveMode { exact, robust };

inline SolveMode parse_solve_mode(const std::string& s) {
    if (s == "exact") return SolveMode::exact;
    if (s == "robust") return SolveMode::robust;
    throw ConfigError("mode must be 'exact' or 'robust', got '" + s + "'");
}

/// Optimal (or robust-optimal around the model itself) values and policy.
inline json cmd_solve(const MdpModel& model, SolveMode mode, double rho, double tol) {
    require(tol > 0.0, "tol must be positive");
    if (mode == SolveMode::exact) {
        json out = {{"mode", "exact"}, {"tol", tol}};
        out.update(solution_json(value_iteration(model, tol)));
        return out;
    }
    require(rho >= 0.0, "rho must be non-negative");
    json out = {{"mode", "robust"}, {"rho", rho}, {"tol", tol}};
    out.update(solution_json(robust_value_iteration(UncertaintySpec::from_model(model, rho), model.discount(), tol)));
    return out;
}

struct DiagnoseRequest {
    double eta = 2.0;
    std::size_t num_epochs = 1;
    double explore_scale = 1.0;
    DiagnosticParams params;
};

inline json cmd_diagnose(const MdpModel& model, const DiagnoseRequest& r) {
    const auto schedule = build_schedule(r.eta, r.num_epochs, model.num_states(), model.num_actions(),
                                         model.discount(), model.r_max(), r.explore_scale);
    const auto d = epoch_budget_diagnostics(model, schedule, r.params);
    json rows = json::array();
    for (std::size_t j = 0; j < schedule.epochs.size(); ++j) {
        json row = epoch_params_json(schedule.epochs[j]);
        row["N"] = d.epochs[j].budget;
        row["delta_alpha"] = d.epochs[j].delta_alpha;
        row["tail_bound"] = d.epochs[j].tail_bound;
        row["tau"] = d.tau;
        row["phi_min"] = d.phi_min;
        rows.push_back(std::move(row));
    }
    return {{"eta", r.eta},
            {"explore_scale", r.explore_scale},
            {"diagnostics", diagnostics_json(d, r.params)},
            {"table", std::move(rows)}};
}

/// Fixed-width rendering of the cmd_diagnose table.
inline std::string format_diagnose_table(const json& doc) {
    std::ostringstream os;
    os << std::left << std::setw(4) << "j" << std::right;
    for (const char* h : {"eps", "delta", "rho", "U", "beta", "N", "delta_alpha", "tau", "phi_min"})
        os << ' ' << std::setw(13) << h;
    os << '\n';
    for (const json& r : doc.at("table")) {
        os << std::left << std::setw(4) << r.at("index").get<std::size_t>() << std::right << std::setprecision(6);
        os << ' ' << std::setw(13) << r.at("epsilon").get<double>();
        os << ' ' << std::setw(13) << r.at("delta").get<double>();
        os << ' ' << std::setw(13) << r.at("rho").get<double>();
        os << ' ' << std::setw(13) << r.at("threshold").get<std::uint64_t>();
        os << ' ' << std::setw(13) << r.at("beta").get<std::uint64_t>();
        os << ' ' << std::setw(13) << r.at("N").get<double>();
        os << ' ' << std::setw(13) << r.at("delta_alpha").get<double>();
        os << ' ' << std::setw(13) << r.at("tau").get<std::size_t>();
        os << ' ' << std::setw(13) << r.at("phi_min").get<double>() << '\n';
    }
    return os.str();
}

/// Writes (log T, log R_T) pairs at geometrically spaced T to `csv_path` and
/// returns the tail slope fit. The fit uses all rows, not the subsample.
inline json cmd_plotdata(const std::string& trace_path, const std::string& csv_path) {
    const auto rows = io::read_trace_csv(trace_path);
    if (rows.empty()) throw ConfigError("trace '" + trace_path + "' has no rows");
    std::ostringstream csv;
    csv << "t,log_t,log_cumulative\n";
    for (const TraceRow& r : geometric_subsample(rows)) {
        if (!(r.cumulative > 0.0)) continue;
        csv << r.t << ',' << format_double(std::log(static_cast<double>(r.t))) << ','
            << format_double(std::log(r.cumulative)) << '\n';
    }
    io::write_text_file(csv_path, csv.str());
    const auto fit = fit_tail_slope(rows);
    json out = {{"trace", trace_path}, {"plot_csv", csv_path}, {"rows", rows.size()}};
    if (fit) {
        out["slope"] = fit->slope;
        out["intercept"] = fit->intercept;
        out["points"] = fit->points;
    } else {
        out["slope"] = nullptr;
    }
    return out;
}

} // namespace dsee::cli
