#include "dsee/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

using namespace dsee;
using namespace dsee::cli;

namespace {

void emit_json(const json& doc, const std::string& path) {
    if (path.empty() || path == "-")
        std::cout << doc.dump(2) << '\n';
    else
        io::write_json_file(path, doc);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular MDP laboratory: robust planning with deterministic exploration/exploitation epochs"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run the epoch algorithm from a JSON config");
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed_override;
    bool quiet = false;
    run->add_option("config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output-dir", output_dir, "Output directory (overrides env and config)");
    run->add_option("--seed", seed_override, "Override the config seed");
    run->add_flag("-q,--quiet", quiet, "Suppress the progress summary");

    // solve
    auto* solve = app.add_subcommand("solve", "Solve a model exactly or robustly");
    std::string solve_model, solve_mode = "exact", solve_out;
    double solve_rho = 0.0, solve_tol = 1e-9;
    solve->add_option("model", solve_model, "Model JSON file")->required()->check(CLI::ExistingFile);
    solve->add_option("--mode", solve_mode, "exact or robust")->check(CLI::IsMember({"exact", "robust"}));
    solve->add_option("--rho", solve_rho, "Uncertainty radius for robust mode");
    solve->add_option("--tol", solve_tol, "Sup-norm value tolerance");
    solve->add_option("-o,--output", solve_out, "Write JSON here instead of stdout");

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "Print schedule and exploration-budget diagnostics");
    std::string diag_model, diag_json;
    DiagnoseRequest req;
    diagnose->add_option("model", diag_model, "Model JSON file")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--eta", req.eta, "Epoch growth factor");
    diagnose->add_option("--epochs", req.num_epochs, "Number of epochs");
    diagnose->add_option("--scale", req.explore_scale, "Exploration threshold scale in (0, 1]");
    diagnose->add_option("--kappa", req.params.kappa, "Deviation fraction in (0, 1)");
    diagnose->add_option("--sigma", req.params.sigma, "Mixing-time accuracy");
    diagnose->add_option("--c-const", req.params.c_const, "Concentration constant");
    diagnose->add_option("--delta", req.params.global_delta, "Global failure probability");
    diagnose->add_option("--start-state", req.params.start_state, "Initial state");
    diagnose->add_option("--json", diag_json, "Also write the table as JSON");

    // plotdata
    auto* plot = app.add_subcommand("plotdata", "Log-log data and tail slope from a trace");
    std::string trace_path, plot_csv, slope_json;
    plot->add_option("trace", trace_path, "trace.csv from a run")->required()->check(CLI::ExistingFile);
    plot->add_option("-o,--output", plot_csv, "Output CSV")->required();
    plot->add_option("--slope-json", slope_json, "Write the fit as JSON");

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a random ergodic model");
    GarnetParams gp;
    std::string reward_kind = to_string(gp.reward_kind), gen_out;
    gen->add_option("--states", gp.num_states, "Number of states");
    gen->add_option("--actions", gp.num_actions, "Number of actions");
    gen->add_option("--branching", gp.branching, "Successors per state-action pair");
    gen->add_option("--gamma", gp.gamma, "Discount factor");
    gen->add_option("--rmax", gp.r_max, "Reward upper bound");
    gen->add_option("--seed", gp.seed, "Generator seed")->required();
    gen->add_option("--smoothing", gp.smoothing, "Uniform mixing weight in [0, 1)");
    gen->add_option("--reward-kind", reward_kind, "constant, uniform or bernoulli_scaled");
    gen->add_option("--max-retries", gp.max_retries, "Redraws allowed for non-ergodic draws");
    gen->add_option("-o,--output", gen_out, "Write the model here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigFailure;
    }

    try {
        if (*run) {
            RunConfig c = read_run_config(config_path);
            if (seed_override) c.seed = *seed_override;
            const RunResult r = cmd_run(c, output_dir);
            if (!quiet) {
                std::cout << "output_dir " << r.output_dir << '\n'
                          << "steps " << r.run.trace.size() << '\n'
                          << "cumulative_regret " << format_double(r.run.trace.cumulative()) << '\n'
                          << "trace_fnv1a64 " << r.summary.at("trace").at("fnv1a64").get<std::string>() << '\n';
                if (r.summary.contains("tail_slope"))
                    std::cout << "tail_slope " << format_double(r.summary.at("tail_slope").at("slope").get<double>())
                              << '\n';
            }
        } else if (*solve) {
            emit_json(cmd_solve(io::read_model(solve_model), parse_solve_mode(solve_mode), solve_rho, solve_tol),
                      solve_out);
        } else if (*diagnose) {
            const json doc = cmd_diagnose(io::read_model(diag_model), req);
            std::cout << format_diagnose_table(doc);
            if (!diag_json.empty()) io::write_json_file(diag_json, doc);
        } else if (*plot) {
            const json fit = cmd_plotdata(trace_path, plot_csv);
            if (!slope_json.empty()) io::write_json_file(slope_json, fit);
            if (fit.at("slope").is_null())
                std::cout << "slope n/a\n";
            else
                std::cout << "slope " << format_double(fit.at("slope").get<double>()) << '\n';
        } else if (*gen) {
            gp.reward_kind = parse_reward_kind(reward_kind);
            emit_json(io::to_json(generate_garnet(gp)), gen_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kOk;
}
