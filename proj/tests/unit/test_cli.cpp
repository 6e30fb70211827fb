#include "dsee/commands.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace dsee;
using namespace dsee::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dsee_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const fs::path kConfigs = DSEE_CONFIG_DIR;

json base_config() {
    return json::parse(R"({
      "schema": "dsee-run-config/1",
      "model": {"garnet": {"num_states": 3, "num_actions": 2, "seed": 5}},
      "schedule": {"eta": 2.0, "num_epochs": 2, "explore_scale": 0.01},
      "seed": 9
    })");
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(DSEE_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

MdpModel one_state_one_action() {
    return MdpModel(1, 1, {1.0}, {ConstantReward{0.5}}, 0.9, 1.0);
}

} // namespace

TEST(RunConfig, ParsesReferenceConfig) {
    const RunConfig c = read_run_config((kConfigs / "reference.json").string());
    ASSERT_TRUE(c.model.garnet.has_value());
    EXPECT_EQ(c.model.garnet->num_states, 4u);
    EXPECT_EQ(c.model.garnet->num_actions, 2u);
    EXPECT_EQ(c.num_epochs, 6u);
    EXPECT_EQ(c.explore_scale, 0.01);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_TRUE(c.diagnostics);
}

TEST(RunConfig, ModelPathIsRelativeToConfigFile) {
    const RunConfig c = read_run_config((kConfigs / "single_state.json").string());
    ASSERT_TRUE(c.model.path.has_value());
    EXPECT_EQ(fs::path(*c.model.path), kConfigs / "single_state_model.json");
    EXPECT_TRUE(c.write_events);
}

TEST(RunConfig, RejectsInvalidDocuments) {
    const auto rejects = [](auto mutate) {
        json doc = base_config();
        mutate(doc);
        EXPECT_THROW(parse_run_config(doc), ConfigError) << doc.dump();
    };
    rejects([](json& d) { d["colour"] = "blue"; });
    rejects([](json& d) { d["schema"] = "dsee-run-config/0"; });
    rejects([](json& d) { d.erase("schema"); });
    rejects([](json& d) { d.erase("seed"); });
    rejects([](json& d) { d["model"]["path"] = "x.json"; });
    rejects([](json& d) { d["model"] = {{"path", "/nonexistent/model.json"}}; });
    rejects([](json& d) { d["model"]["garnet"].erase("seed"); });
    rejects([](json& d) { d["model"]["garnet"]["shape"] = 1; });
    rejects([](json& d) { d["schedule"]["eta"] = 1.0; });
    rejects([](json& d) { d["schedule"]["num_epochs"] = 0; });
    rejects([](json& d) { d["schedule"]["explore_scale"] = 1.5; });
    rejects([](json& d) { d["schedule"]["explore_scale"] = 0.0; });
    rejects([](json& d) { d["schedule"].erase("num_epochs"); });
    rejects([](json& d) { d["solver"] = {{"tol", -1.0}}; });
    rejects([](json& d) { d["seed"] = "nine"; });
    rejects([](json& d) { d["outputs"] = {{"events", true}, {"plots", true}}; });
    rejects([](json& d) { d["diagnostics"] = {{"gamma", 0.5}}; });
}

TEST(RunConfig, OutputDirectoryPrecedence) {
    RunConfig c;
    c.output_dir = "from-config";
    ::unsetenv(kOutputDirEnv);
    EXPECT_EQ(resolve_output_dir(c), "from-config");
    ::setenv(kOutputDirEnv, "from-env", 1);
    EXPECT_EQ(resolve_output_dir(c), "from-env");
    EXPECT_EQ(resolve_output_dir(c, std::string("from-flag")), "from-flag");
    ::unsetenv(kOutputDirEnv);
}

TEST(ExitCodes, MapErrorFamilies) {
    EXPECT_EQ(exit_code_for(ConfigError("x")), kConfigFailure);
    EXPECT_EQ(exit_code_for(ModelError("x")), kModelFailure);
    EXPECT_EQ(exit_code_for(ErgodicityError("x")), kModelFailure);
    EXPECT_EQ(exit_code_for(NonTerminationError("x")), kRuntimeFailure);
    EXPECT_EQ(exit_code_for(std::runtime_error("x")), kRuntimeFailure);
}

TEST(CmdRun, SingleStateSingleActionHasZeroRegret) {
    const fs::path dir = scratch("one_state");
    io::write_model((dir / "m.json").string(), one_state_one_action());
    json doc = base_config();
    doc["model"] = {{"path", "m.json"}};
    doc["schedule"]["num_epochs"] = 3;
    doc["schedule"]["explore_scale"] = 1.0;
    doc["outputs"] = {{"events", true}};
    const RunConfig c = parse_run_config(doc, dir);
    const RunResult r = cmd_run(c, (dir / "out").string());
    EXPECT_EQ(r.run.trace.cumulative(), 0.0);
    EXPECT_EQ(r.summary.at("final_cumulative_regret").get<double>(), 0.0);
    EXPECT_EQ(r.summary.at("epochs").size(), 3u);
    // all rows have R_T = 0, so no slope can be fitted
    EXPECT_FALSE(r.summary.contains("tail_slope"));
    for (const char* f : {"trace.csv", "summary.json", "model.json", "events.csv", "epochs/epoch_01.json",
                          "epochs/epoch_03.json"})
        EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
    EXPECT_EQ(io::read_trace_csv((dir / "out" / "trace.csv").string()).size(), r.run.trace.size());
}

TEST(CmdRun, SummaryMatchesRunRecord) {
    const fs::path dir = scratch("summary");
    const RunResult r = cmd_run(parse_run_config(base_config()), dir.string());
    const json& s = r.summary;
    EXPECT_EQ(s.at("schema"), kSummarySchema);
    EXPECT_EQ(s.at("total_steps").get<std::size_t>(), r.run.trace.size());
    EXPECT_EQ(s.at("metadata").at("rng"), std::string(Rng::algorithm));
    EXPECT_EQ(s.at("metadata").at("seed").get<std::uint64_t>(), 9u);
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < r.run.epochs.size(); ++j) {
        const json& e = s.at("epochs")[j];
        const EpochRecord& rec = r.run.epochs[j];
        t += rec.exploration_steps + rec.params.beta;
        EXPECT_EQ(e.at("t_end").get<std::uint64_t>(), t);
        EXPECT_EQ(e.at("threshold").get<std::uint64_t>(), rec.params.threshold);
        EXPECT_EQ(e.at("exploration_steps").get<std::uint64_t>(), rec.exploration_steps);
        EXPECT_GE(e.at("min_count").get<std::uint64_t>(), rec.params.threshold);
        EXPECT_EQ(e.at("counted_steps").get<std::uint64_t>() + e.at("gate_closed_steps").get<std::uint64_t>(),
                  rec.exploration_steps);
    }
    EXPECT_EQ(t, r.run.trace.size());
    EXPECT_EQ(s.at("epochs").back().at("cumulative_regret").get<double>(), r.run.trace.cumulative());
    // the hash in the summary is the hash of the file on disk
    io::Fnv1a64 h;
    std::istringstream lines(slurp(dir / "trace.csv"));
    for (std::string line; std::getline(lines, line);) h.update(line + "\n");
    EXPECT_EQ(s.at("trace").at("fnv1a64").get<std::string>(), h.hex());
    const json snap = io::read_json_file((dir / "epochs" / "epoch_02.json").string());
    EXPECT_EQ(snap.at("schema"), kEpochSchema);
    EXPECT_EQ(snap.at("robust").at("policy"), s.at("epochs")[1].at("robust_policy"));
}

TEST(CmdRun, RerunsAreByteIdentical) {
    const RunConfig c = read_run_config((kConfigs / "reference.json").string());
    const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
    cmd_run(c, a.string());
    cmd_run(c, b.string());
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), a);
        EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    }
}

TEST(CmdRun, ReferenceSummaryMatchesGoldenFile) {
    const fs::path golden = fs::path(DSEE_TEST_DATA) / "reference_summary.json";
    const RunConfig c = read_run_config((kConfigs / "reference.json").string());
    const fs::path dir = scratch("golden");
    cmd_run(c, dir.string());
    const std::string text = slurp(dir / "summary.json");
    if (std::getenv("DSEE_UPDATE_GOLDEN")) io::write_text_file(golden.string(), text);
    EXPECT_EQ(text, slurp(golden));
}

TEST(CmdRun, DifferentSeedsDiffer) {
    json doc = base_config();
    const auto first = cmd_run(parse_run_config(doc), scratch("seed_a").string());
    doc["seed"] = 10;
    const auto second = cmd_run(parse_run_config(doc), scratch("seed_b").string());
    EXPECT_NE(first.summary.at("trace").at("fnv1a64"), second.summary.at("trace").at("fnv1a64"));
}

TEST(CmdRun, StepCapSurfacesAsNonTermination) {
    json doc = base_config();
    doc["step_cap"] = 10;
    EXPECT_THROW(cmd_run(parse_run_config(doc), scratch("cap").string()), NonTerminationError);
}

TEST(CmdSolve, ExactAndRobustOnSingleState) {
    const MdpModel m = io::read_model((kConfigs / "single_state_model.json").string());
    const json exact = cmd_solve(m, SolveMode::exact, 0.0, 1e-10);
    EXPECT_EQ(exact.at("policy"), json::array({0}));
    EXPECT_NEAR(exact.at("values")[0].get<double>(), 10.0, 1e-9);
    const json robust0 = cmd_solve(m, SolveMode::robust, 0.0, 1e-10);
    EXPECT_NEAR(robust0.at("values")[0].get<double>(), 10.0, 1e-9);
    const json robust = cmd_solve(m, SolveMode::robust, 0.2, 1e-10);
    EXPECT_EQ(robust.at("policy"), json::array({0}));
    // transitions cannot move, so only the reward interval bites
    EXPECT_NEAR(robust.at("values")[0].get<double>(), (1.0 - 0.2) / (1.0 - 0.9), 1e-8);
    EXPECT_THROW(cmd_solve(m, SolveMode::robust, -0.1, 1e-9), ConfigError);
    EXPECT_THROW(parse_solve_mode("fuzzy"), ConfigError);
}

TEST(CmdDiagnose, TableHasOneRowPerEpoch) {
    const MdpModel m = io::read_model(std::string(DSEE_TEST_DATA) + "/garnet_5x3_seed7.json");
    DiagnoseRequest r;
    r.num_epochs = 4;
    const json doc = cmd_diagnose(m, r);
    ASSERT_EQ(doc.at("table").size(), 4u);
    const auto sched = build_schedule(2.0, 4, 5, 3, 0.9, 1.0, 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(doc.at("table")[j].at("threshold").get<std::uint64_t>(), sched.epochs[j].threshold);
        EXPECT_GT(doc.at("table")[j].at("N").get<double>(), doc.at("table")[j].at("threshold").get<double>());
    }
    const std::string table = format_diagnose_table(doc);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
    EXPECT_EQ(table.rfind("j ", 0), 0u);
}

TEST(CmdPlotdata, RecoversSyntheticSlope) {
    const fs::path dir = scratch("plot");
    RegretTrace trace;
    for (std::uint64_t t = 1; t <= 20000; ++t) {
        const double inc = std::sqrt(static_cast<double>(t)) - std::sqrt(static_cast<double>(t - 1));
        trace.append(t <= 1000 ? 1 : 2, t <= 1000 ? Phase::explore : Phase::exploit, inc);
    }
    {
        std::ofstream out(dir / "trace.csv", std::ios::binary);
        io::write_trace_csv(out, trace);
    }
    const json fit = cmd_plotdata((dir / "trace.csv").string(), (dir / "plot.csv").string());
    EXPECT_NEAR(fit.at("slope").get<double>(), 0.5, 1e-6);
    EXPECT_EQ(fit.at("rows").get<std::size_t>(), 20000u);
    const std::string csv = slurp(dir / "plot.csv");
    EXPECT_EQ(csv.rfind("t,log_t,log_cumulative\n", 0), 0u);
    EXPECT_NE(csv.find("\n20000,"), std::string::npos);
}

TEST(Binary, ExitCodes) {
    const fs::path dir = scratch("binary");
    const fs::path log = dir / "log.txt";
    EXPECT_EQ(run_cli("--help", log), 0);
    EXPECT_EQ(run_cli("--version", log), 0);
    EXPECT_EQ(run_cli("", log), kConfigFailure);
    EXPECT_EQ(run_cli("frobnicate", log), kConfigFailure);
    EXPECT_EQ(run_cli("run /nonexistent.json", log), kConfigFailure);

    json bad = base_config();
    bad["colour"] = 1;
    io::write_json_file((dir / "bad.json").string(), bad);
    EXPECT_EQ(run_cli("run " + (dir / "bad.json").string(), log), kConfigFailure);
    EXPECT_NE(slurp(log).find("colour"), std::string::npos);

    // a two-state chain that never leaves its start state
    io::write_text_file((dir / "stuck.json").string(), R"({"num_states":2,"num_actions":1,"gamma":0.9,"r_max":1,
      "transition":[[[1,0]],[[0,1]]],
      "rewards":[[{"kind":"constant","params":{"v":0}}],[{"kind":"constant","params":{"v":1}}]]})");
    json stuck = base_config();
    stuck["model"] = {{"path", "stuck.json"}};
    io::write_json_file((dir / "stuck_run.json").string(), stuck);
    EXPECT_EQ(run_cli("run " + (dir / "stuck_run.json").string() + " -o " + (dir / "o").string(), log),
              kModelFailure);

    io::write_text_file((dir / "leaky.json").string(), R"({"num_states":1,"num_actions":1,"gamma":0.9,"r_max":1,
      "transition":[[[0.5]]],"rewards":[[{"kind":"constant","params":{"v":0}}]]})");
    EXPECT_EQ(run_cli("solve " + (dir / "leaky.json").string(), log), kModelFailure);

    json capped = base_config();
    capped["step_cap"] = 10;
    io::write_json_file((dir / "capped.json").string(), capped);
    EXPECT_EQ(run_cli("run " + (dir / "capped.json").string() + " -o " + (dir / "o").string(), log),
              kRuntimeFailure);

    EXPECT_EQ(run_cli("generate --seed 3 --states 4 --actions 2 -o " + (dir / "g.json").string(), log), 0);
    EXPECT_EQ(io::read_model((dir / "g.json").string()).num_states(), 4u);
    EXPECT_EQ(run_cli("generate --seed 3 --states 4 --branching 9", log), kConfigFailure);
    EXPECT_EQ(run_cli("solve " + (dir / "g.json").string() + " --mode sideways", log), kConfigFailure);
}

TEST(Binary, EnvironmentOverridesConfigOutputDir) {
    const fs::path dir = scratch("env");
    json doc = base_config();
    doc["output_dir"] = (dir / "from_config").string();
    io::write_json_file((dir / "c.json").string(), doc);
    const std::string cmd = "DSEE_OUTPUT_DIR=" + (dir / "from_env").string() + " " + DSEE_CLI_PATH + " run -q " +
                            (dir / "c.json").string();
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir / "from_env" / "summary.json"));
    EXPECT_FALSE(fs::exists(dir / "from_config"));
}
