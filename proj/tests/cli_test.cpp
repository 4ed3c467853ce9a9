#include "hvlab/cli.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

using namespace hvlab;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("hvlab_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    return dir / name;
}

// Subprocess run of the real binary; returns the exit status.
int run_cli(const std::string& args) {
    const std::string cmd = std::string(HVLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

int run_inproc(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "hvlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str() + err.str();
    return code;
}

const char* simulate_cfg = R"({
  "kind": "simulate",
  "seed": 11,
  "grid": {"dim": 2, "n": 16},
  "data": {"kind": "random", "amplitude": 0.02, "velocity": "matched"},
  "cns_solver": {"nu": 10, "dt": 0.05, "t_end": 0.5, "snapshot_stride": 2, "override_small_data": true}
})";

const char* tiny_sweep_cfg = R"({"kind": "sweep", "seed": 2, "grid": {"dim": 2, "n": 16},
  "data": {"velocity": "matched"},
  "convergence_lab": {"nu_list": [10, 30, 100], "dtau": 0.01, "tau_end": 0.2, "limit_dtau": 0.01}})";

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

TEST(Config, DefaultsAndKind) {
    auto cfg = parse_config(R"({"kind": "simulate"})");
    EXPECT_EQ(cfg.kind, ExperimentKind::simulate);
    EXPECT_EQ(cfg.seed, 1u);
    EXPECT_EQ(cfg.dim, 2);
    EXPECT_TRUE(cfg.model.pressure.is_gamma_law());
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(parse_config("{"), ValidationError);
    EXPECT_THROW(parse_config("[]"), ValidationError);
    EXPECT_THROW(parse_config(R"({"seed": 1})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "fly"})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "sed": 1})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "grid": {"n": "64"}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "grid": {"n": 48}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "seed": -3})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "cns_solver": {"nu": 0}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "cns_solver": {"ramp": {"speed": 1}}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "pressure": {"gamma": 1.0}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "simulate", "viscosity": {"kind": "magic"}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "analyze"})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "analyze", "analyze": {"run": "x", "norms": [{"quantity": "q", "s": 0}]}})"),
                 ValidationError);
}

TEST(Config, SweepBlocksValidateBeforeRunning) {
    EXPECT_THROW(parse_config(R"({"kind": "sweep", "convergence_lab": {"nu_list": [10, 5, 100]}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "sweep", "convergence_lab": {"s": 0.5}})"), ValidationError);
    EXPECT_THROW(parse_config(R"({"kind": "sweep", "data": {"kind": "single_mode"}})"), ValidationError);
    auto cfg = parse_config(tiny_sweep_cfg);
    EXPECT_EQ(cfg.sweep.data.seed, 2u);
    EXPECT_EQ(cfg.sweep.n, 16);
    set_seed(cfg, 99);
    EXPECT_EQ(cfg.sweep.data.seed, 99u);
}

TEST(Config, ModelBlocks) {
    auto cfg = parse_config(R"({"kind": "limit", "pressure": {"gamma": 1.4},
        "viscosity": {"kind": "power_law", "mu0": 0.3, "beta": 2}})");
    EXPECT_FALSE(cfg.model.viscosity.is_constant());
    EXPECT_NEAR(cfg.model.pressure.q(0.0), 0.0, 1e-15);
    auto tab = parse_config(R"({"kind": "limit", "pressure": {"table": {"rho": [0.5, 1, 2], "p": [-0.5, 0, 1],
        "dp": [1, 1, 1]}}})");
    EXPECT_FALSE(tab.model.pressure.is_gamma_law());
}

TEST(Jobs, Precedence) {
    EXPECT_EQ(resolve_jobs(3, "5", 7), 3);
    EXPECT_EQ(resolve_jobs(0, "5", 7), 5);
    EXPECT_EQ(resolve_jobs(0, nullptr, 7), 7);
    EXPECT_EQ(resolve_jobs(0, "", 0), 1);
    EXPECT_THROW(resolve_jobs(0, "two", 1), ValidationError);
    EXPECT_THROW(resolve_jobs(0, "0", 1), ValidationError);
}

// ---------------------------------------------------------------------------
// In-process runs

TEST(CliInProcess, SelftestPassesAndWritesRecord) {
    auto dir = scratch("selftest");
    std::string text;
    EXPECT_EQ(run_inproc({"selftest", "--out", (dir / "o").string()}, &text), 0);
    EXPECT_NE(text.find("PASS"), std::string::npos);
    EXPECT_EQ(text.find("FAIL"), std::string::npos);
    EXPECT_EQ(read_text(dir / "o" / "config.json"), default_selftest_config);
    auto rep = json::parse(read_text(dir / "o" / "report.json"));
    EXPECT_TRUE(rep["all_pass"].get<bool>());
}

TEST(CliInProcess, ConfigPersistedVerbatimAndSeedOverride) {
    auto dir = scratch("verbatim");
    // Odd spacing and key order must survive.
    const std::string text = std::string(simulate_cfg) + "\n\n";
    auto cfg = write_config(dir, "c.json", text);
    ASSERT_EQ(run_inproc({"simulate", "--config", cfg.string(), "--out", (dir / "a").string()}), 0);
    EXPECT_EQ(read_text(dir / "a" / "config.json"), text);
    ASSERT_EQ(run_inproc({"simulate", "--config", cfg.string(), "--out", (dir / "b").string(), "--seed", "12"}), 0);
    EXPECT_EQ(json::parse(read_text(dir / "a" / "report.json"))["seed"].get<std::uint64_t>(), 11u);
    EXPECT_EQ(json::parse(read_text(dir / "b" / "report.json"))["seed"].get<std::uint64_t>(), 12u);
    EXPECT_NE(read_text(dir / "a" / "norms.csv"), read_text(dir / "b" / "norms.csv"));
}

TEST(CliInProcess, KindMustMatchSubcommand) {
    auto dir = scratch("kind");
    auto cfg = write_config(dir, "c.json", simulate_cfg);
    EXPECT_EQ(run_inproc({"limit", "--config", cfg.string(), "--out", (dir / "o").string()}), 1);
    EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(CliInProcess, AnalyzeReproducesSimulateNorms) {
    auto dir = scratch("analyze");
    auto cfg = write_config(dir, "c.json", simulate_cfg);
    ASSERT_EQ(run_inproc({"simulate", "--config", cfg.string(), "--out", (dir / "sim").string()}), 0);
    auto acfg = write_config(dir, "a.json",
                             R"({"kind": "analyze", "analyze": {"run": ")" + (dir / "sim").generic_string() + R"("}})");
    ASSERT_EQ(run_inproc({"analyze", "--config", acfg.string(), "--out", (dir / "an").string()}), 0);
    EXPECT_EQ(read_text(dir / "sim" / "norms.csv"), read_text(dir / "an" / "norms.csv"));
}

TEST(CliInProcess, AnalyzeRejectsMissingQuantity) {
    auto dir = scratch("analyze_bad");
    auto cfg = write_config(dir, "c.json", simulate_cfg);
    ASSERT_EQ(run_inproc({"simulate", "--config", cfg.string(), "--out", (dir / "sim").string()}), 0);
    auto acfg = write_config(dir, "a.json", R"({"kind": "analyze", "analyze": {"run": ")" +
                                                (dir / "sim").generic_string() +
                                                R"(", "norms": [{"quantity": "b", "s": 0}]}})");
    EXPECT_EQ(run_inproc({"analyze", "--config", acfg.string(), "--out", (dir / "an").string()}), 1);
    auto missing = write_config(dir, "m.json", R"({"kind": "analyze", "analyze": {"run": "/nonexistent/run"}})");
    EXPECT_EQ(run_inproc({"analyze", "--config", missing.string(), "--out", (dir / "an2").string()}), 1);
}

TEST(CliInProcess, SweepOutputsAndJobsInvariance) {
    auto dir = scratch("sweep");
    auto cfg = write_config(dir, "c.json", tiny_sweep_cfg);
    ASSERT_EQ(run_inproc({"sweep", "--config", cfg.string(), "--out", (dir / "j1").string(), "--jobs", "1"}), 0);
    ASSERT_EQ(run_inproc({"sweep", "--config", cfg.string(), "--out", (dir / "j3").string(), "--jobs", "3"}), 0);
    const std::string rates = read_text(dir / "j1" / "rates.csv");
    EXPECT_EQ(rates, read_text(dir / "j3" / "rates.csv"));
    EXPECT_EQ(std::count(rates.begin(), rates.end(), '\n'), 4);
    EXPECT_EQ(rates.substr(0, rates.find('\n')), "nu,error,norm_id,velocity_error,velocity_leading,uniform_error");
    for (double nu : {10.0, 30.0, 100.0}) {
        EXPECT_EQ(read_text(dir / "j1" / "runs" / nu_dir_name(nu) / "errors.csv"),
                  read_text(dir / "j3" / "runs" / nu_dir_name(nu) / "errors.csv"));
    }
    EXPECT_TRUE(fs::exists(dir / "j1" / "density_sup.svg"));
    auto rep = json::parse(read_text(dir / "j3" / "report.json"));
    EXPECT_EQ(rep["jobs"].get<int>(), 3);
    EXPECT_EQ(rep["fits"].size(), 3u);
    EXPECT_DOUBLE_EQ(rep["exponents"]["alpha"].get<double>(), 0.5);
    EXPECT_EQ(rep["checks"].size(), 4u);
}

TEST(CliInProcess, EnvJobsUsedWhenFlagAbsent) {
    auto dir = scratch("env");
    auto cfg = write_config(dir, "c.json", tiny_sweep_cfg);
    setenv("HVLAB_JOBS", "2", 1);
    ASSERT_EQ(run_inproc({"sweep", "--config", cfg.string(), "--out", (dir / "o").string()}), 0);
    ASSERT_EQ(run_inproc({"sweep", "--config", cfg.string(), "--out", (dir / "p").string(), "--jobs", "1"}), 0);
    setenv("HVLAB_JOBS", "zero", 1);
    EXPECT_EQ(run_inproc({"sweep", "--config", cfg.string(), "--out", (dir / "q").string()}), 1);
    unsetenv("HVLAB_JOBS");
    EXPECT_EQ(json::parse(read_text(dir / "o" / "report.json"))["jobs"].get<int>(), 2);
    EXPECT_EQ(json::parse(read_text(dir / "p" / "report.json"))["jobs"].get<int>(), 1);
}

TEST(CliInProcess, RuntimeFailureKeepsPartialOutputs) {
    auto dir = scratch("partial");
    // A tiny CFL bound rejects the first step after the initial snapshot.
    auto cfg = write_config(dir, "c.json", R"({"kind": "simulate", "grid": {"dim": 1, "n": 16},
        "data": {"kind": "single_mode", "mode": [1], "amplitude": 0.1, "velocity": "matched"},
        "cns_solver": {"nu": 1, "dt": 0.1, "t_end": 1, "cfl": 1e-9, "override_small_data": true}})");
    EXPECT_EQ(run_inproc({"simulate", "--config", cfg.string(), "--out", (dir / "o").string()}), 2);
    EXPECT_TRUE(fs::exists(dir / "o" / "snapshots" / "a_000000.bin"));
    EXPECT_TRUE(fs::exists(dir / "o" / "norms.csv"));
    auto rep = json::parse(read_text(dir / "o" / "report.json"));
    EXPECT_FALSE(rep["completed"].get<bool>());
    EXPECT_EQ(rep["exit_code"].get<int>(), 2);
}

TEST(CliInProcess, LimitRunWritesDecayTable) {
    auto dir = scratch("limit");
    auto cfg = write_config(dir, "c.json", R"({"kind": "limit", "grid": {"dim": 1, "n": 32},
        "data": {"kind": "single_mode", "mode": [2], "amplitude": 0.01},
        "limit_solver": {"dt": 0.01, "t_end": 0.5, "snapshot_stride": 10}})");
    ASSERT_EQ(run_inproc({"limit", "--config", cfg.string(), "--out", (dir / "o").string()}), 0);
    auto rep = json::parse(read_text(dir / "o" / "report.json"));
    EXPECT_LE(rep["decay"]["max_ratio"].get<double>(), 1.0 + 1e-12);
    EXPECT_LT(rep["sup_final"].get<double>(), rep["sup_initial"].get<double>());
    EXPECT_TRUE(fs::exists(dir / "o" / "decay.csv"));
}

// ---------------------------------------------------------------------------
// Subprocess runs of the installed binary

TEST(CliBinary, ExitCodes) {
    auto dir = scratch("bin");
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("simulate"), 1);
    EXPECT_EQ(run_cli("simulate --config " + (dir / "nope.json").string()), 1);
    EXPECT_EQ(run_cli("simulate --jobs 0 --config x"), 1);
    EXPECT_EQ(run_cli("bogus"), 1);
    auto bad = write_config(dir, "bad.json", R"({"kind": "simulate", "grid": {"dim": 4}})");
    EXPECT_EQ(run_cli("simulate --config " + bad.string() + " --out " + (dir / "x").string()), 1);
    EXPECT_EQ(run_cli("selftest --out " + (dir / "st").string()), 0);
}

TEST(CliBinary, RerunIsByteIdentical) {
    auto dir = scratch("determinism");
    auto cfg = write_config(dir, "c.json", simulate_cfg);
    ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + (dir / "r1").string()), 0);
    ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + (dir / "r2").string()), 0);
    EXPECT_EQ(read_text(dir / "r1" / "norms.csv"), read_text(dir / "r2" / "norms.csv"));
    EXPECT_EQ(read_text(dir / "r1" / "snapshots" / "u_000003.bin"), read_text(dir / "r2" / "snapshots" / "u_000003.bin"));
}

TEST(CliBinary, ShippedConfigsParse) {
    for (const auto& e : fs::directory_iterator(fs::path(HVLAB_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".json") continue;
        SCOPED_TRACE(e.path().string());
        EXPECT_NO_THROW(parse_config(read_text(e.path())));
    }
}
