#pragma once
/// Command-line front end. cli_main is the whole program; tools/hvlab.cpp
/// only forwards argv, so tests can drive it in-process.

#include "hvlab/selftest.hpp"

#include <CLI11.hpp>

#include <cstdlib>

namespace hvlab {

struct CliOptions {
    std::string config;
    std::string out;
    int jobs = 0;
    std::optional<std::uint64_t> seed;
};

/// --jobs, then HVLAB_JOBS, then the config's "jobs", then 1.
inline int resolve_jobs(int flag, const char* env, int config_jobs) {
    if (flag > 0) return flag;
    if (env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1 || v > 4096) throw ValidationError(std::string("HVLAB_JOBS must be a positive integer, got '") + env + "'");
        return static_cast<int>(v);
    }
    return config_jobs > 0 ? config_jobs : 1;
}

inline constexpr const char* default_selftest_config = "{\"kind\": \"selftest\"}\n";

/// Validates, prepares the output directory and runs one experiment.
/// Returns the process exit status.
inline int run_experiment(const std::string& command, const CliOptions& opt, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    fs::path out_dir;
    int jobs = 1;
    try {
        std::string text;
        if (!opt.config.empty()) {
            if (!fs::is_regular_file(opt.config)) throw ValidationError("config file not found: " + opt.config);
            text = read_text(opt.config);
        } else if (command == "selftest") {
            text = default_selftest_config;
        } else {
            throw ValidationError(command + " needs --config PATH");
        }
        cfg = parse_config(text);
        if (to_string(cfg.kind) != command)
            throw ValidationError("config kind '" + to_string(cfg.kind) + "' does not match subcommand '" + command + "'");
        if (opt.seed) set_seed(cfg, *opt.seed);
        jobs = resolve_jobs(opt.jobs, std::getenv("HVLAB_JOBS"), cfg.jobs);
        out_dir = !opt.out.empty() ? fs::path(opt.out) : !cfg.out.empty() ? fs::path(cfg.out) : fs::path("hvlab-out") / command;
    } catch (const ValidationError& e) {
        err << "hvlab: validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "hvlab: validation error: " << e.what() << "\n";
        return 1;
    }

    try {
        fs::create_directories(out_dir);
        write_text(out_dir / "config.json", cfg.text);
    } catch (const std::exception& e) {
        err << "hvlab: cannot prepare output directory: " << e.what() << "\n";
        return 2;
    }

    ExperimentResult res;
    try {
        switch (cfg.kind) {
            case ExperimentKind::simulate: res = run_simulate(cfg, out_dir); break;
            case ExperimentKind::limit: res = run_limit(cfg, out_dir); break;
            case ExperimentKind::sweep: res = run_sweep_experiment(cfg, out_dir, jobs, out); break;
            case ExperimentKind::analyze: res = run_analyze(cfg, out_dir); break;
            case ExperimentKind::selftest: res = run_selftest_experiment(cfg, out_dir, out); break;
        }
    } catch (const ValidationError& e) {
        err << "hvlab: validation error: " << e.what() << "\n";
        res.exit_code = 1;
        res.report = {{"kind", command}, {"completed", false}, {"error", e.what()}};
    } catch (const std::exception& e) {
        err << "hvlab: runtime failure: " << e.what() << "\n";
        res.exit_code = 2;
        res.report = {{"kind", command}, {"completed", false}, {"error", e.what()}};
    }
    res.report["seed"] = cfg.seed;
    res.report["jobs"] = jobs;
    res.report["exit_code"] = res.exit_code;
    try {
        write_json(out_dir / "report.json", res.report);
    } catch (const std::exception& e) {
        err << "hvlab: cannot write report: " << e.what() << "\n";
        return 2;
    }
    out << command << ": " << (res.exit_code == 0 ? "ok" : "failed") << " -> " << out_dir.string() << "\n";
    return res.exit_code;
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"hvlab: high-viscosity limit laboratory for barotropic compressible Navier-Stokes"};
    app.require_subcommand(1);
    CliOptions opt;
    std::uint64_t seed = 0;
    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "run the compressible Navier-Stokes solver"},
        {"limit", "run the high-viscosity limit equation"},
        {"sweep", "nu sweep with error norms and rate fits"},
        {"analyze", "recompute norms from a stored run"},
        {"selftest", "fast invariant checks of every module"},
    };
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "experiment config (JSON)");
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--jobs", opt.jobs, "worker threads (overrides HVLAB_JOBS)")->check(CLI::PositiveNumber);
        seed_opts.push_back(sub->add_option("--seed", seed, "seed for random data"));
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        if (seed_opts[i]->count() > 0) opt.seed = seed;
        return run_experiment(subs[i]->get_name(), opt, out, err);
    }
    return 1;
}

}  // namespace hvlab
