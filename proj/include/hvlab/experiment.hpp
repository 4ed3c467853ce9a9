#pragma once
/// Experiment configs (JSON) and the five experiment kinds. Each run writes
/// into one output directory next to a verbatim copy of its config.

#include "hvlab/convergence_lab.hpp"
#include "hvlab/run_record.hpp"

#include <json.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>
#include <set>

namespace hvlab {

using json = nlohmann::json;

enum class ExperimentKind { simulate, limit, sweep, analyze, selftest };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::limit: return "limit";
        case ExperimentKind::sweep: return "sweep";
        case ExperimentKind::analyze: return "analyze";
        case ExperimentKind::selftest: return "selftest";
    }
    return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::simulate, ExperimentKind::limit, ExperimentKind::sweep, ExperimentKind::analyze,
                   ExperimentKind::selftest})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Strict JSON access: wrong types and unknown keys are validation errors.

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object() && !j_.is_null()) throw ValidationError(path_ + " must be an object");
    }

    bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

    template <class T>
    T get(const std::string& key, T fallback) {
        if (!has(key)) {
            used_.insert(key);
            return fallback;
        }
        return require<T>(key);
    }

    template <class T>
    T require(const std::string& key) {
        used_.insert(key);
        if (!has(key)) throw ValidationError("missing key " + where(key));
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ValidationError(where(key) + " must be a number");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValidationError(where(key) + " must be a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ValidationError(where(key) + " must be a string");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) throw ValidationError(where(key) + " must be a nonnegative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ValidationError(where(key) + " must be an integer");
        }
        try {
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ValidationError(where(key) + ": " + e.what());
        }
    }

    Section sub(const std::string& key) {
        used_.insert(key);
        static const json null_json;
        return Section(has(key) ? j_.at(key) : null_json, where(key));
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        if (!j_.is_object()) return;
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ValidationError("unknown key " + where(k));
    }

private:
    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Config

struct DataConfig {
    std::string kind = "random";       ///< random | single_mode
    double amplitude = 0.02;           ///< max |a0| (or |b0|)
    double k_lo = 1.0, k_hi = 4.0;     ///< random band
    std::vector<int> mode{1};          ///< single_mode wave vector
    std::string velocity = "zero";     ///< zero | matched | random (sweep: matched | fixed)
    double u_amplitude = 0.0;
};

struct AnalyzeConfig {
    std::string run;
    std::vector<NormRequest> norms;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::selftest;
    std::uint64_t seed = 1;
    int jobs = 0;  ///< 0 when the config leaves it open
    std::string out;
    int dim = 2, n = 64;
    double length = two_pi;
    ConstitutiveModel model;
    DataConfig data;
    SimConfig cns;
    LimitConfig limit;
    std::optional<double> limit_sigma;
    SweepConfig sweep;
    AnalyzeConfig analyze;
    bool svg = true;
    std::string text;  ///< the config exactly as read

    Grid grid() const { return Grid(dim, n, length); }
};

namespace detail {

inline Summation summation_from_string(const std::string& s) {
    if (s == "1") return Summation::one;
    if (s == "inf") return Summation::infinity;
    throw ValidationError("summation index must be \"1\" or \"inf\", got '" + s + "'");
}

inline Side side_from_string(const std::string& s) {
    for (auto v : {Side::full, Side::low, Side::high})
        if (to_string(v) == s) return v;
    throw ValidationError("side must be full, low or high, got '" + s + "'");
}

inline ConstitutiveModel parse_model(Section pressure, Section viscosity) {
    ConstitutiveModel m;
    if (pressure.has("table")) {
        Section t = pressure.sub("table");
        m.pressure = PressureLaw::table(t.require<std::vector<double>>("rho"), t.require<std::vector<double>>("p"),
                                        t.require<std::vector<double>>("dp"));
        t.finish();
    } else {
        m.pressure = PressureLaw::gamma_law(pressure.get("gamma", 2.0));
    }
    pressure.finish();
    const std::string kind = viscosity.get<std::string>("kind", "constant");
    if (kind == "constant") {
        m.viscosity = ViscosityModel::constant(viscosity.get("mu", 0.5));
    } else if (kind == "power_law") {
        m.viscosity = ViscosityModel::power_law(viscosity.get("mu0", 0.5), viscosity.require<double>("beta"));
    } else {
        throw ValidationError("viscosity.kind must be constant or power_law");
    }
    viscosity.finish();
    return m;
}

inline DataConfig parse_data(Section s) {
    DataConfig d;
    d.kind = s.get("kind", d.kind);
    d.amplitude = s.get("amplitude", d.amplitude);
    d.k_lo = s.get("k_lo", d.k_lo);
    d.k_hi = s.get("k_hi", d.k_hi);
    d.mode = s.get("mode", d.mode);
    d.velocity = s.get("velocity", d.velocity);
    d.u_amplitude = s.get("u_amplitude", d.u_amplitude);
    s.finish();
    if (d.kind != "random" && d.kind != "single_mode") throw ValidationError("data.kind must be random or single_mode");
    if (!(d.amplitude >= 0.0) || !(d.amplitude < 1.0)) throw ValidationError("data.amplitude must lie in [0, 1)");
    if (!(d.k_lo >= 0.0) || !(d.k_hi >= d.k_lo)) throw ValidationError("data band needs 0 <= k_lo <= k_hi");
    if (!(d.u_amplitude >= 0.0)) throw ValidationError("data.u_amplitude must be nonnegative");
    return d;
}

inline NormRequest parse_norm(const json& j, const std::string& path) {
    Section s(j, path);
    NormRequest r;
    r.quantity = s.require<std::string>("quantity");
    r.spec.s = s.require<double>("s");
    r.spec.r = summation_from_string(s.get<std::string>("r", "1"));
    r.spec.side = side_from_string(s.get<std::string>("side", "full"));
    r.spec.threshold = s.get("threshold", 0.0);
    s.finish();
    r.spec.validate();
    if (r.quantity != "a" && r.quantity != "u" && r.quantity != "w" && r.quantity != "b")
        throw ValidationError(path + ".quantity must be a, u, w or b");
    return r;
}

}  // namespace detail

/// Parses and validates; every block is checked whatever the kind.
inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    ExperimentConfig cfg;
    cfg.text = text;
    Section root(j, "");
    cfg.kind = experiment_kind_from_string(root.require<std::string>("kind"));
    cfg.seed = root.get<std::uint64_t>("seed", 1);
    cfg.jobs = root.get("jobs", 0);
    if (cfg.jobs < 0) throw ValidationError("jobs must be >= 1");
    cfg.out = root.get<std::string>("out", "");

    Section grid = root.sub("grid");
    cfg.dim = grid.get("dim", cfg.dim);
    cfg.n = grid.get("n", cfg.n);
    cfg.length = grid.get("length", cfg.length);
    grid.finish();
    (void)cfg.grid();

    cfg.model = detail::parse_model(root.sub("pressure"), root.sub("viscosity"));
    cfg.data = detail::parse_data(root.sub("data"));

    Section cs = root.sub("cns_solver");
    cfg.cns.nu = cs.get("nu", cfg.cns.nu);
    cfg.cns.c = cs.get("c", cfg.cns.c);
    cfg.cns.dt = cs.get("dt", cfg.cns.dt);
    cfg.cns.t_end = cs.get("t_end", cfg.cns.t_end);
    cfg.cns.snapshot_stride = cs.get("snapshot_stride", cfg.cns.snapshot_stride);
    cfg.cns.frame = frame_from_string(cs.get<std::string>("frame", "original"));
    cfg.cns.eta0 = cs.get("eta0", cfg.cns.eta0);
    cfg.cns.override_small_data = cs.get("override_small_data", cfg.cns.override_small_data);
    cfg.cns.cfl = cs.get("cfl", cfg.cns.cfl);
    Section ramp = cs.sub("ramp");
    cfg.cns.ramp.dt0 = ramp.get("dt0", cfg.cns.ramp.dt0);
    cfg.cns.ramp.growth = ramp.get("growth", cfg.cns.ramp.growth);
    ramp.finish();
    cs.finish();
    cfg.cns.validate();

    Section ls = root.sub("limit_solver");
    cfg.limit.c = ls.get("c", cfg.limit.c);
    cfg.limit.dt = ls.get("dt", cfg.limit.dt);
    cfg.limit.t_end = ls.get("t_end", cfg.limit.t_end);
    cfg.limit.snapshot_stride = ls.get("snapshot_stride", cfg.limit.snapshot_stride);
    cfg.limit.output_times = ls.get("output_times", cfg.limit.output_times);
    cfg.limit.form = limit_form_from_string(ls.get<std::string>("form", "whole_space"));
    cfg.limit.cfl = ls.get("cfl", cfg.limit.cfl);
    cfg.limit.eta0 = ls.get("eta0", cfg.limit.eta0);
    if (ls.has("sigma")) cfg.limit_sigma = ls.require<double>("sigma");
    ls.finish();
    cfg.limit.validate();

    Section sw = root.sub("convergence_lab");
    SweepConfig& s = cfg.sweep;
    s.nu_list = sw.get("nu_list", s.nu_list);
    s.s = sw.get("s", s.s);
    s.c = sw.get("c", s.c);
    s.dtau = sw.get("dtau", s.dtau);
    s.tau_end = sw.get("tau_end", s.tau_end);
    s.ramp_dt0 = sw.get("ramp_dt0", s.ramp_dt0);
    s.ramp_growth = sw.get("ramp_growth", s.ramp_growth);
    s.snapshot_stride = sw.get("snapshot_stride", s.snapshot_stride);
    s.limit_dtau = sw.get("limit_dtau", s.limit_dtau);
    s.override_small_data = sw.get("override_small_data", s.override_small_data);
    s.eta0 = sw.get("eta0", s.eta0);
    sw.finish();
    s.dim = cfg.dim;
    s.n = cfg.n;
    s.length = cfg.length;
    s.model = cfg.model;
    s.data.amplitude = cfg.data.amplitude;
    s.data.k_lo = cfg.data.k_lo;
    s.data.k_hi = cfg.data.k_hi;
    s.data.u_amplitude = cfg.data.u_amplitude;
    s.data.seed = cfg.seed;
    if (cfg.kind == ExperimentKind::sweep) {
        if (cfg.data.kind != "random") throw ValidationError("sweeps use data.kind = random");
        s.data.velocity = velocity_data_from_string(cfg.data.velocity == "zero" ? "fixed" : cfg.data.velocity);
        s.validate();
    }

    Section an = root.sub("analyze");
    cfg.analyze.run = an.get<std::string>("run", "");
    if (an.has("norms")) {
        const json& arr = an.raw("norms");
        if (!arr.is_array()) throw ValidationError("analyze.norms must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i)
            cfg.analyze.norms.push_back(detail::parse_norm(arr[i], "analyze.norms[" + std::to_string(i) + "]"));
    }
    an.finish();
    if (cfg.kind == ExperimentKind::analyze && cfg.analyze.run.empty())
        throw ValidationError("analyze needs analyze.run (a simulate or limit output directory)");

    Section output = root.sub("output");
    cfg.svg = output.get("svg", cfg.svg);
    output.finish();
    root.finish();
    return cfg;
}

/// Applies the run seed after a command-line override.
inline void set_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.sweep.data.seed = seed;
}

// ---------------------------------------------------------------------------
// Initial data

inline ScalarField initial_density(const ExperimentConfig& cfg, Rng& rng) {
    const Grid g = cfg.grid();
    if (cfg.data.kind == "single_mode") {
        if (static_cast<int>(cfg.data.mode.size()) != cfg.dim)
            throw ValidationError("data.mode needs one integer per dimension");
        const double kscale = two_pi / cfg.length;
        const auto mode = cfg.data.mode;
        const double amp = cfg.data.amplitude;
        return ScalarField::from_function(g, [&](const std::array<double, 3>& x) {
            double phase = 0.0;
            for (int a = 0; a < static_cast<int>(mode.size()); ++a) phase += mode[static_cast<std::size_t>(a)] * kscale * x[static_cast<std::size_t>(a)];
            return amp * std::cos(phase);
        });
    }
    if (cfg.data.amplitude == 0.0) return ScalarField(g);
    return dealias(with_max_amplitude(random_band_limited(g, rng, cfg.data.k_lo, cfg.data.k_hi), cfg.data.amplitude));
}

inline VectorField initial_velocity(const ExperimentConfig& cfg, const ScalarField& a0, Rng& rng) {
    const auto& v = cfg.data.velocity;
    if (v == "zero") return VectorField(a0.grid());
    if (v == "matched") return (1.0 / cfg.cns.nu) * limit_velocity(a0, cfg.cns.c, cfg.model);
    if (v == "random" || v == "fixed") {
        if (cfg.data.u_amplitude == 0.0) return VectorField(a0.grid());
        return dealias(with_max_amplitude(random_vector_band_limited(a0.grid(), rng, cfg.data.k_lo, cfg.data.k_hi),
                                          cfg.data.u_amplitude));
    }
    throw ValidationError("data.velocity must be zero, matched or random");
}

// ---------------------------------------------------------------------------
// Results

struct ExperimentResult {
    int exit_code = 0;  ///< 0 ok, 1 validation failure, 2 runtime failure
    json report;
};

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

namespace detail {

inline json small_data_json(const SmallDataReport& r) {
    return {{"addends", r.addends}, {"total", r.total}, {"eta0", r.eta0}, {"passed", r.passed}};
}

/// Default norms for a record: the critical pair for each quantity.
inline std::vector<NormRequest> default_norms(const std::vector<std::string>& quantities, int dim) {
    const double d = dim;
    std::vector<NormRequest> out;
    for (const auto& q : quantities) {
        out.push_back({q, besov(d / 2 - 1)});
        out.push_back({q, besov(d / 2)});
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// analyze: recompute norms from stored snapshots

struct RecordNorms {
    std::string csv;
    json summary = json::array();
};

/// Reads a simulate or limit output directory and evaluates the requested
/// norms on every snapshot. Fields are rebuilt from the stored samples, so
/// the result depends only on the files.
inline RecordNorms analyze_record(const fs::path& run_dir, std::vector<NormRequest> norms) {
    if (!fs::is_directory(run_dir)) throw ValidationError("run directory not found: " + run_dir.string());
    const ExperimentConfig src = parse_config(read_text(run_dir / "config.json"));
    const fs::path snap_dir = run_dir / "snapshots";
    const auto index = read_snapshot_index(snap_dir);
    if (index.empty()) throw ValidationError("no snapshots in " + snap_dir.string());
    std::vector<std::string> have;
    if (src.kind == ExperimentKind::simulate) {
        have = {"a", "u", "w"};
    } else if (src.kind == ExperimentKind::limit) {
        have = {"b"};
    } else {
        throw ValidationError("analyze reads simulate or limit outputs, not " + to_string(src.kind));
    }
    if (norms.empty()) norms = detail::default_norms(have, src.dim);
    for (const auto& r : norms) {
        if (std::find(have.begin(), have.end(), r.quantity) == have.end())
            throw ValidationError("quantity '" + r.quantity + "' is not stored in a " + to_string(src.kind) + " record");
        if (r.quantity == "w" && src.cns.frame != Frame::original)
            throw ValidationError("w is available for original-frame records only");
    }
    std::map<std::string, NormSeries> series;
    for (const auto& e : index) {
        if (src.kind == ExperimentKind::simulate) {
            if (e.files.size() != 2) throw ValidationError("simulate index needs a and u files");
            CnsState s(e.t, read_scalar_field(snap_dir / e.files[0]), read_vector_field(snap_dir / e.files[1]));
            series["a"].push(e.t, block_norms_fluctuation(s.a));
            series["u"].push(e.t, block_norms_fluctuation(s.u));
            if (src.cns.frame == Frame::original)
                series["w"].push(e.t, block_norms_fluctuation(effective_velocity(s, src.cns.nu, src.cns.c, src.model)));
        } else {
            series["b"].push(e.t, block_norms_fluctuation(read_scalar_field(snap_dir / e.files.at(0))));
        }
    }
    RecordNorms out;
    out.csv = norms_csv_header();
    for (const auto& r : norms) {
        const NormSeries& ns = series.at(r.quantity);
        append_norm_rows(out.csv, r.quantity, ns, r.spec);
        const auto vals = besov_in_time(ns, r.spec);
        out.summary.push_back({{"quantity", r.quantity},
                               {"norm_id", norm_id(r.spec)},
                               {"sup_t", *std::max_element(vals.begin(), vals.end())},
                               {"l1_t", time_besov(ns, 1.0, r.spec, TimeOrder::plain)}});
    }
    return out;
}

inline ExperimentResult run_analyze(const ExperimentConfig& cfg, const fs::path& out) {
    RecordNorms rn = analyze_record(cfg.analyze.run, cfg.analyze.norms);
    write_text(out / "norms.csv", rn.csv);
    ExperimentResult res;
    res.report = {{"kind", "analyze"}, {"run", cfg.analyze.run}, {"norms", rn.summary}, {"completed", true}};
    return res;
}

// ---------------------------------------------------------------------------
// simulate

inline ExperimentResult run_simulate(const ExperimentConfig& cfg, const fs::path& out) {
    Rng rng(cfg.seed);
    const ScalarField a0 = initial_density(cfg, rng);
    const VectorField u0 = initial_velocity(cfg, a0, rng);
    CnsRun run = simulate_original(CnsState(0.0, a0, u0), cfg.cns, cfg.model);
    if (cfg.cns.frame != Frame::original) run = rescale_run(run, cfg.cns.frame);
    // Written before the verdict so a failed run keeps its partial record.
    write_cns_snapshots(out / "snapshots", run);
    RecordNorms rn = analyze_record(out, {});
    write_text(out / "norms.csv", rn.csv);

    ExperimentResult res;
    res.exit_code = run.completed ? 0 : 2;
    res.report = {{"kind", "simulate"},
                  {"completed", run.completed},
                  {"error", run.error},
                  {"caveats", run.caveats},
                  {"frame", to_string(run.frame)},
                  {"nu", cfg.cns.nu},
                  {"c", cfg.cns.c},
                  {"steps", run.steps_taken},
                  {"snapshots", run.snapshots.size()},
                  {"t_final", run.snapshots.back().t},
                  {"small_data", detail::small_data_json(run.small_data)},
                  {"norms", rn.summary}};
    return res;
}

// ---------------------------------------------------------------------------
// limit

inline ExperimentResult run_limit(const ExperimentConfig& cfg, const fs::path& out) {
    Rng rng(cfg.seed);
    const ScalarField b0 = initial_density(cfg, rng);
    LimitRun run = simulate_limit(b0, cfg.limit, cfg.model);
    write_limit_snapshots(out / "snapshots", run);
    RecordNorms rn = analyze_record(out, {});
    write_text(out / "norms.csv", rn.csv);

    const double sigma = cfg.limit_sigma.value_or(cfg.dim / 2.0 - 1.0);
    const DecayReport dr = monitor_decay(run, cfg.limit.c, sigma);
    std::string decay = "time,norm,integral,ratio\n";
    for (std::size_t i = 0; i < dr.times.size(); ++i)
        decay += fmt_double(dr.times[i]) + "," + fmt_double(dr.norm[i]) + "," + fmt_double(dr.integral[i]) + "," +
                 fmt_double(dr.ratio[i]) + "\n";
    write_text(out / "decay.csv", decay);
    std::vector<double> sup;
    for (const auto& f : run.fields) sup.push_back(max_abs(f));
    if (cfg.svg)
        write_text(out / "decay.svg", svg_line_chart("limit decay", "t", "norm", {{"|b|_B^sigma", dr.times, dr.norm},
                                                                                 {"sup|b|", run.times, sup}},
                                                     false, true));

    ExperimentResult res;
    res.exit_code = run.completed ? 0 : 2;
    res.report = {{"kind", "limit"},
                  {"completed", run.completed},
                  {"error", run.error},
                  {"caveats", run.caveats},
                  {"exploratory", run.exploratory},
                  {"form", to_string(cfg.limit.form)},
                  {"steps", run.steps_taken},
                  {"snapshots", run.fields.size()},
                  {"t_final", run.times.back()},
                  {"decay", {{"sigma", sigma}, {"max_ratio", dr.max_ratio}}},
                  {"sup_initial", sup.front()},
                  {"sup_final", sup.back()},
                  {"norms", rn.summary}};
    return res;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepCheck {
    std::string name;
    bool applicable = true;
    bool pass = false;
    std::string detail;
};

/// Property checks on a finished sweep: the measured density rate against
/// alpha_s, the velocity error / leading-term ratio, the uniform error and
/// the budget uniformity.
inline std::vector<SweepCheck> sweep_checks(const SweepResult& res) {
    std::vector<SweepCheck> out;
    auto fit_of = [&](const std::string& m) -> const MetricFit* {
        for (const auto& f : res.fits)
            if (f.metric == m) return &f;
        return nullptr;
    };
    std::vector<const NuResult*> done;
    for (const auto& r : res.runs)
        if (r.completed) done.push_back(&r);

    SweepCheck rate{"density_rate"};
    const MetricFit* f = fit_of("density_sup");
    rate.applicable = res.config.rate_window();
    const double bound = -(res.exps.alpha - 0.15);
    if (f) {
        rate.pass = f->fit.slope <= bound;
        rate.detail = "slope " + fmt_double(f->fit.slope) + " vs bound " + fmt_double(bound);
    } else {
        rate.detail = "no fit (fewer than 3 completed runs)";
    }
    out.push_back(rate);

    SweepCheck vr{"velocity_ratio_decreasing"};
    vr.pass = done.size() >= 2;
    for (std::size_t i = 1; i < done.size(); ++i)
        if (!(done[i]->velocity.ratio() < done[i - 1]->velocity.ratio())) vr.pass = false;
    vr.detail = std::to_string(done.size()) + " completed runs";
    out.push_back(vr);

    SweepCheck ue{"uniform_error_ratio"};
    ue.pass = done.size() >= 2;
    double worst = 0.0;
    for (std::size_t i = 1; i < done.size(); ++i) {
        const double q = done[i - 1]->uniform > 0.0 ? done[i]->uniform / done[i - 1]->uniform : INFINITY;
        worst = std::max(worst, q);
    }
    if (done.size() >= 2 && !(worst <= 0.7)) ue.pass = false;
    ue.detail = "worst consecutive ratio " + fmt_double(worst) + " (bound 0.7)";
    out.push_back(ue);

    SweepCheck bu{"budget_uniformity"};
    bu.pass = done.size() >= 2;
    double spread = 1.0;
    if (!done.empty()) {
        for (std::size_t t = 0; t < done.front()->budget.terms.size(); ++t) {
            double lo = INFINITY, hi = 0.0;
            for (const auto* r : done) {
                lo = std::min(lo, r->budget.terms[t].ratio);
                hi = std::max(hi, r->budget.terms[t].ratio);
            }
            if (hi == 0.0) continue;  // identically zero term
            spread = std::max(spread, lo > 0.0 ? hi / lo : INFINITY);
        }
    }
    if (!(spread <= 3.0)) bu.pass = false;
    bu.detail = "largest max/min ratio over nu " + fmt_double(spread) + " (bound 3)";
    out.push_back(bu);
    return out;
}

inline std::string nu_dir_name(double nu) { return "nu_" + fmt_double(nu); }

/// Worker-private output of one nu.
inline void write_nu_record(const fs::path& dir, const NuResult& r, int dim) {
    fs::create_directories(dir);
    std::string errors = "time,density_error,running_sup\n";
    for (std::size_t i = 0; i < r.density.times.size(); ++i)
        errors += fmt_double(r.density.times[i]) + "," + fmt_double(r.density.values[i]) + "," +
                  fmt_double(r.density.running_sup[i]) + "\n";
    write_text(dir / "errors.csv", errors);
    std::string budget = "term,value,ratio\n";
    for (const auto& t : r.budget.terms) budget += t.name + "," + fmt_double(t.value) + "," + fmt_double(t.ratio) + "\n";
    write_text(dir / "budget.csv", budget);
    if (!r.cns.snapshots.empty()) {
        std::string norms = norms_csv_header();
        const double d = dim;
        append_norm_rows(norms, "a", r.cns.a_norms, besov(d / 2 - 1));
        append_norm_rows(norms, "u", r.cns.u_norms, besov(d / 2));
        append_norm_rows(norms, "w", r.cns.w_norms, besov(d / 2));
        if (!r.limit.fields.empty()) append_norm_rows(norms, "b", r.limit.b_norms, besov(d / 2 - 1));
        write_text(dir / "norms.csv", norms);
    }
}

inline json nu_json(const NuResult& r) {
    json terms = json::array();
    for (const auto& t : r.budget.terms) terms.push_back({{"name", t.name}, {"value", t.value}, {"ratio", t.ratio}});
    return {{"nu", r.nu},
            {"completed", r.completed},
            {"error", r.error},
            {"caveats", r.caveats},
            {"steps", r.steps},
            {"density_sup", r.density.sup},
            {"velocity_error", r.velocity.error},
            {"velocity_leading", r.velocity.leading},
            {"velocity_ratio", r.velocity.ratio()},
            {"uniform_error", r.uniform},
            {"small_data", detail::small_data_json(r.small_data)},
            {"budget", {{"y", r.budget.y}, {"threshold", r.budget.threshold}, {"terms", terms}}}};
}

inline ExperimentResult run_sweep_experiment(const ExperimentConfig& cfg, const fs::path& out, int jobs,
                                             std::ostream& log) {
    const SweepConfig& sc = cfg.sweep;
    const Exponents exps = exponents(sc.s, sc.dim);
    log << "sweep: " << sc.nu_list.size() << " runs, d = " << sc.dim << ", N = " << sc.n << ", s = " << sc.s
        << ", alpha_s = " << exps.alpha << ", jobs = " << jobs << "\n";
    std::mutex log_mutex;
    const fs::path runs_dir = out / "runs";
    SweepResult res = run_sweep(sc, jobs, false, [&](std::size_t, NuResult& r) {
        const fs::path dir = runs_dir / nu_dir_name(r.nu);
        write_nu_record(dir, r, sc.dim);
        write_json(dir / "summary.json", nu_json(r));
        std::lock_guard lock(log_mutex);
        log << "  nu = " << r.nu << (r.completed ? " done" : " FAILED: " + r.error) << "\n";
    });

    // Merge: every shared file is written here, single-threaded.
    write_text(out / "rates.csv", rates_csv(res));
    std::string budget = "nu,term,value,ratio\n";
    for (const auto& r : res.runs)
        for (const auto& t : r.budget.terms)
            budget += fmt_double(r.nu) + "," + t.name + "," + fmt_double(t.value) + "," + fmt_double(t.ratio) + "\n";
    write_text(out / "budget.csv", budget);

    if (cfg.svg) {
        std::vector<double> nus, dens, vel, lead, uni;
        for (const auto& r : res.runs) {
            if (!r.completed) continue;
            nus.push_back(r.nu);
            dens.push_back(r.density.sup);
            vel.push_back(r.velocity.error);
            lead.push_back(r.velocity.leading);
            uni.push_back(r.uniform);
        }
        write_text(out / "density_sup.svg",
                   svg_line_chart("sup_t density error", "nu", "error", {{"density", nus, dens}}, true, true));
        write_text(out / "velocity_error.svg", svg_line_chart("velocity error", "nu", "L^p_t norm",
                                                              {{"error", nus, vel}, {"leading term", nus, lead}}, true, true));
        write_text(out / "uniform_error.svg",
                   svg_line_chart("sup_{t,x} density error", "nu", "error", {{"uniform", nus, uni}}, true, true));
    }

    json runs = json::array(), fits = json::array(), checks = json::array();
    for (const auto& r : res.runs) runs.push_back(nu_json(r));
    for (const auto& f : res.fits)
        fits.push_back({{"metric", f.metric},
                        {"slope", f.fit.slope},
                        {"intercept", f.fit.intercept},
                        {"residual", f.fit.residual},
                        {"predicted", f.predicted}});
    for (const auto& c : sweep_checks(res))
        checks.push_back({{"name", c.name}, {"applicable", c.applicable}, {"pass", c.pass}, {"detail", c.detail}});
    ExperimentResult er;
    er.exit_code = res.completed ? 0 : 2;
    er.report = {{"kind", "sweep"},
                 {"completed", res.completed},
                 {"exponents", {{"p", exps.p}, {"q", std::isinf(exps.q) ? json("inf") : json(exps.q)}, {"alpha", exps.alpha}}},
                 {"rate_window", sc.rate_window()},
                 {"runs", runs},
                 {"fits", fits},
                 {"checks", checks}};
    return er;
}

}  // namespace hvlab
