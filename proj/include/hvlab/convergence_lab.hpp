#pragma once
/// Measurement harness for the high-viscosity limit: exponents, the error
/// norms of the convergence statement, the effective-velocity budget,
/// log-log rate fits and the parallel nu-sweep.

#include "hvlab/cns_solver.hpp"
#include "hvlab/limit_solver.hpp"
#include "hvlab/random_fields.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hvlab {

// ---------------------------------------------------------------------------
// Exponents

struct Exponents {
    double p = 0.0;      ///< p_s
    double q = 0.0;      ///< q_s (infinite when p_s = 2)
    double alpha = 0.0;  ///< alpha_s = d/2 - 1 - s
};

/// 1/p_s = d/4 - s/2, 1/q_s = 1/p_s - 1/2, alpha_s = d/2 - 1 - s = 2/q_s.
inline Exponents exponents(double s, int d) {
    if (d < 1 || d > 3) throw ValidationError("dimension must be 1, 2 or 3");
    const double inv_p = d / 4.0 - s / 2.0;
    const double inv_q = inv_p - 0.5;
    if (!(inv_p >= 0.5 - 1e-15) || !(inv_p <= 1.0 + 1e-15))
        throw DomainError("p_s = " + std::to_string(1.0 / inv_p) + " outside [1, 2] for s = " + std::to_string(s));
    Exponents e;
    e.p = 1.0 / inv_p;
    e.q = inv_q > 0.0 ? 1.0 / inv_q : std::numeric_limits<double>::infinity();
    e.alpha = d / 2.0 - 1.0 - s;
    const double defect = std::isinf(e.q) ? e.alpha : e.alpha * e.q - 2.0;
    if (std::abs(defect) > 1e-12) throw DomainError("exponent identity alpha_s q_s = 2 violated");
    return e;
}

// ---------------------------------------------------------------------------
// Rate fitting

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  ///< root mean square of the log residuals
};

/// Least squares of log(error) against log(nu).
inline RateFit fit_rate(const std::vector<double>& nus, const std::vector<double>& errors) {
    if (nus.size() != errors.size()) throw ValidationError("fit_rate needs matching arrays");
    if (nus.size() < 3) throw ValidationError("fit_rate needs at least 3 points");
    const auto n = static_cast<double>(nus.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < nus.size(); ++i) {
        if (!(nus[i] > 0.0) || !(errors[i] > 0.0)) throw ValidationError("fit_rate needs positive inputs");
        const double x = std::log(nus[i]), y = std::log(errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double den = n * sxx - sx * sx;
    if (!(den > 1e-12 * n * sxx)) throw ValidationError("fit_rate needs at least two distinct nu values");
    RateFit f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    double rss = 0.0;
    for (std::size_t i = 0; i < nus.size(); ++i) {
        const double r = std::log(errors[i]) - (f.intercept + f.slope * std::log(nus[i]));
        rss += r * r;
    }
    f.residual = std::sqrt(rss / n);
    return f;
}

// ---------------------------------------------------------------------------
// Errors between a CNS run and a limit run

namespace detail {

inline void require_fields(const CnsRun& cns, const LimitRun& lim) {
    if (cns.frame != Frame::original) throw ValidationError("error norms expect an original-frame CNS run");
    if (cns.snapshots.empty() || lim.fields.empty()) throw ValidationError("empty run");
    if (!(cns.grid() == lim.grid())) throw ValidationError("CNS and limit runs live on different grids");
}

/// b at slow time tau: exact snapshot when available, else linear in time.
inline ScalarField limit_at(const LimitRun& lim, double tau) {
    const auto& t = lim.times;
    const double tol = 1e-9 * std::max(1.0, std::abs(tau));
    if (tau < t.front() - tol || tau > t.back() + tol)
        throw ValidationError("limit run does not cover slow time " + std::to_string(tau));
    auto it = std::lower_bound(t.begin(), t.end(), tau - tol);
    const auto i = static_cast<std::size_t>(it - t.begin());
    if (i < t.size() && std::abs(t[i] - tau) <= tol) return lim.fields[i];
    const double th = (tau - t[i - 1]) / (t[i] - t[i - 1]);
    ScalarField out = (1.0 - th) * lim.fields[i - 1];
    out.axpy(th, lim.fields[i]);
    return out;
}

}  // namespace detail

struct DensityError {
    std::vector<double> times;
    std::vector<double> values;       ///< |a(t) - b(t/nu)|_{B^{d/2-1}_{2,1}}
    std::vector<double> running_sup;
    double sup = 0.0;
};

inline DensityError density_error(const CnsRun& cns, const LimitRun& lim, double nu) {
    detail::require_fields(cns, lim);
    const double d = cns.grid().dim();
    DensityError e;
    for (const auto& snap : cns.snapshots) {
        ScalarField diff = snap.a - detail::limit_at(lim, snap.t / nu);
        const double v = besov_norm_fluctuation(diff, besov(d / 2 - 1));
        e.times.push_back(snap.t);
        e.values.push_back(v);
        e.sup = std::max(e.sup, v);
        e.running_sup.push_back(e.sup);
    }
    return e;
}

struct VelocityError {
    double error = 0.0;    ///< |u - nu^-1 v(nu^-1 .)|_{L^{p_s}_t(B^{d/2}_{2,1})}
    double leading = 0.0;  ///< |nu^-1 v(nu^-1 .)|_{L^{p_s}_t(B^{d/2}_{2,1})}
    double ratio() const { return leading > 0.0 ? error / leading : 0.0; }
};

inline VelocityError velocity_error(const CnsRun& cns, const LimitRun& lim, double nu, double s,
                                    const ConstitutiveModel& model) {
    detail::require_fields(cns, lim);
    const int dim = cns.grid().dim();
    const double p = exponents(s, dim).p;
    std::vector<double> t, err, lead;
    for (const auto& snap : cns.snapshots) {
        VectorField v = (1.0 / nu) * limit_velocity(detail::limit_at(lim, snap.t / nu), cns.c, model);
        t.push_back(snap.t);
        err.push_back(besov_norm_fluctuation(snap.u - v, besov(dim / 2.0)));
        lead.push_back(besov_norm_fluctuation(v, besov(dim / 2.0)));
    }
    return {detail::lq_time(t, err, p), detail::lq_time(t, lead, p)};
}

/// sup over snapshots and grid points of |a(t) - b(t/nu)|.
inline double uniform_error(const CnsRun& cns, const LimitRun& lim, double nu) {
    detail::require_fields(cns, lim);
    double m = 0.0;
    for (const auto& snap : cns.snapshots) m = std::max(m, max_abs(snap.a - detail::limit_at(lim, snap.t / nu)));
    return m;
}

// ---------------------------------------------------------------------------
// Effective-velocity budget

struct BudgetTerm {
    std::string name;
    double value = 0.0;
    double ratio = 0.0;  ///< value / Y
};

struct BudgetReport {
    double nu = 0.0;
    double threshold = 0.0;  ///< c / nu
    double y = 0.0;          ///< c |a0|_{B^s} + |u0|_{B^s}
    std::vector<BudgetTerm> terms;
};

/// The seven weighted norms of the uniform estimate, split at c / nu.
inline BudgetReport effective_velocity_budget(const CnsRun& run, double nu, double c, double s) {
    if (run.frame != Frame::original) throw ValidationError("budget expects an original-frame run");
    if (run.a_norms.empty()) throw ValidationError("empty run");
    BudgetReport r;
    r.nu = nu;
    r.threshold = c / nu;
    const double th = r.threshold;
    const auto first = [](const NormSeries& ns, const BesovSpec& spec) { return besov_from_blocks(ns.blocks.front(), spec); };
    r.y = c * first(run.a_norms, besov(s)) + first(run.u_norms, besov(s));
    const double inf = std::numeric_limits<double>::infinity();
    const auto pl = TimeOrder::plain;
    auto add = [&](std::string name, double v) {
        r.terms.push_back({std::move(name), v, r.y > 0.0 ? v / r.y : 0.0});
    };
    add("c|a|_Linf(B^s)", c * time_besov(run.a_norms, inf, besov(s), pl));
    add("|u|_Linf(B^s)", time_besov(run.u_norms, inf, besov(s), pl));
    add("nu^1/2|u|_L2(B^s+1)", std::sqrt(nu) * time_besov(run.u_norms, 2.0, besov(s + 1), pl));
    add("nu|u|^l_L1(B^s+2)", nu * time_besov(run.u_norms, 1.0, besov_low(s + 2, th), pl));
    add("nu|w|^h_L1(B^s+2)", nu * time_besov(run.w_norms, 1.0, besov_high(s + 2, th), pl));
    add("c nu|a|^l_L1(B^s+2)", c * nu * time_besov(run.a_norms, 1.0, besov_low(s + 2, th), pl));
    add("c^3 nu^-1|a|^h_L1(B^s)", c * c * c / nu * time_besov(run.a_norms, 1.0, besov_high(s, th), pl));
    return r;
}

// ---------------------------------------------------------------------------
// Overdamping table

struct OverdampingRow {
    double nu = 0.0;
    double k = 0.0;
    cplx slow, fast;
    bool overdamped = false;
    bool transition = false;  ///< nu |k| = 2c (repeated root)
};

/// mu only sets the solenoidal rate nu mu |k|^2, which the table does not need.
inline std::vector<OverdampingRow> overdamping_scan(double c, double mu, const std::vector<double>& k_list,
                                                    const std::vector<double>& nu_list) {
    if (!(c > 0.0) || !(mu > 0.0)) throw ValidationError("c and mu must be positive");
    std::vector<OverdampingRow> rows;
    for (double nu : nu_list) {
        for (double k : k_list) {
            if (!(nu > 0.0) || !(k > 0.0)) throw ValidationError("nu and |k| must be positive");
            const auto ev = acoustic_eigenvalues(nu, c, k);
            rows.push_back({nu, k, ev.slow, ev.fast, ev.overdamped, std::abs(nu * k - 2.0 * c) <= 1e-12 * nu * k});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class VelocityData { matched, fixed };

inline std::string to_string(VelocityData v) { return v == VelocityData::matched ? "matched" : "fixed"; }
inline VelocityData velocity_data_from_string(const std::string& s) {
    if (s == "matched") return VelocityData::matched;
    if (s == "fixed") return VelocityData::fixed;
    throw ValidationError("unknown velocity data family: " + s);
}

/// Shared density a0 = b0 (random, band |n| in [k_lo, k_hi], max amplitude
/// `amplitude`); u0 is nu^-1 v(b0) (matched) or a fixed random field.
struct DataFamily {
    double amplitude = 0.02;
    double k_lo = 1.0;
    double k_hi = 4.0;
    VelocityData velocity = VelocityData::matched;
    double u_amplitude = 0.0;  ///< max |u0| for the fixed family
    std::uint64_t seed = 1;
};

struct SweepConfig {
    std::vector<double> nu_list{10, 30, 100, 300, 1000};
    double s = -0.5;
    int dim = 2;
    int n = 128;
    double length = two_pi;
    double c = 1.0;
    ConstitutiveModel model;
    DataFamily data;
    double dtau = 1e-3;      ///< CNS step is nu * dtau
    double tau_end = 2.0;    ///< CNS horizon is nu * tau_end
    double ramp_dt0 = 0.05;  ///< first ramp step, in units of 1 / (nu k_hi^2)
    double ramp_growth = 1.3;
    int snapshot_stride = 10;
    double limit_dtau = 1e-3;
    bool override_small_data = true;
    double eta0 = 0.05;

    void validate() const {
        if (nu_list.size() < 3) throw ValidationError("sweep needs at least 3 nu values");
        for (std::size_t i = 0; i < nu_list.size(); ++i) {
            if (!(nu_list[i] > 0.0)) throw ValidationError("nu values must be positive");
            if (i > 0 && !(nu_list[i] > nu_list[i - 1])) throw ValidationError("nu values must increase");
        }
        if (!(s > -dim / 2.0) || s > dim / 2.0 - 1.0 + 1e-12)
            throw ValidationError("s must lie in (-d/2, d/2 - 1]");
        (void)Grid(dim, n, length);
        if (!(c > 0.0)) throw ValidationError("c must be positive");
        if (!(data.amplitude > 0.0) || !(data.amplitude < 1.0)) throw ValidationError("amplitude must lie in (0, 1)");
        if (!(data.k_lo >= 0.0) || !(data.k_hi >= data.k_lo)) throw ValidationError("bad data band");
        if (data.velocity == VelocityData::fixed && !(data.u_amplitude >= 0.0))
            throw ValidationError("u_amplitude must be nonnegative");
        if (!(dtau > 0.0) || !(tau_end > dtau)) throw ValidationError("need 0 < dtau < tau_end");
        if (!(ramp_dt0 >= 0.0) || !(ramp_growth > 1.0)) throw ValidationError("bad ramp");
        if (snapshot_stride < 1) throw ValidationError("snapshot_stride must be >= 1");
        if (!(limit_dtau > 0.0)) throw ValidationError("limit_dtau must be positive");
    }

    /// True when s is in the window where the rate statement applies.
    bool rate_window() const {
        const double lo = dim == 2 ? -1.0 : dim / 2.0 - 2.0;
        return (dim == 2 ? s > lo : s >= lo - 1e-12) && s <= dim / 2.0 - 1.0 + 1e-12;
    }
};

struct SweepData {
    ScalarField a0;
    VectorField u0;
};

inline SweepData sweep_data(const SweepConfig& cfg, double nu) {
    const Grid g(cfg.dim, cfg.n, cfg.length);
    Rng rng(cfg.data.seed);
    ScalarField b0 = dealias(with_max_amplitude(random_band_limited(g, rng, cfg.data.k_lo, cfg.data.k_hi), cfg.data.amplitude));
    VectorField u0(g);
    if (cfg.data.velocity == VelocityData::matched) {
        u0 = (1.0 / nu) * limit_velocity(b0, cfg.c, cfg.model);
    } else if (cfg.data.u_amplitude > 0.0) {
        u0 = dealias(with_max_amplitude(random_vector_band_limited(g, rng, cfg.data.k_lo, cfg.data.k_hi), cfg.data.u_amplitude));
    }
    return {std::move(b0), std::move(u0)};
}

inline SimConfig sweep_sim_config(const SweepConfig& cfg, double nu) {
    SimConfig sc;
    sc.nu = nu;
    sc.c = cfg.c;
    sc.dt = nu * cfg.dtau;
    sc.t_end = nu * cfg.tau_end;
    sc.snapshot_stride = cfg.snapshot_stride;
    const double kmax = std::max(1.0, cfg.data.k_hi) * two_pi / cfg.length;
    sc.ramp = {cfg.ramp_dt0 / (nu * kmax * kmax), cfg.ramp_growth};
    sc.eta0 = cfg.eta0;
    sc.override_small_data = cfg.override_small_data;
    return sc;
}

struct NuResult {
    double nu = 0.0;
    bool completed = false;
    std::string error;
    std::vector<std::string> caveats;
    DensityError density;
    VelocityError velocity;
    double uniform = 0.0;
    BudgetReport budget;
    SmallDataReport small_data;
    int steps = 0;
    CnsRun cns;       ///< kept only on request
    LimitRun limit;   ///< kept only on request
};

struct MetricFit {
    std::string metric;
    RateFit fit;
    double predicted = 0.0;  ///< -alpha_s for the density rate
};

struct SweepResult {
    SweepConfig config;
    Exponents exps;
    std::vector<NuResult> runs;
    std::vector<MetricFit> fits;
    bool completed = true;
};

/// One nu of a sweep: CNS run, limit run sampled at t / nu, and all metrics.
inline NuResult run_nu(const SweepConfig& cfg, double nu, bool keep_runs = false) {
    NuResult r;
    r.nu = nu;
    try {
        const SweepData data = sweep_data(cfg, nu);
        const SimConfig sc = sweep_sim_config(cfg, nu);
        CnsRun cns = simulate_original(CnsState(0.0, data.a0, data.u0), sc, cfg.model);
        r.small_data = cns.small_data;
        r.caveats = cns.caveats;
        r.steps = cns.steps_taken;
        if (!cns.completed) throw StepRejected("CNS run stopped: " + cns.error, 0.0);

        LimitConfig lc;
        lc.c = cfg.c;
        lc.dt = cfg.limit_dtau;
        lc.form = LimitForm::torus_conservative;
        for (const auto& snap : cns.snapshots) lc.output_times.push_back(snap.t / nu);
        lc.t_end = lc.output_times.back();
        LimitRun lim = simulate_limit(data.a0, lc, cfg.model);
        if (!lim.completed) throw StepRejected("limit run stopped: " + lim.error, 0.0);

        r.density = density_error(cns, lim, nu);
        r.velocity = velocity_error(cns, lim, nu, cfg.s, cfg.model);
        r.uniform = uniform_error(cns, lim, nu);
        r.budget = effective_velocity_budget(cns, nu, cfg.c, cfg.s);
        r.completed = true;
        if (keep_runs) {
            r.cns = std::move(cns);
            r.limit = std::move(lim);
        }
    } catch (const std::exception& e) {
        r.completed = false;
        r.error = e.what();
    }
    return r;
}

/// Called by the worker that produced a result, before the next nu starts.
/// Used for worker-private output; an exception marks that run failed.
using RunHook = std::function<void(std::size_t, NuResult&)>;

/// Runs every nu on a pool of `jobs` workers; results are ordered by nu
/// whatever the scheduling, so the outputs are deterministic.
inline SweepResult run_sweep(const SweepConfig& cfg, int jobs = 1, bool keep_runs = false, const RunHook& on_run = {}) {
    cfg.validate();
    SweepResult res;
    res.config = cfg;
    res.exps = exponents(cfg.s, cfg.dim);
    res.runs.resize(cfg.nu_list.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.nu_list.size(); i = next++) {
            NuResult r = run_nu(cfg, cfg.nu_list[i], keep_runs || static_cast<bool>(on_run));
            if (on_run) {
                try {
                    on_run(i, r);
                } catch (const std::exception& e) {
                    r.completed = false;
                    r.error = std::string("output hook: ") + e.what();
                }
                if (!keep_runs) {
                    r.cns = CnsRun{};
                    r.limit = LimitRun{};
                }
            }
            res.runs[i] = std::move(r);
        }
    };
    const auto workers = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(cfg.nu_list.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    std::vector<double> nus, dens, vel, uni;
    for (const auto& r : res.runs) {
        if (!r.completed) {
            res.completed = false;
            continue;
        }
        nus.push_back(r.nu);
        dens.push_back(r.density.sup);
        vel.push_back(r.velocity.error);
        uni.push_back(r.uniform);
    }
    auto try_fit = [&](const std::string& name, const std::vector<double>& e, double predicted) {
        try {
            res.fits.push_back({name, fit_rate(nus, e), predicted});
        } catch (const ValidationError&) {
            // Too few completed runs or a zero error: no fit reported.
        }
    };
    if (nus.size() >= 3) {
        try_fit("density_sup", dens, -res.exps.alpha);
        try_fit("velocity_error", vel, -1.0 / res.exps.p);
        try_fit("uniform_error", uni, 0.0);
    }
    return res;
}

}  // namespace hvlab
