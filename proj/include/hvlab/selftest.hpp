#pragma once
/// Fast invariant checks, one small group per module. Each check returns a
/// measured quantity and a pass flag against a pinned tolerance.

#include "hvlab/experiment.hpp"

#include <functional>
#include <iomanip>

namespace hvlab {

struct SelftestRow {
    std::string module;
    std::string check;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string error;
};

namespace detail {

struct SelftestCase {
    std::string module, check;
    double tolerance;
    std::function<double()> measure;  ///< pass when measure() <= tolerance
};

inline double max_abs_diff(const VectorField& u, const VectorField& v) { return max_abs(u - v); }

inline std::vector<SelftestCase> selftest_cases(std::uint64_t seed) {
    std::vector<SelftestCase> cases;
    cases.push_back({"spectral_fields", "P + Q = id (d = 2, N = 32)", 1e-12, [seed] {
                         Rng rng(seed);
                         const Grid g(2, 32);
                         VectorField u = random_vector_band_limited(g, rng, 1, 10);
                         auto h = helmholtz_project(u);
                         return max_abs_diff(h.solenoidal + h.potential, u);
                     }});
    cases.push_back({"spectral_fields", "div P u = 0 (d = 2, N = 32)", 1e-12, [seed] {
                         Rng rng(seed + 1);
                         const Grid g(2, 32);
                         return max_abs(divergence(helmholtz_project(random_vector_band_limited(g, rng, 1, 10)).solenoidal));
                     }});
    cases.push_back({"spectral_fields", "FFT round trip (d = 3, N = 16)", 1e-13, [seed] {
                         Rng rng(seed + 2);
                         const Grid g(3, 16);
                         ScalarField f = random_band_limited(g, rng, 1, 6);
                         ScalarField back = ScalarField::from_spectrum(g, {f.spectrum().begin(), f.spectrum().end()});
                         std::vector<double> s(f.samples().begin(), f.samples().end());
                         return max_abs(back - ScalarField(g, s));
                     }});
    cases.push_back({"littlewood_paley", "partition of unity on resolved |k|", 1e-12, [] {
                         const Grid g(2, 64);
                         double err = 0.0;
                         for (double k = 1.0; k <= 32.0 * std::sqrt(2.0); k += 0.37) {
                             double sum = 0.0;
                             for (int j = -2; j <= 8; ++j) sum += block_weight(j, k);
                             err = std::max(err, std::abs(sum - 1.0));
                         }
                         return err;
                     }});
    cases.push_back({"littlewood_paley", "sum of blocks reconstructs the field", 1e-12, [seed] {
                         Rng rng(seed + 3);
                         const Grid g(2, 32);
                         ScalarField f = random_band_limited(g, rng, 1, 15);
                         ScalarField sum(g);
                         const ShellRange r = resolved_shells(g);
                         for (int j = r.j_min; j <= r.j_max; ++j) sum += dyadic_block(f, j);
                         return max_abs(sum - f);
                     }});
    cases.push_back({"constitutive", "gamma law: Q(0) = 0, Q'(0) = 1", 1e-7, [] {
                         const auto law = PressureLaw::gamma_law(1.4);
                         const double h = 1e-6;
                         return std::max(std::abs(law.q(0.0)), std::abs((law.q(h) - law.q(-h)) / (2 * h) - 1.0));
                     }});
    cases.push_back({"constitutive", "A_rho inverse at rho = 1 is (-Lap)^-1 grad", 1e-13, [seed] {
                         Rng rng(seed + 4);
                         const Grid g(2, 32);
                         ScalarField m = random_band_limited(g, rng, 1, 8);
                         auto model = ViscosityModel::power_law(0.3, 1.0);
                         auto sol = invert_A_rho_grad(m, ScalarField::constant(g, 1.0), model);
                         return max_abs(sol.z - inv_neg_laplacian_grad(m));
                     }});
    cases.push_back({"cns_solver", "eigenvalues at nu = 10, c = 1, |k| = 1", 1e-12, [] {
                         auto ev = acoustic_eigenvalues(10.0, 1.0, 1.0);
                         const double slow = (-10.0 + std::sqrt(96.0)) / 2, fast = (-10.0 - std::sqrt(96.0)) / 2;
                         return std::max(std::abs(ev.slow - slow), std::abs(ev.fast - fast));
                     }});
    cases.push_back({"cns_solver", "zero data stays zero", 0.0, [] {
                         const Grid g(2, 16);
                         SimConfig cfg;
                         cfg.nu = 5.0;
                         cfg.dt = 0.01;
                         cfg.t_end = 0.05;
                         CnsRun run = simulate_original(CnsState(0.0, ScalarField(g), VectorField(g)), cfg, {});
                         return max_abs(run.snapshots.back().a) + max_abs(run.snapshots.back().u);
                     }});
    cases.push_back({"limit_solver", "Lagrangian ODE matches w = 1/rho^2 closed form (gamma = 2)", 1e-9, [] {
                         // w' = 1 - w with w = (1 + b)^-2 and c = 1.
                         const double b0 = 0.3;
                         auto tr = lagrangian_ode({b0}, 1e-3, 1.0, 1.0, PressureLaw::gamma_law(2.0));
                         const double w0 = 1.0 / ((1 + b0) * (1 + b0));
                         const double w1 = 1.0 + (w0 - 1.0) * std::exp(-tr.times.back());
                         return std::abs(tr.values.back()[0] - (1.0 / std::sqrt(w1) - 1.0));
                     }});
    cases.push_back({"limit_solver", "limit velocity of zero density is zero", 0.0, [] {
                         const Grid g(2, 16);
                         return max_abs(limit_velocity(ScalarField(g), 1.0, ConstitutiveModel{}));
                     }});
    cases.push_back({"convergence_lab", "alpha_s q_s = 2 and 1/p - 1/q = 1/2 (d = 2, s = -1/2)", 1e-14, [] {
                         auto e = exponents(-0.5, 2);
                         return std::max(std::abs(e.alpha * e.q - 2.0), std::abs(1 / e.p - 1 / e.q - 0.5));
                     }});
    cases.push_back({"convergence_lab", "fit_rate recovers nu^-1", 1e-12, [] {
                         std::vector<double> nus{10, 30, 100, 300}, err;
                         for (double nu : nus) err.push_back(1.0 / nu);
                         return std::abs(fit_rate(nus, err).slope + 1.0);
                     }});
    cases.push_back({"cli", "config round trip keeps the seed", 0.0, [] {
                         auto cfg = parse_config(R"({"kind": "simulate", "seed": 18446744073709551615})");
                         return cfg.seed == 18446744073709551615ull ? 0.0 : 1.0;
                     }});
    return cases;
}

}  // namespace detail

inline std::vector<SelftestRow> run_selftest(std::uint64_t seed) {
    std::vector<SelftestRow> rows;
    for (const auto& c : detail::selftest_cases(seed)) {
        SelftestRow r{c.module, c.check, 0.0, c.tolerance, false, ""};
        try {
            r.measured = c.measure();
            r.pass = r.measured <= c.tolerance;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline void print_selftest_table(std::ostream& os, const std::vector<SelftestRow>& rows) {
    os << std::left << std::setw(18) << "module" << std::setw(62) << "check" << std::setw(14) << "measured"
       << std::setw(10) << "tol" << "result\n";
    for (const auto& r : rows) {
        std::ostringstream m, t;
        m << std::setprecision(3) << r.measured;
        t << std::setprecision(1) << r.tolerance;
        os << std::left << std::setw(18) << r.module << std::setw(62) << r.check << std::setw(14)
           << (r.error.empty() ? m.str() : "error") << std::setw(10) << t.str() << (r.pass ? "PASS" : "FAIL") << "\n";
        if (!r.error.empty()) os << "    " << r.error << "\n";
    }
}

inline ExperimentResult run_selftest_experiment(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto rows = run_selftest(cfg.seed);
    print_selftest_table(log, rows);
    std::string csv = "module,check,measured,tolerance,pass\n";
    json arr = json::array();
    bool all = true;
    for (const auto& r : rows) {
        all = all && r.pass;
        csv += r.module + ",\"" + r.check + "\"," + fmt_double(r.measured) + "," + fmt_double(r.tolerance) + "," +
               (r.pass ? "1" : "0") + "\n";
        arr.push_back({{"module", r.module}, {"check", r.check}, {"measured", r.measured}, {"tolerance", r.tolerance},
                       {"pass", r.pass}, {"error", r.error}});
    }
    write_text(out / "selftest.csv", csv);
    ExperimentResult res;
    res.exit_code = all ? 0 : 1;
    res.report = {{"kind", "selftest"}, {"completed", true}, {"all_pass", all}, {"checks", arr}};
    return res;
}

}  // namespace hvlab
