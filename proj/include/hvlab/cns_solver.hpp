#pragma once
/// Compressible Navier-Stokes in the original frame (CNS_{nu,c}), with the
/// acoustic (nu = c = 1) and diffusive frames produced by exact rescaling.
///
/// Per Fourier mode the linear part couples (a, d = i k.u) through
///   M_k = [[0, -1], [c^2 |k|^2, -nu |k|^2]]
/// and damps the solenoidal part at rate nu mu |k|^2. Time stepping is the
/// second-order exponential Runge-Kutta scheme
///   U1 = e^{hL/2} U + (h/2) phi1(hL/2) N(U)
///   U+ = e^{hL} U + h (phi1 - 2 phi2)(hL) N(U) + 2h phi2(hL) N(U1)
/// so the stiff linear flow never limits the step.

#include "hvlab/constitutive.hpp"
#include "hvlab/littlewood_paley.hpp"
#include "hvlab/spectral_fields.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace hvlab {

// ---------------------------------------------------------------------------
// Linear analysis

struct AcousticEigenvalues {
    cplx slow;
    cplx fast;
    bool overdamped = false;
};

/// Roots of lambda^2 + nu k^2 lambda + c^2 k^2 = 0. In the overdamped case
/// the slow root is formed as D / lambda_fast to avoid cancellation.
inline AcousticEigenvalues acoustic_eigenvalues(double nu, double c, double kmag) {
    const double k2 = kmag * kmag;
    const double trace = -nu * k2;
    const double det = c * c * k2;
    const double disc = 0.25 * trace * trace - det;
    AcousticEigenvalues ev;
    if (disc >= 0.0) {
        const double fast = 0.5 * trace - std::sqrt(disc);
        ev.fast = fast;
        ev.slow = fast != 0.0 ? det / fast : 0.0;
        ev.overdamped = true;
    } else {
        ev.slow = cplx(0.5 * trace, std::sqrt(-disc));
        ev.fast = cplx(0.5 * trace, -std::sqrt(-disc));
    }
    return ev;
}

using Block2 = std::array<double, 4>;  ///< row-major 2x2

namespace detail {

inline double phi1_scalar(double z) {
    if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
    return std::expm1(z) / z;
}

inline double phi2_scalar(double z) {
    if (std::abs(z) < 1e-2) return 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0 + z * z * z * z / 720.0;
    return (std::expm1(z) - z) / (z * z);
}

/// exp, phi1, phi2 of a 2x2 matrix through the augmented 6x6 exponential.
inline std::array<Block2, 3> phi_blocks(const Eigen::Matrix2d& a) {
    Eigen::Matrix<double, 6, 6> aug = Eigen::Matrix<double, 6, 6>::Zero();
    aug.block<2, 2>(0, 0) = a;
    aug.block<2, 2>(0, 2) = Eigen::Matrix2d::Identity();
    aug.block<2, 2>(2, 4) = Eigen::Matrix2d::Identity();
    Eigen::Matrix<double, 6, 6> e = aug.exp();
    std::array<Block2, 3> out;
    for (int b = 0; b < 3; ++b)
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) out[static_cast<std::size_t>(b)][static_cast<std::size_t>(2 * r + c)] = e(r, 2 * b + c);
    return out;
}

inline cplx apply_row(const Block2& m, int row, cplx x, cplx y) {
    return m[static_cast<std::size_t>(2 * row)] * x + m[static_cast<std::size_t>(2 * row + 1)] * y;
}

}  // namespace detail

/// Exponential-integrator coefficients of one |k|^2 for one step size.
struct ModeCoefficients {
    Block2 e_full{}, phi1_full{}, phi2_full{}, e_half{}, phi1_half{};
    double s_e_full = 1.0, s_phi1_full = 1.0, s_phi2_full = 0.5, s_e_half = 1.0, s_phi1_half = 1.0;
};

/// Per-mode linear flow of (CNS_{nu,c}) over a step dt.
class LinearPropagator {
public:
    LinearPropagator(const Grid& g, double nu, double c, double mu, double dt)
        : grid_(g), nu_(nu), c_(c), mu_(mu), dt_(dt) {
        if (!(nu > 0.0) || !(c > 0.0) || !(mu > 0.0)) throw ValidationError("propagator needs nu, c, mu > 0");
        if (!(dt >= 0.0) || !std::isfinite(dt)) throw ValidationError("propagator step must be >= 0");
        const auto& lat = lattice(g);
        const double unit2 = g.wavenumber_unit() * g.wavenumber_unit();
        for (long key : lat.k2_key) {
            if (coeffs_.count(key)) continue;
            coeffs_.emplace(key, compute(unit2 * static_cast<double>(key)));
        }
    }

    double dt() const { return dt_; }
    double nu() const { return nu_; }
    double c() const { return c_; }
    double mu() const { return mu_; }
    const Grid& grid() const { return grid_; }

    /// Generator M_k for physical |k|^2.
    Eigen::Matrix2d generator(double k2) const {
        Eigen::Matrix2d m;
        m << 0.0, -1.0, c_ * c_ * k2, -nu_ * k2;
        return m;
    }

    const ModeCoefficients& coefficients(long key) const { return coeffs_.at(key); }

    /// exp(dt M_k) for the mode with integer |n|^2 = key.
    const Block2& acoustic_block(long key) const { return coeffs_.at(key).e_full; }
    double solenoidal_decay(long key) const { return coeffs_.at(key).s_e_full; }

    /// Pure linear evolution of (a, u) over one step.
    void apply(ScalarField& a, VectorField& u) const {
        const auto& lat = lattice(grid_);
        const int d = grid_.dim();
        auto as = a.spectrum_mut();
        std::vector<std::span<cplx>> us;
        for (int c = 0; c < d; ++c) us.push_back(u[c].spectrum_mut());
        for (std::size_t i = 0; i < as.size(); ++i) {
            const ModeCoefficients& mc = coeffs_.at(lat.k2_key[i]);
            const double k2 = lat.k2[i];
            if (k2 == 0.0) continue;
            cplx dv{};
            for (int c = 0; c < d; ++c) dv += cplx(0.0, lat.k[i][static_cast<std::size_t>(c)]) * us[static_cast<std::size_t>(c)][i];
            const cplx a_new = detail::apply_row(mc.e_full, 0, as[i], dv);
            const cplx d_new = detail::apply_row(mc.e_full, 1, as[i], dv);
            for (int c = 0; c < d; ++c) {
                const double kc = lat.k[i][static_cast<std::size_t>(c)];
                cplx& uc = us[static_cast<std::size_t>(c)][i];
                const cplx pot = cplx(0.0, -kc / k2) * dv;
                uc = mc.s_e_full * (uc - pot) + cplx(0.0, -kc / k2) * d_new;
            }
            as[i] = a_new;
        }
    }

private:
    ModeCoefficients compute(double k2) const {
        ModeCoefficients mc;
        if (k2 == 0.0) {
            mc.e_full = mc.e_half = {1, 0, 0, 1};
            mc.phi1_full = mc.phi1_half = {1, 0, 0, 1};
            mc.phi2_full = {0.5, 0, 0, 0.5};
            return mc;
        }
        const Eigen::Matrix2d m = generator(k2);
        auto full = detail::phi_blocks(dt_ * m);
        auto half = detail::phi_blocks(0.5 * dt_ * m);
        mc.e_full = full[0];
        mc.phi1_full = full[1];
        mc.phi2_full = full[2];
        mc.e_half = half[0];
        mc.phi1_half = half[1];
        const double z = -nu_ * mu_ * k2 * dt_;
        mc.s_e_full = std::exp(z);
        mc.s_phi1_full = detail::phi1_scalar(z);
        mc.s_phi2_full = detail::phi2_scalar(z);
        mc.s_e_half = std::exp(0.5 * z);
        mc.s_phi1_half = detail::phi1_scalar(0.5 * z);
        return mc;
    }

    Grid grid_;
    double nu_, c_, mu_, dt_;
    std::unordered_map<long, ModeCoefficients> coeffs_;
};

inline LinearPropagator build_propagator(const Grid& g, double nu, double c, double mu, double dt) {
    return LinearPropagator(g, nu, c, mu, dt);
}

// ---------------------------------------------------------------------------
// States, frames and configuration

enum class Frame { original, acoustic, diffusive };

inline std::string to_string(Frame f) {
    switch (f) {
        case Frame::acoustic: return "acoustic";
        case Frame::diffusive: return "diffusive";
        default: return "original";
    }
}

inline Frame frame_from_string(const std::string& s) {
    if (s == "original") return Frame::original;
    if (s == "acoustic") return Frame::acoustic;
    if (s == "diffusive") return Frame::diffusive;
    throw ValidationError("unknown frame '" + s + "'");
}

struct CnsState {
    double t = 0.0;
    ScalarField a;
    VectorField u;

    CnsState(double time, ScalarField density, VectorField velocity)
        : t(time), a(std::move(density)), u(std::move(velocity)) {
        if (!(a.grid() == u.grid())) throw ValidationError("state fields live on different grids");
    }
    const Grid& grid() const { return a.grid(); }
};

/// Geometric step ramp used to resolve the initial layer.
struct StepRamp {
    double dt0 = 0.0;     ///< first step; 0 disables the ramp
    double growth = 1.5;  ///< ratio of consecutive ramp steps
};

struct SimConfig {
    double nu = 1.0;
    double c = 1.0;
    double dt = 1e-3;
    double t_end = 1.0;
    int snapshot_stride = 1;
    Frame frame = Frame::original;  ///< frame the record is reported in
    StepRamp ramp;
    double eta0 = 0.05;
    bool override_small_data = false;
    double cfl = 0.5;

    void validate() const {
        if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("nu must be positive");
        if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("c must be positive");
        if (!(dt > 0.0)) throw ValidationError("dt must be positive");
        if (!(t_end >= dt)) throw ValidationError("t_end must be >= dt");
        if (snapshot_stride < 1) throw ValidationError("snapshot_stride must be >= 1");
        if (ramp.dt0 < 0.0 || (ramp.dt0 > 0.0 && !(ramp.growth > 1.0)))
            throw ValidationError("ramp needs dt0 >= 0 and growth > 1");
        if (!(eta0 > 0.0)) throw ValidationError("eta0 must be positive");
    }
};

/// Step sizes and whether a snapshot follows each step. Independent of the
/// stride except for the flags, so runs with different strides share times.
struct TimeGrid {
    std::vector<double> steps;
    std::vector<bool> snapshot_after;
};

inline TimeGrid make_time_grid(double dt, double t_end, int stride, const StepRamp& ramp) {
    TimeGrid tg;
    double t = 0.0;
    int regular = 0;
    if (ramp.dt0 > 0.0) {
        for (double h = ramp.dt0; h < dt && t + h < t_end; h *= ramp.growth) {
            tg.steps.push_back(h);
            tg.snapshot_after.push_back(true);
            t += h;
        }
    }
    while (t_end - t > 1e-12 * dt) {
        const double h = std::min(dt, t_end - t);
        tg.steps.push_back(h);
        t += h;
        ++regular;
        const bool last = t_end - t <= 1e-12 * dt;
        tg.snapshot_after.push_back(last || regular % stride == 0);
    }
    return tg;
}

// ---------------------------------------------------------------------------
// Small-data check and effective velocity

struct SmallDataReport {
    std::array<double, 3> addends{};  ///< nu^-1 c |a0|_{d/2-1}, |a0|_{d/2}, nu^-1 |u0|_{d/2-1}
    double total = 0.0;
    double eta0 = 0.0;
    bool passed = true;
};

inline SmallDataReport check_small_data(const ScalarField& a0, const VectorField& u0, double nu, double c,
                                        double eta0 = 0.05) {
    const double d = a0.grid().dim();
    SmallDataReport r;
    r.addends[0] = c / nu * besov_norm_fluctuation(a0, besov(d / 2 - 1));
    r.addends[1] = besov_norm_fluctuation(a0, besov(d / 2));
    r.addends[2] = besov_norm_fluctuation(u0, besov(d / 2 - 1)) / nu;
    r.total = r.addends[0] + r.addends[1] + r.addends[2];
    r.eta0 = eta0;
    r.passed = r.total <= eta0;
    return r;
}

/// Original frame: w = u + c^2 nu^-1 (-Delta)^-1 grad P(rho); variable
/// viscosity replaces (-Delta)^-1 grad by A_rho^-1 grad.
inline VectorField effective_velocity(const CnsState& s, double nu, double c, const ConstitutiveModel& model) {
    ScalarField p = dealias(q_of(s.a, model.pressure));
    VectorField corr = model.viscosity.is_constant()
                           ? inv_neg_laplacian_grad(p)
                           : invert_A_rho_grad(p, s.a + ScalarField::constant(s.grid(), 1.0), model.viscosity).z;
    return s.u + (c * c / nu) * corr;
}

/// Diffusive frame: w = u + c^2 (-Delta)^-1 grad Q(a) (variable: A_rho^-1).
inline VectorField effective_velocity_diffusive(const CnsState& s, double c, const ConstitutiveModel& model) {
    return effective_velocity(s, 1.0, c, model);
}

// ---------------------------------------------------------------------------
// Stepping

namespace detail {

struct Rhs {
    ScalarField a;
    VectorField u;
};

/// Nonlinear remainder of (CNS_{nu,c}) in the original frame.
inline Rhs nonlinear_terms(const ScalarField& a, const VectorField& u, double nu, double c,
                           const ConstitutiveModel& model) {
    const Grid& g = a.grid();
    const int d = g.dim();
    const double c2 = c * c;

    VectorField flux(g);
    for (int i = 0; i < d; ++i) flux[i] = dealiased_product(a, u[i]);
    ScalarField na = -1.0 * divergence(flux);

    ScalarField q = dealias(q_of(a, model.pressure));
    VectorField grad_q = gradient(q);

    VectorField visc(g);
    VectorField deviation(g);
    if (model.viscosity.is_constant()) {
        visc = nu * apply_A_const(u, model.viscosity.mu1());
    } else {
        ScalarField rho = a + ScalarField::constant(g, 1.0);
        VectorField arho = apply_A_rho(u, rho, model.viscosity);
        deviation = nu * (arho - apply_A_const(u, model.viscosity.mu1()));
        visc = nu * arho;
    }
    visc.axpy(c2, grad_q);

    ScalarField ratio = dealias(pointwise(a, [](double v) { return v / (1.0 + v); }));
    VectorField nu_out(g);
    for (int i = 0; i < d; ++i) {
        ScalarField adv(g);
        VectorField gi = gradient(u[i]);
        for (int j = 0; j < d; ++j) adv += dealiased_product(u[j], gi[j]);
        ScalarField term = dealiased_product(ratio, visc[i]) - adv;
        term.axpy(-c2, grad_q[i] - partial(a, i));
        nu_out[i] = std::move(term);
    }
    if (!model.viscosity.is_constant()) nu_out -= deviation;
    return {std::move(na), std::move(nu_out)};
}

inline void check_step_admissible(const ScalarField& a, const VectorField& u, double h, double cfl, double t) {
    const double m = 1.0 + min_value(a);
    if (!(m > 0.0))
        throw StepRejected("positivity lost at t = " + std::to_string(t) + ": min(1 + a) = " + std::to_string(m), m);
    const Grid& g = a.grid();
    const double courant = h * max_abs(u) * g.n() / g.length();
    if (!(courant <= cfl))
        throw StepRejected("CFL violated at t = " + std::to_string(t) + ": dt max|u| N / L = " + std::to_string(courant),
                           courant);
}

/// Exponential update per mode in (a, d, solenoidal) coordinates: the
/// stage form when n2 is null, the final combination otherwise.
inline void combine(const Grid& g, const std::vector<const ModeCoefficients*>& coeffs, bool half, double h,
                    const ScalarField& a, const VectorField& u, const Rhs& n1, const Rhs* n2, ScalarField& a_out,
                    VectorField& u_out) {
    const auto& lat = lattice(g);
    const int d = g.dim();
    auto as = a.spectrum();
    auto na = n1.a.spectrum();
    std::span<const cplx> nb = n2 ? n2->a.spectrum() : std::span<const cplx>{};
    std::vector<cplx> a_new(as.size());
    std::array<std::vector<cplx>, 3> u_new;
    std::array<std::span<const cplx>, 3> us, nus, nus2;
    for (int c = 0; c < d; ++c) {
        const auto uc = static_cast<std::size_t>(c);
        us[uc] = u[c].spectrum();
        nus[uc] = n1.u[c].spectrum();
        if (n2) nus2[uc] = n2->u[c].spectrum();
        u_new[uc].resize(as.size());
    }
    for (std::size_t i = 0; i < as.size(); ++i) {
        const ModeCoefficients& mc = *coeffs[i];
        const double k2 = lat.k2[i];
        const auto& kv = lat.k[i];
        // Projections onto (a, d) and solenoidal parts.
        cplx dv{}, ndv{}, ndv2{};
        for (int c = 0; c < d; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            const cplx ik(0.0, kv[uc]);
            dv += ik * us[uc][i];
            ndv += ik * nus[uc][i];
            if (n2) ndv2 += ik * nus2[uc][i];
        }
        const Block2& e = half ? mc.e_half : mc.e_full;
        const Block2& p1 = half ? mc.phi1_half : mc.phi1_full;
        const double se = half ? mc.s_e_half : mc.s_e_full;
        const double sp1 = half ? mc.s_phi1_half : mc.s_phi1_full;
        cplx a_n, d_n;
        double w1s;  // solenoidal weight of n1
        double w2s = 0.0;
        if (!n2) {
            a_n = apply_row(e, 0, as[i], dv) + h * apply_row(p1, 0, na[i], ndv);
            d_n = apply_row(e, 1, as[i], dv) + h * apply_row(p1, 1, na[i], ndv);
            w1s = h * sp1;
        } else {
            // Weights (phi1 - 2 phi2) on n1 and 2 phi2 on n2.
            Block2 b1, b2;
            for (std::size_t q = 0; q < 4; ++q) {
                b1[q] = mc.phi1_full[q] - 2.0 * mc.phi2_full[q];
                b2[q] = 2.0 * mc.phi2_full[q];
            }
            a_n = apply_row(e, 0, as[i], dv) + h * (apply_row(b1, 0, na[i], ndv) + apply_row(b2, 0, nb[i], ndv2));
            d_n = apply_row(e, 1, as[i], dv) + h * (apply_row(b1, 1, na[i], ndv) + apply_row(b2, 1, nb[i], ndv2));
            w1s = h * (mc.s_phi1_full - 2.0 * mc.s_phi2_full);
            w2s = h * 2.0 * mc.s_phi2_full;
        }
        a_new[i] = a_n;
        for (int c = 0; c < d; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            // Potential part = back * d; the mean mode has no potential part.
            const cplx back = k2 > 0.0 ? cplx(0.0, -kv[uc] / k2) : cplx{};
            const cplx sol = us[uc][i] - back * dv;
            const cplx nsol = nus[uc][i] - back * ndv;
            cplx sol_new = se * sol + w1s * nsol;
            if (n2) sol_new += w2s * (nus2[uc][i] - back * ndv2);
            u_new[uc][i] = sol_new + back * d_n;
        }
    }
    a_out = ScalarField::from_spectrum(g, std::move(a_new));
    std::vector<ScalarField> comps;
    for (int c = 0; c < d; ++c) comps.push_back(ScalarField::from_spectrum(g, std::move(u_new[static_cast<std::size_t>(c)])));
    u_out = VectorField(std::move(comps));
}

}  // namespace detail

/// Exponential RK2 stepper for (CNS_{nu,c}) with cached coefficients per step size.
class CnsStepper {
public:
    CnsStepper(const Grid& g, double nu, double c, ConstitutiveModel model, double cfl = 0.5)
        : grid_(g), nu_(nu), c_(c), model_(std::move(model)), cfl_(cfl) {
        if (!(nu > 0.0) || !(c > 0.0)) throw ValidationError("nu and c must be positive");
    }

    const ConstitutiveModel& model() const { return model_; }

    CnsState step(const CnsState& s, double h) {
        if (!(s.grid() == grid_)) throw ValidationError("state grid does not match stepper grid");
        detail::check_step_admissible(s.a, s.u, h, cfl_, s.t);
        const auto& coeffs = coefficients(h);
        detail::Rhs n0 = detail::nonlinear_terms(s.a, s.u, nu_, c_, model_);
        ScalarField a1(grid_);
        VectorField u1(grid_);
        detail::combine(grid_, coeffs, true, 0.5 * h, s.a, s.u, n0, nullptr, a1, u1);
        const double m1 = 1.0 + min_value(a1);
        if (!(m1 > 0.0)) throw StepRejected("positivity lost in stage at t = " + std::to_string(s.t), m1);
        detail::Rhs n1 = detail::nonlinear_terms(a1, u1, nu_, c_, model_);
        ScalarField a2(grid_);
        VectorField u2(grid_);
        detail::combine(grid_, coeffs, false, h, s.a, s.u, n0, &n1, a2, u2);
        const double m2 = 1.0 + min_value(a2);
        if (!(m2 > 0.0)) throw StepRejected("positivity lost at t = " + std::to_string(s.t + h), m2);
        return CnsState(s.t + h, std::move(a2), std::move(u2));
    }

private:
    const std::vector<const ModeCoefficients*>& coefficients(double h) {
        auto it = cache_.find(h);
        if (it != cache_.end()) return it->second.second;
        auto prop = std::make_unique<LinearPropagator>(grid_, nu_, c_, model_.viscosity.mu1(), h);
        const auto& lat = lattice(grid_);
        std::vector<const ModeCoefficients*> table(lat.k2_key.size());
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = &prop->coefficients(lat.k2_key[i]);
        auto& slot = cache_[h];
        slot.first = std::move(prop);
        slot.second = std::move(table);
        return slot.second;
    }

    Grid grid_;
    double nu_, c_;
    ConstitutiveModel model_;
    double cfl_;
    std::map<double, std::pair<std::unique_ptr<LinearPropagator>, std::vector<const ModeCoefficients*>>> cache_;
};

/// One step of the original-frame system.
inline CnsState step(const CnsState& s, const SimConfig& cfg, const ConstitutiveModel& model) {
    cfg.validate();
    CnsStepper stepper(s.grid(), cfg.nu, cfg.c, model, cfg.cfl);
    return stepper.step(s, cfg.dt);
}

// ---------------------------------------------------------------------------
// Runs

struct CnsSnapshot {
    double t;
    ScalarField a;
    VectorField u;
};

/// Snapshots plus per-snapshot block norms of a, u and the effective velocity.
struct CnsRun {
    Frame frame = Frame::original;
    double nu = 1.0;
    double c = 1.0;
    std::vector<CnsSnapshot> snapshots;
    NormSeries a_norms, u_norms, w_norms;
    std::vector<double> a_mean;
    bool completed = true;
    std::string error;
    std::vector<std::string> caveats;
    SmallDataReport small_data;
    int steps_taken = 0;

    const Grid& grid() const { return snapshots.front().a.grid(); }
};

namespace detail {

inline void record(CnsRun& run, const CnsState& s, const ConstitutiveModel& model, bool keep_fields) {
    run.a_norms.push(s.t, block_norms_fluctuation(s.a));
    run.u_norms.push(s.t, block_norms_fluctuation(s.u));
    run.w_norms.push(s.t, block_norms_fluctuation(effective_velocity(s, run.nu, run.c, model)));
    run.a_mean.push_back(s.a.mean());
    if (keep_fields || run.snapshots.empty())
        run.snapshots.push_back({s.t, s.a, s.u});
    else
        run.snapshots.push_back({s.t, ScalarField(s.grid()), VectorField(s.grid())});
}

}  // namespace detail

struct SimulateOptions {
    bool keep_fields = true;
    /// Optional cancellation / progress hook, called after each step.
    std::function<void(const CnsState&)> on_step;
};

/// Runs (CNS_{nu,c}) in the original frame and reports in cfg.frame. Step
/// errors end the run early; the partial record is returned with
/// completed = false.
inline CnsRun simulate_original(const CnsState& init, const SimConfig& cfg, const ConstitutiveModel& model,
                                const SimulateOptions& opt = {}) {
    cfg.validate();
    CnsRun run;
    run.frame = Frame::original;
    run.nu = cfg.nu;
    run.c = cfg.c;
    run.small_data = check_small_data(init.a, init.u, cfg.nu, cfg.c, cfg.eta0);
    if (!run.small_data.passed && !cfg.override_small_data)
        throw ValidationError("small-data check failed: " + std::to_string(run.small_data.total) + " > eta0 = " +
                              std::to_string(cfg.eta0) + " (set the override to run anyway)");
    if (!run.small_data.passed) run.caveats.push_back("small-data check failed and was overridden");
    if (!model.viscosity.is_constant()) run.caveats.push_back("variable viscosity");

    CnsState s(init.t, dealias(init.a), dealias(init.u));
    CnsStepper stepper(s.grid(), cfg.nu, cfg.c, model, cfg.cfl);
    TimeGrid tg = make_time_grid(cfg.dt, cfg.t_end, cfg.snapshot_stride, cfg.ramp);
    try {
        detail::record(run, s, model, opt.keep_fields);
        for (std::size_t n = 0; n < tg.steps.size(); ++n) {
            s = stepper.step(s, tg.steps[n]);
            ++run.steps_taken;
            if (opt.on_step) opt.on_step(s);
            if (tg.snapshot_after[n]) detail::record(run, s, model, opt.keep_fields);
        }
    } catch (const StepRejected& e) {
        run.completed = false;
        run.error = e.what();
    } catch (const DomainError& e) {
        run.completed = false;
        run.error = e.what();
    } catch (const DivergenceError& e) {
        run.completed = false;
        run.error = e.what();
    }
    return run;
}

// ---------------------------------------------------------------------------
// Frame maps

/// Maps a record between frames. Times and amplitudes follow
///   acoustic:  (t, x, a, u) -> (c^2 t / nu, c x / nu, a, u / c)
///   diffusive: (t, x, a, u) -> (t / nu, x, a, nu u)
/// The spatial part of the acoustic map is realized by rescaling the torus
/// length while keeping the samples, which is exact for every ratio.
inline CnsRun rescale_run(const CnsRun& in, Frame to) {
    if (in.frame == to) return in;
    // Go through the original frame.
    auto time_to_original = [&](double t) {
        switch (in.frame) {
            case Frame::acoustic: return t * in.nu / (in.c * in.c);
            case Frame::diffusive: return t * in.nu;
            default: return t;
        }
    };
    auto time_from_original = [&](double t) {
        switch (to) {
            case Frame::acoustic: return t * in.c * in.c / in.nu;
            case Frame::diffusive: return t / in.nu;
            default: return t;
        }
    };
    auto vel_to_original = [&](double s) {
        switch (in.frame) {
            case Frame::acoustic: return s * in.c;
            case Frame::diffusive: return s / in.nu;
            default: return s;
        }
    };
    auto vel_from_original = [&](double s) {
        switch (to) {
            case Frame::acoustic: return s / in.c;
            case Frame::diffusive: return s * in.nu;
            default: return s;
        }
    };
    auto length_to_original = [&](double l) { return in.frame == Frame::acoustic ? l * in.nu / in.c : l; };
    auto length_from_original = [&](double l) { return to == Frame::acoustic ? l * in.c / in.nu : l; };

    const Grid& g0 = in.snapshots.front().a.grid();
    const double new_length = length_from_original(length_to_original(g0.length()));
    if (!(new_length > 0.0) || !std::isfinite(new_length)) throw ValidationError("frame map produces an invalid torus");
    Grid g1(g0.dim(), g0.n(), new_length);
    const double vscale = vel_from_original(vel_to_original(1.0));
    const double lscale = new_length / g0.length();  // x_new = lscale x_old

    auto move_scalar = [&](const ScalarField& f) {
        return ScalarField(g1, std::vector<double>(f.samples().begin(), f.samples().end()));
    };
    auto move_vector = [&](const VectorField& u) {
        std::vector<ScalarField> comps;
        for (int c = 0; c < u.dim(); ++c) {
            ScalarField f = move_scalar(u[c]);
            f *= vscale;
            comps.push_back(std::move(f));
        }
        return VectorField(std::move(comps));
    };
    // ||z(x / l)||_{L^2} = l^{d/2} ||z||; for l = 2^m block j + m maps to block j.
    const double log_l = std::log2(lscale);
    const bool dyadic = std::abs(log_l - std::round(log_l)) < 1e-12;
    auto move_blocks = [&](const NormSeries& s, double amp) {
        NormSeries out;
        const double vol = std::pow(lscale, g0.dim() / 2.0);
        const int shift = static_cast<int>(std::round(log_l));
        for (std::size_t i = 0; i < s.times.size(); ++i) {
            BlockNorms b = s.blocks[i];
            b.range.j_min -= shift;
            b.range.j_max -= shift;
            for (auto& v : b.values) v *= amp * vol;
            out.push(time_from_original(time_to_original(s.times[i])), std::move(b));
        }
        return out;
    };

    CnsRun out = in;
    out.frame = to;
    out.snapshots.clear();
    for (const auto& s : in.snapshots)
        out.snapshots.push_back({time_from_original(time_to_original(s.t)), move_scalar(s.a), move_vector(s.u)});
    if (dyadic) {
        out.a_norms = move_blocks(in.a_norms, 1.0);
        out.u_norms = move_blocks(in.u_norms, vscale);
        out.w_norms = move_blocks(in.w_norms, vscale);
    } else {
        // Shells do not line up: rebuild from the mapped fields where stored.
        out.a_norms = {};
        out.u_norms = {};
        out.w_norms = {};
        for (const auto& snap : out.snapshots) {
            out.a_norms.push(snap.t, block_norms_fluctuation(snap.a));
            out.u_norms.push(snap.t, block_norms_fluctuation(snap.u));
        }
        out.caveats.push_back("non-dyadic length ratio: block norms rebuilt from snapshots, effective-velocity norms dropped");
    }
    return out;
}

}  // namespace hvlab
