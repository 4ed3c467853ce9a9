#pragma once
/// The limit density equation
///   d_t b + v . grad b + c^2 F(b) = 0,   v = -c^2 (-Delta)^-1 grad Q(b),
/// in Eulerian form (RK4, v rebuilt at every stage), the pointwise ODE it
/// reduces to along the flow of v, flow maps, and the decay monitor.

#include "hvlab/constitutive.hpp"
#include "hvlab/errors.hpp"
#include "hvlab/littlewood_paley.hpp"
#include "hvlab/spectral_fields.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace hvlab {

struct LimitState {
    double t = 0.0;
    ScalarField b;

    LimitState(double t_, ScalarField b_) : t(t_), b(std::move(b_)) {}
    const Grid& grid() const { return b.grid(); }
};

/// whole_space: the equation as written, with F(b) damping; along the flow
/// of v it is exactly the ODE d_t b + c^2 F(b) = 0.
/// torus_conservative: d_t b + div((1 + b) v) = 0. On the torus div v =
/// c^2 (Q(b) - mean Q(b)), so this is the form the mean-preserving CNS
/// density converges to. Variable viscosity always uses it.
enum class LimitForm { whole_space, torus_conservative };

inline std::string to_string(LimitForm f) { return f == LimitForm::whole_space ? "whole_space" : "torus_conservative"; }

inline LimitForm limit_form_from_string(const std::string& s) {
    if (s == "whole_space") return LimitForm::whole_space;
    if (s == "torus_conservative") return LimitForm::torus_conservative;
    throw ValidationError("unknown limit form: " + s);
}

/// v = -c^2 (-Delta)^-1 grad Q(b); variable viscosity: -c^2 A_{1+b}^-1 grad Q(b).
inline VectorField limit_velocity(const ScalarField& b, double c, const ConstitutiveModel& model) {
    if (!(c > 0.0)) throw ValidationError("c must be positive");
    ScalarField q = dealias(q_of(b, model.pressure));
    if (model.viscosity.is_constant()) return (-c * c) * inv_neg_laplacian_grad(q);
    ScalarField rho = b + ScalarField::constant(b.grid(), 1.0);
    return (-c * c) * invert_A_rho_grad(q, rho, model.viscosity).z;
}

namespace detail {

inline ScalarField limit_rhs(const ScalarField& b, double c, const ConstitutiveModel& model, LimitForm form,
                             VectorField* v_out = nullptr) {
    VectorField v = limit_velocity(b, c, model);
    const Grid& g = b.grid();
    ScalarField out(g);
    if (form == LimitForm::torus_conservative || !model.viscosity.is_constant()) {
        VectorField flux(g);
        ScalarField rho = b + ScalarField::constant(g, 1.0);
        for (int i = 0; i < g.dim(); ++i) flux[i] = dealiased_product(rho, v[i]);
        out = -1.0 * divergence(flux);
    } else {
        VectorField gb = gradient(b);
        for (int i = 0; i < g.dim(); ++i) out -= dealiased_product(v[i], gb[i]);
        out.axpy(-c * c, dealias(f_of(b, model.pressure)));
    }
    if (v_out) *v_out = std::move(v);
    return out;
}

inline void check_limit_admissible(const ScalarField& b, double t, const char* where) {
    const double m = 1.0 + min_value(b);
    if (!(m > 0.0))
        throw StepRejected(std::string("positivity lost ") + where + " at t = " + std::to_string(t) +
                               ": min(1 + b) = " + std::to_string(m),
                           m);
}

}  // namespace detail

/// One classical RK4 step. Rejects on positivity loss or when
/// dt max|v| N / L exceeds cfl.
inline LimitState step_eulerian(const LimitState& s, double dt, double c, const ConstitutiveModel& model,
                                LimitForm form = LimitForm::whole_space, double cfl = 0.5) {
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    detail::check_limit_admissible(s.b, s.t, "before step");
    const Grid& g = s.grid();
    VectorField v(g);
    ScalarField k1 = detail::limit_rhs(s.b, c, model, form, &v);
    const double courant = dt * max_abs(v) * g.n() / g.length();
    if (!(courant <= cfl))
        throw StepRejected("CFL violated at t = " + std::to_string(s.t) + ": dt max|v| N / L = " + std::to_string(courant),
                           courant);
    auto stage = [&](const ScalarField& k, double w) {
        ScalarField y = s.b;
        y.axpy(w * dt, k);
        detail::check_limit_admissible(y, s.t, "in stage");
        return y;
    };
    ScalarField k2 = detail::limit_rhs(stage(k1, 0.5), c, model, form);
    ScalarField k3 = detail::limit_rhs(stage(k2, 0.5), c, model, form);
    ScalarField k4 = detail::limit_rhs(stage(k3, 1.0), c, model, form);
    ScalarField b = s.b;
    b.axpy(dt / 6.0, k1);
    b.axpy(dt / 3.0, k2);
    b.axpy(dt / 3.0, k3);
    b.axpy(dt / 6.0, k4);
    detail::check_limit_admissible(b, s.t + dt, "after step");
    return LimitState(s.t + dt, std::move(b));
}

// ---------------------------------------------------------------------------
// Runs

struct LimitConfig {
    double c = 1.0;
    double dt = 1e-3;
    double t_end = 1.0;
    int snapshot_stride = 1;
    /// When set, snapshots are taken exactly at these times (the stepper
    /// shortens steps to land on them) and the stride is ignored.
    std::vector<double> output_times;
    LimitForm form = LimitForm::whole_space;
    double cfl = 0.5;
    double eta0 = 0.05;  ///< smallness scale used only to label exploratory runs

    void validate() const {
        if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("c must be positive");
        if (!(dt > 0.0)) throw ValidationError("dt must be positive");
        if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
        if (snapshot_stride < 1) throw ValidationError("snapshot_stride must be >= 1");
        for (std::size_t i = 0; i < output_times.size(); ++i) {
            if (!(output_times[i] >= 0.0) || output_times[i] > t_end * (1 + 1e-12))
                throw ValidationError("output times must lie in [0, t_end]");
            if (i > 0 && !(output_times[i] > output_times[i - 1]))
                throw ValidationError("output times must increase");
        }
    }
};

struct LimitRun {
    std::vector<double> times;
    std::vector<ScalarField> fields;
    NormSeries b_norms;
    bool completed = true;
    std::string error;
    std::vector<std::string> caveats;
    bool exploratory = false;
    int steps_taken = 0;

    const Grid& grid() const { return fields.front().grid(); }
};

inline LimitRun simulate_limit(const ScalarField& b0, const LimitConfig& cfg, const ConstitutiveModel& model) {
    cfg.validate();
    require_positive_density(b0);
    LimitRun run;
    const double d = b0.grid().dim();
    if (!model.viscosity.is_constant()) {
        run.caveats.push_back("variable viscosity");
        if (besov_norm_fluctuation(b0, besov(d / 2)) > cfg.eta0) {
            run.exploratory = true;
            run.caveats.push_back("exploratory: large data with variable viscosity (global existence not known)");
        }
    }
    LimitState s(0.0, dealias(b0));
    auto record = [&](const LimitState& st) {
        run.times.push_back(st.t);
        run.b_norms.push(st.t, block_norms_fluctuation(st.b));
        run.fields.push_back(st.b);
    };
    const double eps = 1e-12 * cfg.dt;
    try {
        if (cfg.output_times.empty()) {
            record(s);
            int n = 0;
            while (cfg.t_end - s.t > eps) {
                const double h = std::min(cfg.dt, cfg.t_end - s.t);
                s = step_eulerian(s, h, cfg.c, model, cfg.form, cfg.cfl);
                ++run.steps_taken;
                ++n;
                if (n % cfg.snapshot_stride == 0 || cfg.t_end - s.t <= eps) record(s);
            }
        } else {
            std::size_t next = 0;
            if (cfg.output_times.front() <= eps) {
                record(s);
                next = 1;
            }
            for (; next < cfg.output_times.size(); ++next) {
                const double target = cfg.output_times[next];
                while (target - s.t > eps) {
                    const double h = std::min(cfg.dt, target - s.t);
                    s = step_eulerian(s, h, cfg.c, model, cfg.form, cfg.cfl);
                    ++run.steps_taken;
                }
                s.t = target;  // drop accumulated roundoff in the clock
                record(s);
            }
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
// Lagrangian form

struct LagrangianTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> values;  ///< values[n][i]: entry i at times[n]
};

/// RK4 for d b/dt = -c^2 F(b), entry by entry.
inline LagrangianTrajectory lagrangian_ode(std::vector<double> b0, double dt, double t_end, double c,
                                           const PressureLaw& law, int stride = 1) {
    if (!(dt > 0.0) || !(t_end >= 0.0)) throw ValidationError("need dt > 0 and t_end >= 0");
    if (stride < 1) throw ValidationError("stride must be >= 1");
    for (double v : b0)
        if (!(1.0 + v > 0.0)) throw ValidationError("lagrangian data must satisfy 1 + b0 > 0");
    const double c2 = c * c;
    auto rhs = [&](double z) { return -c2 * law.f(z); };
    LagrangianTrajectory tr;
    tr.times.push_back(0.0);
    tr.values.push_back(b0);
    double t = 0.0;
    int n = 0;
    const double eps = 1e-12 * dt;
    while (t_end - t > eps) {
        const double h = std::min(dt, t_end - t);
        for (double& z : b0) {
            const double k1 = rhs(z);
            const double k2 = rhs(z + 0.5 * h * k1);
            const double k3 = rhs(z + 0.5 * h * k2);
            const double k4 = rhs(z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t += h;
        ++n;
        if (n % stride == 0 || t_end - t <= eps) {
            tr.times.push_back(t);
            tr.values.push_back(b0);
        }
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Flow maps

/// X(t, y) = y + disp(t, y) for every grid seed y. Displacements are kept
/// unwrapped; positions are reduced modulo the torus on demand.
struct FlowMap {
    double t = 0.0;
    Grid grid;
    std::array<std::vector<double>, 3> disp;

    explicit FlowMap(const Grid& g) : grid(g) {
        for (int a = 0; a < g.dim(); ++a) disp[static_cast<std::size_t>(a)].assign(g.size(), 0.0);
    }

    std::array<double, 3> position(std::size_t flat) const {
        auto y = hvlab::position(grid, flat);
        for (int a = 0; a < grid.dim(); ++a) {
            const auto ua = static_cast<std::size_t>(a);
            y[ua] = std::fmod(y[ua] + disp[ua][flat], grid.length());
            if (y[ua] < 0.0) y[ua] += grid.length();
        }
        return y;
    }
};

/// Velocity samples at increasing times, linearly interpolated in between.
class VelocityHistory {
public:
    void push(double t, VectorField v) {
        if (!times_.empty() && !(t > times_.back())) throw ValidationError("velocity history times must increase");
        if (!fields_.empty() && !(v.grid() == fields_.front().grid()))
            throw ValidationError("velocity history grid mismatch");
        times_.push_back(t);
        fields_.push_back(std::move(v));
    }
    bool empty() const { return times_.empty(); }
    double t_min() const { return times_.front(); }
    double t_max() const { return times_.back(); }

    VectorField at(double t) const {
        if (times_.empty()) throw ValidationError("empty velocity history");
        const double tol = 1e-9 * std::max(1.0, std::abs(t_max()));
        if (t < t_min() - tol || t > t_max() + tol)
            throw ValidationError("velocity requested at t = " + std::to_string(t) + " outside the stored history");
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return fields_.front();
        if (it == times_.end()) return fields_.back();
        const auto i = static_cast<std::size_t>(it - times_.begin());
        const double t0 = times_[i - 1], t1 = times_[i];
        const double th = (t - t0) / (t1 - t0);
        if (th <= 1e-14) return fields_[i - 1];
        VectorField out = (1.0 - th) * fields_[i - 1];
        out.axpy(th, fields_[i]);
        return out;
    }

private:
    std::vector<double> times_;
    std::vector<VectorField> fields_;
};

namespace detail {

struct VelocityInterpolant {
    std::vector<TrigInterpolant> comps;
    explicit VelocityInterpolant(const VectorField& v) {
        for (int a = 0; a < v.dim(); ++a) comps.emplace_back(v[a]);
    }
    std::array<double, 3> operator()(const std::array<double, 3>& x) const {
        std::array<double, 3> out{};
        for (std::size_t a = 0; a < comps.size(); ++a) out[a] = comps[a](x);
        return out;
    }
};

template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || n < 2 * workers) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&f, lo, hi] {
            for (std::size_t i = lo; i < hi; ++i) f(i);
        });
    }
}

}  // namespace detail

/// Smallest finite-difference Jacobian determinant of y -> y + disp(y).
inline double flow_map_min_jacobian(const FlowMap& X) {
    const Grid& g = X.grid;
    const int d = g.dim();
    const int n = g.n();
    const double h = g.spacing();
    double jmin = std::numeric_limits<double>::infinity();
    std::array<int, 3> stride{1, 1, 1};
    for (int a = d - 2; a >= 0; --a) stride[static_cast<std::size_t>(a)] = stride[static_cast<std::size_t>(a + 1)] * n;
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
        Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
        for (int b = 0; b < d; ++b) {
            const auto ub = static_cast<std::size_t>(b);
            const int idx = static_cast<int>(flat / static_cast<std::size_t>(stride[ub])) % n;
            const std::size_t base = flat - static_cast<std::size_t>(idx * stride[ub]);
            const std::size_t plus = base + static_cast<std::size_t>(((idx + 1) % n) * stride[ub]);
            const std::size_t minus = base + static_cast<std::size_t>(((idx + n - 1) % n) * stride[ub]);
            for (int a = 0; a < d; ++a) {
                const auto& D = X.disp[static_cast<std::size_t>(a)];
                jac(a, b) += (D[plus] - D[minus]) / (2.0 * h);
            }
        }
        jmin = std::min(jmin, jac.topLeftCorner(d, d).determinant());
    }
    return jmin;
}

/// One RK4 step of dX/dt = v(t, X) with trigonometric spatial interpolation.
inline FlowMap flow_map_advance(const FlowMap& X, const VelocityHistory& v, double dt, int jobs = 1) {
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    const Grid& g = X.grid;
    const int d = g.dim();
    const detail::VelocityInterpolant v0(v.at(X.t)), vh(v.at(X.t + 0.5 * dt)), v1(v.at(X.t + dt));
    FlowMap out = X;
    out.t = X.t + dt;
    detail::parallel_for(g.size(), jobs, [&](std::size_t flat) {
        const auto y = position(g, flat);
        std::array<double, 3> p{};
        for (int a = 0; a < d; ++a) p[static_cast<std::size_t>(a)] = y[static_cast<std::size_t>(a)] + X.disp[static_cast<std::size_t>(a)][flat];
        auto shifted = [&](const std::array<double, 3>& k, double w) {
            std::array<double, 3> q = p;
            for (int a = 0; a < d; ++a) q[static_cast<std::size_t>(a)] += w * k[static_cast<std::size_t>(a)];
            return q;
        };
        const auto k1 = v0(p);
        const auto k2 = vh(shifted(k1, 0.5 * dt));
        const auto k3 = vh(shifted(k2, 0.5 * dt));
        const auto k4 = v1(shifted(k3, dt));
        for (int a = 0; a < d; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            out.disp[ua][flat] += dt / 6.0 * (k1[ua] + 2.0 * k2[ua] + 2.0 * k3[ua] + k4[ua]);
        }
    });
    const double jmin = flow_map_min_jacobian(out);
    if (!(jmin > 0.0))
        throw StepRejected("flow map no longer invertible at t = " + std::to_string(out.t) +
                               ": min Jacobian = " + std::to_string(jmin),
                           jmin);
    return out;
}

/// f(X(y)) for every seed y, by trigonometric interpolation.
inline std::vector<double> compose(const ScalarField& f, const FlowMap& X) {
    if (!(f.grid() == X.grid)) throw ValidationError("field and flow map live on different grids");
    TrigInterpolant it(f);
    std::vector<double> out(X.grid.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = it(X.position(i));
    return out;
}

// ---------------------------------------------------------------------------
// A priori decay monitor

/// Pointwise-in-time reading of the decay estimate:
///   |b(t)|_{B^sigma} + (c^2/2) int_0^t |b|_{B^sigma} <= |b0|_{B^sigma}.
struct DecayReport {
    double sigma = 0.0;
    std::vector<double> times;
    std::vector<double> norm;      ///< |b(t)|_{B^sigma_{2,1}}
    std::vector<double> integral;  ///< (c^2/2) int_0^t |b|
    std::vector<double> ratio;     ///< (norm + integral) / |b0|
    double max_ratio = 0.0;
};

inline DecayReport monitor_decay(const NormSeries& series, double c, double sigma) {
    if (series.empty()) throw ValidationError("empty trajectory");
    DecayReport r;
    r.sigma = sigma;
    r.times = series.times;
    r.norm = besov_in_time(series, besov(sigma));
    const double b0 = r.norm.front();
    double acc = 0.0;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        if (i > 0) acc += 0.5 * c * c * 0.5 * (r.times[i] - r.times[i - 1]) * (r.norm[i] + r.norm[i - 1]);
        r.integral.push_back(acc);
        const double lhs = r.norm[i] + acc;
        // 0/0 (zero data) counts as a pass.
        const double q = b0 > 0.0 ? lhs / b0 : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        r.ratio.push_back(q);
        r.max_ratio = std::max(r.max_ratio, q);
    }
    return r;
}

inline DecayReport monitor_decay(const LimitRun& run, double c, double sigma) {
    return monitor_decay(run.b_norms, c, sigma);
}

}  // namespace hvlab
