#pragma once
/// Pressure laws, viscosity models, the Lame operator A_rho and its inverse
/// on gradients.

#include "hvlab/spectral_fields.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace hvlab {

/// Barotropic pressure normalized by P(1) = 0, P'(1) = 1.
class PressureLaw {
public:
    /// P(rho) = (rho^gamma - 1) / gamma.
    static PressureLaw gamma_law(double gamma) {
        if (!(gamma > 1.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be > 1");
        PressureLaw p;
        p.gamma_ = gamma;
        return p;
    }

    /// Piecewise cubic Hermite table through (rho_i, P_i, P'_i).
    static PressureLaw table(std::vector<double> rho, std::vector<double> p, std::vector<double> dp) {
        if (rho.size() < 2 || rho.size() != p.size() || rho.size() != dp.size())
            throw ValidationError("pressure table needs >= 2 nodes with matching columns");
        for (std::size_t i = 0; i < rho.size(); ++i) {
            if (!(rho[i] > 0.0)) throw ValidationError("pressure table densities must be positive");
            if (i > 0 && !(rho[i] > rho[i - 1])) throw ValidationError("pressure table densities must increase");
        }
        PressureLaw law;
        law.rho_ = std::move(rho);
        law.p_ = std::move(p);
        law.dp_ = std::move(dp);
        if (std::abs(law.p(1.0)) > 1e-12 || std::abs(law.dp(1.0) - 1.0) > 1e-12)
            throw ValidationError("pressure table must satisfy P(1) = 0 and P'(1) = 1");
        return law;
    }

    bool is_gamma_law() const { return gamma_ > 0.0; }
    double gamma() const { return gamma_; }

    double p(double rho) const {
        if (is_gamma_law()) return (std::pow(rho, gamma_) - 1.0) / gamma_;
        return hermite(rho, false);
    }

    double dp(double rho) const {
        if (is_gamma_law()) return std::pow(rho, gamma_ - 1.0);
        return hermite(rho, true);
    }

    /// Q(z) = P(1 + z).
    double q(double z) const { return p(1.0 + z); }
    /// F(z) = (1 + z) Q(z).
    double f(double z) const { return (1.0 + z) * q(z); }

    std::string describe() const {
        std::ostringstream os;
        if (is_gamma_law())
            os << "gamma_law(" << gamma_ << ")";
        else
            os << "table(" << rho_.size() << " nodes)";
        return os.str();
    }

private:
    double hermite(double rho, bool derivative) const {
        if (rho < rho_.front() || rho > rho_.back())
            throw DomainError("density " + std::to_string(rho) + " outside the pressure table");
        auto it = std::upper_bound(rho_.begin(), rho_.end(), rho);
        std::size_t i = it == rho_.end() ? rho_.size() - 2 : static_cast<std::size_t>(it - rho_.begin()) - 1;
        const double h = rho_[i + 1] - rho_[i];
        const double t = (rho - rho_[i]) / h;
        const double t2 = t * t, t3 = t2 * t;
        if (!derivative) {
            return (2 * t3 - 3 * t2 + 1) * p_[i] + (t3 - 2 * t2 + t) * h * dp_[i] + (-2 * t3 + 3 * t2) * p_[i + 1] +
                   (t3 - t2) * h * dp_[i + 1];
        }
        return ((6 * t2 - 6 * t) * p_[i] + (-6 * t2 + 6 * t) * p_[i + 1]) / h + (3 * t2 - 4 * t + 1) * dp_[i] +
               (3 * t2 - 2 * t) * dp_[i + 1];
    }

    double gamma_ = 0.0;
    std::vector<double> rho_, p_, dp_;
};

/// Viscosity in the rescaled systems, where the total viscosity at rho = 1 is 1.
class ViscosityModel {
public:
    enum class Kind { constant, variable };

    static ViscosityModel constant(double mu) {
        if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("shear ratio mu must be positive");
        ViscosityModel m;
        m.kind_ = Kind::constant;
        m.mu1_ = mu;
        m.lambda1_ = 1.0 - 2.0 * mu;
        m.mu_of_ = [mu](double) { return mu; };
        m.lambda_of_ = [mu](double) { return 1.0 - 2.0 * mu; };
        m.label_ = "constant(mu=" + std::to_string(mu) + ")";
        return m;
    }

    static ViscosityModel variable(std::function<double(double)> mu_of, std::function<double(double)> lambda_of,
                                   std::string label = "variable") {
        ViscosityModel m;
        m.kind_ = Kind::variable;
        m.mu1_ = mu_of(1.0);
        m.lambda1_ = lambda_of(1.0);
        if (!(m.mu1_ > 0.0)) throw ValidationError("mu(1) must be positive");
        if (std::abs(m.lambda1_ + 2.0 * m.mu1_ - 1.0) > 1e-12)
            throw ValidationError("viscosity must satisfy lambda(1) + 2 mu(1) = 1");
        m.mu_of_ = std::move(mu_of);
        m.lambda_of_ = std::move(lambda_of);
        m.label_ = std::move(label);
        return m;
    }

    /// mu = mu0 rho^beta, lambda = (1 - 2 mu0) rho^beta.
    static ViscosityModel power_law(double mu0, double beta) {
        if (!(mu0 > 0.0)) throw ValidationError("mu0 must be positive");
        if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
        return variable([mu0, beta](double r) { return mu0 * std::pow(r, beta); },
                        [mu0, beta](double r) { return (1.0 - 2.0 * mu0) * std::pow(r, beta); },
                        "power_law(mu0=" + std::to_string(mu0) + ", beta=" + std::to_string(beta) + ")");
    }

    Kind kind() const { return kind_; }
    bool is_constant() const { return kind_ == Kind::constant; }
    /// Shear ratio of A_1.
    double mu1() const { return mu1_; }
    double lambda1() const { return lambda1_; }
    double mu(double rho) const { return mu_of_(rho); }
    double lambda(double rho) const { return lambda_of_(rho); }
    const std::string& describe() const { return label_; }

    /// Throws unless mu > 0 and lambda + 2 mu > 0 at every sample of rho.
    void check_ellipticity(const ScalarField& rho) const {
        for (double r : rho.samples()) {
            if (!(r > 0.0)) throw DomainError("density must be positive, found " + std::to_string(r));
            const double m = mu(r), l = lambda(r);
            if (!(m > 0.0) || !(l + 2.0 * m > 0.0))
                throw DomainError("viscosity not elliptic at rho = " + std::to_string(r));
        }
    }

private:
    Kind kind_ = Kind::constant;
    double mu1_ = 0.5;
    double lambda1_ = 0.0;
    std::function<double(double)> mu_of_, lambda_of_;
    std::string label_;
};

struct ConstitutiveModel {
    PressureLaw pressure = PressureLaw::gamma_law(2.0);
    ViscosityModel viscosity = ViscosityModel::constant(0.5);
};

// ---------------------------------------------------------------------------
// Pointwise laws on fields

inline void require_positive_density(const ScalarField& z) {
    const double m = 1.0 + min_value(z);
    if (!(m > 0.0)) throw DomainError("density nonpositive: min(1 + z) = " + std::to_string(m));
}

/// Q(z) pointwise (not truncated).
inline ScalarField q_of(const ScalarField& z, const PressureLaw& law) {
    require_positive_density(z);
    return pointwise(z, [&](double v) { return law.q(v); });
}

/// F(z) = (1 + z) Q(z) pointwise (not truncated).
inline ScalarField f_of(const ScalarField& z, const PressureLaw& law) {
    require_positive_density(z);
    return pointwise(z, [&](double v) { return law.f(v); });
}

// ---------------------------------------------------------------------------
// Lame operator

namespace detail {

struct CoefficientDeviation {
    ScalarField dmu;      ///< mu(rho) - mu(1), truncated
    ScalarField dlambda;  ///< lambda(rho) - lambda(1), truncated
};

inline CoefficientDeviation deviations(const ScalarField& rho, const ViscosityModel& model) {
    model.check_ellipticity(rho);
    const double m1 = model.mu1(), l1 = model.lambda1();
    return {dealias(pointwise(rho, [&](double r) { return model.mu(r) - m1; })),
            dealias(pointwise(rho, [&](double r) { return model.lambda(r) - l1; }))};
}

/// div(2 dmu D(u)) + grad(dlambda div u), products dealiased.
inline VectorField deviation_stress(const VectorField& u, const CoefficientDeviation& dev) {
    const int d = u.dim();
    const Grid& g = u.grid();
    std::vector<VectorField> grads;
    for (int a = 0; a < d; ++a) grads.push_back(gradient(u[a]));  // grads[i][j] = d_j u_i
    ScalarField div(g);
    for (int a = 0; a < d; ++a) div += grads[static_cast<std::size_t>(a)][a];
    ScalarField ldiv = dealiased_product(dev.dlambda, div);
    VectorField out = gradient(ldiv);
    for (int i = 0; i < d; ++i) {
        ScalarField acc(g);
        for (int j = 0; j < d; ++j) {
            ScalarField sym = grads[static_cast<std::size_t>(i)][j] + grads[static_cast<std::size_t>(j)][i];
            acc += partial(dealiased_product(dev.dmu, sym), j);
        }
        out[i] += acc;
    }
    return out;
}

}  // namespace detail

/// A_rho u = -div(2 mu(rho) D(u)) - grad(lambda(rho) div u), written as
/// A_1 u minus the coefficient-deviation stress.
inline VectorField apply_A_rho(const VectorField& u, const ScalarField& rho, const ViscosityModel& model) {
    if (!(u.grid() == rho.grid())) throw ValidationError("velocity and density live on different grids");
    auto dev = detail::deviations(rho, model);
    return apply_A_const(u, model.mu1()) - detail::deviation_stress(u, dev);
}

struct EllipticSolveReport {
    int iterations = 0;
    double residual = 0.0;              ///< L^2 norm of A_rho z - grad m
    double contraction_estimate = 0.0;  ///< largest of the first increment ratios
};

struct EllipticSolution {
    VectorField z;
    EllipticSolveReport report;
};

/// Solves A_rho z = grad m by the fixed point
///   z <- A_1^{-1}[div(2 dmu D z) + grad(dlambda div z)] + (-Delta)^{-1} grad m.
inline EllipticSolution invert_A_rho_grad(const ScalarField& m, const ScalarField& rho, const ViscosityModel& model,
                                          double tol = 1e-10, int max_iter = 200) {
    if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");
    if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
    m.check_same_grid(rho);
    auto dev = detail::deviations(rho, model);
    const double mu1 = model.mu1();
    const VectorField base = inv_neg_laplacian_grad(m);
    const VectorField target = gradient(m);

    auto residual_of = [&](const VectorField& z) {
        return l2_norm(apply_A_const(z, mu1) - detail::deviation_stress(z, dev) - target);
    };

    EllipticSolveReport rep;
    VectorField z = base;
    double res = residual_of(z);
    double prev_res = res;
    int rises = 0;
    std::vector<double> increments;
    rep.iterations = 1;
    while (res > tol) {
        if (rep.iterations >= max_iter) {
            rep.residual = res;
            throw DivergenceError("elliptic fixed point hit max_iter with residual " + std::to_string(res),
                                  rep.contraction_estimate, rep.iterations);
        }
        VectorField next = solve_A_const(detail::deviation_stress(z, dev), mu1) + base;
        const double inc = l2_norm(next - z);
        const double scale = l2_norm(next);
        if (inc > 1e-13 * scale && increments.size() < 4) {
            if (!increments.empty())
                rep.contraction_estimate = std::max(rep.contraction_estimate, inc / increments.back());
            increments.push_back(inc);
        }
        z = std::move(next);
        ++rep.iterations;
        res = residual_of(z);
        rises = res > prev_res ? rises + 1 : 0;
        prev_res = res;
        if (rises >= 3 || !std::isfinite(res))
            throw DivergenceError("elliptic fixed point does not contract (residual " + std::to_string(res) + ")",
                                  rep.contraction_estimate, rep.iterations);
    }
    rep.residual = res;
    return {std::move(z), rep};
}

}  // namespace hvlab
