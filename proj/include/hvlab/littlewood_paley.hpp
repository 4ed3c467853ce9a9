#pragma once
/// Dyadic blocks and the homogeneous Besov norms built from them.
///
/// Block j keeps the frequencies 3/4 2^j <= |xi| <= 8/3 2^j (physical
/// wavenumbers, so a torus of length L/2 carrying the same samples
/// represents z(2 .)). Block L^2 norms are computed from the spectrum by
/// Parseval and are the only data the norm functions need, which lets a
/// solver store them per snapshot and assemble any norm later.

#include "hvlab/spectral_fields.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hvlab {

// ---------------------------------------------------------------------------
// Cutoff profile (fixed project-wide; block values at shell edges depend on it)

inline constexpr double chi_inner = 0.75;
inline constexpr double chi_outer = 4.0 / 3.0;

namespace detail {
inline double mollifier_tail(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
}  // namespace detail

/// Radial cutoff: 1 on [0, 3/4], 0 on [4/3, inf), smooth and monotone between.
inline double chi(double r) {
    if (r <= chi_inner) return 1.0;
    if (r >= chi_outer) return 0.0;
    const double a = detail::mollifier_tail(chi_outer - r);
    const double b = detail::mollifier_tail(r - chi_inner);
    return a / (a + b);
}

inline double phi(double r) { return chi(0.5 * r) - chi(r); }

/// Weight of block j at frequency magnitude k.
inline double block_weight(int j, double k) { return phi(std::ldexp(k, -j)); }

/// Blocks that can be nonzero at frequency k > 0.
inline std::pair<int, int> active_blocks(double k) {
    return {static_cast<int>(std::floor(std::log2(3.0 * k / 8.0))),
            static_cast<int>(std::ceil(std::log2(4.0 * k / 3.0)))};
}

struct ShellRange {
    int j_min = 0;
    int j_max = -1;
};

/// Shells touched by the resolved nonzero frequencies of a grid.
inline ShellRange resolved_shells(const Grid& g) {
    const double kmin = g.wavenumber_unit();
    const double kmax = g.wavenumber_unit() * (g.n() / 2) * std::sqrt(static_cast<double>(g.dim()));
    return {active_blocks(kmin).first, active_blocks(kmax).second};
}

// ---------------------------------------------------------------------------
// Norm descriptors

enum class Summation { one, infinity };
enum class Side { full, low, high };

inline std::string to_string(Summation r) { return r == Summation::one ? "1" : "inf"; }
inline std::string to_string(Side s) {
    switch (s) {
        case Side::low: return "low";
        case Side::high: return "high";
        default: return "full";
    }
}

struct BesovSpec {
    double s = 0.0;
    Summation r = Summation::one;
    Side side = Side::full;
    double threshold = 0.0;  ///< alpha, required when side != full

    void validate() const {
        if (!std::isfinite(s)) throw ValidationError("Besov regularity must be finite");
        if (side != Side::full && !(threshold > 0.0))
            throw ValidationError("low/high Besov norms need a positive threshold");
    }

    /// Inclusive j-range selected by the side (norm version, one-shell overlap).
    ShellRange select(ShellRange all) const {
        if (side == Side::low) all.j_max = std::min(all.j_max, static_cast<int>(std::floor(1.0 + std::log2(threshold))));
        if (side == Side::high) all.j_min = std::max(all.j_min, static_cast<int>(std::ceil(std::log2(threshold))));
        return all;
    }
};

inline BesovSpec besov(double s, Summation r = Summation::one) { return {s, r, Side::full, 0.0}; }
inline BesovSpec besov_low(double s, double alpha, Summation r = Summation::one) { return {s, r, Side::low, alpha}; }
inline BesovSpec besov_high(double s, double alpha, Summation r = Summation::one) { return {s, r, Side::high, alpha}; }

// ---------------------------------------------------------------------------
// Blocks

/// L^2 norms of every resolved block of one field (or vector field).
struct BlockNorms {
    ShellRange range;
    std::vector<double> values;  ///< values[j - range.j_min]

    double at(int j) const {
        if (j < range.j_min || j > range.j_max) return 0.0;
        return values[static_cast<std::size_t>(j - range.j_min)];
    }
};

namespace detail {

inline void check_mean_zero(const ScalarField& z) {
    auto sp = z.spectrum();
    double energy = 0.0;
    const auto& lat = lattice(z.grid());
    for (std::size_t i = 0; i < sp.size(); ++i) energy += lat.weight[i] * std::norm(sp[i]);
    if (std::abs(sp[0]) > 1e-9 * std::sqrt(energy) && std::abs(sp[0]) > 1e-300)
        throw ValidationError("homogeneous Besov norm of a field with nonzero mean");
}

/// Adds |phi_j|^2 |zhat|^2 contributions of z into sq (squared block norms).
inline void accumulate_blocks(const ScalarField& z, ShellRange range, std::vector<double>& sq) {
    const auto& lat = lattice(z.grid());
    auto sp = z.spectrum();
    const double vol = z.grid().volume();
    for (std::size_t i = 1; i < sp.size(); ++i) {
        const double e = lat.weight[i] * std::norm(sp[i]);
        if (e == 0.0) continue;
        const double k = lat.kmag[i];
        auto [lo, hi] = active_blocks(k);
        for (int j = std::max(lo, range.j_min); j <= std::min(hi, range.j_max); ++j) {
            const double w = block_weight(j, k);
            sq[static_cast<std::size_t>(j - range.j_min)] += vol * w * w * e;
        }
    }
}

inline BlockNorms finish(ShellRange range, std::vector<double> sq) {
    for (auto& v : sq) v = std::sqrt(v);
    return {range, std::move(sq)};
}

}  // namespace detail

/// Block norms ignoring the zero mode (the caller vouches for that).
inline BlockNorms block_norms_fluctuation(const ScalarField& z) {
    ShellRange r = resolved_shells(z.grid());
    std::vector<double> sq(static_cast<std::size_t>(r.j_max - r.j_min + 1), 0.0);
    detail::accumulate_blocks(z, r, sq);
    return detail::finish(r, std::move(sq));
}

inline BlockNorms block_norms_fluctuation(const VectorField& u) {
    ShellRange r = resolved_shells(u.grid());
    std::vector<double> sq(static_cast<std::size_t>(r.j_max - r.j_min + 1), 0.0);
    for (int a = 0; a < u.dim(); ++a) detail::accumulate_blocks(u[a], r, sq);
    return detail::finish(r, std::move(sq));
}

inline BlockNorms block_norms(const ScalarField& z) {
    detail::check_mean_zero(z);
    return block_norms_fluctuation(z);
}

inline BlockNorms block_norms(const VectorField& u) {
    for (int a = 0; a < u.dim(); ++a) detail::check_mean_zero(u[a]);
    return block_norms_fluctuation(u);
}

/// Delta_j z as a field.
inline ScalarField dyadic_block(const ScalarField& z, int j) {
    const auto& lat = lattice(z.grid());
    return spectral_map(z, [&](std::size_t i, cplx c) { return i == 0 ? cplx{} : block_weight(j, lat.kmag[i]) * c; });
}

/// Besov norm assembled from stored block norms.
inline double besov_from_blocks(const BlockNorms& b, const BesovSpec& spec) {
    spec.validate();
    ShellRange r = spec.select(b.range);
    double acc = 0.0;
    for (int j = r.j_min; j <= r.j_max; ++j) {
        const double term = std::pow(2.0, j * spec.s) * b.at(j);
        acc = spec.r == Summation::one ? acc + term : std::max(acc, term);
    }
    return acc;
}

inline double besov_norm(const ScalarField& z, const BesovSpec& spec) { return besov_from_blocks(block_norms(z), spec); }
inline double besov_norm(const VectorField& u, const BesovSpec& spec) { return besov_from_blocks(block_norms(u), spec); }

/// Same norm with the zero mode dropped explicitly (for velocities whose
/// spatial mean drifts on the torus).
inline double besov_norm_fluctuation(const ScalarField& z, const BesovSpec& spec) {
    return besov_from_blocks(block_norms_fluctuation(z), spec);
}
inline double besov_norm_fluctuation(const VectorField& u, const BesovSpec& spec) {
    return besov_from_blocks(block_norms_fluctuation(u), spec);
}

struct SplitFields {
    ScalarField low;
    ScalarField high;
};

/// z^{l,alpha} = sum_{j <= log2 alpha} Delta_j z and the remainder of the
/// mean-free part. The low multiplier telescopes to chi(2^{-J-1}|k|).
inline SplitFields split_projections(const ScalarField& z, double alpha) {
    if (!(alpha > 0.0)) throw ValidationError("split threshold must be positive");
    const int J = static_cast<int>(std::floor(std::log2(alpha)));
    const auto& lat = lattice(z.grid());
    ScalarField low = spectral_map(z, [&](std::size_t i, cplx c) {
        return i == 0 ? cplx{} : chi(std::ldexp(lat.kmag[i], -(J + 1))) * c;
    });
    ScalarField high = spectral_map(z, [&](std::size_t i, cplx c) {
        return i == 0 ? cplx{} : (1.0 - chi(std::ldexp(lat.kmag[i], -(J + 1)))) * c;
    });
    return {std::move(low), std::move(high)};
}

// ---------------------------------------------------------------------------
// Time-Lebesgue norms

/// Block norms of one quantity at increasing times.
struct NormSeries {
    std::vector<double> times;
    std::vector<BlockNorms> blocks;

    void push(double t, BlockNorms b) {
        if (!times.empty() && !(t > times.back())) throw ValidationError("norm series times must increase");
        times.push_back(t);
        blocks.push_back(std::move(b));
    }
    bool empty() const { return times.empty(); }
};

enum class TimeOrder { tilde, plain };

namespace detail {

/// (trapezoid integral of f^q)^{1/q}, or max for q = inf.
inline double lq_time(const std::vector<double>& t, const std::vector<double>& f, double q) {
    if (std::isinf(q)) {
        double m = 0.0;
        for (double v : f) m = std::max(m, v);
        return m;
    }
    double acc = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i)
        acc += 0.5 * (t[i] - t[i - 1]) * (std::pow(f[i], q) + std::pow(f[i - 1], q));
    return std::pow(acc, 1.0 / q);
}

}  // namespace detail

/// Values of the spatial Besov norm along a series.
inline std::vector<double> besov_in_time(const NormSeries& series, const BesovSpec& spec) {
    std::vector<double> out;
    out.reserve(series.times.size());
    for (const auto& b : series.blocks) out.push_back(besov_from_blocks(b, spec));
    return out;
}

/// Tilde (time norm inside the j-sum) or plain (j-sum inside the time norm).
inline double time_besov(const NormSeries& series, double q, const BesovSpec& spec, TimeOrder order) {
    if (!(q >= 1.0)) throw ValidationError("time exponent q must be >= 1");
    if (series.empty()) throw ValidationError("empty norm series");
    spec.validate();
    if (order == TimeOrder::plain) return detail::lq_time(series.times, besov_in_time(series, spec), q);

    ShellRange all = series.blocks.front().range;
    for (const auto& b : series.blocks) {
        all.j_min = std::min(all.j_min, b.range.j_min);
        all.j_max = std::max(all.j_max, b.range.j_max);
    }
    ShellRange r = spec.select(all);
    double acc = 0.0;
    std::vector<double> f(series.times.size());
    for (int j = r.j_min; j <= r.j_max; ++j) {
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = series.blocks[i].at(j);
        const double term = std::pow(2.0, j * spec.s) * detail::lq_time(series.times, f, q);
        acc = spec.r == Summation::one ? acc + term : std::max(acc, term);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Low-frequency Lyapunov functional

/// Largest kappa for which 1/2 |(a_j,u_j)| <= L_j <= 2 |(a_j,u_j)| holds for all j <= j0.
inline double lyapunov_kappa_bound(int j0) { return (9.0 / 32.0) * std::ldexp(1.0, -j0); }

/// L_j = sqrt(|a_j|^2 + |u_j|^2 + 2 kappa int u_j . grad a_j), by Parseval.
inline double lyapunov_lowfreq(const ScalarField& a, const VectorField& u, int j, double kappa) {
    if (!(kappa >= 0.0)) throw ValidationError("kappa must be nonnegative");
    a.check_same_grid(u[0]);
    const Grid& g = a.grid();
    const auto& lat = lattice(g);
    auto as = a.spectrum();
    double aa = 0.0, uu = 0.0, cross = 0.0;
    for (std::size_t i = 1; i < as.size(); ++i) {
        const double w = block_weight(j, lat.kmag[i]);
        if (w == 0.0) continue;
        const double ww = lat.weight[i] * w * w;
        aa += ww * std::norm(as[i]);
        for (int c = 0; c < u.dim(); ++c) {
            const cplx uc = u[c].spectrum()[i];
            uu += ww * std::norm(uc);
            const cplx grad_a = cplx(0.0, lat.k[i][static_cast<std::size_t>(c)]) * as[i];
            cross += ww * (std::conj(uc) * grad_a).real();
        }
    }
    const double vol = g.volume();
    const double rad = vol * (aa + uu + 2.0 * kappa * cross);
    if (rad < 0.0)
        throw DomainError("Lyapunov radicand negative at j = " + std::to_string(j) + "; kappa too large");
    return std::sqrt(rad);
}

}  // namespace hvlab
