#pragma once
/// Periodic grid functions and the Fourier-side operators built on them.
///
/// Fields live on the torus [0, L)^d with N points per axis. A field keeps
/// either its samples, its spectrum, or both; the other representation is
/// produced on demand and cached until the field is mutated. Spectra use
/// the r2c half-layout (last axis has N/2 + 1 entries) and are normalized so
/// that z(x) = sum_k zhat_k exp(i k.x).
///
/// Derivative-type operators use an effective wavevector whose Nyquist
/// components are zero, so div, grad, the Laplacian and the Helmholtz
/// projectors are mutually consistent on every representable mode.

#include "hvlab/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace hvlab {

using cplx = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

class Grid {
public:
    Grid(int dim, int n, double length = two_pi) : dim_(dim), n_(n), length_(length) {
        if (dim < 1 || dim > 3) throw ValidationError("grid dimension must be 1, 2 or 3");
        if (n < 8 || !std::has_single_bit(static_cast<unsigned>(n)))
            throw ValidationError("points per axis must be a power of two >= 8, got " + std::to_string(n));
        if (!(length > 0.0) || !std::isfinite(length)) throw ValidationError("grid length must be positive");
    }

    int dim() const { return dim_; }
    int n() const { return n_; }
    double length() const { return length_; }
    std::size_t size() const {
        std::size_t s = 1;
        for (int i = 0; i < dim_; ++i) s *= static_cast<std::size_t>(n_);
        return s;
    }
    std::size_t spectral_size() const { return size() / static_cast<std::size_t>(n_) * half(); }
    std::size_t half() const { return static_cast<std::size_t>(n_ / 2 + 1); }
    double spacing() const { return length_ / n_; }
    double wavenumber_unit() const { return two_pi / length_; }
    double volume() const { return std::pow(length_, dim_); }
    /// Largest retained integer wavenumber per axis under the 2/3 rule.
    int dealias_cutoff() const { return n_ / 3; }

    /// Same sampling on the torus shrunk by `factor` (z(factor x) has these samples).
    Grid scaled(double factor) const { return Grid(dim_, n_, length_ / factor); }

    bool operator==(const Grid&) const = default;

private:
    int dim_;
    int n_;
    double length_;
};

/// Precomputed per-mode data for a grid's half-spectrum.
struct SpectralLattice {
    std::vector<std::array<int, 3>> index;      ///< signed integer wavenumbers
    std::vector<std::array<double, 3>> k;       ///< effective wavevector, Nyquist components zeroed
    std::vector<double> k2;                     ///< |k_eff|^2
    std::vector<double> kmag;                   ///< true |k|, used by Littlewood-Paley weights
    std::vector<double> weight;                 ///< Hermitian multiplicity (1 or 2)
    std::vector<unsigned char> retained;        ///< inside the 2/3 dealiasing box
    std::vector<long> k2_key;                   ///< integer |n_eff|^2
};

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

using GridKey = std::tuple<int, int, double>;
inline GridKey key_of(const Grid& g) { return {g.dim(), g.n(), g.length()}; }

inline std::shared_ptr<const SpectralLattice> build_lattice(const Grid& g) {
    auto lat = std::make_shared<SpectralLattice>();
    const std::size_t m = g.spectral_size();
    lat->index.resize(m);
    lat->k.resize(m);
    lat->k2.resize(m);
    lat->kmag.resize(m);
    lat->weight.resize(m);
    lat->retained.resize(m);
    lat->k2_key.resize(m);
    const int n = g.n();
    const int d = g.dim();
    const double unit = g.wavenumber_unit();
    const int cut = g.dealias_cutoff();
    const std::size_t h = g.half();
    for (std::size_t idx = 0; idx < m; ++idx) {
        std::array<int, 3> sub{0, 0, 0};
        std::size_t rest = idx;
        sub[static_cast<std::size_t>(d - 1)] = static_cast<int>(rest % h);
        rest /= h;
        for (int a = d - 2; a >= 0; --a) {
            sub[static_cast<std::size_t>(a)] = static_cast<int>(rest % static_cast<std::size_t>(n));
            rest /= static_cast<std::size_t>(n);
        }
        std::array<int, 3> wn{0, 0, 0};
        double k2 = 0.0, kt2 = 0.0;
        long key = 0;
        bool keep = true;
        for (int a = 0; a < d; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            int w = sub[ua];
            if (a < d - 1 && w > n / 2 - 1) w -= n;  // n/2 maps to -n/2
            wn[ua] = w;
            const bool nyquist = std::abs(w) == n / 2;
            const double kt = unit * w;
            const double ke = nyquist ? 0.0 : kt;
            lat->k[idx][ua] = ke;
            k2 += ke * ke;
            kt2 += kt * kt;
            if (!nyquist) key += static_cast<long>(w) * w;
            if (std::abs(w) > cut) keep = false;
        }
        lat->index[idx] = wn;
        lat->k2[idx] = k2;
        lat->kmag[idx] = std::sqrt(kt2);
        lat->k2_key[idx] = key;
        lat->retained[idx] = keep ? 1 : 0;
        const int last = sub[static_cast<std::size_t>(d - 1)];
        lat->weight[idx] = (last == 0 || last == n / 2) ? 1.0 : 2.0;
    }
    return lat;
}

struct FftPlans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
};

inline FftPlans make_plans(const Grid& g) {
    std::array<int, 3> dims{g.n(), g.n(), g.n()};
    std::vector<double> re(g.size());
    std::vector<cplx> sp(g.spectral_size());
    auto* out = reinterpret_cast<fftw_complex*>(sp.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    FftPlans p;
    p.r2c = fftw_plan_dft_r2c(g.dim(), dims.data(), re.data(), out, flags);
    p.c2r = fftw_plan_dft_c2r(g.dim(), dims.data(), out, re.data(), flags);
    return p;
}

struct GridCache {
    std::map<GridKey, std::shared_ptr<const SpectralLattice>> lattices;
    std::map<std::pair<int, int>, FftPlans> plans;
};

inline GridCache& grid_cache() {
    static GridCache c;
    return c;
}

inline const FftPlans& plans_for(const Grid& g) {
    std::lock_guard lock(planner_mutex());
    auto& c = grid_cache().plans;
    auto it = c.find({g.dim(), g.n()});
    if (it == c.end()) it = c.emplace(std::pair{g.dim(), g.n()}, make_plans(g)).first;
    return it->second;
}

}  // namespace detail

inline const SpectralLattice& lattice(const Grid& g) {
    std::lock_guard lock(detail::planner_mutex());
    auto& c = detail::grid_cache().lattices;
    auto key = detail::key_of(g);
    auto it = c.find(key);
    if (it == c.end()) it = c.emplace(key, detail::build_lattice(g)).first;
    return *it->second;
}

/// Forward transform with 1/N^d normalization.
inline void fft_forward(const Grid& g, std::span<const double> in, std::span<cplx> out) {
    const auto& p = detail::plans_for(g);
    fftw_execute_dft_r2c(p.r2c, const_cast<double*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
    const double s = 1.0 / static_cast<double>(g.size());
    for (auto& v : out) v *= s;
}

inline void fft_backward(const Grid& g, std::span<const cplx> in, std::span<double> out) {
    const auto& p = detail::plans_for(g);
    std::vector<cplx> tmp(in.begin(), in.end());  // c2r destroys its input
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(tmp.data()), out.data());
}

/// Physical coordinates of a flat (row-major, axis 0 slowest) sample index.
inline std::array<double, 3> position(const Grid& g, std::size_t flat) {
    std::array<double, 3> x{0.0, 0.0, 0.0};
    const auto n = static_cast<std::size_t>(g.n());
    for (int a = g.dim() - 1; a >= 0; --a) {
        x[static_cast<std::size_t>(a)] = static_cast<double>(flat % n) * g.spacing();
        flat /= n;
    }
    return x;
}

class ScalarField {
public:
    explicit ScalarField(const Grid& g) : grid_(g), phys_(g.size(), 0.0), phys_ok_(true) {}

    ScalarField(const Grid& g, std::vector<double> samples) : grid_(g), phys_(std::move(samples)), phys_ok_(true) {
        if (phys_.size() != g.size()) throw ValidationError("sample count does not match grid");
    }

    template <class F>
    static ScalarField from_function(const Grid& g, F&& f) {
        ScalarField out(g);
        for (std::size_t i = 0; i < g.size(); ++i) out.phys_[i] = f(position(g, i));
        return out;
    }

    static ScalarField from_spectrum(const Grid& g, std::vector<cplx> spectrum) {
        if (spectrum.size() != g.spectral_size()) throw ValidationError("spectrum size does not match grid");
        ScalarField out(g);
        out.spec_ = std::move(spectrum);
        out.spec_ok_ = true;
        out.phys_ok_ = false;
        return out;
    }

    static ScalarField constant(const Grid& g, double value) {
        return ScalarField(g, std::vector<double>(g.size(), value));
    }

    const Grid& grid() const { return grid_; }

    std::span<const double> samples() const {
        if (!phys_ok_) {
            phys_.resize(grid_.size());
            fft_backward(grid_, spec_, phys_);
            phys_ok_ = true;
        }
        return phys_;
    }

    std::span<const cplx> spectrum() const {
        if (!spec_ok_) {
            spec_.resize(grid_.spectral_size());
            fft_forward(grid_, samples(), spec_);
            spec_ok_ = true;
        }
        return spec_;
    }

    std::span<double> samples_mut() {
        samples();
        spec_ok_ = false;
        return phys_;
    }

    std::span<cplx> spectrum_mut() {
        spectrum();
        phys_ok_ = false;
        return spec_;
    }

    double mean() const { return spectrum()[0].real(); }

    ScalarField& operator+=(const ScalarField& o) { return axpy(1.0, o); }
    ScalarField& operator-=(const ScalarField& o) { return axpy(-1.0, o); }

    ScalarField& operator*=(double s) {
        if (phys_ok_)
            for (auto& v : phys_) v *= s;
        if (spec_ok_)
            for (auto& v : spec_) v *= s;
        return *this;
    }

    /// this += alpha * o, in whichever representation both already share.
    ScalarField& axpy(double alpha, const ScalarField& o) {
        check_same_grid(o);
        if (spec_ok_ && o.spec_ok_ && !(phys_ok_ && o.phys_ok_)) {
            for (std::size_t i = 0; i < spec_.size(); ++i) spec_[i] += alpha * o.spec_[i];
            phys_ok_ = false;
        } else {
            auto os = o.samples();
            auto s = samples_mut();
            for (std::size_t i = 0; i < s.size(); ++i) s[i] += alpha * os[i];
        }
        return *this;
    }

    void check_same_grid(const ScalarField& o) const {
        if (!(grid_ == o.grid_)) throw ValidationError("fields live on different grids");
    }

private:
    Grid grid_;
    mutable std::vector<double> phys_;
    mutable std::vector<cplx> spec_;
    mutable bool phys_ok_ = false;
    mutable bool spec_ok_ = false;
};

inline ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
inline ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
inline ScalarField operator*(double s, ScalarField a) { return a *= s; }

class VectorField {
public:
    explicit VectorField(const Grid& g) {
        comps_.reserve(static_cast<std::size_t>(g.dim()));
        for (int i = 0; i < g.dim(); ++i) comps_.emplace_back(g);
    }

    explicit VectorField(std::vector<ScalarField> comps) : comps_(std::move(comps)) {
        if (comps_.empty()) throw ValidationError("vector field needs components");
        const Grid& g = comps_.front().grid();
        if (static_cast<int>(comps_.size()) != g.dim()) throw ValidationError("component count must equal grid dimension");
        for (const auto& c : comps_) comps_.front().check_same_grid(c);
    }

    const Grid& grid() const { return comps_.front().grid(); }
    int dim() const { return static_cast<int>(comps_.size()); }
    const ScalarField& operator[](int i) const { return comps_[static_cast<std::size_t>(i)]; }
    ScalarField& operator[](int i) { return comps_[static_cast<std::size_t>(i)]; }

    VectorField& operator+=(const VectorField& o) { return axpy(1.0, o); }
    VectorField& operator-=(const VectorField& o) { return axpy(-1.0, o); }
    VectorField& operator*=(double s) {
        for (auto& c : comps_) c *= s;
        return *this;
    }
    VectorField& axpy(double alpha, const VectorField& o) {
        for (int i = 0; i < dim(); ++i) (*this)[i].axpy(alpha, o[i]);
        return *this;
    }

private:
    std::vector<ScalarField> comps_;
};

inline VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
inline VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
inline VectorField operator*(double s, VectorField a) { return a *= s; }

// ---------------------------------------------------------------------------
// Spectral multipliers

/// New field with spectrum fn(mode index, coefficient).
template <class F>
ScalarField spectral_map(const ScalarField& f, F&& fn) {
    auto in = f.spectrum();
    std::vector<cplx> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(i, in[i]);
    return ScalarField::from_spectrum(f.grid(), std::move(out));
}

inline ScalarField partial(const ScalarField& f, int axis) {
    const auto& lat = lattice(f.grid());
    const auto a = static_cast<std::size_t>(axis);
    return spectral_map(f, [&](std::size_t i, cplx c) { return cplx(0.0, lat.k[i][a]) * c; });
}

inline VectorField gradient(const ScalarField& f) {
    std::vector<ScalarField> comps;
    for (int a = 0; a < f.grid().dim(); ++a) comps.push_back(partial(f, a));
    return VectorField(std::move(comps));
}

inline ScalarField divergence(const VectorField& u) {
    const auto& lat = lattice(u.grid());
    std::vector<cplx> out(u.grid().spectral_size(), cplx{});
    for (int a = 0; a < u.dim(); ++a) {
        auto s = u[a].spectrum();
        const auto ua = static_cast<std::size_t>(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += cplx(0.0, lat.k[i][ua]) * s[i];
    }
    return ScalarField::from_spectrum(u.grid(), std::move(out));
}

inline ScalarField laplacian(const ScalarField& f) {
    const auto& lat = lattice(f.grid());
    return spectral_map(f, [&](std::size_t i, cplx c) { return -lat.k2[i] * c; });
}

/// (-Delta)^{-1} with the zero mode set to 0.
inline ScalarField inv_neg_laplacian(const ScalarField& f) {
    const auto& lat = lattice(f.grid());
    return spectral_map(f, [&](std::size_t i, cplx c) { return lat.k2[i] > 0.0 ? c / lat.k2[i] : cplx{}; });
}

/// (-Delta)^{-1} grad m, spectrum i k mhat / |k|^2.
inline VectorField inv_neg_laplacian_grad(const ScalarField& m) {
    const auto& lat = lattice(m.grid());
    std::vector<ScalarField> comps;
    for (int a = 0; a < m.grid().dim(); ++a) {
        const auto ua = static_cast<std::size_t>(a);
        comps.push_back(spectral_map(m, [&](std::size_t i, cplx c) {
            return lat.k2[i] > 0.0 ? cplx(0.0, lat.k[i][ua] / lat.k2[i]) * c : cplx{};
        }));
    }
    return VectorField(std::move(comps));
}

namespace detail {

/// Applies a per-mode d x d complex-free linear map to a vector field's spectrum.
/// fn(mode, kvec, k2, in[3], out[3]).
template <class F>
VectorField vector_map(const VectorField& u, F&& fn) {
    const Grid& g = u.grid();
    const auto& lat = lattice(g);
    const int d = g.dim();
    std::array<std::span<const cplx>, 3> in;
    for (int a = 0; a < d; ++a) in[static_cast<std::size_t>(a)] = u[a].spectrum();
    std::array<std::vector<cplx>, 3> out;
    for (int a = 0; a < d; ++a) out[static_cast<std::size_t>(a)].resize(g.spectral_size());
    std::array<cplx, 3> vi{}, vo{};
    for (std::size_t i = 0; i < g.spectral_size(); ++i) {
        for (int a = 0; a < d; ++a) vi[static_cast<std::size_t>(a)] = in[static_cast<std::size_t>(a)][i];
        fn(i, lat.k[i], lat.k2[i], vi, vo);
        for (int a = 0; a < d; ++a) out[static_cast<std::size_t>(a)][i] = vo[static_cast<std::size_t>(a)];
    }
    std::vector<ScalarField> comps;
    for (int a = 0; a < d; ++a) comps.push_back(ScalarField::from_spectrum(g, std::move(out[static_cast<std::size_t>(a)])));
    return VectorField(std::move(comps));
}

inline cplx dot(const std::array<double, 3>& k, const std::array<cplx, 3>& v, int d) {
    cplx s{};
    for (int a = 0; a < d; ++a) s += k[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(a)];
    return s;
}

}  // namespace detail

struct HelmholtzParts {
    VectorField solenoidal;  ///< P u, keeps the mean mode
    VectorField potential;   ///< Q u, a gradient
};

inline HelmholtzParts helmholtz_project(const VectorField& u) {
    const int d = u.dim();
    VectorField pot = detail::vector_map(u, [d](std::size_t, const auto& k, double k2, const auto& vi, auto& vo) {
        const cplx kv = k2 > 0.0 ? detail::dot(k, vi, d) / k2 : cplx{};
        for (int a = 0; a < d; ++a) vo[static_cast<std::size_t>(a)] = k[static_cast<std::size_t>(a)] * kv;
    });
    VectorField sol = u - pot;
    return {std::move(sol), std::move(pot)};
}

/// -mu Delta u - (1 - mu) grad div u.
inline VectorField apply_A_const(const VectorField& u, double mu) {
    if (!(mu > 0.0)) throw ValidationError("shear ratio mu must be positive");
    const int d = u.dim();
    return detail::vector_map(u, [d, mu](std::size_t, const auto& k, double k2, const auto& vi, auto& vo) {
        const cplx kv = detail::dot(k, vi, d);
        for (int a = 0; a < d; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            vo[ua] = mu * k2 * vi[ua] + (1.0 - mu) * k[ua] * kv;
        }
    });
}

/// Inverse of apply_A_const on nonzero modes; the zero mode maps to 0.
inline VectorField solve_A_const(const VectorField& f, double mu) {
    if (!(mu > 0.0)) throw ValidationError("shear ratio mu must be positive");
    const int d = f.dim();
    return detail::vector_map(f, [d, mu](std::size_t, const auto& k, double k2, const auto& vi, auto& vo) {
        if (k2 == 0.0) {
            for (int a = 0; a < d; ++a) vo[static_cast<std::size_t>(a)] = cplx{};
            return;
        }
        const cplx kv = detail::dot(k, vi, d) / k2;
        for (int a = 0; a < d; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            const cplx pot = k[ua] * kv;
            vo[ua] = (vi[ua] - pot) / (mu * k2) + pot / k2;
        }
    });
}

// ---------------------------------------------------------------------------
// Products and pointwise maps

/// Zeroes every mode outside the 2/3 box.
inline ScalarField dealias(const ScalarField& f) {
    const auto& lat = lattice(f.grid());
    return spectral_map(f, [&](std::size_t i, cplx c) { return lat.retained[i] ? c : cplx{}; });
}

inline VectorField dealias(const VectorField& u) {
    std::vector<ScalarField> comps;
    for (int a = 0; a < u.dim(); ++a) comps.push_back(dealias(u[a]));
    return VectorField(std::move(comps));
}

/// Pointwise map of samples; the result is not truncated.
template <class F>
ScalarField pointwise(const ScalarField& f, F&& fn) {
    auto s = f.samples();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = fn(s[i]);
    return ScalarField(f.grid(), std::move(out));
}

/// Pointwise combination of two fields; the result is not truncated.
template <class F>
ScalarField pointwise(const ScalarField& f, const ScalarField& g, F&& fn) {
    f.check_same_grid(g);
    auto s = f.samples();
    auto t = g.samples();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = fn(s[i], t[i]);
    return ScalarField(f.grid(), std::move(out));
}

/// f * g with both inputs and the output restricted to the 2/3 box.
inline ScalarField dealiased_product(const ScalarField& f, const ScalarField& g) {
    f.check_same_grid(g);
    ScalarField ft = dealias(f);
    ScalarField gt = dealias(g);
    return dealias(pointwise(ft, gt, [](double x, double y) { return x * y; }));
}

// ---------------------------------------------------------------------------
// Norms and reductions

/// Grid quadrature of the torus integral of f g.
inline double inner(const ScalarField& f, const ScalarField& g) {
    f.check_same_grid(g);
    auto s = f.samples();
    auto t = g.samples();
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += s[i] * t[i];
    return acc * f.grid().volume() / static_cast<double>(f.grid().size());
}

inline double inner(const VectorField& u, const VectorField& v) {
    double acc = 0.0;
    for (int a = 0; a < u.dim(); ++a) acc += inner(u[a], v[a]);
    return acc;
}

inline double l2_norm(const ScalarField& f) { return std::sqrt(inner(f, f)); }
inline double l2_norm(const VectorField& u) { return std::sqrt(inner(u, u)); }

/// L^2 norm from the spectrum (Parseval).
inline double spectral_l2_norm(const ScalarField& f) {
    const auto& lat = lattice(f.grid());
    auto s = f.spectrum();
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += lat.weight[i] * std::norm(s[i]);
    return std::sqrt(acc * f.grid().volume());
}

inline double max_abs(const ScalarField& f) {
    double m = 0.0;
    for (double v : f.samples()) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs(const VectorField& u) {
    const Grid& g = u.grid();
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double s = 0.0;
        for (int a = 0; a < u.dim(); ++a) s += u[a].samples()[i] * u[a].samples()[i];
        m = std::max(m, std::sqrt(s));
    }
    return m;
}

inline double min_value(const ScalarField& f) {
    auto s = f.samples();
    return *std::min_element(s.begin(), s.end());
}

inline ScalarField without_mean(const ScalarField& f) {
    ScalarField out = f;
    out.spectrum_mut()[0] = cplx{};
    return out;
}

inline VectorField without_mean(const VectorField& u) {
    std::vector<ScalarField> comps;
    for (int a = 0; a < u.dim(); ++a) comps.push_back(without_mean(u[a]));
    return VectorField(std::move(comps));
}

// ---------------------------------------------------------------------------
// Off-grid evaluation

/// Full trigonometric interpolant of a field; exact for band-limited data.
class TrigInterpolant {
public:
    explicit TrigInterpolant(const ScalarField& f)
        : grid_(f.grid()), coeff_(f.spectrum().begin(), f.spectrum().end()) {
        const auto& lat = lattice(grid_);
        for (std::size_t i = 0; i < coeff_.size(); ++i) coeff_[i] *= lat.weight[i];
    }

    double operator()(const std::array<double, 3>& x) const {
        const int d = grid_.dim();
        const int n = grid_.n();
        const auto h = grid_.half();
        const double unit = grid_.wavenumber_unit();
        // Per-axis phase tables indexed like the spectral layout.
        std::array<std::vector<cplx>, 3> ph;
        for (int a = 0; a < d; ++a) {
            const bool last = a == d - 1;
            const std::size_t len = last ? h : static_cast<std::size_t>(n);
            auto& t = ph[static_cast<std::size_t>(a)];
            t.resize(len);
            for (std::size_t i = 0; i < len; ++i) {
                int w = static_cast<int>(i);
                if (!last && w > n / 2 - 1) w -= n;
                const double arg = unit * w * x[static_cast<std::size_t>(a)];
                t[i] = {std::cos(arg), std::sin(arg)};
            }
        }
        double acc = 0.0;
        if (d == 1) {
            for (std::size_t i = 0; i < h; ++i) acc += (coeff_[i] * ph[0][i]).real();
        } else if (d == 2) {
            for (std::size_t i0 = 0; i0 < static_cast<std::size_t>(n); ++i0) {
                cplx row{};
                const cplx* c = coeff_.data() + i0 * h;
                for (std::size_t i1 = 0; i1 < h; ++i1) row += c[i1] * ph[1][i1];
                acc += (row * ph[0][i0]).real();
            }
        } else {
            const auto nn = static_cast<std::size_t>(n);
            for (std::size_t i0 = 0; i0 < nn; ++i0) {
                cplx plane{};
                for (std::size_t i1 = 0; i1 < nn; ++i1) {
                    cplx row{};
                    const cplx* c = coeff_.data() + (i0 * nn + i1) * h;
                    for (std::size_t i2 = 0; i2 < h; ++i2) row += c[i2] * ph[2][i2];
                    plane += row * ph[1][i1];
                }
                acc += (plane * ph[0][i0]).real();
            }
        }
        return acc;
    }

private:
    Grid grid_;
    std::vector<cplx> coeff_;
};

}  // namespace hvlab
