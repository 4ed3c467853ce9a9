#pragma once
/// Seeded random data families. The generator is fixed (mt19937_64 with
/// explicit uniform/normal transforms) so results are identical across
/// standard library implementations.

#include "hvlab/spectral_fields.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace hvlab {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mean-zero random field with Gaussian coefficients on the integer shell
/// k_lo <= |n| <= k_hi (integer wavenumbers, Nyquist modes excluded),
/// amplitude weighted by |n|^(-decay).
inline ScalarField random_band_limited(const Grid& g, Rng& rng, double k_lo, double k_hi, double decay = 0.0) {
    const auto& lat = lattice(g);
    std::vector<cplx> spec(g.spectral_size(), cplx{});
    const double unit = g.wavenumber_unit();
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double re = rng.normal();
        const double im = rng.normal();
        bool nyquist = false;
        for (int a = 0; a < g.dim(); ++a)
            if (std::abs(lat.index[i][static_cast<std::size_t>(a)]) == g.n() / 2) nyquist = true;
        const double kn = lat.kmag[i] / unit;
        if (nyquist || kn < k_lo || kn > k_hi || kn == 0.0) continue;
        const double w = std::pow(kn, -decay);
        // Modes on the last-axis zero/Nyquist planes must stay real-symmetric;
        // taking the real part of the transform below enforces that.
        spec[i] = w * cplx(re, im);
    }
    ScalarField f = ScalarField::from_spectrum(g, std::move(spec));
    // Round trip through samples drops any non-Hermitian residue.
    ScalarField out(g, std::vector<double>(f.samples().begin(), f.samples().end()));
    out.spectrum_mut()[0] = cplx{};
    return out;
}

inline VectorField random_vector_band_limited(const Grid& g, Rng& rng, double k_lo, double k_hi, double decay = 0.0) {
    std::vector<ScalarField> comps;
    for (int a = 0; a < g.dim(); ++a) comps.push_back(random_band_limited(g, rng, k_lo, k_hi, decay));
    return VectorField(std::move(comps));
}

/// Rescales f so that max |f| equals amplitude (f = 0 is returned unchanged).
inline ScalarField with_max_amplitude(ScalarField f, double amplitude) {
    const double m = max_abs(f);
    if (m > 0.0) f *= amplitude / m;
    return f;
}

inline VectorField with_max_amplitude(VectorField u, double amplitude) {
    const double m = max_abs(u);
    if (m > 0.0) u *= amplitude / m;
    return u;
}

}  // namespace hvlab
