#pragma once
/// Flat binary container: {dim, N, L} as little-endian doubles followed by
/// row-major samples. A vector field writes one header and then its
/// components back to back; readers infer the component count from size.

#include "hvlab/spectral_fields.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <iterator>
#include <stdexcept>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace hvlab {

namespace detail {

inline void put_double(std::ostream& os, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

inline std::vector<double> read_doubles(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open field file " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (raw.size() % 8 != 0) throw ValidationError("field file size is not a multiple of 8: " + path.string());
    std::vector<double> out(raw.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, raw.data() + 8 * i, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

inline void write_header(std::ostream& os, const Grid& g) {
    put_double(os, g.dim());
    put_double(os, g.n());
    put_double(os, g.length());
}

inline Grid parse_header(const std::vector<double>& v, const std::filesystem::path& path) {
    if (v.size() < 3) throw ValidationError("field file too short: " + path.string());
    for (int i = 0; i < 2; ++i)
        if (!(v[i] >= 1.0 && v[i] <= 1 << 20) || v[i] != std::floor(v[i]))
            throw ValidationError("field file header is not {dim, N, L}: " + path.string());
    return Grid(static_cast<int>(v[0]), static_cast<int>(v[1]), v[2]);
}

}  // namespace detail

inline void write_field(const std::filesystem::path& path, const ScalarField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    detail::write_header(os, f.grid());
    for (double v : f.samples()) detail::put_double(os, v);
}

inline void write_field(const std::filesystem::path& path, const VectorField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    detail::write_header(os, u.grid());
    for (int a = 0; a < u.dim(); ++a)
        for (double v : u[a].samples()) detail::put_double(os, v);
}

/// Reads every component stored in a container file.
inline std::vector<ScalarField> read_components(const std::filesystem::path& path) {
    auto v = detail::read_doubles(path);
    Grid g = detail::parse_header(v, path);
    const std::size_t body = v.size() - 3;
    if (body == 0 || body % g.size() != 0) throw ValidationError("field file body does not match its header: " + path.string());
    std::vector<ScalarField> comps;
    for (std::size_t c = 0; c < body / g.size(); ++c) {
        auto first = v.begin() + 3 + static_cast<std::ptrdiff_t>(c * g.size());
        comps.emplace_back(g, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(g.size())));
    }
    return comps;
}

inline ScalarField read_scalar_field(const std::filesystem::path& path) {
    auto comps = read_components(path);
    if (comps.size() != 1) throw ValidationError("expected a scalar field in " + path.string());
    return comps.front();
}

inline VectorField read_vector_field(const std::filesystem::path& path) {
    auto comps = read_components(path);
    if (static_cast<int>(comps.size()) != comps.front().grid().dim())
        throw ValidationError("expected " + std::to_string(comps.front().grid().dim()) + " components in " + path.string());
    return VectorField(std::move(comps));
}

}  // namespace hvlab
