#include "hvlab/random_fields.hpp"
#include "hvlab/run_record.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace hvlab;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("hvlab_field_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<unsigned char> bytes_of(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_raw(const fs::path& p, const std::vector<double>& v) {
    std::ofstream os(p, std::ios::binary);
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        for (int b = 0; b < 8; ++b) os.put(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
}

}  // namespace

TEST(FieldIo, ScalarRoundTripIsBitExact) {
    auto dir = scratch("scalar");
    Rng rng(3);
    for (int d = 1; d <= 3; ++d) {
        const Grid g(d, d == 3 ? 8 : 32, 1.7);
        ScalarField f = random_band_limited(g, rng, 1, 3);
        write_field(dir / "f.bin", f);
        ScalarField back = read_scalar_field(dir / "f.bin");
        EXPECT_TRUE(back.grid() == g);
        auto a = f.samples(), b = back.samples();
        ASSERT_EQ(a.size(), b.size());
        EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
    }
}

TEST(FieldIo, VectorRoundTripIsBitExact) {
    auto dir = scratch("vector");
    Rng rng(4);
    const Grid g(2, 16);
    VectorField u = random_vector_band_limited(g, rng, 1, 5);
    write_field(dir / "u.bin", u);
    VectorField back = read_vector_field(dir / "u.bin");
    for (int a = 0; a < 2; ++a) {
        auto x = u[a].samples(), y = back[a].samples();
        EXPECT_EQ(0, std::memcmp(x.data(), y.data(), x.size() * sizeof(double)));
    }
}

// Layout fixed independently of the reader: 3 header doubles, samples in
// row-major order, little-endian.
TEST(FieldIo, LayoutIsLittleEndianHeaderThenSamples) {
    auto dir = scratch("layout");
    const Grid g(1, 8, 2.0);
    std::vector<double> s{0.5, -1, 2, 3, 4, 5, 6, 7.25};
    write_field(dir / "f.bin", ScalarField(g, s));
    auto raw = bytes_of(dir / "f.bin");
    ASSERT_EQ(raw.size(), 8u * 11);
    auto le = [&](std::size_t i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[8 * i + b]) << (8 * b);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    };
    EXPECT_EQ(le(0), 1.0);
    EXPECT_EQ(le(1), 8.0);
    EXPECT_EQ(le(2), 2.0);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(le(3 + i), s[i]);
    // 1.0 is 0x3ff0000000000000: the high byte comes last.
    EXPECT_EQ(raw[7], 0x3f);
    EXPECT_EQ(raw[6], 0xf0);
}

TEST(FieldIo, RejectsMissingTruncatedAndInconsistentFiles) {
    auto dir = scratch("bad");
    EXPECT_THROW(read_scalar_field(dir / "missing.bin"), ValidationError);
    write_raw(dir / "short.bin", {1, 8});
    EXPECT_THROW(read_scalar_field(dir / "short.bin"), ValidationError);
    write_raw(dir / "body.bin", {1, 8, 1, 0, 0, 0});
    EXPECT_THROW(read_scalar_field(dir / "body.bin"), ValidationError);
    write_raw(dir / "nan.bin", {std::nan(""), 8, 1, 0, 0, 0, 0, 0, 0, 0, 0});
    EXPECT_THROW(read_scalar_field(dir / "nan.bin"), ValidationError);
    write_raw(dir / "frac.bin", {1.5, 8, 1, 0, 0, 0, 0, 0, 0, 0, 0});
    EXPECT_THROW(read_scalar_field(dir / "frac.bin"), ValidationError);
    write_raw(dir / "n6.bin", {1, 6, 1, 0, 0, 0, 0, 0, 0});
    EXPECT_THROW(read_scalar_field(dir / "n6.bin"), ValidationError);
    {
        std::ofstream os(dir / "odd.bin", std::ios::binary);
        os << "abc";
    }
    EXPECT_THROW(read_scalar_field(dir / "odd.bin"), ValidationError);
}

TEST(FieldIo, ScalarAndVectorReadersCheckComponentCount) {
    auto dir = scratch("count");
    const Grid g(2, 8);
    write_field(dir / "u.bin", VectorField(g));
    write_field(dir / "a.bin", ScalarField(g));
    EXPECT_THROW(read_scalar_field(dir / "u.bin"), ValidationError);
    EXPECT_THROW(read_vector_field(dir / "a.bin"), ValidationError);
    EXPECT_EQ(read_components(dir / "u.bin").size(), 2u);
}

TEST(FieldIo, FlowMapStoredAsDisplacement) {
    auto dir = scratch("flow");
    const Grid g(2, 8);
    FlowMap X(g);
    X.t = 0.25;
    for (std::size_t i = 0; i < g.size(); ++i) {
        X.disp[0][i] = 0.01 * static_cast<double>(i);
        X.disp[1][i] = -7.0;  // unwrapped values survive
    }
    write_flow_map(dir / "X.bin", X);
    FlowMap back = read_flow_map(dir / "X.bin", 0.25);
    EXPECT_EQ(back.t, 0.25);
    EXPECT_EQ(back.disp[0], X.disp[0]);
    EXPECT_EQ(back.disp[1], X.disp[1]);
}

TEST(RunRecord, FmtDoubleRoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) EXPECT_EQ(std::stod(fmt_double(v)), v);
}

TEST(RunRecord, SnapshotIndexRoundTrip) {
    auto dir = scratch("index");
    LimitRun run;
    const Grid g(1, 8);
    run.times = {0.0, 0.5};
    run.fields = {ScalarField(g), ScalarField::constant(g, 0.1)};
    write_limit_snapshots(dir, run);
    auto idx = read_snapshot_index(dir);
    ASSERT_EQ(idx.size(), 2u);
    EXPECT_EQ(idx[1].t, 0.5);
    ASSERT_EQ(idx[1].files.size(), 1u);
    EXPECT_EQ(read_scalar_field(dir / idx[1].files[0]).samples()[3], 0.1);
}

TEST(RunRecord, NormIdHasNoComma) {
    EXPECT_EQ(norm_id(besov(0.0)), "B^0_2_1");
    EXPECT_EQ(norm_id(besov(-1.0, Summation::infinity)), "B^-1_2_inf");
    EXPECT_EQ(norm_id(besov_high(0.5, 4.0)).find(','), std::string::npos);
}

TEST(RunRecord, SvgChartSkipsNonPositiveOnLogAxes) {
    auto svg = svg_line_chart("t", "x", "y", {{"s", {1, 10, 100}, {1e-3, 0.0, 1e-5}}}, true, true);
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_EQ(svg.find("nan"), std::string::npos);
    EXPECT_EQ(svg.find("inf"), std::string::npos);
}
