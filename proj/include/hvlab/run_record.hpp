#pragma once
/// Run-record directory writers: norms.csv, snapshots/*.bin, rates.csv and
/// small SVG line charts. All numbers go through fmt_double so reruns are
/// byte-identical.

#include "hvlab/convergence_lab.hpp"
#include "hvlab/field_io.hpp"
#include "hvlab/limit_solver.hpp"
#include "hvlab/littlewood_paley.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace hvlab {

namespace fs = std::filesystem;

/// Shortest round-trip representation.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Norm tables

/// A Besov norm of one recorded quantity ("a", "u", "w" or "b").
struct NormRequest {
    std::string quantity;
    BesovSpec spec;
};

inline std::string norm_id(const BesovSpec& s) {
    // No commas: the id is a CSV cell.
    std::string id = "B^" + fmt_double(s.s) + "_2_" + to_string(s.r);
    if (s.side != Side::full) id += ":" + to_string(s.side) + "@" + fmt_double(s.threshold);
    return id;
}

inline const std::string& norms_csv_header() {
    static const std::string h = "quantity,time,s,r,side,threshold,value,j_min,j_max\n";
    return h;
}

inline void append_norm_rows(std::string& out, const std::string& quantity, const NormSeries& series,
                             const BesovSpec& spec) {
    spec.validate();
    for (std::size_t i = 0; i < series.times.size(); ++i) {
        const auto& b = series.blocks[i];
        const ShellRange r = spec.select(b.range);
        out += quantity + "," + fmt_double(series.times[i]) + "," + fmt_double(spec.s) + "," + to_string(spec.r) + "," +
               to_string(spec.side) + "," + fmt_double(spec.threshold) + "," + fmt_double(besov_from_blocks(b, spec)) +
               "," + std::to_string(r.j_min) + "," + std::to_string(r.j_max) + "\n";
    }
}

// ---------------------------------------------------------------------------
// Snapshots

inline std::string snapshot_name(const std::string& q, std::size_t index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s_%06zu.bin", q.c_str(), index);
    return buf;
}

inline void write_cns_snapshots(const fs::path& dir, const CnsRun& run) {
    fs::create_directories(dir);
    std::string index = "index,time,a,u\n";
    for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
        const auto& s = run.snapshots[i];
        write_field(dir / snapshot_name("a", i), s.a);
        write_field(dir / snapshot_name("u", i), s.u);
        index += std::to_string(i) + "," + fmt_double(s.t) + "," + snapshot_name("a", i) + "," + snapshot_name("u", i) + "\n";
    }
    write_text(dir / "index.csv", index);
}

inline void write_limit_snapshots(const fs::path& dir, const LimitRun& run) {
    fs::create_directories(dir);
    std::string index = "index,time,b\n";
    for (std::size_t i = 0; i < run.fields.size(); ++i) {
        write_field(dir / snapshot_name("b", i), run.fields[i]);
        index += std::to_string(i) + "," + fmt_double(run.times[i]) + "," + snapshot_name("b", i) + "\n";
    }
    write_text(dir / "index.csv", index);
}

/// Flow maps are stored as their displacement field.
inline void write_flow_map(const fs::path& path, const FlowMap& X) {
    std::vector<ScalarField> comps;
    for (int a = 0; a < X.grid.dim(); ++a) comps.emplace_back(X.grid, X.disp[static_cast<std::size_t>(a)]);
    write_field(path, VectorField(std::move(comps)));
}

inline FlowMap read_flow_map(const fs::path& path, double t) {
    VectorField d = read_vector_field(path);
    FlowMap X(d.grid());
    X.t = t;
    for (int a = 0; a < d.dim(); ++a) {
        auto s = d[a].samples();
        X.disp[static_cast<std::size_t>(a)].assign(s.begin(), s.end());
    }
    return X;
}

struct SnapshotEntry {
    double t = 0.0;
    std::vector<std::string> files;
};

/// Parses snapshots/index.csv.
inline std::vector<SnapshotEntry> read_snapshot_index(const fs::path& dir) {
    std::istringstream is(read_text(dir / "index.csv"));
    std::string line;
    std::getline(is, line);
    std::vector<SnapshotEntry> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw ValidationError("malformed snapshot index line: " + line);
        SnapshotEntry e;
        e.t = std::stod(cells[1]);
        e.files.assign(cells.begin() + 2, cells.end());
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweep tables

inline std::string rates_csv(const SweepResult& res) {
    const double d = res.config.dim;
    const std::string id = "sup_t:" + norm_id(besov(d / 2 - 1));
    std::string out = "nu,error,norm_id,velocity_error,velocity_leading,uniform_error\n";
    for (const auto& r : res.runs) {
        if (!r.completed) continue;
        out += fmt_double(r.nu) + "," + fmt_double(r.density.sup) + "," + id + "," + fmt_double(r.velocity.error) + "," +
               fmt_double(r.velocity.leading) + "," + fmt_double(r.uniform) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVG line charts

struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
};

inline std::string svg_line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<PlotSeries>& series, bool logx, bool logy) {
    const double W = 640, H = 420, ml = 80, mr = 20, mt = 40, mb = 60;
    auto tx = [&](double v) { return logx ? std::log10(v) : v; };
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if ((logx && !(s.x[i] > 0)) || (logy && !(s.y[i] > 0))) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double v) { return H - mb - (ty(v) - y0) / (y1 - y0) * (H - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    auto tick = [&](double v, bool is_log) { return is_log ? "1e" + fmt_double(std::round(v * 100) / 100) : fmt_double(v); };
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4, fy = y0 + (y1 - y0) * i / 4;
        const double sx = ml + (W - ml - mr) * i / 4, sy = H - mb - (H - mt - mb) * i / 4;
        os << "<text x=\"" << sx << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << tick(fx, logx) << "</text>\n";
        os << "<text x=\"" << ml - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
           << tick(fy, logy) << "</text>\n";
    }
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
       << H / 2 << ")\">" << ylabel << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* col = colors[k % 5];
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if ((logx && !(s.x[i] > 0)) || (logy && !(s.y[i] > 0))) continue;
            os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 16 * (k + 1) << "\" font-size=\"12\" fill=\"" << col
           << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace hvlab
