// Tabular output: one fixed schema for time series, plus aggregate,
// histogram and convergence tables. Numbers use 17 significant digits so a
// parse of the written text reproduces every double exactly.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spinosc/classical.hpp"
#include "spinosc/cumulant.hpp"
#include "spinosc/ensemble.hpp"
#include "spinosc/errors.hpp"
#include "spinosc/params.hpp"
#include "spinosc/sse.hpp"

namespace spinosc::io {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw ConfigError("no column named " + std::string(name));
    }
    std::vector<double> values(std::string_view name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }
};

inline const std::vector<std::string>& series_header() {
    static const std::vector<std::string> h{
        "t",      "dy_dt", "z_mean",    "p_mean",        "jx_mean",     "jy_mean", "jz_mean",
        "Czz",    "Czp",   "Cpp",       "CzJz",          "CpJz",        "CJzJz",   "entropy",
        "norm_residual",   "z_classical", "p_classical", "Sx",          "Sy",      "Sz"};
    return h;
}

inline std::string format_value(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string to_csv(const Table& t) {
    std::string out;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (i) out += ',';
        out += t.header[i];
    }
    out += '\n';
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size()) throw ConfigError("table row width does not match its header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_value(row[i]);
        }
        out += '\n';
    }
    return out;
}

inline Table parse_csv(std::string_view text) {
    Table t;
    bool first = true;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string line(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw ConfigError("csv line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (c.empty() || end != c.c_str() + c.size()) {
                throw ConfigError("csv line " + std::to_string(line_no) + ": cannot parse '" + c + "'");
            }
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ------------------------------------------------------ table builders -----

namespace detail {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

inline std::vector<double> blank_row() { return std::vector<double>(series_header().size(), nan); }

inline void fill_classical(std::vector<double>& row, const ClassicalRecord& c, std::size_t i, const ModelParams& p) {
    row[15] = c.z[i] / p.z_g();
    row[16] = c.p[i] / p.p_g();
    row[17] = c.Sx[i] / p.hbar;
    row[18] = c.Sy[i] / p.hbar;
    row[19] = c.Sz[i] / p.hbar;
}

} // namespace detail

// Time series in trap units: t in 1/omega, z in z_g, p in p_g, angular momenta
// in hbar, covariances by the matching products. A classical record, when
// given, must share the sample grid.
inline Table series_table(const TrajectoryRecord& r, const ModelParams& p, const ClassicalRecord* classical = nullptr) {
    if (classical && classical->size() != r.size()) {
        throw ConfigError("classical and quantum records are on different grids");
    }
    const double zg = p.z_g();
    const double pg = p.p_g();
    const double h = p.hbar;
    const double w = p.omega;
    Table t{series_header(), {}};
    for (std::size_t i = 0; i < r.size(); ++i) {
        auto row = detail::blank_row();
        row[0] = r.t[i] * w;
        row[1] = r.dy[i] / r.dt / zg;
        row[2] = r.z[i] / zg;
        row[3] = r.p[i] / pg;
        row[4] = r.jx[i] / h;
        row[5] = r.jy[i] / h;
        row[6] = r.jz[i] / h;
        row[7] = r.czz[i] / (zg * zg);
        row[8] = r.czp[i] / (zg * pg);
        row[9] = r.cpp[i] / (pg * pg);
        row[10] = r.czjz[i] / (zg * h);
        row[11] = r.cpjz[i] / (pg * h);
        row[12] = r.cjzjz[i] / (h * h);
        row[13] = r.entropy[i];
        row[14] = r.norm_residual[i];
        if (classical) {
            if (std::abs(classical->t[i] - r.t[i]) > 1e-9 * std::max(1.0, r.t[i])) {
                throw ConfigError("classical and quantum records are on different grids");
            }
            detail::fill_classical(row, *classical, i, p);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table classical_table(const ClassicalRecord& c, const ModelParams& p) {
    Table t{series_header(), {}};
    for (std::size_t i = 0; i < c.size(); ++i) {
        auto row = detail::blank_row();
        row[0] = c.t[i] * p.omega;
        detail::fill_classical(row, c, i, p);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table cumulant_table(const CumulantSeries& s, const ModelParams& p) {
    Table t{series_header(), {}};
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto row = detail::blank_row();
        const auto n = s.normalized(i);  // zz, pp, JzJz, zp, zJz, pJz
        row[0] = s.t[i] * p.omega;
        row[2] = s.mean[i](0) / p.z_g();
        row[3] = s.mean[i](1) / p.p_g();
        row[6] = s.mean[i](2) / p.hbar;
        row[7] = n[0];
        row[8] = n[3];
        row[9] = n[1];
        row[10] = n[4];
        row[11] = n[5];
        row[12] = n[2];
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table aggregate_table(const Aggregates& a, const ModelParams& p) {
    Table t{{"t", "z_mean", "z_var", "p_mean", "p_var", "jz_mean", "jz_var", "entropy_mean", "entropy_var"}, {}};
    const double zg = p.z_g();
    const double pg = p.p_g();
    const double h = p.hbar;
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        t.rows.push_back({a.t[i] * p.omega, a.z_mean[i] / zg, a.z_var[i] / (zg * zg), a.p_mean[i] / pg,
                          a.p_var[i] / (pg * pg), a.jz_mean[i] / h, a.jz_var[i] / (h * h), a.entropy_mean[i],
                          a.entropy_var[i]});
    }
    return t;
}

inline Table histogram_table(const TrajectoryRecord& r, const ModelParams& p) {
    Table t;
    t.header.push_back("t");
    for (int i = 0; i <= p.two_j; ++i) {
        char label[32];
        std::snprintf(label, sizeof label, "P(M=%g)", 0.5 * (2 * i - p.two_j));
        t.header.push_back(label);
    }
    for (const auto& [time, h] : r.histograms) {
        std::vector<double> row{time * p.omega};
        row.insert(row.end(), h.begin(), h.end());
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table convergence_table(const ConvergenceReport& rep, const ModelParams& p) {
    Table t{{"t", "d_zz", "d_pp", "d_JzJz", "d_zp", "d_zJz", "d_pJz", "third_cumulant"}, {}};
    for (const auto& r : rep.rows) {
        std::vector<double> row{r.t * p.omega};
        row.insert(row.end(), r.discrepancy.begin(), r.discrepancy.end());
        row.push_back(rep.has_third_cumulants ? r.third_cumulant : detail::nan);
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ----------------------------------------------------------- file output ---

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) ensure_directory(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << text;
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_csv(const std::filesystem::path& path, const Table& t) { write_text(path, to_csv(t)); }

inline Table read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

} // namespace spinosc::io
