// Minimal static line plots.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "spinosc/csv.hpp"

namespace spinosc::io {

struct PlotSeries {
    std::string label;
    std::vector<double> y;
};

inline std::string svg_plot(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                            const std::vector<PlotSeries>& series) {
    constexpr double W = 720, H = 400, L = 70, R = 150, T = 40, B = 50;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (double v : x) {
        if (std::isfinite(v)) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    }
    for (const auto& s : series) {
        for (double v : s.y) {
            if (std::isfinite(v)) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
        }
    }
    if (!(xmax > xmin)) xmin = 0, xmax = 1;
    if (!(ymax > ymin)) ymin -= 1, ymax += 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
                  W, H);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"24\" font-size=\"15\">", L);
    out += buf + title + "</text>\n";
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"#444\"/>\n", L, T,
                  W - L - R, H - T - B);
    out += buf;
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.3g</text>\n", px(xv),
                      H - B + 16, xv);
        out += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>\n", L - 6,
                      py(yv) + 4, yv);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">", (L + W - R) / 2, H - 12);
    out += buf + x_label + "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 6];
        std::string pts;
        for (std::size_t i = 0; i < std::min(x.size(), series[s].y.size()); ++i) {
            if (!std::isfinite(x[i]) || !std::isfinite(series[s].y[i])) continue;
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x[i]), py(series[s].y[i]));
            pts += buf;
        }
        std::snprintf(buf, sizeof buf, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.2\" points=\"", color);
        out += buf + pts + "\"/>\n";
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">", W - R + 10, T + 16.0 * (s + 1), color);
        out += buf + series[s].label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

// Plots the named columns of a table against its first column.
inline void write_svg(const std::filesystem::path& path, const std::string& title, const Table& t,
                      const std::vector<std::string>& columns) {
    std::vector<PlotSeries> series;
    for (const auto& c : columns) series.push_back({c, t.values(c)});
    write_text(path, svg_plot(title, t.header.front(), t.values(t.header.front()), series));
}

} // namespace spinosc::io
