/*
 Copyright 2026 rfpuf project contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "rfpuf/common.hpp"

namespace rfpuf::svg {

// Freedman-Diaconis bin count (fallback to Sturges for degenerate IQR).
inline std::size_t fd_bin_count(std::vector<double> values) {
    if (values.size() < 2) return 1;
    std::sort(values.begin(), values.end());
    const double q1 = values[values.size() / 4];
    const double q3 = values[(values.size() * 3) / 4];
    const double iqr = q3 - q1;
    const double range = values.back() - values.front();
    if (iqr <= 0.0 || range <= 0.0)
        return std::size_t(std::ceil(std::log2(double(values.size())))) + 1;
    const double width = 2.0 * iqr / std::cbrt(double(values.size()));
    return std::max<std::size_t>(1, std::size_t(std::ceil(range / width)));
}

struct Histogram {
    std::vector<double> bin_edges;  // n_bins + 1
    std::vector<double> density;    // n_bins, integrates to 1
};

inline Histogram make_histogram(const std::vector<double>& values, std::size_t n_bins = 0) {
    if (values.empty()) throw DataError("make_histogram: empty sample");
    if (n_bins == 0) n_bins = fd_bin_count(values);
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    double lo = *mn_it, hi = *mx_it;
    if (hi <= lo) hi = lo + 1.0;
    Histogram h;
    h.bin_edges.resize(n_bins + 1);
    for (std::size_t b = 0; b <= n_bins; ++b)
        h.bin_edges[b] = lo + (hi - lo) * double(b) / double(n_bins);
    h.density.assign(n_bins, 0.0);
    const double width = (hi - lo) / double(n_bins);
    for (double v : values) {
        auto b = std::size_t((v - lo) / width);
        if (b >= n_bins) b = n_bins - 1;
        h.density[b] += 1.0;
    }
    for (double& d : h.density) d /= double(values.size()) * width;
    return h;
}

struct Curve {
    std::string label;
    std::string color;
    std::vector<double> x, y;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace detail

// Histogram bars plus optional overlay curves (e.g. fitted densities),
// shared linear axes, fixed 640x400 canvas.
inline void write_histogram_svg(const std::string& path, const std::string& title,
                                const Histogram& h, const std::vector<Curve>& curves = {}) {
    const double W = 640, H = 400, ml = 60, mr = 15, mt = 30, mb = 40;
    double xmin = h.bin_edges.front(), xmax = h.bin_edges.back(), ymax = 0.0;
    for (double d : h.density) ymax = std::max(ymax, d);
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            xmin = std::min(xmin, c.x[i]);
            xmax = std::max(xmax, c.x[i]);
            ymax = std::max(ymax, c.y[i]);
        }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.05;
    auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto Y = [&](double y) { return H - mb - y / ymax * (H - mt - mb); };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("write_histogram_svg: cannot open " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='14'>" << title
        << "</text>\n";
    for (std::size_t b = 0; b + 1 < h.bin_edges.size(); ++b) {
        const double x0 = X(h.bin_edges[b]), x1 = X(h.bin_edges[b + 1]);
        const double y = Y(h.density[b]);
        out << "<rect x='" << detail::fmt(x0) << "' y='" << detail::fmt(y) << "' width='"
            << detail::fmt(std::max(0.5, x1 - x0 - 0.5)) << "' height='"
            << detail::fmt(H - mb - y) << "' fill='#9ecae1' stroke='#6baed6'/>\n";
    }
    double ly = mt + 14;
    for (const auto& c : curves) {
        out << "<polyline fill='none' stroke='" << c.color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < c.x.size(); ++i)
            out << detail::fmt(X(c.x[i])) << "," << detail::fmt(Y(c.y[i])) << " ";
        out << "'/>\n";
        out << "<text x='" << W - mr - 150 << "' y='" << ly << "' font-size='12' fill='" << c.color
            << "'>" << c.label << "</text>\n";
        ly += 16;
    }
    // axes with end labels
    out << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n"
        << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n"
        << "<text x='" << ml << "' y='" << H - mb + 16 << "' font-size='11'>" << detail::fmt(xmin)
        << "</text>\n"
        << "<text x='" << W - mr << "' y='" << H - mb + 16 << "' text-anchor='end' font-size='11'>"
        << detail::fmt(xmax) << "</text>\n"
        << "<text x='" << ml - 4 << "' y='" << mt + 4 << "' text-anchor='end' font-size='11'>"
        << detail::fmt(ymax) << "</text>\n"
        << "</svg>\n";
}

// Bar chart of PCA explained variance per component.
inline void write_scree_svg(const std::string& path, const std::vector<double>& explained) {
    if (explained.empty()) throw DataError("write_scree_svg: empty variance list");
    const double W = 640, H = 400, ml = 60, mr = 15, mt = 30, mb = 40;
    double total = 0.0, ymax = 0.0;
    for (double v : explained) {
        total += v;
        ymax = std::max(ymax, v);
    }
    if (ymax <= 0.0) ymax = 1.0;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("write_scree_svg: cannot open " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='14'>"
        << "Explained variance per principal component</text>\n";
    const double slot = (W - ml - mr) / double(explained.size());
    for (std::size_t k = 0; k < explained.size(); ++k) {
        const double bh = explained[k] / (ymax * 1.05) * (H - mt - mb);
        const double x = ml + slot * double(k) + slot * 0.15;
        out << "<rect x='" << detail::fmt(x) << "' y='" << detail::fmt(H - mb - bh) << "' width='"
            << detail::fmt(slot * 0.7) << "' height='" << detail::fmt(bh)
            << "' fill='#a1d99b' stroke='#74c476'/>\n";
        char pct[32];
        std::snprintf(pct, sizeof(pct), "%.1f%%", total > 0.0 ? 100.0 * explained[k] / total : 0.0);
        out << "<text x='" << detail::fmt(x + slot * 0.35) << "' y='" << H - mb + 16
            << "' text-anchor='middle' font-size='10'>" << (k + 1) << "</text>\n"
            << "<text x='" << detail::fmt(x + slot * 0.35) << "' y='"
            << detail::fmt(H - mb - bh - 4) << "' text-anchor='middle' font-size='9'>" << pct
            << "</text>\n";
    }
    out << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
        << "' stroke='black'/>\n"
        << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
        << "' stroke='black'/>\n</svg>\n";
}

}  // namespace rfpuf::svg
