#pragma once

// Minimal self-contained SVG line charts for force-displacement curves.
// Displacements are drawn in millimetres, forces in newtons.

#include "mfe/core.hpp"
#include "mfe/curve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mfe {

struct PlotSeries {
    std::string label;
    ForceDisplacementCurve curve;
};

namespace svgdetail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// Tick spacing of the form {1,2,5}*10^k giving roughly `want` intervals.
inline double nice_step(double range, int want) {
    if (!(range > 0.0)) return 1.0;
    const double raw = range / std::max(want, 1);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    double m = 10.0;
    if (r <= 1.0) m = 1.0;
    else if (r <= 2.0) m = 2.0;
    else if (r <= 5.0) m = 5.0;
    return m * mag;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f6fb4", "#d0541b", "#2e8540", "#8031a7",
                                   "#b01e2e", "#6b6b6b"};
    return colors[i % (sizeof colors / sizeof colors[0])];
}

} // namespace svgdetail

// Renders one chart with a polyline per series and a small legend. Always
// produces well-formed XML, even for empty input.
inline std::string render_curve_svg(const std::vector<PlotSeries>& series,
                                    const std::string& title = "") {
    using svgdetail::fmt;
    using svgdetail::xml_escape;

    const double width = 820, height = 560;
    const double ml = 86, mr = 28, mt = title.empty() ? 30 : 54, mb = 64;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    bool have = false;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.curve.size(); ++i) {
            const double x = s.curve.displacement[i] * 1e3; // mm
            const double y = s.curve.force[i];
            if (!have) {
                x_min = x_max = x;
                y_min = y_max = y;
                have = true;
            }
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (!have) {
        x_min = y_min = 0.0;
        x_max = y_max = 1.0;
    }
    if (x_max - x_min < 1e-12) {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if (y_max - y_min < 1e-12) {
        y_min -= 0.5;
        y_max += 0.5;
    }
    y_min = std::min(y_min, 0.0);
    const double y_pad = 0.05 * (y_max - y_min);
    y_max += y_pad;

    auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    if (!title.empty())
        svg << "<text x=\"" << width / 2 << "\" y=\"26\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"17\">" << xml_escape(title)
            << "</text>\n";

    const double xs = svgdetail::nice_step(x_max - x_min, 7);
    const double ys = svgdetail::nice_step(y_max - y_min, 6);
    svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">\n";
    for (double x = std::ceil(x_min / xs) * xs; x <= x_max + 1e-9 * xs; x += xs) {
        const double X = px(x);
        svg << "<line x1=\"" << fmt(X) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(X)
            << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<line x1=\"" << fmt(X) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(X)
            << "\" y2=\"" << fmt(mt + ph + 5) << "\" stroke=\"#333333\"/>\n";
        svg << "<text x=\"" << fmt(X) << "\" y=\"" << fmt(mt + ph + 20)
            << "\" text-anchor=\"middle\">" << fmt(std::abs(x) < 1e-12 ? 0.0 : x)
            << "</text>\n";
    }
    for (double y = std::ceil(y_min / ys) * ys; y <= y_max + 1e-9 * ys; y += ys) {
        const double Y = py(y);
        svg << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(Y) << "\" x2=\"" << fmt(ml + pw)
            << "\" y2=\"" << fmt(Y) << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<line x1=\"" << fmt(ml - 5) << "\" y1=\"" << fmt(Y) << "\" x2=\"" << fmt(ml)
            << "\" y2=\"" << fmt(Y) << "\" stroke=\"#333333\"/>\n";
        svg << "<text x=\"" << fmt(ml - 9) << "\" y=\"" << fmt(Y + 4)
            << "\" text-anchor=\"end\">" << fmt(std::abs(y) < 1e-12 ? 0.0 : y)
            << "</text>\n";
    }
    svg << "</g>\n";
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
        << ph << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
        << "displacement [mm]</text>\n";
    svg << "<text x=\"22\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
        << "transform=\"rotate(-90 22 " << mt + ph / 2 << ")\">force [N]</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& c = series[si].curve;
        if (c.empty()) continue;
        svg << "<polyline fill=\"none\" stroke=\"" << svgdetail::palette(si)
            << "\" stroke-width=\"1.6\" points=\"";
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt(px(c.displacement[i] * 1e3)) << ',' << fmt(py(c.force[i]));
        }
        svg << "\"/>\n";
    }

    double ly = mt + 14;
    for (std::size_t si = 0; si < series.size(); ++si) {
        const double lx = ml + pw - 180;
        svg << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\""
            << fmt(lx + 26) << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\""
            << svgdetail::palette(si) << "\" stroke-width=\"1.6\"/>\n";
        svg << "<text x=\"" << fmt(lx + 32) << "\" y=\"" << fmt(ly)
            << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << xml_escape(series[si].label) << "</text>\n";
        ly += 18;
    }
    svg << "</svg>\n";
    return svg.str();
}

inline void save_curve_svg(const std::vector<PlotSeries>& series, const std::string& path,
                           const std::string& title = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << render_curve_svg(series, title);
    if (!out) throw Error("failed writing '" + path + "'");
}

} // namespace mfe
