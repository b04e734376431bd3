#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "evforecast/csv.hpp"

namespace evf {

struct PlotSeries {
    std::string label;
    std::vector<double> values;
};

/// Minimal self-contained SVG line chart: shared x axis (index-based with a
/// few date ticks), one polyline per series, inline legend. No rendering
/// dependencies; deterministic output for byte-comparison.
inline void write_svg_chart(std::ostream& out, const std::string& title,
                            const std::vector<std::string>& x_labels,
                            const std::vector<PlotSeries>& series, int width = 900,
                            int height = 420) {
    static const char* kColors[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
    const int ml = 70, mr = 20, mt = 40, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;
    std::size_t n = 0;
    double lo = 0.0, hi = 1.0;
    bool first = true;
    for (const auto& s : series) {
        n = std::max(n, s.values.size());
        for (double v : s.values) {
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto xpos = [&](std::size_t i) {
        return ml + (n > 1 ? pw * double(i) / double(n - 1) : pw / 2.0);
    };
    auto ypos = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };
    char buf[160];

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" << title << "</text>\n";
    // axes
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#333\"/>\n", ml,
                  mt + ph, width - mr, mt + ph);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%.1f\" stroke=\"#333\"/>\n", ml, mt, ml,
                  mt + ph);
    out << buf;
    // y ticks
    for (int k = 0; k <= 4; ++k) {
        double v = lo + (hi - lo) * double(k) / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                      "font-size=\"11\">%.1f</text>\n",
                      ml - 6, ypos(v) + 4, v);
        out << buf;
    }
    // x ticks: at most 8 date labels
    if (!x_labels.empty()) {
        std::size_t step = std::max<std::size_t>(1, (x_labels.size() + 7) / 8);
        for (std::size_t i = 0; i < x_labels.size(); i += step) {
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" "
                          "font-family=\"sans-serif\" font-size=\"10\">%s</text>\n",
                          xpos(i), mt + ph + 16, x_labels[i].c_str());
            out << buf;
        }
    }
    // series
    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kColors[si % (sizeof(kColors) / sizeof(kColors[0]))];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[si].values.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", xpos(i), ypos(series[si].values[i]));
            out << buf;
        }
        out << "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%d\" y=\"%d\" width=\"12\" height=\"3\" fill=\"%s\"/>\n",
                      ml + 10 + int(si) * 150, mt - 12, color);
        out << buf;
        out << "<text x=\"" << ml + 26 + int(si) * 150 << "\" y=\"" << mt - 6
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[si].label << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace evf
