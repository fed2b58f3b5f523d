#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace topohazard::cli {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

const char* kColors[] = {"#1b6ca8", "#c23b22", "#2e7d32", "#7b1fa2",
                         "#ef6c00", "#455a64", "#00838f", "#6d4c41"};

struct Range {
    double lo = 0.0, hi = 1.0;
    void include(double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
};

/// Round tick spacing to 1/2/5 times a power of ten.
std::vector<double> ticks(double lo, double hi, int target = 6) {
    std::vector<double> out;
    if (!(hi > lo)) return {lo};
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * step; t += step)
        out.push_back(std::fabs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

}  // namespace

std::string render_svg(const std::vector<PlotCurve>& curves,
                       const std::vector<PlotBand>& bands, const std::string& title) {
    Range xr, yr;
    bool any = false;
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.levels.size(); ++i) {
            xr.include(c.levels[i]);
            yr.include(c.values[i]);
            any = true;
        }
    for (const auto& b : bands)
        for (std::size_t i = 0; i < b.levels.size(); ++i) {
            xr.include(b.levels[i]);
            yr.include(b.lower[i]);
            yr.include(b.upper[i]);
            any = true;
        }
    if (!any) {
        xr = {0.0, 1.0};
        yr = {0.0, 1.0};
    }
    if (xr.hi <= xr.lo) xr.hi = xr.lo + 1.0;
    if (yr.hi <= yr.lo) yr.hi = yr.lo + 1.0;
    const double ypad = 0.05 * (yr.hi - yr.lo);
    yr.hi += ypad;

    auto px = [&](double x) {
        return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight);
    };
    auto py = [&](double y) {
        return kHeight - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom);
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
        << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty())
        svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

    // Bands first so curves draw on top of the shading.
    int color_i = 0;
    for (const auto& b : bands) {
        const char* color = kColors[color_i++ % 8];
        svg << "<path d=\"";
        for (std::size_t i = 0; i < b.levels.size(); ++i)
            svg << (i == 0 ? 'M' : 'L') << fmt(px(b.levels[i])) << ' '
                << fmt(py(b.upper[i]));
        for (std::size_t i = b.levels.size(); i-- > 0;)
            svg << 'L' << fmt(px(b.levels[i])) << ' ' << fmt(py(b.lower[i]));
        svg << "Z\" fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }

    // Axes.
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
        << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
        << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    for (double t : ticks(xr.lo, xr.hi)) {
        svg << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << kHeight - kBottom
            << "\" x2=\"" << fmt(px(t)) << "\" y2=\"" << kHeight - kBottom + 5
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt(px(t)) << "\" y=\"" << kHeight - kBottom + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(t) << "</text>\n";
    }
    for (double t : ticks(yr.lo, yr.hi)) {
        svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt(py(t)) << "\" x2=\""
            << kLeft << "\" y2=\"" << fmt(py(t)) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(t) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(t) << "</text>\n";
    }
    svg << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << "level</text>\n";
    svg << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2 << ")\">"
        << "cumulative hazard</text>\n";

    color_i = 0;
    double legend_y = kTop + 6;
    for (const auto& c : curves) {
        const char* color = kColors[color_i++ % 8];
        if (!c.levels.empty()) {
            svg << "<path d=\"";
            double prev_y = 0.0;
            for (std::size_t i = 0; i < c.levels.size(); ++i) {
                if (i == 0) {
                    svg << 'M' << fmt(px(c.levels[i])) << ' ' << fmt(py(c.values[i]));
                } else if (c.step) {
                    svg << 'L' << fmt(px(c.levels[i])) << ' ' << fmt(py(prev_y));
                    svg << 'L' << fmt(px(c.levels[i])) << ' ' << fmt(py(c.values[i]));
                } else {
                    svg << 'L' << fmt(px(c.levels[i])) << ' ' << fmt(py(c.values[i]));
                }
                prev_y = c.values[i];
            }
            svg << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
            if (c.dashed) svg << " stroke-dasharray=\"6 4\"";
            svg << "/>\n";
        }
        if (!c.label.empty()) {
            svg << "<line x1=\"" << kWidth - kRight - 150 << "\" y1=\"" << legend_y
                << "\" x2=\"" << kWidth - kRight - 120 << "\" y2=\"" << legend_y
                << "\" stroke=\"" << color << "\" stroke-width=\"1.5\""
                << (c.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
            svg << "<text x=\"" << kWidth - kRight - 114 << "\" y=\"" << legend_y + 4
                << "\" font-family=\"sans-serif\" font-size=\"11\">" << c.label
                << "</text>\n";
            legend_y += 16;
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace topohazard::cli
