#pragma once

#include <string>
#include <vector>

namespace topohazard::cli {

struct PlotCurve {
    std::vector<double> levels;
    std::vector<double> values;
    std::string label;
    bool step = true;    // render as a right-continuous staircase
    bool dashed = false;
};

struct PlotBand {
    std::vector<double> levels;
    std::vector<double> lower;
    std::vector<double> upper;
    std::string label;
};

/// Static SVG: axes, tick labels, shaded bands under the curves, a legend.
/// Valid (axes only) when nothing is supplied.
std::string render_svg(const std::vector<PlotCurve>& curves,
                       const std::vector<PlotBand>& bands,
                       const std::string& title);

}  // namespace topohazard::cli
