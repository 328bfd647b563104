#pragma once

#include <string>
#include <vector>

namespace debias {

// Minimal self-contained SVG line chart: axes with ticks, one polyline per
// series, legend. No external dependencies; output is deterministic.
struct ChartSeries {
    std::string name;
    std::string color; // e.g. "#1f77b4"
    std::vector<std::pair<double, double>> points;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    double x_min = 0.0, x_max = 1.0;
    double y_min = 0.0, y_max = 1.0;
    std::vector<double> x_ticks;
    std::vector<double> y_ticks;
    std::vector<ChartSeries> series;
};

std::string render_line_chart(const LineChart& chart);

} // namespace debias
