#include "debias/svg.hpp"

#include <cstdio>

namespace debias {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 440.0;
constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 24.0;
constexpr double kMarginTop = 48.0;
constexpr double kMarginBottom = 56.0;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace

std::string render_line_chart(const LineChart& chart) {
    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    const double x_span = chart.x_max - chart.x_min;
    const double y_span = chart.y_max - chart.y_min;
    const auto to_x = [&](double x) {
        return kMarginLeft + (x - chart.x_min) / x_span * plot_w;
    };
    const auto to_y = [&](double y) {
        return kMarginTop + plot_h - (y - chart.y_min) / y_span * plot_h;
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_tick(kWidth) +
           "\" height=\"" + fmt_tick(kHeight) + "\" viewBox=\"0 0 " + fmt_tick(kWidth) + " " +
           fmt_tick(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" + chart.title + "</text>\n";

    // Axes.
    svg += "<line x1=\"" + fmt(kMarginLeft) + "\" y1=\"" + fmt(kMarginTop + plot_h) +
           "\" x2=\"" + fmt(kMarginLeft + plot_w) + "\" y2=\"" + fmt(kMarginTop + plot_h) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(kMarginLeft) + "\" y1=\"" + fmt(kMarginTop) + "\" x2=\"" +
           fmt(kMarginLeft) + "\" y2=\"" + fmt(kMarginTop + plot_h) + "\" stroke=\"black\"/>\n";

    for (const double t : chart.x_ticks) {
        const double x = to_x(t);
        svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(kMarginTop + plot_h) + "\" x2=\"" +
               fmt(x) + "\" y2=\"" + fmt(kMarginTop + plot_h + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(kMarginTop + plot_h + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
               fmt_tick(t) + "</text>\n";
    }
    for (const double t : chart.y_ticks) {
        const double y = to_y(t);
        svg += "<line x1=\"" + fmt(kMarginLeft - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" +
               fmt(kMarginLeft) + "\" y2=\"" + fmt(y) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(kMarginLeft - 9) + "\" y=\"" + fmt(y + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
               fmt_tick(t) + "</text>\n";
    }
    svg += "<text x=\"" + fmt(kMarginLeft + plot_w / 2) + "\" y=\"" + fmt(kHeight - 14) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
           chart.x_label + "</text>\n";
    svg += "<text x=\"18\" y=\"" + fmt(kMarginTop + plot_h / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 18 " + fmt(kMarginTop + plot_h / 2) + ")\">" +
           chart.y_label + "</text>\n";

    // Series and legend.
    double legend_y = kMarginTop + 8.0;
    for (const auto& series : chart.series) {
        std::string points;
        for (const auto& [px, py] : series.points) {
            points += fmt(to_x(px)) + "," + fmt(to_y(py)) + " ";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + series.color +
               "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
        for (const auto& [px, py] : series.points) {
            svg += "<circle cx=\"" + fmt(to_x(px)) + "\" cy=\"" + fmt(to_y(py)) +
                   "\" r=\"3\" fill=\"" + series.color + "\"/>\n";
        }
        const double lx = kMarginLeft + plot_w - 150.0;
        svg += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(legend_y) + "\" x2=\"" +
               fmt(lx + 24) + "\" y2=\"" + fmt(legend_y) + "\" stroke=\"" + series.color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + fmt(lx + 30) + "\" y=\"" + fmt(legend_y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + series.name + "</text>\n";
        legend_y += 18.0;
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace debias
