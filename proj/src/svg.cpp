#include "retina/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "retina/error.hpp"

namespace retina::svg {

namespace {

constexpr int kWidth = 640, kHeight = 480;
constexpr int kMarginLeft = 64, kMarginRight = 24, kMarginTop = 40, kMarginBottom = 48;
constexpr const char* kColors[] = {"#1f6fb2", "#d1495b", "#3a7d44", "#8d5a97",
                                   "#c77d2e", "#4a4a4a"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write SVG: " + path.string());
    return out;
}

void write_frame(std::ofstream& out, const std::string& title, const std::string& x_label,
                 const std::string& y_label) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << escape(title) << "</text>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape(x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << escape(y_label)
        << "</text>\n";
    out << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\""
        << kWidth - kMarginLeft - kMarginRight << "\" height=\""
        << kHeight - kMarginTop - kMarginBottom
        << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
}

} // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    if (series.empty()) throw InvalidArgument("write_line_chart: no series");
    for (const Series& s : series)
        if (s.points.empty())
            throw InvalidArgument("write_line_chart: series '" + s.label + "' is empty");

    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    for (const Series& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    const auto px = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    const auto py = [&](double y) {
        return kMarginTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h;
    };

    auto out = open_out(path);
    write_frame(out, title, x_label, y_label);

    // axis extent labels
    out << "<text x=\"" << kMarginLeft << "\" y=\"" << kHeight - kMarginBottom + 16
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(xmin) << "</text>\n";
    out << "<text x=\"" << kWidth - kMarginRight - 24 << "\" y=\"" << kHeight - kMarginBottom + 16
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(xmax) << "</text>\n";
    out << "<text x=\"" << kMarginLeft - 34 << "\" y=\"" << kHeight - kMarginBottom
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(ymin) << "</text>\n";
    out << "<text x=\"" << kMarginLeft - 34 << "\" y=\"" << kMarginTop + 10
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(ymax) << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kColors[si % (sizeof kColors / sizeof kColors[0])];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : series[si].points)
            out << fmt(px(x)) << "," << fmt(py(y)) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << kMarginLeft + 10 << "\" y=\"" << kMarginTop + 16 + 14 * si
            << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">"
            << escape(series[si].label) << "</text>\n";
    }
    out << "</svg>\n";
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<Bar>& bars) {
    if (bars.empty()) throw InvalidArgument("write_bar_chart: no bars");
    double ymax = 1.0;
    for (const Bar& b : bars) ymax = std::max(ymax, b.value);

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    const double slot = plot_w / static_cast<double>(bars.size());
    const double bar_w = slot * 0.7;

    auto out = open_out(path);
    write_frame(out, title, "", y_label);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double h = bars[i].value / ymax * plot_h;
        const double x = kMarginLeft + slot * (static_cast<double>(i) + 0.15);
        const double y = kMarginTop + plot_h - h;
        const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
        out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(bar_w)
            << "\" height=\"" << fmt(h) << "\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << fmt(x + bar_w / 2) << "\" y=\"" << kHeight - kMarginBottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << escape(bars[i].label) << "</text>\n";
        out << "<text x=\"" << fmt(x + bar_w / 2) << "\" y=\"" << fmt(y - 4)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << fmt(bars[i].value) << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace retina::svg
