#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace retina::svg {

// Deterministic standalone-SVG emitters: fixed canvas, fixed number
// formatting, no timestamps.

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

// Line chart over [0,1]x[0,1] style axes unless the data exceeds them.
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

struct Bar {
    std::string label;
    double value = 0.0;
};

// Bar chart with values in [0, 1].
void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<Bar>& bars);

} // namespace retina::svg
