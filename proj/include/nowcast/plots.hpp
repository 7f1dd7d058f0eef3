#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nowcast/grid_store.hpp"
#include "nowcast/verification_metrics.hpp"

namespace nowcast::plot {

/// CSI and HSS against threshold, one line per report, side by side.
std::string skill_chart_svg(std::span<const metrics::VerificationReport> reports, int hour = 0);
/// Success ratio vs POD with CSI contours and bias rays.
std::string performance_diagram_svg(std::span<const metrics::VerificationReport> reports, int hour = 0);

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Rain-rate colour ramp: white when dry, through blues and greens to red above 40 mm/hr.
std::array<std::uint8_t, 3> rain_colour(double mm_per_hr);
/// Grid of tiles; each row is one hour, each column one field. `scale` enlarges pixels.
Image panel(const std::vector<std::vector<Grid>>& rows, int scale = 4, bool last_column_is_unit = false);
void write_png(const std::filesystem::path& path, const Image& image);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace nowcast::plot
