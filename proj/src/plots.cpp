#include "nowcast/plots.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nowcast/errors.hpp"

namespace nowcast::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct Axes {
    double x0, y0, w, h;  // pixel box
    double xmin, xmax, ymin, ymax;
    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void frame(std::ostringstream& os, const Axes& a, const std::string& title, const std::string& xlabel,
           const std::string& ylabel) {
    os << "<rect x='" << fmt(a.x0) << "' y='" << fmt(a.y0) << "' width='" << fmt(a.w) << "' height='" << fmt(a.h)
       << "' fill='none' stroke='black'/>\n";
    os << "<text x='" << fmt(a.x0 + a.w / 2) << "' y='" << fmt(a.y0 - 10) << "' text-anchor='middle'>" << title
       << "</text>\n";
    os << "<text x='" << fmt(a.x0 + a.w / 2) << "' y='" << fmt(a.y0 + a.h + 36)
       << "' text-anchor='middle' font-size='12'>" << xlabel << "</text>\n";
    os << "<text transform='translate(" << fmt(a.x0 - 40) << "," << fmt(a.y0 + a.h / 2)
       << ") rotate(-90)' text-anchor='middle' font-size='12'>" << ylabel << "</text>\n";
}

void legend(std::ostringstream& os, std::span<const metrics::VerificationReport> reports, double x, double y) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const double yy = y + 16.0 * static_cast<double>(i);
        os << "<line x1='" << fmt(x) << "' y1='" << fmt(yy) << "' x2='" << fmt(x + 20) << "' y2='" << fmt(yy)
           << "' stroke='" << kPalette[i % 10] << "' stroke-width='2'/>\n";
        os << "<text x='" << fmt(x + 26) << "' y='" << fmt(yy + 4) << "' font-size='11'>" << reports[i].model
           << "</text>\n";
    }
}

}  // namespace

std::string skill_chart_svg(std::span<const metrics::VerificationReport> reports, int hour) {
    std::ostringstream os;
    const double W = 900, H = 380;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n";
    if (reports.empty()) return os.str() + "</svg>\n";
    const auto& thr = reports[0].thresholds;
    const double n = static_cast<double>(thr.size());
    for (int panel = 0; panel < 2; ++panel) {
        const bool is_csi = panel == 0;
        Axes a{70.0 + panel * 420.0, 40, 300, 280, 0, std::max(1.0, n - 1), is_csi ? 0.0 : -0.2, 1.0};
        frame(os, a, std::string(is_csi ? "CSI" : "HSS") + " (H" + std::to_string(hour) + ")", "threshold (mm/hr)",
              is_csi ? "CSI" : "HSS");
        for (std::size_t k = 0; k < thr.size(); ++k)
            os << "<text x='" << fmt(a.px(static_cast<double>(k))) << "' y='" << fmt(a.y0 + a.h + 16)
               << "' text-anchor='middle' font-size='10'>" << metrics::format_optional(thr[k]) << "</text>\n";
        for (double t = a.ymin; t <= a.ymax + 1e-9; t += 0.2)
            os << "<text x='" << fmt(a.x0 - 6) << "' y='" << fmt(a.py(t) + 3)
               << "' text-anchor='end' font-size='10'>" << fmt(t) << "</text>\n";
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& h = reports[i].hour(hour);
            std::string path;
            for (std::size_t k = 0; k < h.counts.size(); ++k) {
                const auto v = is_csi ? metrics::csi(h.counts[k]) : metrics::hss(h.counts[k]);
                if (!v) continue;
                const double y = std::clamp(*v, a.ymin, a.ymax);
                path += (path.empty() ? "M" : " L") + fmt(a.px(static_cast<double>(k))) + "," + fmt(a.py(y));
            }
            if (!path.empty())
                os << "<path d='" << path << "' fill='none' stroke='" << kPalette[i % 10]
                   << "' stroke-width='2'/>\n";
        }
    }
    legend(os, reports, 760, 60);
    os << "</svg>\n";
    return os.str();
}

std::string performance_diagram_svg(std::span<const metrics::VerificationReport> reports, int hour) {
    std::ostringstream os;
    const double W = 640, H = 520;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n";
    Axes a{70, 40, 400, 400, 0, 1, 0, 1};
    // CSI contours: POD = 1 / (1/CSI + 1 - 1/SR)
    for (int c = 1; c <= 9; ++c) {
        const double csi = c / 10.0;
        std::string path;
        for (int i = 1; i <= 200; ++i) {
            const double sr = i / 200.0;
            const double denom = 1.0 / csi + 1.0 - 1.0 / sr;
            if (denom <= 0) continue;
            const double pod = 1.0 / denom;
            if (pod > 1.0) continue;
            path += (path.empty() ? "M" : " L") + fmt(a.px(sr)) + "," + fmt(a.py(pod));
        }
        os << "<path d='" << path << "' fill='none' stroke='#2ca02c' stroke-opacity='0.6'/>\n";
    }
    // bias rays: POD = bias * SR
    for (double b : {0.5, 1.0, 1.5, 2.0, 4.0}) {
        const double sr_end = std::min(1.0, 1.0 / b);
        os << "<line x1='" << fmt(a.px(0)) << "' y1='" << fmt(a.py(0)) << "' x2='" << fmt(a.px(sr_end)) << "' y2='"
           << fmt(a.py(b * sr_end)) << "' stroke='gray' stroke-dasharray='4,3'/>\n";
    }
    frame(os, a, "Performance diagram (H" + std::to_string(hour) + ")", "success ratio", "probability of detection");
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& h = reports[i].hour(hour);
        std::string path;
        for (const auto& row : metrics::performance_diagram_rows(h.counts)) {
            if (!row.pod || !row.sr) continue;
            const double x = a.px(*row.sr), y = a.py(*row.pod);
            path += (path.empty() ? "M" : " L") + fmt(x) + "," + fmt(y);
            os << "<circle cx='" << fmt(x) << "' cy='" << fmt(y) << "' r='3' fill='" << kPalette[i % 10] << "'/>\n";
        }
        if (!path.empty())
            os << "<path d='" << path << "' fill='none' stroke='" << kPalette[i % 10] << "'/>\n";
    }
    legend(os, reports, 490, 60);
    os << "</svg>\n";
    return os.str();
}

std::array<std::uint8_t, 3> rain_colour(double r) {
    struct Stop {
        double at;
        std::uint8_t c[3];
    };
    static constexpr Stop stops[] = {{0.0, {255, 255, 255}}, {0.5, {200, 230, 255}}, {2.0, {90, 160, 240}},
                                     {5.0, {30, 90, 200}},   {10.0, {40, 170, 60}},   {20.0, {240, 220, 40}},
                                     {30.0, {240, 130, 30}}, {40.0, {200, 20, 20}}};
    if (!(r > 0.0)) return {255, 255, 255};
    for (std::size_t i = 1; i < std::size(stops); ++i) {
        if (r < stops[i].at) {
            const double f = (r - stops[i - 1].at) / (stops[i].at - stops[i - 1].at);
            std::array<std::uint8_t, 3> out{};
            for (int k = 0; k < 3; ++k)
                out[k] = static_cast<std::uint8_t>(std::lround(stops[i - 1].c[k] + f * (stops[i].c[k] - stops[i - 1].c[k])));
            return out;
        }
    }
    return {stops[std::size(stops) - 1].c[0], stops[std::size(stops) - 1].c[1], stops[std::size(stops) - 1].c[2]};
}

Image panel(const std::vector<std::vector<Grid>>& rows, int scale, bool last_column_is_unit) {
    if (rows.empty() || rows[0].empty()) throw Error(ErrorKind::ShapeMismatch, "empty panel");
    const int gh = rows[0][0].height, gw = rows[0][0].width, gap = 4;
    const int cols = static_cast<int>(rows[0].size());
    Image img;
    img.width = cols * gw * scale + (cols + 1) * gap;
    img.height = static_cast<int>(rows.size()) * gh * scale + (static_cast<int>(rows.size()) + 1) * gap;
    img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 80);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
            const Grid& g = rows[r][c];
            if (g.height != gh || g.width != gw) throw Error(ErrorKind::ShapeMismatch, "panel tiles differ in size");
            const bool unit = last_column_is_unit && c == cols - 1;
            const int ox = gap + c * (gw * scale + gap), oy = gap + static_cast<int>(r) * (gh * scale + gap);
            for (int y = 0; y < gh * scale; ++y) {
                for (int x = 0; x < gw * scale; ++x) {
                    const double v = g.at(y / scale, x / scale);
                    std::array<std::uint8_t, 3> col;
                    if (unit) {
                        const auto k = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
                        col = {k, k, k};
                    } else {
                        col = rain_colour(v);
                    }
                    std::uint8_t* px = &img.rgb[(static_cast<std::size_t>(oy + y) * img.width + ox + x) * 3];
                    std::copy(col.begin(), col.end(), px);
                }
            }
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error(ErrorKind::IoError, "libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(&image.rgb[static_cast<std::size_t>(y) * image.width * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    f << text;
}

}  // namespace nowcast::plot
