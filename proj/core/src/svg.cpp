#include "mdetect/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mdetect/csvio.hpp"
#include "mdetect/error.hpp"

namespace mdetect {

SvgPlot::SvgPlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgPlot::add_line(const std::vector<double>& x, const std::vector<double>& y,
                       const std::string& name, const std::string& color) {
    if (x.size() != y.size()) throw Error("SvgPlot::add_line: size mismatch");
    lines_.push_back({x, y, name, color});
}

void SvgPlot::add_band(double x0, double x1, const std::string& color) {
    bands_.push_back({x0, x1, color});
}

void SvgPlot::add_hline(double y, const std::string& color) { hlines_.emplace_back(y, color); }

namespace {

std::string fmt_tick(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace

std::string SvgPlot::render(int width, int height) const {
    const double ml = 64, mr = 16, mt = 30, mb = 46;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& l : lines_) {
        for (double v : l.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : l.y) {
            if (!std::isfinite(v)) continue;
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    for (const auto& [y, c] : hlines_) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (!std::isfinite(xmin)) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
    auto sy = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\" "
        << "font-family=\"sans-serif\">" << title_ << "</text>\n";

    for (const auto& b : bands_) {
        const double x0 = std::max(sx(b.x0), ml), x1 = std::min(sx(b.x1), ml + pw);
        if (x1 <= x0) continue;
        svg << "<rect x=\"" << x0 << "\" y=\"" << mt << "\" width=\"" << x1 - x0 << "\" height=\""
            << ph << "\" fill=\"" << b.color << "\" fill-opacity=\"0.25\"/>\n";
    }

    // axes + ticks
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 5.0;
        const double fy = ymin + (ymax - ymin) * i / 5.0;
        svg << "<line x1=\"" << sx(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << sx(fx) << "\" y2=\""
            << mt + ph + 4 << "\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << sx(fx) << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt_tick(fx)
            << "</text>\n";
        svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << sy(fy) << "\" x2=\"" << ml << "\" y2=\""
            << sy(fy) << "\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy(fy) + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt_tick(fy)
            << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << x_label_
        << "</text>\n";
    svg << "<text x=\"14\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 14 "
        << mt + ph / 2 << ")\">" << y_label_ << "</text>\n";

    for (const auto& [y, color] : hlines_) {
        svg << "<line x1=\"" << ml << "\" y1=\"" << sy(y) << "\" x2=\"" << ml + pw << "\" y2=\""
            << sy(y) << "\" stroke=\"" << color << "\" stroke-dasharray=\"5,4\"/>\n";
    }

    int legend_row = 0;
    for (const auto& l : lines_) {
        svg << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < l.x.size(); ++i) {
            double y = l.y[i];
            if (!std::isfinite(y)) y = ymax;
            svg << sx(l.x[i]) << "," << sy(std::clamp(y, ymin, ymax)) << " ";
        }
        svg << "\"/>\n";
        if (!l.name.empty()) {
            const double ly = mt + 14 + 16 * legend_row++;
            svg << "<line x1=\"" << ml + pw - 120 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 100
                << "\" y2=\"" << ly << "\" stroke=\"" << l.color << "\" stroke-width=\"2\"/>\n";
            svg << "<text x=\"" << ml + pw - 94 << "\" y=\"" << ly + 4
                << "\" font-size=\"11\" font-family=\"sans-serif\">" << l.name << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void SvgPlot::write(const std::filesystem::path& path, int width, int height) const {
    write_text_file(path, render(width, height));
}

std::string svg_heatmap(const std::vector<std::vector<double>>& cells, const std::string& title,
                        int cell_px) {
    const std::size_t rows = cells.size();
    const std::size_t cols = rows ? cells[0].size() : 0;
    double maxv = 0.0;
    for (const auto& row : cells)
        for (double v : row) maxv = std::max(maxv, v);
    const int ml = 40, mt = 34;
    const int width = ml + static_cast<int>(cols) * cell_px + 10;
    const int height = mt + static_cast<int>(rows) * cell_px + 10;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\" "
        << "font-family=\"sans-serif\">" << title << "</text>\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            const double t = maxv > 0 ? cells[r][c] / maxv : 0.0;
            const int shade = static_cast<int>(255.0 * (1.0 - t));
            svg << "<rect x=\"" << ml + static_cast<int>(c) * cell_px << "\" y=\""
                << mt + static_cast<int>(r) * cell_px << "\" width=\"" << cell_px << "\" height=\""
                << cell_px << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"#ddd\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace mdetect
