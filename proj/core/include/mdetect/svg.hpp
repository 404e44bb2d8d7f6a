#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mdetect {

/// Minimal self-contained SVG line plot. Every plot written by the pipeline
/// has a CSV twin; the SVG is for eyes only and nothing asserts on it.
class SvgPlot {
  public:
    SvgPlot(std::string title, std::string x_label, std::string y_label);

    void add_line(const std::vector<double>& x, const std::vector<double>& y,
                  const std::string& name, const std::string& color);
    /// Vertical shaded band across the full y extent (e.g. a truth interval).
    void add_band(double x0, double x1, const std::string& color);
    void add_hline(double y, const std::string& color);

    std::string render(int width = 860, int height = 420) const;
    void write(const std::filesystem::path& path, int width = 860, int height = 420) const;

  private:
    struct Line {
        std::vector<double> x, y;
        std::string name, color;
    };
    struct Band {
        double x0, x1;
        std::string color;
    };
    std::string title_, x_label_, y_label_;
    std::vector<Line> lines_;
    std::vector<Band> bands_;
    std::vector<std::pair<double, std::string>> hlines_;
};

/// N x M heatmap (e.g. a confusion matrix), linear white-to-color scale.
std::string svg_heatmap(const std::vector<std::vector<double>>& cells, const std::string& title,
                        int cell_px = 18);

}  // namespace mdetect
