#pragma once

#include <span>
#include <string>
#include <vector>

namespace gradvar {

/// Deterministic line-plot builder: fixed 800x500 canvas, elements emitted
/// in call order, every coordinate printed with four decimals, no external
/// resources. Enough for the uncertainty-band and reliability figures.
class SvgFigure {
 public:
  struct LegendEntry {
    std::string label;
    std::string color;
    enum Kind { kLine, kBand, kPoint } kind = kLine;
  };

  SvgFigure() = default;

  /// Adds a panel with its pixel rectangle and data ranges; returns the
  /// panel id. Axis ticks sit at the quarters of each range.
  int add_panel(double px, double py, double pw, double ph, double x_lo,
                double x_hi, double y_lo, double y_hi,
                const std::string& title, const std::string& x_label,
                const std::string& y_label);

  void line(int panel, std::span<const double> xs, std::span<const double> ys,
            const std::string& color, double width = 1.5,
            const std::string& dash = "");
  /// Filled region between two curves sharing the x grid.
  void band(int panel, std::span<const double> xs, std::span<const double> lo,
            std::span<const double> hi, const std::string& color,
            double opacity);
  void points(int panel, std::span<const double> xs,
              std::span<const double> ys, double radius,
              const std::string& color);
  /// Small color-keyed legend in the panel's upper left corner.
  void legend(int panel, const std::vector<LegendEntry>& entries);

  std::string finish() const;

 private:
  struct Panel {
    double px, py, pw, ph;
    double x_lo, x_hi, y_lo, y_hi;
  };

  double map_x(int panel, double x) const;
  double map_y(int panel, double y) const;
  const Panel& at(int panel) const;

  std::vector<Panel> panels_;
  std::string body_;
};

} // namespace gradvar
