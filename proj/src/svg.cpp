#include "gradvar/svg.hpp"

#include <stdexcept>

#include "gradvar/io_util.hpp"

namespace gradvar {
namespace {

std::string tick_label(double v) {
  // Trim trailing zeros off a fixed two-decimal label so ticks stay short.
  std::string s = fmt_f4(v);
  s.erase(s.size() - 2); // four decimals down to two
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

} // namespace

int SvgFigure::add_panel(double px, double py, double pw, double ph,
                         double x_lo, double x_hi, double y_lo, double y_hi,
                         const std::string& title, const std::string& x_label,
                         const std::string& y_label) {
  if (!(x_hi > x_lo) || !(y_hi > y_lo))
    throw std::invalid_argument("panel data ranges must be non-empty");
  panels_.push_back(Panel{px, py, pw, ph, x_lo, x_hi, y_lo, y_hi});
  const int id = static_cast<int>(panels_.size()) - 1;

  body_ += "<clipPath id=\"clip" + std::to_string(id) + "\"><rect x=\"" +
           fmt_f4(px) + "\" y=\"" + fmt_f4(py) + "\" width=\"" + fmt_f4(pw) +
           "\" height=\"" + fmt_f4(ph) + "\"/></clipPath>\n";
  body_ += "<rect x=\"" + fmt_f4(px) + "\" y=\"" + fmt_f4(py) + "\" width=\"" +
           fmt_f4(pw) + "\" height=\"" + fmt_f4(ph) +
           "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  body_ += "<text x=\"" + fmt_f4(px + pw / 2) + "\" y=\"" + fmt_f4(py - 8) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" +
           title + "</text>\n";
  body_ += "<text x=\"" + fmt_f4(px + pw / 2) + "\" y=\"" +
           fmt_f4(py + ph + 32) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" +
           x_label + "</text>\n";
  body_ += "<text x=\"" + fmt_f4(px - 38) + "\" y=\"" + fmt_f4(py + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\" transform=\"rotate(-90 " +
           fmt_f4(px - 38) + " " + fmt_f4(py + ph / 2) + ")\">" + y_label +
           "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    const double sx = map_x(id, fx);
    body_ += "<line x1=\"" + fmt_f4(sx) + "\" y1=\"" + fmt_f4(py + ph) +
             "\" x2=\"" + fmt_f4(sx) + "\" y2=\"" + fmt_f4(py + ph + 4) +
             "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    body_ += "<text x=\"" + fmt_f4(sx) + "\" y=\"" + fmt_f4(py + ph + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"10\">" +
             tick_label(fx) + "</text>\n";
    const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    const double sy = map_y(id, fy);
    body_ += "<line x1=\"" + fmt_f4(px - 4) + "\" y1=\"" + fmt_f4(sy) +
             "\" x2=\"" + fmt_f4(px) + "\" y2=\"" + fmt_f4(sy) +
             "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    body_ += "<text x=\"" + fmt_f4(px - 7) + "\" y=\"" + fmt_f4(sy + 3) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"10\">" +
             tick_label(fy) + "</text>\n";
  }
  return id;
}

double SvgFigure::map_x(int panel, double x) const {
  const Panel& p = at(panel);
  return p.px + (x - p.x_lo) / (p.x_hi - p.x_lo) * p.pw;
}

double SvgFigure::map_y(int panel, double y) const {
  const Panel& p = at(panel);
  return p.py + p.ph - (y - p.y_lo) / (p.y_hi - p.y_lo) * p.ph;
}

const SvgFigure::Panel& SvgFigure::at(int panel) const {
  if (panel < 0 || panel >= static_cast<int>(panels_.size()))
    throw std::invalid_argument("unknown panel id");
  return panels_[static_cast<std::size_t>(panel)];
}

void SvgFigure::line(int panel, std::span<const double> xs,
                     std::span<const double> ys, const std::string& color,
                     double width, const std::string& dash) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("polyline needs matching xs/ys of length 2+");
  std::string d = "M";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) d += " L";
    d += fmt_f4(map_x(panel, xs[i])) + " " + fmt_f4(map_y(panel, ys[i]));
  }
  body_ += "<path clip-path=\"url(#clip" + std::to_string(panel) +
           ")\" d=\"" + d + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"" + fmt_f4(width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
  body_ += "/>\n";
}

void SvgFigure::band(int panel, std::span<const double> xs,
                     std::span<const double> lo, std::span<const double> hi,
                     const std::string& color, double opacity) {
  if (xs.size() != lo.size() || xs.size() != hi.size() || xs.size() < 2)
    throw std::invalid_argument("band needs matching xs/lo/hi of length 2+");
  std::string d = "M";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) d += " L";
    d += fmt_f4(map_x(panel, xs[i])) + " " + fmt_f4(map_y(panel, hi[i]));
  }
  for (std::size_t i = xs.size(); i-- > 0;)
    d += " L" + fmt_f4(map_x(panel, xs[i])) + " " +
         fmt_f4(map_y(panel, lo[i]));
  d += " Z";
  body_ += "<path clip-path=\"url(#clip" + std::to_string(panel) +
           ")\" d=\"" + d + "\" fill=\"" + color + "\" fill-opacity=\"" +
           fmt_f4(opacity) + "\" stroke=\"none\"/>\n";
}

void SvgFigure::points(int panel, std::span<const double> xs,
                       std::span<const double> ys, double radius,
                       const std::string& color) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("points need matching xs/ys");
  for (std::size_t i = 0; i < xs.size(); ++i)
    body_ += "<circle clip-path=\"url(#clip" + std::to_string(panel) +
             ")\" cx=\"" + fmt_f4(map_x(panel, xs[i])) + "\" cy=\"" +
             fmt_f4(map_y(panel, ys[i])) + "\" r=\"" + fmt_f4(radius) +
             "\" fill=\"" + color + "\"/>\n";
}

void SvgFigure::legend(int panel, const std::vector<LegendEntry>& entries) {
  const Panel& p = at(panel);
  double y = p.py + 14;
  const double x = p.px + 8;
  for (const LegendEntry& e : entries) {
    if (e.kind == LegendEntry::kPoint) {
      body_ += "<circle cx=\"" + fmt_f4(x + 9) + "\" cy=\"" + fmt_f4(y - 3) +
               "\" r=\"3\" fill=\"" + e.color + "\"/>\n";
    } else if (e.kind == LegendEntry::kBand) {
      body_ += "<rect x=\"" + fmt_f4(x) + "\" y=\"" + fmt_f4(y - 8) +
               "\" width=\"18\" height=\"9\" fill=\"" + e.color +
               "\" fill-opacity=\"0.4\"/>\n";
    } else {
      body_ += "<line x1=\"" + fmt_f4(x) + "\" y1=\"" + fmt_f4(y - 3) +
               "\" x2=\"" + fmt_f4(x + 18) + "\" y2=\"" + fmt_f4(y - 3) +
               "\" stroke=\"" + e.color + "\" stroke-width=\"2\"/>\n";
    }
    body_ += "<text x=\"" + fmt_f4(x + 24) + "\" y=\"" + fmt_f4(y) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + e.label +
             "</text>\n";
    y += 15;
  }
}

std::string SvgFigure::finish() const {
  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
      "width=\"800\" height=\"500\">\n"
      "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" "
      "fill=\"#ffffff\"/>\n";
  out += body_;
  out += "</svg>\n";
  return out;
}

} // namespace gradvar
