#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridflex/errors.hpp"

namespace gridflex {

// Just enough SVG to ship line charts and box plots without a plotting
// dependency.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label,
          int width = 900, int height = 420)
      : title_(std::move(title)),
        x_label_(std::move(x_label)),
        y_label_(std::move(y_label)),
        w_(width),
        h_(height) {}

  void add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& label) {
    Series s;
    s.xs = xs;
    s.ys = ys;
    s.label = label;
    s.color = kPalette[series_.size() % kPalette.size()];
    series_.push_back(std::move(s));
  }

  // Horizontal reference line (e.g. a 100 % limit).
  void add_hline(double y, const std::string& label) {
    hlines_.push_back({y, label});
  }

  struct BoxStats {
    double lo = 0, q1 = 0, med = 0, q3 = 0, hi = 0;
    std::string label;
  };

  void add_box(const BoxStats& b) { boxes_.push_back(b); }

  void write(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << render();
    if (!os) throw IoError("write failed: " + path.string());
  }

  std::string render() const {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool have = false;
    auto grow = [&](double x, double y) {
      if (!std::isfinite(x) || !std::isfinite(y)) return;
      if (!have) {
        xmin = xmax = x;
        ymin = ymax = y;
        have = true;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    };
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.xs.size(); ++i) grow(s.xs[i], s.ys[i]);
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      grow(static_cast<double>(i), boxes_[i].lo);
      grow(static_cast<double>(i), boxes_[i].hi);
    }
    for (const auto& hl : hlines_) grow(xmin, hl.first);
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.06 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    if (!boxes_.empty()) {
      xmin = -0.7;
      xmax = static_cast<double>(boxes_.size()) - 0.3;
    }

    const double ml = 70, mr = 160, mt = 40, mb = 55;
    const double pw = w_ - ml - mr, ph = h_ - mt - mb;
    auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto Y = [&](double y) {
      return mt + ph - (y - ymin) / (ymax - ymin) * ph;
    };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w_
       << "' height='" << h_ << "' viewBox='0 0 " << w_ << ' ' << h_
       << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << w_ / 2 << "' y='22' text-anchor='middle' "
       << "font-family='sans-serif' font-size='15'>" << title_
       << "</text>\n";

    // axes + ticks
    os << "<rect x='" << ml << "' y='" << mt << "' width='" << pw
       << "' height='" << ph << "' fill='none' stroke='#444'/>\n";
    for (int t = 0; t <= 5; ++t) {
      const double fy = ymin + (ymax - ymin) * t / 5.0;
      os << "<line x1='" << ml << "' y1='" << Y(fy) << "' x2='" << ml + pw
         << "' y2='" << Y(fy) << "' stroke='#ddd'/>\n";
      os << "<text x='" << ml - 8 << "' y='" << Y(fy) + 4
         << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
         << short_num(fy) << "</text>\n";
      if (boxes_.empty()) {
        const double fx = xmin + (xmax - xmin) * t / 5.0;
        os << "<text x='" << X(fx) << "' y='" << mt + ph + 18
           << "' text-anchor='middle' font-family='sans-serif' "
              "font-size='11'>"
           << short_num(fx) << "</text>\n";
      }
    }
    os << "<text x='" << ml + pw / 2 << "' y='" << h_ - 12
       << "' text-anchor='middle' font-family='sans-serif' font-size='12'>"
       << x_label_ << "</text>\n";
    os << "<text x='16' y='" << mt + ph / 2
       << "' text-anchor='middle' font-family='sans-serif' font-size='12' "
       << "transform='rotate(-90 16 " << mt + ph / 2 << ")'>" << y_label_
       << "</text>\n";

    for (const auto& hl : hlines_) {
      os << "<line x1='" << ml << "' y1='" << Y(hl.first) << "' x2='"
         << ml + pw << "' y2='" << Y(hl.first)
         << "' stroke='#c0392b' stroke-dasharray='6,4'/>\n";
      os << "<text x='" << ml + pw - 4 << "' y='" << Y(hl.first) - 4
         << "' text-anchor='end' font-family='sans-serif' font-size='11' "
         << "fill='#c0392b'>" << hl.second << "</text>\n";
    }

    for (std::size_t si = 0; si < series_.size(); ++si) {
      const auto& s = series_[si];
      os << "<polyline fill='none' stroke='" << s.color
         << "' stroke-width='1.3' points='";
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.ys[i])) continue;
        os << X(s.xs[i]) << ',' << Y(s.ys[i]) << ' ';
      }
      os << "'/>\n";
      const double ly = mt + 16 + 16 * static_cast<double>(si);
      os << "<line x1='" << ml + pw + 10 << "' y1='" << ly << "' x2='"
         << ml + pw + 30 << "' y2='" << ly << "' stroke='" << s.color
         << "' stroke-width='2'/>\n";
      os << "<text x='" << ml + pw + 35 << "' y='" << ly + 4
         << "' font-family='sans-serif' font-size='11'>" << s.label
         << "</text>\n";
    }

    for (std::size_t bi = 0; bi < boxes_.size(); ++bi) {
      const auto& b = boxes_[bi];
      const double cx = X(static_cast<double>(bi));
      const double half = 0.28 * pw / std::max<std::size_t>(boxes_.size(), 1);
      const char* color = kPalette[bi % kPalette.size()];
      os << "<line x1='" << cx << "' y1='" << Y(b.lo) << "' x2='" << cx
         << "' y2='" << Y(b.hi) << "' stroke='" << color << "'/>\n";
      for (double w : {b.lo, b.hi})
        os << "<line x1='" << cx - half / 2 << "' y1='" << Y(w) << "' x2='"
           << cx + half / 2 << "' y2='" << Y(w) << "' stroke='" << color
           << "'/>\n";
      os << "<rect x='" << cx - half << "' y='" << Y(b.q3) << "' width='"
         << 2 * half << "' height='" << Y(b.q1) - Y(b.q3) << "' fill='"
         << color << "' fill-opacity='0.25' stroke='" << color << "'/>\n";
      os << "<line x1='" << cx - half << "' y1='" << Y(b.med) << "' x2='"
         << cx + half << "' y2='" << Y(b.med) << "' stroke='" << color
         << "' stroke-width='2'/>\n";
      os << "<text x='" << cx << "' y='" << mt + ph + 18
         << "' text-anchor='middle' font-family='sans-serif' font-size='11'>"
         << b.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
  }

 private:
  static std::string short_num(double v) {
    char buf[32];
    if (std::abs(v) >= 1000 || (std::abs(v) < 0.01 && v != 0))
      std::snprintf(buf, sizeof(buf), "%.2e", v);
    else
      std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
  }

  struct Series {
    std::vector<double> xs, ys;
    std::string label;
    const char* color;
  };

  static constexpr std::array<const char*, 6> kPalette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

  std::string title_, x_label_, y_label_;
  int w_, h_;
  std::vector<Series> series_;
  std::vector<std::pair<double, std::string>> hlines_;
  std::vector<BoxStats> boxes_;
};

}  // namespace gridflex
