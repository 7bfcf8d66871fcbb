#include "ltmx/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ltmx/error.hpp"

namespace ltmx {

namespace {

constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 60;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

struct Canvas {
  std::ostringstream svg;
  double y_max = 1.0;

  double plot_w() const { return kWidth - kLeft - kRight; }
  double plot_h() const { return kHeight - kTop - kBottom; }
  double y(double v) const { return kTop + plot_h() * (1.0 - std::clamp(v / y_max, 0.0, 1.0)); }

  void begin(const std::string& title) {
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
        << "</text>\n";
  }
  void axes(const std::string& y_label) {
    for (int t = 0; t <= 4; ++t) {
      const double v = y_max * t / 4.0;
      svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w() << "\" y1=\"" << num(y(v)) << "\" y2=\""
          << num(y(v)) << "\" stroke=\"#ddd\"/>\n"
          << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(y(v) + 4) << "\" text-anchor=\"end\">" << num(v)
          << "</text>\n";
    }
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft << "\" y1=\"" << kTop << "\" y2=\"" << kTop + plot_h()
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w() << "\" y1=\"" << kTop + plot_h() << "\" y2=\""
        << kTop + plot_h() << "\" stroke=\"black\"/>\n";
    if (!y_label.empty()) {
      svg << "<text transform=\"translate(16," << kTop + plot_h() / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
          << escape(y_label) << "</text>\n";
    }
  }
  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
      svg << "<rect x=\"" << kWidth - kRight + 16 << "\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
          << kPalette[i % std::size(kPalette)] << "\"/>\n"
          << "<text x=\"" << kWidth - kRight + 34 << "\" y=\"" << ly << "\">" << escape(names[i]) << "</text>\n";
    }
  }
  void x_label(double x, const std::string& label) {
    svg << "<text x=\"" << num(x) << "\" y=\"" << kTop + plot_h() + 20 << "\" text-anchor=\"middle\">"
        << escape(label) << "</text>\n";
  }
  void save(const std::string& path) {
    svg << "</svg>\n";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write plot " + path);
    out << svg.str();
  }
};

}  // namespace

void write_bar_chart(const std::string& path, const std::string& title, const std::vector<std::string>& series,
                     const std::vector<BarGroup>& groups, double y_max) {
  Canvas c;
  c.y_max = y_max > 0.0 ? y_max : 1.0;
  c.begin(title);
  c.axes("");
  const double slot = c.plot_w() / static_cast<double>(std::max<std::size_t>(1, groups.size()));
  const double bar = slot * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double x0 = kLeft + slot * static_cast<double>(g) + slot * 0.1;
    for (std::size_t s = 0; s < groups[g].values.size(); ++s) {
      const double v = groups[g].values[s];
      const double top = c.y(v);
      c.svg << "<rect x=\"" << num(x0 + bar * static_cast<double>(s)) << "\" y=\"" << num(top) << "\" width=\""
            << num(bar * 0.9) << "\" height=\"" << num(kTop + c.plot_h() - top) << "\" fill=\""
            << kPalette[s % std::size(kPalette)] << "\"><title>" << num(v) << "</title></rect>\n";
    }
    c.x_label(x0 + slot * 0.4, groups[g].label);
  }
  c.legend(series);
  c.save(path);
}

void write_line_chart(const std::string& path, const std::string& title, const std::vector<std::string>& x_labels,
                      const std::vector<LineSeries>& series, const std::string& y_label) {
  Canvas c;
  double mx = 0.0;
  for (const auto& s : series) {
    for (double v : s.y) mx = std::max(mx, v);
  }
  c.y_max = mx > 1.0 ? std::ceil(mx) : 1.0;
  c.begin(title);
  c.axes(y_label);
  const std::size_t n = x_labels.size();
  auto x = [&](std::size_t i) {
    return n <= 1 ? kLeft + c.plot_w() / 2 : kLeft + 20 + (c.plot_w() - 40) * static_cast<double>(i) / (n - 1);
  };
  for (std::size_t i = 0; i < n; ++i) c.x_label(x(i), x_labels[i]);
  std::vector<std::string> names;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = kPalette[s % std::size(kPalette)];
    names.push_back(series[s].name);
    c.svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size() && i < n; ++i) c.svg << num(x(i)) << ',' << num(c.y(series[s].y[i])) << ' ';
    c.svg << "\"/>\n";
    for (std::size_t i = 0; i < series[s].y.size() && i < n; ++i) {
      c.svg << "<circle cx=\"" << num(x(i)) << "\" cy=\"" << num(c.y(series[s].y[i])) << "\" r=\"3\" fill=\"" << colour
            << "\"/>\n";
    }
  }
  c.legend(names);
  c.save(path);
}

}  // namespace ltmx
