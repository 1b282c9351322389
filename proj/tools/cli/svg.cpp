#include "svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "headneck/types.hpp"

namespace headneck::cli::svg {

namespace {

constexpr double kWidth = 720.0;
constexpr double kPanelHeight = 220.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;  // legend column
constexpr double kTop = 40.0;
constexpr double kGap = 50.0;

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h, const std::string& title, const std::string& hash) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
                  "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<!-- config_hash=" + escape(hash) + " -->\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
  return s;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      const double pad = std::max(1e-9, 0.5 * std::abs(hi));
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

std::string line_chart(const std::vector<Panel>& panels, const std::string& title, const std::string& config_hash) {
  const double height = kTop + static_cast<double>(panels.size()) * (kPanelHeight + kGap);
  std::string s = header(kWidth, height, title, config_hash);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kPanelHeight - 30.0;

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double top = kTop + static_cast<double>(p) * (kPanelHeight + kGap) + 10.0;
    auto fx = [&](double x) { return panel.log_x ? std::log10(std::max(x, 1e-300)) : x; };
    Range rx, ry;
    for (const auto& ser : panel.series) {
      for (double x : ser.x) {
        if (!panel.log_x || x > 0.0) rx.add(fx(x));
      }
      for (double y : ser.y) ry.add(y);
    }
    rx.finish();
    ry.finish();
    auto px = [&](double x) { return kLeft + (fx(x) - rx.lo) / (rx.hi - rx.lo) * plot_w; };
    auto py = [&](double y) { return top + plot_h - (y - ry.lo) / (ry.hi - ry.lo) * plot_h; };

    s += "<g>\n<text x=\"" + num(kLeft) + "\" y=\"" + num(top - 4) + "\" font-size=\"12\">" + escape(panel.title) +
         "</text>\n";
    s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(top) + "\" width=\"" + num(plot_w) + "\" height=\"" +
         num(plot_h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double fxk = rx.lo + (rx.hi - rx.lo) * k / 4.0;
      const double yk = ry.lo + (ry.hi - ry.lo) * k / 4.0;
      const double gx = kLeft + plot_w * k / 4.0;
      const double gy = top + plot_h - plot_h * k / 4.0;
      s += "<line x1=\"" + num(gx) + "\" y1=\"" + num(top) + "\" x2=\"" + num(gx) + "\" y2=\"" + num(top + plot_h) +
           "\" stroke=\"#ddd\"/>\n";
      s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(gy) + "\" x2=\"" + num(kLeft + plot_w) + "\" y2=\"" +
           num(gy) + "\" stroke=\"#ddd\"/>\n";
      s += "<text x=\"" + num(gx) + "\" y=\"" + num(top + plot_h + 14) + "\" text-anchor=\"middle\">" +
           tick(panel.log_x ? std::pow(10.0, fxk) : fxk) + "</text>\n";
      s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(gy + 4) + "\" text-anchor=\"end\">" + tick(yk) +
           "</text>\n";
    }
    s += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(top + plot_h + 28) + "\" text-anchor=\"middle\">" +
         escape(panel.xlabel) + "</text>\n";
    s += "<text transform=\"translate(" + num(16) + "," + num(top + plot_h / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(panel.ylabel) + "</text>\n";

    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const Series& ser = panel.series[k];
      const char* color = kPalette[k % kPalette.size()];
      std::string pts;
      const std::size_t n = std::min(ser.x.size(), ser.y.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(ser.y[i]) || (panel.log_x && ser.x[i] <= 0.0)) continue;
        pts += num(px(ser.x[i])) + "," + num(py(ser.y[i])) + " ";
      }
      s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.2\" points=\"" + pts +
           "\"/>\n";
      const double ly = top + 12.0 + 16.0 * static_cast<double>(k);
      s += "<line x1=\"" + num(kWidth - kRight + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(kWidth - kRight + 30) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + num(kWidth - kRight + 36) + "\" y=\"" + num(ly) + "\">" + escape(ser.label) + "</text>\n";
    }
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string heatmap(const std::vector<std::string>& rows, const std::vector<std::string>& columns,
                    const Eigen::MatrixXd& values, const std::vector<bool>& flagged, const std::string& title,
                    const std::string& config_hash) {
  if (values.rows() != static_cast<Eigen::Index>(rows.size()) ||
      values.cols() != static_cast<Eigen::Index>(columns.size())) {
    throw InvalidArgument("heatmap: labels do not match the matrix shape");
  }
  constexpr double cell = 44.0, left = 110.0, top = 60.0;
  const double w = left + cell * static_cast<double>(columns.size()) + 20.0;
  const double h = top + cell * static_cast<double>(rows.size()) + 20.0;
  std::string s = header(w, h, title, config_hash);
  s += "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">"
       "<path d=\"M0,6 L6,0\" stroke=\"#aaa\"/></pattern></defs>\n";
  const double vmax = values.size() ? std::max(values.maxCoeff(), 1e-300) : 1.0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    s += "<text x=\"" + num(left + cell * (static_cast<double>(c) + 0.5)) + "\" y=\"" + num(top - 8) +
         "\" text-anchor=\"middle\">" + escape(columns[c]) + "</text>\n";
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(y + cell / 2 + 4) + "\" text-anchor=\"end\">" +
         escape(rows[r]) + "</text>\n";
    const bool flag = r < flagged.size() && flagged[r];
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const double x = left + cell * static_cast<double>(c);
      const double v = values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      std::string fill = "url(#hatch)";
      if (!flag) {
        // White to dark blue.
        const double a = std::clamp(v / vmax, 0.0, 1.0);
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(255 - 224 * a),
                      static_cast<int>(255 - 185 * a), static_cast<int>(255 - 75 * a));
        fill = buf;
      }
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" + num(cell) +
           "\" fill=\"" + fill + "\" stroke=\"white\"/>\n";
      if (!flag) {
        s += "<text x=\"" + num(x + cell / 2) + "\" y=\"" + num(y + cell / 2 + 4) + "\" text-anchor=\"middle\"" +
             (v / vmax > 0.6 ? " fill=\"white\"" : "") + ">" + tick(v) + "</text>\n";
      }
    }
  }
  s += "</svg>\n";
  return s;
}

void write(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << svg;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace headneck::cli::svg
