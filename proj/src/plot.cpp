#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "pnlk/bench.hpp"
#include "pnlk/error.hpp"

namespace pnlk::bench {

namespace {

constexpr double kWidth = 720, kHeight = 460;
constexpr double kLeft = 80, kRight = 170, kTop = 50, kBottom = 80;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(4) << v;
  return ss.str();
}

struct Axis {
  double lo, hi;
  bool log;
  double px0, px1;  // pixel range

  double map(double v) const {
    const double a = log ? std::log10(lo) : lo;
    const double b = log ? std::log10(hi) : hi;
    const double t = ((log ? std::log10(v) : v) - a) / (b - a);
    return px0 + t * (px1 - px0);
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double d = std::pow(10.0, std::floor(std::log10(lo))); d <= hi * 1.0001; d *= 10) {
        for (double m : {1.0, 2.0, 5.0}) {
          if (d * m >= lo * 0.9999 && d * m <= hi * 1.0001) t.push_back(d * m);
        }
      }
      return t;
    }
    const double span = hi - lo;
    const double raw = span / 5;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) t.push_back(v);
    return t;
  }
};

Axis make_axis(double lo, double hi, bool log, double px0, double px1) {
  if (log) {
    lo = std::pow(10.0, std::floor(std::log10(lo) * 4) / 4);
    hi = std::pow(10.0, std::ceil(std::log10(hi) * 4) / 4);
    if (hi <= lo) hi = lo * 10;
  } else {
    if (hi <= lo) {
      hi = lo + 1;
      lo -= 1;
    }
    const double pad = 0.05 * (hi - lo);
    lo = lo >= 0 && lo - pad < 0 ? 0 : lo - pad;
    hi += pad;
  }
  return {lo, hi, log, px0, px1};
}

void header(std::ostream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">" << esc(title)
    << "</text>\n";
}

void footer(std::ostream& o, const std::string& caption) {
  if (!caption.empty()) {
    o << "<text x=\"" << kLeft << "\" y=\"" << kHeight - 12 << "\" font-size=\"10\" fill=\"#555\">"
      << esc(caption) << "</text>\n";
  }
  o << "</svg>\n";
}

void frame(std::ostream& o, const Axis& x, const Axis& y, const std::string& xl, const std::string& yl,
           bool x_ticks) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  o << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : y.ticks()) {
    const double py = y.map(t);
    o << "<line x1=\"" << x0 << "\" x2=\"" << x1 << "\" y1=\"" << py << "\" y2=\"" << py
      << "\" stroke=\"#ddd\"/>\n<text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
      << num(t) << "</text>\n";
  }
  if (x_ticks) {
    for (double t : x.ticks()) {
      const double px = x.map(t);
      o << "<line x1=\"" << px << "\" x2=\"" << px << "\" y1=\"" << y0 << "\" y2=\"" << y1
        << "\" stroke=\"#eee\"/>\n<text x=\"" << px << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
        << num(t) << "</text>\n";
    }
  }
  o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y0 + 40 << "\" text-anchor=\"middle\">" << esc(xl)
    << "</text>\n<text transform=\"translate(" << 22 << ',' << (y0 + y1) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << esc(yl) << "</text>\n";
}

std::ofstream open_svg(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream o(path);
  if (!o) throw std::runtime_error("cannot write " + path.string());
  return o;
}

}  // namespace

void write_svg(const fs::path& path, const LinePlot& p) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : p.series) {
    if (s.x.size() != s.y.size()) throw InvalidArgument("series x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (p.log_x && s.x[i] <= 0) continue;
      if (p.log_y && s.y[i] <= 0) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  if (!std::isfinite(xlo)) {
    xlo = ylo = p.log_x ? 1 : 0;
    xhi = yhi = p.log_x ? 10 : 1;
  }
  const Axis x = make_axis(xlo, xhi, p.log_x, kLeft, kWidth - kRight);
  const Axis y = make_axis(ylo, yhi, p.log_y, kHeight - kBottom, kTop);

  auto o = open_svg(path);
  header(o, p.title);
  frame(o, x, y, p.x_label, p.y_label, true);
  for (std::size_t si = 0; si < p.series.size(); ++si) {
    const auto& s = p.series[si];
    const char* color = kColors[si % std::size(kColors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if ((p.log_x && s.x[i] <= 0) || (p.log_y && s.y[i] <= 0)) continue;
      o << x.map(s.x[i]) << ',' << y.map(s.y[i]) << ' ';
    }
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if ((p.log_x && s.x[i] <= 0) || (p.log_y && s.y[i] <= 0)) continue;
      o << "<circle cx=\"" << x.map(s.x[i]) << "\" cy=\"" << y.map(s.y[i]) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
    const double ly = kTop + 16 + 20 * static_cast<double>(si);
    const double lx = kWidth - kRight + 12;
    o << "<line x1=\"" << lx << "\" x2=\"" << lx + 22 << "\" y1=\"" << ly << "\" y2=\"" << ly << "\" stroke=\""
      << color << "\" stroke-width=\"2\"/>\n<text x=\"" << lx + 28 << "\" y=\"" << ly + 4 << "\">" << esc(s.name)
      << "</text>\n";
  }
  footer(o, p.caption);
}

void write_svg(const fs::path& path, const BarPlot& p) {
  if (p.labels.size() != p.values.size()) throw InvalidArgument("bar labels and values differ in length");
  double hi = 0;
  for (double v : p.values) {
    if (std::isfinite(v)) hi = std::max(hi, v);
  }
  const Axis y = make_axis(0, hi > 0 ? hi : 1, false, kHeight - kBottom, kTop);
  const Axis x{0, static_cast<double>(std::max<std::size_t>(p.values.size(), 1)), false, kLeft,
               kWidth - kRight};
  auto o = open_svg(path);
  header(o, p.title);
  frame(o, x, y, "", p.y_label, false);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double xa = x.map(static_cast<double>(i) + 0.15), xb = x.map(static_cast<double>(i) + 0.85);
    const double v = std::isfinite(p.values[i]) ? p.values[i] : 0.0;
    const double top = y.map(v), base = y.map(0);
    const bool hl = p.highlight && *p.highlight == i;
    o << "<rect x=\"" << xa << "\" y=\"" << top << "\" width=\"" << xb - xa << "\" height=\"" << base - top
      << "\" fill=\"" << (hl ? "#d62728" : "#1f77b4") << "\"/>\n";
    const double cx = (xa + xb) / 2;
    o << "<text x=\"" << cx << "\" y=\"" << top - 4 << "\" text-anchor=\"middle\" font-size=\"10\">" << num(v)
      << "</text>\n<text transform=\"translate(" << cx << ',' << base + 12
      << ") rotate(35)\" font-size=\"10\">" << esc(p.labels[i]) << "</text>\n";
  }
  footer(o, p.caption);
}

namespace {

// Groups rows by a text column, keeping first-seen order.
std::vector<Series> series_by(const Table& t, const std::string& key, const std::string& xcol,
                              const std::string& ycol, const std::string& prefix = "") {
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string k = t.text(r, key);
    auto it = index.find(k);
    if (it == index.end()) {
      it = index.emplace(k, out.size()).first;
      out.push_back({prefix + k, {}, {}});
    }
    out[it->second].x.push_back(t.number(r, xcol));
    out[it->second].y.push_back(t.number(r, ycol));
  }
  return out;
}

}  // namespace

void plot_sweep_angle(const fs::path& summary_csv, const fs::path& svg) {
  const Table t = read_csv(summary_csv);
  LinePlot p;
  p.title = "Rotation error vs initial angle";
  p.x_label = "initial rotation (deg)";
  p.y_label = "mean rotation error (deg)";
  p.caption = "Means over every (model, trial) run at each angle; per-model means, not per-class.";
  p.series = series_by(t, "method", "angle_deg", "mean_rot_err_deg");
  write_svg(svg, p);
}

void plot_scaling(const fs::path& summary_csv, const fs::path& svg) {
  const Table t = read_csv(summary_csv);
  LinePlot p;
  p.title = "Registration time vs point count";
  p.x_label = "points N";
  p.y_label = "wall time (s)";
  p.log_x = p.log_y = true;
  p.caption = t.rows.empty() ? "" : "Aggregate over repetitions: " + t.text(0, "aggregate") + "; fixed iteration count.";
  p.series = series_by(t, "method", "n", "seconds");
  write_svg(svg, p);
}

void plot_profile(const fs::path& profile_csv, const fs::path& svg) {
  const Table t = read_csv(profile_csv);
  BarPlot p;
  p.y_label = "share of wall time (%)";
  if (!t.rows.empty()) p.title = "Phase breakdown: " + t.text(0, "method") + ", N=" + t.text(0, "n");
  std::size_t best = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    p.labels.push_back(t.text(r, "phase"));
    p.values.push_back(t.number(r, "share_pct"));
    if (p.values[r] > p.values[best]) best = r;
  }
  if (!t.rows.empty()) p.highlight = best;
  write_svg(svg, p);
}

void plot_quant_eval(const fs::path& summary_csv, const fs::path& svg) {
  const Table t = read_csv(summary_csv);
  LinePlot p;
  p.title = "Registration error vs fixed-point width";
  p.x_label = "n (word = 2n bits)";
  p.y_label = "mean rotation error (deg)";
  p.caption = "Same pairs and seeds for every format.";
  p.series = series_by(t, "angle_deg", "q_n", "mean_rot_err_deg", "angle ");
  write_svg(svg, p);
}

void plot_accel(const fs::path& modules_csv, const fs::path& svg) {
  const Table t = read_csv(modules_csv);
  BarPlot p;
  p.title = "Per-module latency (calibrated)";
  p.y_label = "latency (us)";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.text(r, "model") != "calibrated") continue;
    if (t.text(r, "bottleneck") == "1") p.highlight = p.values.size();
    p.labels.push_back(t.text(r, "module") + " B=" + t.text(r, "b"));
    p.values.push_back(t.number(r, "latency_us"));
  }
  p.caption = "Red: pipeline bottleneck (sets the per-point interval).";
  write_svg(svg, p);
}

}  // namespace pnlk::bench
