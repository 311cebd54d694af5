#include "groklab/plot.hpp"

#include "groklab/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

namespace groklab {

std::string to_string(PlotKind k) {
  switch (k) {
    case PlotKind::curves: return "curves";
    case PlotKind::heatmap: return "heatmap";
    case PlotKind::trajectory: return "trajectory";
  }
  return "?";
}

PlotKind parse_plot_kind(const std::string& s) {
  if (s == "curves") return PlotKind::curves;
  if (s == "heatmap") return PlotKind::heatmap;
  if (s == "trajectory") return PlotKind::trajectory;
  throw DomainError("unknown plot kind '" + s + "'");
}

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 70, kTop = 40, kBottom = 60;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

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

std::string header() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle",
                 double rotate = 0) {
  std::string out = "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"";
  if (rotate != 0) out += " transform=\"rotate(" + num(rotate) + " " + num(x) + " " + num(y) + ")\"";
  return out + ">" + escape(s) + "</text>\n";
}

std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::string out = "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" +
                    num(kPlotW) + "\" height=\"" + num(kPlotH) +
                    "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!title.empty()) out += text(kWidth / 2, kTop - 15, title);
  out += text(kLeft + kPlotW / 2, kHeight - 15, xlabel);
  out += text(18, kTop + kPlotH / 2, ylabel, "middle", -90);
  return out;
}

// Maps [lo, hi] (optionally log10) to pixel range [a, b].
struct Scale {
  double lo, hi, a, b;
  bool log;
  double operator()(double v) const {
    const double x = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return h == l ? (a + b) / 2 : a + (x - l) / (h - l) * (b - a);
  }
};

std::string x_ticks(const Scale& s) {
  std::string out;
  if (s.log) {
    for (int e = static_cast<int>(std::ceil(std::log10(s.lo)));
         e <= static_cast<int>(std::floor(std::log10(s.hi))); ++e) {
      const double x = s(std::pow(10.0, e));
      out += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + kPlotH) + "\" x2=\"" + num(x) +
             "\" y2=\"" + num(kTop + kPlotH + 5) + "\" stroke=\"black\"/>\n";
      out += text(x, kTop + kPlotH + 18, "1e" + std::to_string(e));
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double v = s.lo + (s.hi - s.lo) * k / 4;
      out += text(s(v), kTop + kPlotH + 18, label_num(v));
    }
  }
  return out;
}

std::string y_ticks(const Scale& s, double x, const char* anchor) {
  std::string out;
  for (int k = 0; k <= 4; ++k) {
    const double v = s.log ? std::pow(10.0, std::log10(s.lo) + (std::log10(s.hi) - std::log10(s.lo)) * k / 4)
                           : s.lo + (s.hi - s.lo) * k / 4;
    out += text(x, s(v) + 4, label_num(v), anchor);
  }
  return out;
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& cls,
                     const std::string& color, bool dashed = false) {
  std::string out = "<polyline class=\"" + cls + "\" fill=\"none\" stroke=\"" + color +
                    "\" stroke-width=\"1.5\"";
  if (dashed) out += " stroke-dasharray=\"5,3\"";
  out += " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out += ' ';
    out += num(pts[i].first) + "," + num(pts[i].second);
  }
  return out + "\"/>\n";
}

std::string legend(const std::vector<std::pair<std::string, std::string>>& items) {
  std::string out;
  double y = kTop + 15;
  for (const auto& [name, color] : items) {
    out += "<line x1=\"" + num(kLeft + 10) + "\" y1=\"" + num(y - 4) + "\" x2=\"" + num(kLeft + 30) +
           "\" y2=\"" + num(y - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += text(kLeft + 35, y, name, "start");
    y += 16;
  }
  return out;
}

// Viridis-like ramp, t in [0, 1].
std::string color_ramp(double t) {
  static const std::array<std::array<double, 3>, 5> stops = {{{68, 1, 84},
                                                               {59, 82, 139},
                                                               {33, 145, 140},
                                                               {94, 201, 98},
                                                               {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - i;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

const Matrix& grid_field(const LandscapeGrid& g, const std::string& field) {
  if (field == "train_loss") return g.train_loss;
  if (field == "test_loss") return g.test_loss;
  if (field == "train_err") return g.train_err;
  if (field == "test_err") return g.test_err;
  throw DomainError("unknown grid field '" + field + "'");
}

// Cell centers sit at index positions; continuous coordinates map through
// the axis by piecewise-linear interpolation of the index.
double fractional_index(const std::vector<double>& axis, double v) {
  if (axis.size() == 1) return 0.0;
  if (v <= axis.front()) return 0.0;
  if (v >= axis.back()) return static_cast<double>(axis.size() - 1);
  const auto it = std::upper_bound(axis.begin(), axis.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
  return i + (v - axis[i]) / (axis[i + 1] - axis[i]);
}

struct GridLayout {
  Eigen::Index rows, cols;
  double cw, ch;
  double x(double col) const { return kLeft + (col + 0.5) * cw; }
  double y(double row) const { return kTop + kPlotH - (row + 0.5) * ch; }
};

std::string heatmap_body(const LandscapeGrid& grid, const HeatmapOptions& opt, GridLayout& lay) {
  grid.validate();
  if (grid.rows() == 0 || grid.cols() == 0) throw DomainError("cannot plot an empty grid");
  const Matrix& v = grid_field(grid, opt.field);
  lay = {grid.rows(), grid.cols(), kPlotW / grid.cols(), kPlotH / grid.rows()};

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double x = v(i, j);
      if (grid.failed(i, j) || !std::isfinite(x) || (opt.log_color && !(x > 0.0))) continue;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  const bool any = std::isfinite(lo);
  auto position = [&](double x) {
    if (!any || hi == lo) return 0.5;
    return opt.log_color ? (std::log10(x) - std::log10(lo)) / (std::log10(hi) - std::log10(lo))
                         : (x - lo) / (hi - lo);
  };

  std::string out;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double x = v(i, j);
      const bool ok = !grid.failed(i, j) && std::isfinite(x) && (!opt.log_color || x > 0.0);
      out += "<rect class=\"cell\" x=\"" + num(kLeft + j * lay.cw) + "\" y=\"" +
             num(kTop + kPlotH - (i + 1) * lay.ch) + "\" width=\"" + num(lay.cw) + "\" height=\"" +
             num(lay.ch) + "\" fill=\"" + (ok ? color_ramp(position(x)) : std::string("#bbbbbb")) +
             "\"><title>" + label_num(x) + "</title></rect>\n";
    }
  }

  if (opt.contour_level) {
    // Marching squares over cell centers.
    const double level = *opt.contour_level;
    for (Eigen::Index i = 0; i + 1 < v.rows(); ++i) {
      for (Eigen::Index j = 0; j + 1 < v.cols(); ++j) {
        const double c[4] = {v(i, j) - level, v(i, j + 1) - level, v(i + 1, j + 1) - level,
                             v(i + 1, j) - level};
        const double px[4] = {0, 1, 1, 0}, py[4] = {0, 0, 1, 1};
        std::vector<std::pair<double, double>> hits;
        for (int e = 0; e < 4; ++e) {
          const int f = (e + 1) % 4;
          if (!std::isfinite(c[e]) || !std::isfinite(c[f])) continue;
          if ((c[e] < 0) != (c[f] < 0)) {
            const double s = c[e] / (c[e] - c[f]);
            hits.emplace_back(j + px[e] + s * (px[f] - px[e]), i + py[e] + s * (py[f] - py[e]));
          }
        }
        for (std::size_t k = 0; k + 1 < hits.size(); k += 2) {
          out += "<line class=\"contour\" x1=\"" + num(lay.x(hits[k].first)) + "\" y1=\"" +
                 num(lay.y(hits[k].second)) + "\" x2=\"" + num(lay.x(hits[k + 1].first)) +
                 "\" y2=\"" + num(lay.y(hits[k + 1].second)) +
                 "\" stroke=\"#ff8800\" stroke-width=\"2\" stroke-dasharray=\"4,2\"/>\n";
        }
      }
    }
  }

  // Axis labels at a few nodes.
  const Eigen::Index xs = std::max<Eigen::Index>(1, grid.cols() / 5);
  for (Eigen::Index j = 0; j < grid.cols(); j += xs) {
    out += text(lay.x(j), kTop + kPlotH + 18, label_num(grid.second_axis[j]));
  }
  const Eigen::Index ys = std::max<Eigen::Index>(1, grid.rows() / 6);
  for (Eigen::Index i = 0; i < grid.rows(); i += ys) {
    out += text(kLeft - 6, lay.y(i) + 4, label_num(grid.w_axis[i]), "end");
  }
  if (any) {
    out += text(kLeft + kPlotW + 8, kTop + 10, label_num(hi), "start");
    out += text(kLeft + kPlotW + 8, kTop + kPlotH, label_num(lo), "start");
  }
  const std::string xlabel = grid.kind == SecondAxis::messiness ? "messiness m" : "data size N";
  out += frame(opt.title.empty() ? opt.field : opt.title, xlabel, "weight norm w");
  return out;
}

}  // namespace

std::string render_curves_svg(const RunRecords& records, const CurvesOptions& opt) {
  if (records.rows.empty()) throw DomainError("cannot plot empty records");
  double smax = 1;
  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
  double nlo = ylo, nhi = -ylo;
  for (const auto& r : records.rows) {
    smax = std::max(smax, static_cast<double>(r.step));
    for (double v : opt.accuracy ? std::array<double, 2>{r.train_acc, r.test_acc}
                                 : std::array<double, 2>{r.train_loss, r.test_loss}) {
      if (std::isfinite(v) && (opt.accuracy || v > 0)) {
        ylo = std::min(ylo, v);
        yhi = std::max(yhi, v);
      }
    }
    if (std::isfinite(r.weight_norm)) {
      nlo = std::min(nlo, r.weight_norm);
      nhi = std::max(nhi, r.weight_norm);
    }
  }
  if (opt.accuracy) {
    ylo = 0;
    yhi = 1;
  } else if (!std::isfinite(ylo)) {
    ylo = 1e-3;
    yhi = 1;
  }
  if (yhi == ylo) yhi = ylo * 10;
  const Scale xs{1, std::max(smax, 10.0), kLeft, kLeft + kPlotW, true};
  const Scale ys{ylo, yhi, kTop + kPlotH, kTop, !opt.accuracy};
  auto series = [&](auto get) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : records.rows) {
      const double v = get(r);
      if (!std::isfinite(v) || (ys.log && !(v > 0))) continue;
      pts.emplace_back(xs(std::max<double>(1, r.step)), ys(v));
    }
    return pts;
  };

  std::string out = header();
  out += frame(opt.title, "step", opt.accuracy ? "accuracy" : "loss");
  out += x_ticks(xs);
  out += y_ticks(ys, kLeft - 6, "end");
  if (opt.accuracy) {
    out += polyline(series([](const RunRow& r) { return r.train_acc; }), "train", "#1f77b4");
    out += polyline(series([](const RunRow& r) { return r.test_acc; }), "test", "#d62728");
  } else {
    out += polyline(series([](const RunRow& r) { return r.train_loss; }), "train", "#1f77b4");
    out += polyline(series([](const RunRow& r) { return r.test_loss; }), "test", "#d62728");
  }
  std::vector<std::pair<std::string, std::string>> items = {{"train", "#1f77b4"}, {"test", "#d62728"}};
  if (opt.show_norm && std::isfinite(nlo)) {
    if (nhi == nlo) {
      nlo *= 0.9;
      nhi *= 1.1;
    }
    const Scale ns{nlo, nhi, kTop + kPlotH, kTop, false};
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : records.rows) {
      if (std::isfinite(r.weight_norm)) pts.emplace_back(xs(std::max<double>(1, r.step)), ns(r.weight_norm));
    }
    out += polyline(pts, "norm", "#555555", true);
    out += y_ticks(ns, kLeft + kPlotW + 6, "start");
    out += text(kWidth - 12, kTop + kPlotH / 2, "weight norm", "middle", 90);
    items.emplace_back("weight norm", "#555555");
  }
  out += legend(items);
  return out + "</svg>\n";
}

std::string render_heatmap_svg(const LandscapeGrid& grid, const HeatmapOptions& opt) {
  GridLayout lay{};
  return header() + heatmap_body(grid, opt, lay) + "</svg>\n";
}

std::string render_trajectory_svg(const LandscapeGrid& grid, const ReducedTrajectory& traj,
                                  const HeatmapOptions& opt) {
  if (traj.samples.empty()) throw DomainError("cannot plot an empty trajectory");
  GridLayout lay{};
  std::string out = header() + heatmap_body(grid, opt, lay);
  std::vector<std::pair<double, double>> pts;
  std::vector<double> log_w;
  for (double w : grid.w_axis) log_w.push_back(std::log(w));
  for (const auto& s : traj.samples) {
    pts.emplace_back(lay.x(fractional_index(grid.second_axis, s.m)),
                     lay.y(fractional_index(log_w, std::log(s.w))));
  }
  out += polyline(pts, "path", "white");
  out += "<circle cx=\"" + num(pts.front().first) + "\" cy=\"" + num(pts.front().second) +
         "\" r=\"4\" fill=\"white\"/>\n";
  out += "<circle cx=\"" + num(pts.back().first) + "\" cy=\"" + num(pts.back().second) +
         "\" r=\"4\" fill=\"red\"/>\n";
  return out + "</svg>\n";
}

std::string render_trajectory_svg(const ReducedTrajectory& traj, const std::string& title) {
  if (traj.samples.empty()) throw DomainError("cannot plot an empty trajectory");
  double mlo = traj.samples.front().m, mhi = mlo, wlo = traj.samples.front().w, whi = wlo;
  for (const auto& s : traj.samples) {
    mlo = std::min(mlo, s.m);
    mhi = std::max(mhi, s.m);
    wlo = std::min(wlo, s.w);
    whi = std::max(whi, s.w);
  }
  if (mhi == mlo) {
    mlo -= 0.5;
    mhi += 0.5;
  }
  if (whi == wlo) {
    wlo /= 2;
    whi *= 2;
  }
  const Scale xs{mlo, mhi, kLeft, kLeft + kPlotW, false};
  const Scale ys{wlo, whi, kTop + kPlotH, kTop, true};
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : traj.samples) pts.emplace_back(xs(s.m), ys(s.w));
  std::string out = header() + frame(title, "messiness m", "weight norm w");
  out += x_ticks(xs);
  out += y_ticks(ys, kLeft - 6, "end");
  out += polyline(pts, "path", "#1f77b4");
  return out + "</svg>\n";
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace groklab
