#include "groklab/dynamics.hpp"

#include "groklab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace groklab {

namespace {

// Index i with axis[i] <= x <= axis[i+1], clamped to the last cell.
std::size_t cell_index(const std::vector<double>& axis, double x) {
  const auto it = std::upper_bound(axis.begin(), axis.end(), x);
  std::size_t i = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
  return std::min(i, axis.size() - 2);
}

void require_ascending(const std::vector<double>& axis, const char* name) {
  if (axis.size() < 2) {
    throw DomainError(std::string("interpolation needs >= 2 points on the ") + name + " axis");
  }
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (!(axis[i] > axis[i - 1])) throw DomainError(std::string(name) + " axis must ascend");
  }
}

}  // namespace

GridInterpolator::GridInterpolator(const LandscapeGrid& grid, Field field) {
  grid.validate();
  if (grid.kind != SecondAxis::messiness) throw DomainError("reduced dynamics need a (w, m) grid");
  for (double w : grid.w_axis) {
    if (!(w > 0.0)) throw DomainError("grid weight norms must be > 0");
    u_.push_back(std::log(w));
  }
  m_ = grid.second_axis;
  require_ascending(u_, "w");
  require_ascending(m_, "m");
  v_ = field == Field::train_loss ? grid.train_loss : grid.test_loss;
  if (!v_.allFinite()) throw DomainError("grid field has failed or non-finite cells");
}

bool GridInterpolator::contains(double w, double m) const {
  if (!(w > 0.0)) return false;
  const double u = std::log(w);
  return u >= u_.front() && u <= u_.back() && m >= m_.front() && m <= m_.back();
}

double GridInterpolator::value_log(double u, double m) const {
  if (!(u >= u_.front() && u <= u_.back() && m >= m_.front() && m <= m_.back())) {
    throw OutOfBoundsError("point outside the grid hull");
  }
  const std::size_t i = cell_index(u_, u);
  const std::size_t j = cell_index(m_, m);
  const double a = (u - u_[i]) / (u_[i + 1] - u_[i]);
  const double b = (m - m_[j]) / (m_[j + 1] - m_[j]);
  const auto I = static_cast<Eigen::Index>(i), J = static_cast<Eigen::Index>(j);
  return (1 - a) * (1 - b) * v_(I, J) + a * (1 - b) * v_(I + 1, J) + (1 - a) * b * v_(I, J + 1) +
         a * b * v_(I + 1, J + 1);
}

double GridInterpolator::value(double w, double m) const {
  if (!contains(w, m)) throw OutOfBoundsError("point outside the grid hull");
  return value_log(std::log(w), m);
}

ValueAndGrad interp_value_and_grad(const GridInterpolator& f, double w, double m) {
  if (!f.contains(w, m)) throw OutOfBoundsError("point outside the grid hull");
  const double u = std::log(w);
  const auto& U = f.log_w_axis();
  const auto& M = f.m_axis();
  const std::size_t i = cell_index(U, u);
  const std::size_t j = cell_index(M, m);
  const double hu = 0.5 * (U[i + 1] - U[i]);
  const double hm = 0.5 * (M[j + 1] - M[j]);

  ValueAndGrad out;
  out.value = f.value_log(u, m);
  {
    const double lo = std::max(U.front(), u - hu), hi = std::min(U.back(), u + hu);
    out.d_log_w = (f.value_log(hi, m) - f.value_log(lo, m)) / (hi - lo);
  }
  {
    const double lo = std::max(M.front(), m - hm), hi = std::min(M.back(), m + hm);
    out.d_m = (f.value_log(u, hi) - f.value_log(u, lo)) / (hi - lo);
  }
  out.d_w = out.d_log_w / w;
  return out;
}

ValueAndGrad interp_value_and_grad(const LandscapeGrid& grid, double w, double m) {
  return interp_value_and_grad(GridInterpolator(grid), w, m);
}

void DynamicsConfig::validate() const {
  if (!(eta_d > 0.0) || !(eta_r > 0.0)) throw DomainError("eta_D and eta_R must be > 0");
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  if (max_steps < 1) throw DomainError("max steps must be >= 1");
  if (record_every < 1) throw DomainError("record cadence must be >= 1");
}

std::string to_string(TrajectoryStatus s) {
  switch (s) {
    case TrajectoryStatus::reached_target: return "reached_target";
    case TrajectoryStatus::max_steps: return "max_steps";
    case TrajectoryStatus::left_grid: return "left_grid";
  }
  return "?";
}

ReducedTrajectory integrate_reduced(const LandscapeGrid& grid, double w0, double m0,
                                    const DynamicsConfig& cfg) {
  cfg.validate();
  const GridInterpolator train(grid, GridInterpolator::Field::train_loss);
  const GridInterpolator test(grid, GridInterpolator::Field::test_loss);
  if (!train.contains(w0, m0)) throw OutOfBoundsError("start point outside the grid hull");

  std::optional<std::pair<std::size_t, std::size_t>> target_cell;
  if (cfg.target) {
    const auto [tw, tm] = *cfg.target;
    if (!train.contains(tw, tm)) throw OutOfBoundsError("target point outside the grid hull");
    target_cell = {cell_index(train.log_w_axis(), std::log(tw)), cell_index(train.m_axis(), tm)};
  }

  ReducedTrajectory traj;
  traj.meta = {{"eta_d", cfg.eta_d},
               {"eta_r", cfg.eta_r},
               {"gamma", cfg.gamma},
               {"dt", cfg.dt},
               {"assumptions",
                {"scale separation: the direction sits at its minimizer for the current (w, m)",
                 "representation evolves along the linear interpolation in m"}}};

  double w = w0, m = m0, t = 0.0;
  auto sample = [&](const ValueAndGrad& g) {
    traj.samples.push_back(
        {t, w, m, g.value, test.value(w, m), std::hypot(g.d_log_w, g.d_m)});
  };
  ValueAndGrad g = interp_value_and_grad(train, w, m);
  sample(g);
  traj.status = TrajectoryStatus::max_steps;
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    const double dw = -cfg.eta_d * (g.d_w + cfg.gamma * w);
    const double dm = -cfg.eta_r * g.d_m;
    w += cfg.dt * dw;
    // m is an interpolation coefficient: project the flow onto the m range.
    m = std::clamp(m + cfg.dt * dm, train.m_min(), train.m_max());
    t = cfg.dt * static_cast<double>(step);
    if (!train.contains(w, m)) {
      traj.status = TrajectoryStatus::left_grid;
      break;
    }
    g = interp_value_and_grad(train, w, m);
    bool done = false;
    if (target_cell) {
      const std::pair<std::size_t, std::size_t> cell{cell_index(train.log_w_axis(), std::log(w)),
                                                     cell_index(train.m_axis(), m)};
      if (cell == *target_cell) {
        traj.status = TrajectoryStatus::reached_target;
        done = true;
      }
    }
    if (done || step == cfg.max_steps || step % cfg.record_every == 0) sample(g);
    if (done) break;
  }
  traj.meta["status"] = to_string(traj.status);
  return traj;
}

double log_w_rate(const ReducedTrajectory& traj, double t0, double t1) {
  double n = 0, st = 0, su = 0, stt = 0, stu = 0;
  for (const auto& s : traj.samples) {
    if (s.t < t0 || s.t > t1) continue;
    const double u = std::log(s.w);
    n += 1;
    st += s.t;
    su += u;
    stt += s.t * s.t;
    stu += s.t * u;
  }
  const double den = n * stt - st * st;
  if (n < 2 || !(den > 0.0)) throw DomainError("need >= 2 samples in the time window");
  return (n * stu - st * su) / den;
}

int count_descents(const std::vector<double>& series, double min_drop) {
  if (series.empty()) return 0;
  int count = 0;
  double peak = series.front();    // start of the current descent
  double trough = series.front();  // lowest value since the peak
  bool counted = false;
  for (double x : series) {
    if (x < trough) {
      trough = x;
      if (!counted && peak - trough > min_drop) {
        ++count;
        counted = true;
      }
    } else if (x - trough > min_drop) {
      peak = trough = x;
      counted = false;
    } else if (x > peak && !counted) {
      peak = trough = x;
    }
  }
  return count;
}

GrokTime grok_time_simple(double w0, double wc, double gamma) {
  if (!(wc > 0.0) || !(w0 >= wc)) throw DomainError("need w0 >= wc > 0");
  if (gamma < 0.0) throw DomainError("gamma must be >= 0");
  if (gamma == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {std::log(w0 / wc) / gamma, false};
}

double grok_time_geometric(double L, double h, double theta_b, double eta_d, double gamma) {
  if (!(L >= 0.0) || !(h >= 0.0)) throw DomainError("L and h must be >= 0");
  if (!(theta_b >= 0.0)) throw DomainError("theta_b must be >= 0");
  if (theta_b >= std::numbers::pi / 2) {
    throw DomainError("theta_b >= pi/2: boundary parallel to the motion");
  }
  if (!(eta_d > 0.0) || !(gamma > 0.0)) throw DomainError("eta_D and gamma must be > 0");
  return (L + h * std::tan(theta_b)) / (eta_d * gamma);
}

std::optional<ContourFit> level_contour(const LandscapeGrid& grid, double level) {
  const GridInterpolator f(grid);
  const auto& U = f.log_w_axis();
  const auto& M = f.m_axis();
  const Matrix& v = f.values();
  ContourFit fit;
  auto add = [&](double u, double m) { fit.points.push_back({std::exp(u), m}); };
  const auto R = v.rows(), C = v.cols();
  for (Eigen::Index i = 0; i < R; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      const double a = v(i, j) - level;
      if (a == 0.0) add(U[i], M[j]);
      if (i + 1 < R) {
        const double b = v(i + 1, j) - level;
        if (a * b < 0.0) add(U[i] + (U[i + 1] - U[i]) * a / (a - b), M[j]);
      }
      if (j + 1 < C) {
        const double b = v(i, j + 1) - level;
        if (a * b < 0.0) add(U[i], M[j] + (M[j + 1] - M[j]) * a / (a - b));
      }
    }
  }
  if (fit.points.empty()) return std::nullopt;

  double mm = 0, mu = 0;
  fit.m_lo = fit.m_hi = fit.points.front().m;
  for (const auto& p : fit.points) {
    mm += p.m;
    mu += std::log(p.w);
    fit.m_lo = std::min(fit.m_lo, p.m);
    fit.m_hi = std::max(fit.m_hi, p.m);
  }
  const double n = static_cast<double>(fit.points.size());
  mm /= n;
  mu /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : fit.points) {
    const double x = p.m - mm, y = std::log(p.w) - mu;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  // Principal axis of the point cloud.
  double angle = 0.5 * std::atan2(2 * sxy, sxx - syy);
  if (angle <= -std::numbers::pi / 2) angle += std::numbers::pi;
  if (angle > std::numbers::pi / 2) angle -= std::numbers::pi;
  if (sxx == 0.0 && syy == 0.0) angle = 0.0;
  fit.angle = angle;
  fit.slope = std::abs(angle) == std::numbers::pi / 2 ? std::numeric_limits<double>::infinity()
                                                      : std::tan(angle);
  return fit;
}

std::vector<std::optional<ContourFit>> boundary_angle(const std::vector<LandscapeGrid>& grids,
                                                      double level) {
  std::vector<std::optional<ContourFit>> out;
  out.reserve(grids.size());
  for (const auto& g : grids) out.push_back(level_contour(g, level));
  return out;
}

std::string trajectory_to_csv(const ReducedTrajectory& traj) {
  std::string out = kTrajectoryCsvHeader;
  out += '\n';
  for (const auto& s : traj.samples) {
    out += format_double(s.t);
    for (double v : {s.w, s.m, s.train_loss, s.test_loss}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

ReducedTrajectory trajectory_from_csv(const std::string& text, const std::string& source) {
  ReducedTrajectory traj;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kTrajectoryCsvHeader) throw ParseError(where + ": unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 5) {
      throw ParseError(where + ": expected 5 fields, found " + std::to_string(fields.size()));
    }
    TrajectorySample s;
    s.t = parse_double(fields[0], where);
    s.w = parse_double(fields[1], where);
    s.m = parse_double(fields[2], where);
    s.train_loss = parse_double(fields[3], where);
    s.test_loss = parse_double(fields[4], where);
    if (!traj.samples.empty() && !(s.t > traj.samples.back().t)) {
      throw ParseError(where + ": t must be strictly increasing");
    }
    traj.samples.push_back(s);
  }
  if (line_no == 0) throw ParseError(source + ": empty file");
  return traj;
}

void write_trajectory(const ReducedTrajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << trajectory_to_csv(traj);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ReducedTrajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return trajectory_from_csv(ss.str(), path.string());
}

}  // namespace groklab
