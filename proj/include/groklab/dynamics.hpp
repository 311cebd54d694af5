#pragma once

// Reduced (w, m) dynamics on a precomputed landscape grid, plus the
// closed-form grokking-time estimates.

#include "groklab/errors.hpp"
#include "groklab/landscape.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace groklab {

struct OutOfBoundsError : DomainError {
  using DomainError::DomainError;
};

// Bilinear interpolant of one grid field in (log w, m).
class GridInterpolator {
 public:
  enum class Field { train_loss, test_loss };

  // Requires an m-grid with ascending axes (>= 2 points each), positive w and
  // finite values in the chosen field.
  GridInterpolator(const LandscapeGrid& grid, Field field = Field::train_loss);

  double value(double w, double m) const;
  bool contains(double w, double m) const;

  double log_w_min() const { return u_.front(); }
  double log_w_max() const { return u_.back(); }
  double m_min() const { return m_.front(); }
  double m_max() const { return m_.back(); }
  const std::vector<double>& log_w_axis() const { return u_; }
  const std::vector<double>& m_axis() const { return m_; }
  const Matrix& values() const { return v_; }

  // Interpolation in the internal coordinates u = log w.
  double value_log(double u, double m) const;

 private:
  std::vector<double> u_;
  std::vector<double> m_;
  Matrix v_;
};

struct ValueAndGrad {
  double value = 0.0;
  double d_w = 0.0;
  double d_m = 0.0;
  double d_log_w = 0.0;
};

// Central differences of the interpolant with spacing half the local cell
// size, clipped to the hull. Throws OutOfBoundsError outside the hull.
ValueAndGrad interp_value_and_grad(const GridInterpolator& f, double w, double m);
ValueAndGrad interp_value_and_grad(const LandscapeGrid& grid, double w, double m);

struct DynamicsConfig {
  double eta_d = 1.0;
  double eta_r = 1.0;
  double gamma = 0.01;
  double dt = 1.0;
  std::int64_t max_steps = 100000;
  int record_every = 1;
  // Stop once the point enters the grid cell containing this (w, m).
  std::optional<std::pair<double, double>> target;

  void validate() const;
};

enum class TrajectoryStatus { reached_target, max_steps, left_grid };

std::string to_string(TrajectoryStatus s);

struct TrajectorySample {
  double t = 0.0;
  double w = 0.0;
  double m = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double grad_norm = 0.0;  // |grad of train loss| in (log w, m); not serialized

  bool operator==(const TrajectorySample&) const = default;
};

struct ReducedTrajectory {
  std::vector<TrajectorySample> samples;
  TrajectoryStatus status = TrajectoryStatus::max_steps;
  nlohmann::json meta;
};

// Explicit Euler on
//   dw/dt = -eta_D (dl/dw + gamma w),  dm/dt = -eta_R dl/dm.
// m is clamped to the grid's m range; leaving the w range ends the run.
ReducedTrajectory integrate_reduced(const LandscapeGrid& grid, double w0, double m0,
                                    const DynamicsConfig& cfg);

// Least-squares slope of log w against t over samples with t in [t0, t1].
double log_w_rate(const ReducedTrajectory& traj, double t0, double t1);

// Number of descents in a series: maximal decreasing runs whose total drop
// exceeds min_drop, separated by rises larger than min_drop.
int count_descents(const std::vector<double>& series, double min_drop);

struct GrokTime {
  double time = 0.0;
  bool infinite = false;  // gamma = 0: no generalization
};

GrokTime grok_time_simple(double w0, double wc, double gamma);
double grok_time_geometric(double L, double h, double theta_b, double eta_d, double gamma);

struct ContourPoint {
  double w = 0.0;
  double m = 0.0;
};

struct ContourFit {
  std::vector<ContourPoint> points;
  double angle = 0.0;  // of the fitted line in (m, log w), in (-pi/2, pi/2]
  double slope = 0.0;  // d(log w)/dm; infinite for a vertical line
  double m_lo = 0.0;
  double m_hi = 0.0;
};

// Level set of the train-loss interpolant, taken from crossings on cell
// edges (where the bilinear interpolant is linear), then a total
// least-squares line in (m, log w). None if the level set is empty.
std::optional<ContourFit> level_contour(const LandscapeGrid& grid, double level);
std::vector<std::optional<ContourFit>> boundary_angle(const std::vector<LandscapeGrid>& grids,
                                                      double level);

inline constexpr const char* kTrajectoryCsvHeader = "t,w,m,train_loss,test_loss";

std::string trajectory_to_csv(const ReducedTrajectory& traj);
ReducedTrajectory trajectory_from_csv(const std::string& text, const std::string& source = "<string>");
void write_trajectory(const ReducedTrajectory& traj, const std::filesystem::path& path);
ReducedTrajectory read_trajectory(const std::filesystem::path& path);

}  // namespace groklab
