#pragma once

// Reduced loss landscapes: minimize the training loss over directions at a
// fixed weight norm, then sweep the norm (and optionally a second axis).

#include "groklab/nn.hpp"
#include "groklab/optim.hpp"
#include "groklab/tasks.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace groklab {

// A fixed train/test pair plus the metric used for errors.
struct SupervisedProblem {
  MlpSpec spec;
  Batch train;
  Batch test;
  AccuracyMode accuracy;
};

SupervisedProblem make_problem(const TeacherStudentTask& task);
// Frozen representation: the decoder input is the task's current E_i + E_j.
SupervisedProblem make_problem(const AdditionTask& task);
SupervisedProblem make_problem(const MnistTask& task, LossKind loss = LossKind::mse);

struct SphereMinConfig {
  std::int64_t steps = 10000;
  double lr = 1e-3;
  OptimKind optimizer = OptimKind::adam;  // weight decay is never applied
  std::uint64_t seed = 0;
  int restarts = 1;
  int batch_size = 0;         // 0 = full batch
  int check_every = 100;      // projection spot-check cadence

  void validate() const;
};

nlohmann::json to_json(const SphereMinConfig& c);
SphereMinConfig sphere_config_from_json(const nlohmann::json& j);

struct SphereMinResult {
  ParamVector params;  // the minimizer, with norm w
  double w = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_err = 0.0;
  double test_err = 0.0;
  bool failed = false;
  std::int64_t failed_step = -1;
  // Convergence diagnostics.
  double loss_slope = 0.0;            // per-step slope of the windowed mean train loss at the end
  double max_projection_error = 0.0;  // max |norm - w| / w over spot checks
  int best_restart = 0;

  ParamVector direction() const;
};

// Norm of restart r's standard draw (r = 0 defines w0 for curves and grids).
double standard_norm(const MlpSpec& spec, std::uint64_t seed, int restart = 0);

// Start from a standard draw rescaled to norm w; after every optimizer step
// project back onto the sphere. Keeps the restart with lowest final train loss.
SphereMinResult minimize_on_sphere(const SupervisedProblem& problem, double w,
                                   const SphereMinConfig& cfg);

struct CurvePoint {
  double alpha = 0.0;
  double w = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_err = 0.0;
  double test_err = 0.0;
  bool failed = false;
};

struct ReducedCurve {
  double w0 = 0.0;
  std::size_t num_params = 0;
  std::vector<CurvePoint> points;
};

// One minimization per alpha at w = alpha * w0; cells run on up to `threads`
// workers and are assembled in input order.
ReducedCurve reduced_curve_1d(const SupervisedProblem& problem, const std::vector<double>& alphas,
                              const SphereMinConfig& cfg, unsigned threads = 1);

// Adds gamma alpha^2 C^2 to the train loss of every point.
ReducedCurve regularized_train_landscape(const ReducedCurve& curve, double gamma, double c);

// C = w0 / sqrt(P): the RMS parameter magnitude of the standard draw, so that
// gamma alpha^2 C^2 = gamma w^2 / P.
double average_parameter_magnitude(double w0, std::size_t num_params);

struct ShapeTolerances {
  double l_tol = 0.02;          // absolute slack for "non-increasing"
  double u_fraction = 0.05;     // endpoint margin as a fraction of the test range
  bool u_log_scale = false;     // measure the U margin on log10(test loss)
  double mismatch_fraction = 0.1;
};

struct ShapeMetrics {
  double argmin_alpha = 0.0;  // alpha minimizing the test loss
  bool is_l = false;
  bool is_u = false;
  // alpha range where test - train exceeds the mismatch threshold
  std::optional<std::pair<double, double>> mismatch_region;
};

ShapeMetrics shape_metrics(const ReducedCurve& curve, const ShapeTolerances& tol = {});

// Checks on plain series, used by shape_metrics.
bool is_non_increasing(const std::vector<double>& v, double tol);
bool is_u_shaped(const std::vector<double>& v, double margin_fraction, bool log_scale = false);

enum class SecondAxis { data_size, messiness };

std::string to_string(SecondAxis a);
SecondAxis parse_second_axis(const std::string& s);

struct LandscapeGrid {
  nlohmann::json meta;  // task, spec, cfg, seeds, w0, C convention
  std::vector<double> w_axis;
  SecondAxis kind = SecondAxis::messiness;
  std::vector<double> second_axis;
  // Indexed (w index, second-axis index).
  Matrix train_loss;
  Matrix test_loss;
  Matrix train_err;
  Matrix test_err;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> failed;

  Eigen::Index rows() const { return static_cast<Eigen::Index>(w_axis.size()); }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(second_axis.size()); }
  void validate() const;
};

// Builds the problem for one value on the second axis (a data size N or a
// messiness m). Called once per column.
using ProblemFactory = std::function<SupervisedProblem(double second_value)>;

ProblemFactory addition_messiness_factory(int p, int train_size, std::uint64_t seed);
ProblemFactory mnist_data_size_factory(MnistTask task, std::uint64_t seed, LossKind loss);
ProblemFactory teacher_student_data_size_factory(std::uint64_t seed, int n_test);

// Independent minimize_on_sphere per cell.
LandscapeGrid reduced_grid(const ProblemFactory& factory, const std::string& task_name,
                           const std::vector<double>& w_values, SecondAxis kind,
                           const std::vector<double>& second_values, const SphereMinConfig& cfg,
                           unsigned threads = 1);

// n log-spaced values from lo to hi inclusive.
std::vector<double> log_space(double lo, double hi, int n);
std::vector<double> lin_space(double lo, double hi, int n);

// Smallest N whose column reaches test error <= tau at some w.
std::optional<double> critical_data_size(const LandscapeGrid& grid, double tau);

nlohmann::json grid_to_json(const LandscapeGrid& grid);
LandscapeGrid grid_from_json(const nlohmann::json& j);
void write_grid(const LandscapeGrid& grid, const std::filesystem::path& path);
LandscapeGrid read_grid(const std::filesystem::path& path);

nlohmann::json curve_to_json(const ReducedCurve& curve);

}  // namespace groklab
