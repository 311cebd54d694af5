#include "groklab/landscape.hpp"

#include "groklab/errors.hpp"
#include "groklab/parallel.hpp"
#include "groklab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace groklab {

namespace {

constexpr std::uint64_t kStreamSphereInit = 21;
constexpr std::uint64_t kStreamSphereBatch = 22;

nlohmann::json spec_to_json(const MlpSpec& s) {
  return {{"widths", s.widths}, {"activation", to_string(s.activation)}, {"loss", to_string(s.loss)},
          {"init", to_string(s.init)}};
}

double error_of(const Matrix& y, const Batch& b, const AccuracyMode& mode) {
  return 1.0 - accuracy(y, b, mode);
}

}  // namespace

SupervisedProblem make_problem(const TeacherStudentTask& task) {
  return {task.teacher_spec, task.train, task.test, AccuracyMode::regression(task.theta)};
}

SupervisedProblem make_problem(const AdditionTask& task) {
  return {addition_decoder_spec(), addition_train_batch(task), addition_test_batch(task),
          task.accuracy_mode()};
}

SupervisedProblem make_problem(const MnistTask& task, LossKind loss) {
  return {{{784, 200, 200, kMnistClasses}, Activation::relu, loss}, task.train, task.test,
          AccuracyMode::argmax()};
}

void SphereMinConfig::validate() const {
  if (steps < 0) throw DomainError("sphere-min steps must be >= 0");
  if (!(lr > 0.0)) throw DomainError("sphere-min learning rate must be > 0");
  if (restarts < 1) throw DomainError("sphere-min restarts must be >= 1");
  if (batch_size < 0) throw DomainError("sphere-min batch size must be >= 0");
  if (check_every < 1) throw DomainError("sphere-min check cadence must be >= 1");
}

nlohmann::json to_json(const SphereMinConfig& c) {
  return {{"steps", c.steps},         {"lr", c.lr},
          {"optimizer", to_string(c.optimizer)}, {"seed", c.seed},
          {"restarts", c.restarts},   {"batch_size", c.batch_size},
          {"check_every", c.check_every}};
}

SphereMinConfig sphere_config_from_json(const nlohmann::json& j) {
  SphereMinConfig c;
  c.steps = j.value("steps", c.steps);
  c.lr = j.value("lr", c.lr);
  c.optimizer = parse_optim_kind(j.value("optimizer", to_string(c.optimizer)));
  c.seed = j.value("seed", c.seed);
  c.restarts = j.value("restarts", c.restarts);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.check_every = j.value("check_every", c.check_every);
  return c;
}

ParamVector SphereMinResult::direction() const {
  ParamVector d = params;
  if (w > 0.0) {
    for (double& v : d.values()) v /= w;
  }
  return d;
}

double standard_norm(const MlpSpec& spec, std::uint64_t seed, int restart) {
  return init_params(spec, derive_seed(seed, kStreamSphereInit + 1000ULL * restart)).norm();
}

namespace {

SphereMinResult minimize_once(const SupervisedProblem& pr, double w, const SphereMinConfig& cfg,
                              int restart) {
  SphereMinResult res;
  res.w = w;
  res.best_restart = restart;
  const MlpSpec& spec = pr.spec;
  ParamVector params = init_params(spec, derive_seed(cfg.seed, kStreamSphereInit + 1000ULL * restart));
  params = scale_params(std::move(params), w / params.norm());
  project_norm(params.values(), w);

  OptimConfig oc;
  oc.kind = cfg.optimizer;
  oc.lr = cfg.lr;
  oc.weight_decay = 0.0;
  Optimizer opt(oc);
  ParamVector grad(spec);

  const bool minibatch = cfg.batch_size > 0 && cfg.batch_size < pr.train.size();
  Rng batch_rng(derive_seed(cfg.seed, kStreamSphereBatch + 1000ULL * restart));
  std::vector<std::size_t> order(static_cast<std::size_t>(pr.train.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  const std::int64_t window = std::max<std::int64_t>(1, cfg.steps / 10);
  std::deque<double> recent;  // last 2 * window training losses
  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    double loss = 0.0;
    try {
      if (minibatch) {
        if (cursor + cfg.batch_size > order.size()) {
          std::shuffle(order.begin(), order.end(), batch_rng);
          cursor = 0;
        }
        const Batch b = select_rows(
            pr.train, std::span<const std::size_t>(order.data() + cursor, cfg.batch_size));
        cursor += cfg.batch_size;
        loss = loss_grad_into(spec, params, b, spec.loss, grad);
      } else {
        loss = loss_grad_into(spec, params, pr.train, spec.loss, grad);
      }
      if (!std::isfinite(loss)) throw NumericError("non-finite training loss", step);
      opt.step(params.values(), grad.values());
      project_norm(params.values(), w);
    } catch (const NumericError& e) {
      res.failed = true;
      res.failed_step = e.step();
      break;
    } catch (const DomainError&) {
      // Zero-norm iterate: cannot be projected back.
      res.failed = true;
      res.failed_step = step;
      break;
    }
    recent.push_back(loss);
    if (static_cast<std::int64_t>(recent.size()) > 2 * window) recent.pop_front();
    if (step % cfg.check_every == 0 || step == cfg.steps) {
      res.max_projection_error =
          std::max(res.max_projection_error, std::abs(params.norm() - w) / w);
    }
  }

  if (static_cast<std::int64_t>(recent.size()) == 2 * window) {
    const double older = std::accumulate(recent.begin(), recent.begin() + window, 0.0) / window;
    const double newer = std::accumulate(recent.begin() + window, recent.end(), 0.0) / window;
    res.loss_slope = (newer - older) / static_cast<double>(window);
  }

  if (res.failed) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.train_loss = res.test_loss = res.train_err = res.test_err = nan;
  } else {
    const Matrix ytr = forward(spec, params, pr.train.inputs);
    const Matrix yte = forward(spec, params, pr.test.inputs);
    res.train_loss = loss_value(ytr, pr.train, spec.loss);
    res.test_loss = loss_value(yte, pr.test, spec.loss);
    res.train_err = error_of(ytr, pr.train, pr.accuracy);
    res.test_err = error_of(yte, pr.test, pr.accuracy);
    if (!std::isfinite(res.train_loss) || !std::isfinite(res.test_loss)) {
      res.failed = true;
      res.failed_step = cfg.steps;
    }
  }
  res.params = std::move(params);
  return res;
}

}  // namespace

SphereMinResult minimize_on_sphere(const SupervisedProblem& problem, double w,
                                   const SphereMinConfig& cfg) {
  cfg.validate();
  if (!(w > 0.0)) throw DomainError("sphere radius w must be > 0");
  SphereMinResult best;
  bool have = false;
  for (int r = 0; r < cfg.restarts; ++r) {
    SphereMinResult res = minimize_once(problem, w, cfg, r);
    const bool better = !have || (best.failed && !res.failed) ||
                        (!res.failed && res.train_loss < best.train_loss);
    if (better) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

ReducedCurve reduced_curve_1d(const SupervisedProblem& problem, const std::vector<double>& alphas,
                              const SphereMinConfig& cfg, unsigned threads) {
  cfg.validate();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0)) throw DomainError("alpha values must be > 0");
    if (i > 0 && !(alphas[i] > alphas[i - 1])) throw DomainError("alpha values must ascend");
  }
  ReducedCurve curve;
  curve.w0 = standard_norm(problem.spec, cfg.seed);
  curve.num_params = problem.spec.num_params();
  curve.points.resize(alphas.size());
  parallel_for(alphas.size(), threads, [&](std::size_t i) {
    const double w = alphas[i] * curve.w0;
    const auto r = minimize_on_sphere(problem, w, cfg);
    curve.points[i] = {alphas[i], w, r.train_loss, r.test_loss, r.train_err, r.test_err, r.failed};
  });
  return curve;
}

double average_parameter_magnitude(double w0, std::size_t num_params) {
  if (num_params == 0) throw DomainError("parameter count must be > 0");
  return w0 / std::sqrt(static_cast<double>(num_params));
}

ReducedCurve regularized_train_landscape(const ReducedCurve& curve, double gamma, double c) {
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  if (!(c > 0.0)) throw DomainError("C must be > 0");
  ReducedCurve out = curve;
  for (auto& pt : out.points) pt.train_loss += gamma * pt.alpha * pt.alpha * c * c;
  return out;
}

bool is_non_increasing(const std::vector<double>& v, double tol) {
  double running_min = std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (x > running_min + tol) return false;
    running_min = std::min(running_min, x);
  }
  return true;
}

bool is_u_shaped(const std::vector<double>& series, double margin_fraction, bool log_scale) {
  if (series.size() < 3) return false;
  std::vector<double> v = series;
  if (log_scale) {
    for (double& x : v) {
      if (!(x > 0.0)) return false;
      x = std::log10(x);
    }
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double margin = margin_fraction * (*hi - *lo);
  return v.front() - *lo > margin && v.back() - *lo > margin;
}

ShapeMetrics shape_metrics(const ReducedCurve& curve, const ShapeTolerances& tol) {
  if (curve.points.size() < 5) throw DomainError("shape metrics need at least 5 points");
  std::vector<double> train, test;
  for (const auto& p : curve.points) {
    train.push_back(p.train_loss);
    test.push_back(p.test_loss);
  }
  ShapeMetrics m;
  const auto best = std::min_element(test.begin(), test.end()) - test.begin();
  m.argmin_alpha = curve.points[best].alpha;
  m.is_l = is_non_increasing(train, tol.l_tol);
  m.is_u = is_u_shaped(test, tol.u_fraction, tol.u_log_scale);
  const auto [lo, hi] = std::minmax_element(test.begin(), test.end());
  const double threshold = tol.mismatch_fraction * (*hi - *lo);
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i] - train[i] > threshold) {
      const double a = curve.points[i].alpha;
      if (!m.mismatch_region) m.mismatch_region = std::make_pair(a, a);
      m.mismatch_region->second = a;
    }
  }
  return m;
}

std::string to_string(SecondAxis a) { return a == SecondAxis::data_size ? "N" : "m"; }

SecondAxis parse_second_axis(const std::string& s) {
  if (s == "N" || s == "n" || s == "data_size") return SecondAxis::data_size;
  if (s == "m" || s == "messiness") return SecondAxis::messiness;
  throw DomainError("unknown second axis '" + s + "'");
}

void LandscapeGrid::validate() const {
  const auto r = rows(), c = cols();
  for (const Matrix* m : {&train_loss, &test_loss, &train_err, &test_err}) {
    if (m->rows() != r || m->cols() != c) throw DomainError("grid matrix shape mismatch");
  }
  if (failed.rows() != r || failed.cols() != c) throw DomainError("grid failure mask shape mismatch");
}

ProblemFactory addition_messiness_factory(int p, int train_size, std::uint64_t seed) {
  return [=](double m) { return make_problem(gen_addition_task(p, m, train_size, seed)); };
}

ProblemFactory mnist_data_size_factory(MnistTask task, std::uint64_t seed, LossKind loss) {
  auto shared = std::make_shared<const MnistTask>(std::move(task));
  return [shared, seed, loss](double n) {
    return make_problem(subset(*shared, static_cast<std::size_t>(n), seed), loss);
  };
}

ProblemFactory teacher_student_data_size_factory(std::uint64_t seed, int n_test) {
  return [=](double n) { return make_problem(gen_teacher_student(seed, static_cast<int>(n), n_test)); };
}

LandscapeGrid reduced_grid(const ProblemFactory& factory, const std::string& task_name,
                           const std::vector<double>& w_values, SecondAxis kind,
                           const std::vector<double>& second_values, const SphereMinConfig& cfg,
                           unsigned threads) {
  cfg.validate();
  if (w_values.empty() || second_values.empty()) throw DomainError("grid axes must be nonempty");
  for (double w : w_values) {
    if (!(w > 0.0)) throw DomainError("grid weight norms must be > 0");
  }
  std::vector<SupervisedProblem> columns;
  columns.reserve(second_values.size());
  for (double v : second_values) columns.push_back(factory(v));

  LandscapeGrid g;
  g.w_axis = w_values;
  g.kind = kind;
  g.second_axis = second_values;
  const auto r = g.rows(), c = g.cols();
  g.train_loss.resize(r, c);
  g.test_loss.resize(r, c);
  g.train_err.resize(r, c);
  g.test_err.resize(r, c);
  g.failed.resize(r, c);

  parallel_for(static_cast<std::size_t>(r * c), threads, [&](std::size_t cell) {
    const auto i = static_cast<Eigen::Index>(cell) / c;
    const auto j = static_cast<Eigen::Index>(cell) % c;
    const auto res = minimize_on_sphere(columns[j], w_values[i], cfg);
    g.train_loss(i, j) = res.train_loss;
    g.test_loss(i, j) = res.test_loss;
    g.train_err(i, j) = res.train_err;
    g.test_err(i, j) = res.test_err;
    g.failed(i, j) = res.failed;
  });

  const MlpSpec& spec = columns.front().spec;
  const double w0 = standard_norm(spec, cfg.seed);
  g.meta = {{"task", task_name},
            {"spec", spec_to_json(spec)},
            {"cfg", to_json(cfg)},
            {"seeds", {{"sphere", cfg.seed}}},
            {"w0", w0},
            {"C", average_parameter_magnitude(w0, spec.num_params())},
            {"C_convention", "w0/sqrt(P)"}};
  return g;
}

std::vector<double> log_space(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw DomainError("bad log-space bounds");
  if (n == 1) return {lo};
  std::vector<double> v(n);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) v[i] = std::exp(a + (b - a) * i / (n - 1));
  v.front() = lo;
  v.back() = hi;
  return v;
}

std::vector<double> lin_space(double lo, double hi, int n) {
  if (!(hi >= lo) || n < 1) throw DomainError("bad linear-space bounds");
  if (n == 1) return {lo};
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  v.back() = hi;
  return v;
}

std::optional<double> critical_data_size(const LandscapeGrid& grid, double tau) {
  if (grid.kind != SecondAxis::data_size) {
    throw DomainError("critical data size needs a grid over data size N");
  }
  for (Eigen::Index j = 0; j < grid.cols(); ++j) {
    if (j > 0 && !(grid.second_axis[j] > grid.second_axis[j - 1])) {
      throw DomainError("data-size axis must ascend");
    }
  }
  for (Eigen::Index j = 0; j < grid.cols(); ++j) {
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      if (!grid.failed(i, j) && grid.test_err(i, j) <= tau) return grid.second_axis[j];
    }
  }
  return std::nullopt;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      // JSON has no NaN; failed cells carry null.
      if (std::isfinite(m(i, j))) row.push_back(m(i, j));
      else row.push_back(nullptr);
    }
    out.push_back(std::move(row));
  }
  return out;
}

Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                        const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParseError(std::string("grid field '") + name + "' has the wrong row count");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(std::string("grid field '") + name + "' has the wrong column count");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = row[c].is_null() ? std::numeric_limits<double>::quiet_NaN() : row[c].get<double>();
    }
  }
  return m;
}

}  // namespace

nlohmann::json grid_to_json(const LandscapeGrid& g) {
  g.validate();
  nlohmann::json j;
  j["meta"] = g.meta;
  j["w_axis"] = g.w_axis;
  j["second_axis"] = {{"kind", to_string(g.kind)}, {"values", g.second_axis}};
  j["train_loss"] = matrix_to_json(g.train_loss);
  j["test_loss"] = matrix_to_json(g.test_loss);
  j["train_err"] = matrix_to_json(g.train_err);
  j["test_err"] = matrix_to_json(g.test_err);
  auto failed = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < g.cols(); ++c) row.push_back(static_cast<bool>(g.failed(i, c)));
    failed.push_back(std::move(row));
  }
  j["failed"] = std::move(failed);
  return j;
}

LandscapeGrid grid_from_json(const nlohmann::json& j) {
  LandscapeGrid g;
  try {
    g.meta = j.value("meta", nlohmann::json::object());
    g.w_axis = j.at("w_axis").get<std::vector<double>>();
    g.kind = parse_second_axis(j.at("second_axis").at("kind").get<std::string>());
    g.second_axis = j.at("second_axis").at("values").get<std::vector<double>>();
    const auto r = g.rows(), c = g.cols();
    g.train_loss = matrix_from_json(j.at("train_loss"), r, c, "train_loss");
    g.test_loss = matrix_from_json(j.at("test_loss"), r, c, "test_loss");
    g.train_err = matrix_from_json(j.at("train_err"), r, c, "train_err");
    g.test_err = matrix_from_json(j.at("test_err"), r, c, "test_err");
    g.failed.resize(r, c);
    const auto& f = j.at("failed");
    if (!f.is_array() || static_cast<Eigen::Index>(f.size()) != r) {
      throw ParseError("grid field 'failed' has the wrong row count");
    }
    for (Eigen::Index i = 0; i < r; ++i) {
      if (static_cast<Eigen::Index>(f[i].size()) != c) {
        throw ParseError("grid field 'failed' has the wrong column count");
      }
      for (Eigen::Index k = 0; k < c; ++k) g.failed(i, k) = f[i][k].get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed landscape grid: ") + e.what());
  } catch (const DomainError& e) {
    throw ParseError(std::string("malformed landscape grid: ") + e.what());
  }
  return g;
}

void write_grid(const LandscapeGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << grid_to_json(grid).dump() << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LandscapeGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return grid_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json curve_to_json(const ReducedCurve& curve) {
  nlohmann::json j;
  j["w0"] = curve.w0;
  j["num_params"] = curve.num_params;
  auto pts = nlohmann::json::array();
  for (const auto& p : curve.points) {
    pts.push_back({{"alpha", p.alpha},
                   {"w", p.w},
                   {"train_loss", p.train_loss},
                   {"test_loss", p.test_loss},
                   {"train_err", p.train_err},
                   {"test_err", p.test_err},
                   {"failed", p.failed}});
  }
  j["points"] = std::move(pts);
  return j;
}

}  // namespace groklab
