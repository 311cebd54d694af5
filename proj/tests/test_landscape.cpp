#include "groklab/errors.hpp"
#include "groklab/landscape.hpp"
#include "groklab/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace groklab;

namespace {

// Small random regression problem: 3 -> 8 -> 2 tanh, 20 train and 10 test rows.
SupervisedProblem tiny_problem(std::uint64_t seed = 1) {
  SupervisedProblem p;
  p.spec = {{3, 8, 2}, Activation::tanh, LossKind::mse};
  Rng rng(seed);
  std::normal_distribution<double> n01;
  auto fill = [&](Matrix& m, Eigen::Index r, Eigen::Index c) {
    m.resize(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n01(rng);
  };
  fill(p.train.inputs, 20, 3);
  fill(p.train.targets, 20, 2);
  fill(p.test.inputs, 10, 3);
  fill(p.test.targets, 10, 2);
  p.accuracy = AccuracyMode::regression(0.01);
  return p;
}

SphereMinConfig quick_cfg() {
  SphereMinConfig c;
  c.steps = 300;
  c.lr = 1e-2;
  c.check_every = 1;
  return c;
}

ReducedCurve curve_of(const std::vector<double>& train, const std::vector<double>& test) {
  ReducedCurve c;
  c.w0 = 1.0;
  c.num_params = 10;
  for (std::size_t i = 0; i < train.size(); ++i) {
    CurvePoint p;
    p.alpha = 0.5 * static_cast<double>(i + 1);
    p.w = p.alpha;
    p.train_loss = train[i];
    p.test_loss = test[i];
    c.points.push_back(p);
  }
  return c;
}

LandscapeGrid n_grid(const std::vector<double>& n_axis, const Matrix& test_err) {
  LandscapeGrid g;
  g.kind = SecondAxis::data_size;
  g.second_axis = n_axis;
  g.w_axis.resize(static_cast<std::size_t>(test_err.rows()));
  for (std::size_t i = 0; i < g.w_axis.size(); ++i) g.w_axis[i] = 1.0 + static_cast<double>(i);
  g.test_err = test_err;
  g.train_err = Matrix::Zero(test_err.rows(), test_err.cols());
  g.train_loss = g.train_err;
  g.test_loss = test_err;
  g.failed = decltype(g.failed)::Constant(test_err.rows(), test_err.cols(), false);
  return g;
}

}  // namespace

TEST_CASE("sphere minimization stays on the sphere") {
  const auto pr = tiny_problem();
  for (double w : {0.3, 2.0, 25.0}) {
    const auto r = minimize_on_sphere(pr, w, quick_cfg());
    CHECK_FALSE(r.failed);
    CHECK(std::abs(r.params.norm() - w) / w <= 1e-12);
    CHECK(r.max_projection_error <= 1e-12);
    CHECK(r.direction().norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  // minimization lowers the loss of the starting point
  const double w0 = standard_norm(pr.spec, 0);
  const ParamVector start = init_params(pr.spec, derive_seed(0, 21));
  CHECK(start.norm() == w0);
  SphereMinConfig none = quick_cfg();
  none.steps = 0;
  const auto r0 = minimize_on_sphere(pr, w0, none);
  CHECK(r0.train_loss == doctest::Approx(loss_value(forward(pr.spec, start, pr.train.inputs), pr.train,
                                                  LossKind::mse)));
  CHECK(minimize_on_sphere(pr, w0, quick_cfg()).train_loss < r0.train_loss);
  CHECK_THROWS_AS(minimize_on_sphere(pr, 0.0, quick_cfg()), DomainError);
  CHECK_THROWS_AS(minimize_on_sphere(pr, -1.0, quick_cfg()), DomainError);
}

TEST_CASE("restarts keep the lowest training loss") {
  const auto pr = tiny_problem();
  SphereMinConfig c = quick_cfg();
  c.restarts = 3;
  const auto best = minimize_on_sphere(pr, 1.5, c);
  double lowest = std::numeric_limits<double>::infinity();
  for (int r = 0; r < 3; ++r) {
    SphereMinConfig one = quick_cfg();
    one.restarts = r + 1;
    lowest = std::min(lowest, minimize_on_sphere(pr, 1.5, one).train_loss);
  }
  CHECK(best.train_loss == lowest);
}

TEST_CASE("curve and grid agree with direct calls") {
  const auto pr = tiny_problem();
  const auto cfg = quick_cfg();
  const ReducedCurve curve = reduced_curve_1d(pr, {0.5, 1.0, 2.0}, cfg);
  const double w0 = standard_norm(pr.spec, cfg.seed);
  CHECK(curve.w0 == w0);
  CHECK(curve.num_params == pr.spec.num_params());
  const auto direct = minimize_on_sphere(pr, 2.0 * w0, cfg);
  CHECK(curve.points[2].w == 2.0 * w0);
  CHECK(curve.points[2].train_loss == direct.train_loss);
  CHECK(curve.points[2].test_loss == direct.test_loss);

  const ProblemFactory f = [&](double) { return pr; };
  const LandscapeGrid g = reduced_grid(f, "tiny", {1.7}, SecondAxis::messiness, {0.0}, cfg);
  const auto cell = minimize_on_sphere(pr, 1.7, cfg);
  CHECK(g.train_loss(0, 0) == cell.train_loss);
  CHECK(g.test_loss(0, 0) == cell.test_loss);
  CHECK(g.test_err(0, 0) == cell.test_err);
  CHECK(g.meta["C_convention"] == "w0/sqrt(P)");
  CHECK(g.meta["C"].get<double>() == doctest::Approx(w0 / std::sqrt(double(pr.spec.num_params()))));

  CHECK_THROWS_AS(reduced_curve_1d(pr, {1.0, 0.5}, cfg), DomainError);
  CHECK_THROWS_AS(reduced_curve_1d(pr, {0.0, 0.5}, cfg), DomainError);
}

TEST_CASE("results do not depend on the thread count") {
  const ProblemFactory f = [](double s) { return tiny_problem(static_cast<std::uint64_t>(s)); };
  SphereMinConfig cfg = quick_cfg();
  cfg.steps = 100;
  const auto a = reduced_grid(f, "tiny", {0.5, 1.0, 2.0}, SecondAxis::data_size, {1, 2, 3}, cfg, 1);
  const auto b = reduced_grid(f, "tiny", {0.5, 1.0, 2.0}, SecondAxis::data_size, {1, 2, 3}, cfg, 4);
  CHECK(a.train_loss == b.train_loss);
  CHECK(a.test_loss == b.test_loss);
  CHECK(a.test_err == b.test_err);
  const auto ca = reduced_curve_1d(tiny_problem(), {0.5, 1.0, 2.0, 4.0}, cfg, 1);
  const auto cb = reduced_curve_1d(tiny_problem(), {0.5, 1.0, 2.0, 4.0}, cfg, 3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(ca.points[i].train_loss == cb.points[i].train_loss);
}

TEST_CASE("minibatch sphere minimization is seeded") {
  SphereMinConfig cfg = quick_cfg();
  cfg.batch_size = 5;
  const auto a = minimize_on_sphere(tiny_problem(), 1.0, cfg);
  const auto b = minimize_on_sphere(tiny_problem(), 1.0, cfg);
  CHECK(a.params == b.params);
  CHECK(std::abs(a.params.norm() - 1.0) <= 1e-12);
}

TEST_CASE("failed cells are flagged") {
  auto pr = tiny_problem();
  pr.train.inputs(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto r = minimize_on_sphere(pr, 1.0, quick_cfg());
  CHECK(r.failed);
  CHECK(r.failed_step == 1);
  CHECK(std::isnan(r.train_loss));
  const ProblemFactory f = [&](double) { return pr; };
  const auto g = reduced_grid(f, "bad", {1.0}, SecondAxis::messiness, {0.5}, quick_cfg());
  CHECK(g.failed(0, 0));
  const auto back = grid_from_json(grid_to_json(g));
  CHECK(back.failed(0, 0));
  CHECK(std::isnan(back.train_loss(0, 0)));
}

TEST_CASE("regularized landscape") {
  const double w0 = 12.0;
  const std::size_t n = 144;
  const double c = average_parameter_magnitude(w0, n);
  CHECK(c == 1.0);
  ReducedCurve curve = curve_of({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1});
  curve.w0 = w0;
  curve.num_params = n;
  for (auto& p : curve.points) p.w = p.alpha * w0;
  const double gamma = 0.3;
  const auto reg = regularized_train_landscape(curve, gamma, c);
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    // gamma alpha^2 C^2 == gamma w^2 / P
    CHECK(reg.points[i].train_loss - 1.0 == doctest::Approx(gamma * p.w * p.w / n).epsilon(1e-12));
    CHECK(reg.points[i].test_loss == p.test_loss);
  }
  CHECK(regularized_train_landscape(curve, 0.0, c).points[3].train_loss == 1.0);
  CHECK_THROWS_AS(regularized_train_landscape(curve, -1.0, c), DomainError);
  CHECK_THROWS_AS(average_parameter_magnitude(1.0, 0), DomainError);
}

TEST_CASE("shape checks") {
  CHECK(is_non_increasing({5, 4, 3, 3, 2}, 0.0));
  CHECK(is_non_increasing({5, 4, 4.01, 3}, 0.02));
  CHECK_FALSE(is_non_increasing({5, 4, 4.5, 3}, 0.02));
  CHECK_FALSE(is_non_increasing({1, 2, 1, 0}, 0.5));
  CHECK(is_u_shaped({3, 1, 0.5, 1, 3}, 0.05));
  CHECK_FALSE(is_u_shaped({0.5, 1, 2, 3, 4}, 0.05));
  CHECK_FALSE(is_u_shaped({4, 3, 2, 1, 0.5}, 0.05));
  // linear margin misses the small left rise that log scale resolves
  const std::vector<double> skew = {5e-3, 6e-5, 1e-4, 0.05, 0.4};
  CHECK_FALSE(is_u_shaped(skew, 0.05, false));
  CHECK(is_u_shaped(skew, 0.05, true));
  CHECK_FALSE(is_u_shaped({1, 0, 1}, 0.05, true));

  const auto m = shape_metrics(curve_of({1.0, 0.5, 0.2, 0.1, 0.05}, {1.0, 0.5, 0.2, 0.6, 1.5}));
  CHECK(m.argmin_alpha == 1.5);
  CHECK(m.is_l);
  CHECK(m.is_u);
  REQUIRE(m.mismatch_region);
  CHECK(m.mismatch_region->first == 2.0);
  CHECK(m.mismatch_region->second == 2.5);
  const auto flat = shape_metrics(curve_of({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}));
  CHECK(flat.is_l);
  CHECK_FALSE(flat.is_u);
  CHECK_FALSE(flat.mismatch_region);
  CHECK_THROWS_AS(shape_metrics(curve_of({1, 1, 1}, {1, 1, 1})), DomainError);
}

TEST_CASE("critical data size") {
  Matrix e(2, 4);
  e << 0.9, 0.5, 0.2, 0.0,
       0.8, 0.4, 0.05, 0.1;
  const auto g = n_grid({10, 20, 40, 80}, e);
  CHECK(critical_data_size(g, 0.1) == 40.0);
  CHECK(critical_data_size(g, 0.0) == 80.0);
  CHECK(critical_data_size(g, 0.85) == 10.0);
  CHECK_FALSE(critical_data_size(g, -0.1));
  auto masked = g;
  masked.failed(1, 2) = true;
  CHECK(critical_data_size(masked, 0.1) == 80.0);
  auto m_axis = g;
  m_axis.kind = SecondAxis::messiness;
  CHECK_THROWS_AS(critical_data_size(m_axis, 0.1), DomainError);
  auto unordered = n_grid({20, 10, 40, 80}, e);
  CHECK_THROWS_AS(critical_data_size(unordered, 0.1), DomainError);
}

TEST_CASE("axes helpers") {
  const auto l = log_space(0.25, 8.0, 6);
  CHECK(l.front() == 0.25);
  CHECK(l.back() == 8.0);
  for (std::size_t i = 1; i < l.size(); ++i) CHECK(l[i] / l[i - 1] == doctest::Approx(2.0));
  const auto lin = lin_space(0.0, 1.0, 6);
  CHECK(lin[2] == doctest::Approx(0.4));
  CHECK(lin.back() == 1.0);
  CHECK_THROWS_AS(log_space(0.0, 1.0, 3), DomainError);
  CHECK(parse_second_axis("N") == SecondAxis::data_size);
  CHECK(to_string(SecondAxis::messiness) == "m");
  CHECK_THROWS_AS(parse_second_axis("q"), DomainError);
}

TEST_CASE("grid JSON round trip") {
  Matrix e(2, 3);
  e << 0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0;
  auto g = n_grid({5, 10, 20}, e);
  g.meta = {{"task", "test"}};
  g.train_loss(1, 1) = std::numeric_limits<double>::quiet_NaN();
  g.failed(1, 1) = true;
  const auto path = std::filesystem::temp_directory_path() / "groklab_test_grid.json";
  write_grid(g, path);
  const auto back = read_grid(path);
  CHECK(back.w_axis == g.w_axis);
  CHECK(back.second_axis == g.second_axis);
  CHECK(back.kind == g.kind);
  CHECK(back.test_err == g.test_err);
  CHECK(back.failed == g.failed);
  CHECK(std::isnan(back.train_loss(1, 1)));
  CHECK(back.meta["task"] == "test");
  auto j = grid_to_json(g);
  j["test_err"].erase(0);
  CHECK_THROWS_AS(grid_from_json(j), ParseError);
  CHECK_THROWS_AS(read_grid(path.string() + ".missing"), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("problem constructors") {
  const auto ts = make_problem(gen_teacher_student(0, 10, 10));
  CHECK(ts.spec.widths == std::vector<int>{5, 100, 100, 5});
  const auto add = make_problem(gen_addition_task(10, 0.5, 45, 0));
  CHECK(add.train.size() == 45);
  CHECK(add.test.size() == 10);
  CHECK(add.spec.widths.back() == kAdditionTargetDim);
  SphereMinConfig c;
  c.restarts = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = quick_cfg();
  c.restarts = 2;
  const auto back = sphere_config_from_json(to_json(c));
  CHECK(back.restarts == 2);
  CHECK(back.lr == c.lr);
  CHECK(back.steps == c.steps);
}
