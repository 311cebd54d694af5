#include "groklab/errors.hpp"
#include "groklab/nn.hpp"
#include "groklab/rng.hpp"
#include "groklab/tasks.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace groklab;

namespace {

Batch random_batch(const MlpSpec& spec, int n, std::uint64_t seed, bool labels = false) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  Batch b;
  b.inputs.resize(n, spec.input_width());
  b.targets.resize(n, spec.output_width());
  for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < b.targets.size(); ++i) b.targets.data()[i] = nd(rng);
  if (labels) {
    b.targets.setZero();
    for (int i = 0; i < n; ++i) {
      const int k = static_cast<int>(rng() % spec.output_width());
      b.labels.push_back(k);
      b.targets(i, k) = 1.0;
    }
  }
  return b;
}

// Independent forward pass with plain loops and std::tanh.
Matrix naive_forward(const MlpSpec& spec, const ParamVector& p, const Matrix& x) {
  Matrix out(x.rows(), spec.output_width());
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    std::vector<double> a(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) a[j] = x(n, j);
    for (int l = 0; l < spec.num_layers(); ++l) {
      const auto W = p.weight(l);
      const auto b = p.bias(l);
      std::vector<double> z(W.rows());
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        double s = b[i];
        for (Eigen::Index j = 0; j < W.cols(); ++j) s += W(i, j) * a[j];
        if (l + 1 < spec.num_layers()) {
          s = spec.activation == Activation::tanh ? std::tanh(s) : std::max(0.0, s);
        }
        z[i] = s;
      }
      a = z;
    }
    for (std::size_t i = 0; i < a.size(); ++i) out(n, static_cast<Eigen::Index>(i)) = a[i];
  }
  return out;
}

// Central differences on 50 spread-out coordinates; returns the norm-wise
// relative error ||fd - g|| / ||fd||.
double fd_relative_error(const MlpSpec& spec, const ParamVector& p, const Batch& b) {
  const LossGrad lg = loss_grad(spec, p, b);
  const double h = 1e-5;
  double num = 0, den = 0;
  Rng rng(99);
  for (int k = 0; k < 50; ++k) {
    const std::size_t i = rng() % p.size();
    ParamVector q = p, r = p;
    q[i] += h;
    r[i] -= h;
    const double fd = (loss_value(forward(spec, q, b.inputs), b, spec.loss) -
                       loss_value(forward(spec, r, b.inputs), b, spec.loss)) /
                      (2 * h);
    num += (fd - lg.grad[i]) * (fd - lg.grad[i]);
    den += fd * fd;
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("parameter layout and init") {
  const MlpSpec small{{2, 3}, Activation::tanh, LossKind::mse};
  CHECK(ParamVector(small).size() == 9);
  CHECK(small.num_params() == 9);

  const MlpSpec relu{{5, 100, 100, 5}, Activation::relu, LossKind::mse};
  const ParamVector a = init_params(relu, 0);
  CHECK(a == init_params(relu, 0));
  CHECK_FALSE(a == init_params(relu, 1));
  for (int l = 0; l < relu.num_layers(); ++l) {
    const double f = relu.widths[l];
    CHECK(a.weight(l).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / f));
    CHECK(a.bias(l).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(f));
    // a uniform draw of this size comes close to its bound
    CHECK(a.weight(l).cwiseAbs().maxCoeff() > 0.9 * std::sqrt(6.0 / f));
  }

  MlpSpec fan = relu;
  fan.init = InitScheme::fan_in;
  const ParamVector b = init_params(fan, 0);
  for (int l = 0; l < fan.num_layers(); ++l) {
    CHECK(b.weight(l).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(double(fan.widths[l])));
  }

  const ParamVector t = init_params(teacher_student_spec(), 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(t.weight(l).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(double(teacher_student_spec().widths[l])));
  }
}

TEST_CASE("layout: weight block is out x in row-major, then bias") {
  const MlpSpec s{{2, 3, 1}, Activation::tanh, LossKind::mse};
  ParamVector p(s);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = double(i);
  CHECK(p.weight(0)(0, 1) == 1.0);
  CHECK(p.weight(0)(2, 0) == 4.0);
  CHECK(p.bias(0)[0] == 6.0);
  CHECK(p.weight(1)(0, 2) == 11.0);
  CHECK(p.bias(1)[0] == 12.0);
  CHECK(p.norm() == doctest::Approx(std::sqrt(650.0)).epsilon(1e-15));
}

TEST_CASE("scale_params") {
  const MlpSpec s{{3, 4, 2}, Activation::tanh, LossKind::mse};
  const ParamVector p = init_params(s, 5);
  CHECK(scale_params(p, 2.5).norm() == doctest::Approx(2.5 * p.norm()).epsilon(1e-14));
  CHECK_THROWS_AS(scale_params(p, 0.0), DomainError);
  CHECK_THROWS_AS(scale_params(p, -1.0), DomainError);
}

TEST_CASE("forward matches a naive loop implementation") {
  for (Activation act : {Activation::tanh, Activation::relu}) {
    const MlpSpec s{{5, 17, 9, 4}, act, LossKind::mse};
    const ParamVector p = scale_params(init_params(s, 7), 3.0);
    const Batch b = random_batch(s, 13, 1);
    const Matrix y = forward(s, p, b.inputs);
    CHECK((y - naive_forward(s, p, b.inputs)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loss values against hand computation") {
  Batch b;
  b.inputs = Matrix::Zero(2, 1);
  b.targets.resize(2, 2);
  b.targets << 1, 0, 0, 1;
  b.labels = {0, 1};
  Matrix y(2, 2);
  y << 0.5, 0.0, 1.0, 3.0;
  // mean over N * d_out of squared error
  CHECK(loss_value(y, b, LossKind::mse) == doctest::Approx((0.25 + 0 + 1 + 4) / 4.0));
  const double ce = (-(0.5 - std::log(std::exp(0.5) + 1.0)) - (3.0 - std::log(std::exp(1.0) + std::exp(3.0)))) / 2;
  CHECK(loss_value(y, b, LossKind::cross_entropy) == doctest::Approx(ce).epsilon(1e-14));

  Matrix big(2, 2);
  big << 1000.0, 0.0, 0.0, 1000.0;
  CHECK(loss_value(big, b, LossKind::cross_entropy) == doctest::Approx(0.0));
}

TEST_CASE("gradients match central finite differences") {
  SUBCASE("tanh mse, teacher-student architecture") {
    const MlpSpec s = teacher_student_spec();
    const ParamVector p = init_params(s, 1);
    CHECK(fd_relative_error(s, p, random_batch(s, 20, 2)) <= 1e-5);
  }
  SUBCASE("tanh mse at large scale") {
    const MlpSpec s = teacher_student_spec();
    const ParamVector p = scale_params(init_params(s, 1), 2.0);
    CHECK(fd_relative_error(s, p, random_batch(s, 20, 3)) <= 1e-5);
  }
  SUBCASE("relu mse") {
    const MlpSpec s{{5, 40, 40, 5}, Activation::relu, LossKind::mse};
    CHECK(fd_relative_error(s, init_params(s, 4), random_batch(s, 20, 4)) <= 1e-5);
  }
  SUBCASE("relu cross-entropy") {
    const MlpSpec s{{6, 30, 30, 10}, Activation::relu, LossKind::cross_entropy};
    CHECK(fd_relative_error(s, init_params(s, 5), random_batch(s, 25, 5, true)) <= 1e-5);
  }
}

TEST_CASE("input gradient matches finite differences") {
  const MlpSpec s{{3, 12, 2}, Activation::tanh, LossKind::mse};
  const ParamVector p = init_params(s, 8);
  Batch b = random_batch(s, 4, 6);
  ParamVector g(s);
  Matrix dx;
  loss_grad_into(s, p, b, s.loss, g, &dx);
  REQUIRE(dx.rows() == 4);
  REQUIRE(dx.cols() == 3);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      Batch bp = b, bm = b;
      bp.inputs(i, j) += h;
      bm.inputs(i, j) -= h;
      const double fd = (loss_value(forward(s, p, bp.inputs), bp, s.loss) -
                         loss_value(forward(s, p, bm.inputs), bm, s.loss)) / (2 * h);
      CHECK(dx(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("loss_grad and loss_grad_into agree") {
  const MlpSpec s{{4, 8, 3}, Activation::relu, LossKind::mse};
  const ParamVector p = init_params(s, 2);
  const Batch b = random_batch(s, 6, 9);
  const LossGrad lg = loss_grad(s, p, b);
  ParamVector g(s);
  const double l = loss_grad_into(s, p, b, s.loss, g);
  CHECK(l == lg.loss);
  CHECK(g == lg.grad);
  CHECK(l == doctest::Approx(loss_value(forward(s, p, b.inputs), b, s.loss)).epsilon(1e-14));
}

TEST_CASE("accuracy modes") {
  Batch b;
  b.inputs = Matrix::Zero(3, 1);
  b.targets.resize(3, 2);
  b.targets << 0, 0, 1, 1, 0.5, 0.5;
  b.labels = {0, 1, 1};
  Matrix y(3, 2);
  y << 0.05, -0.05, 1.0, 1.0, 0.5, 0.9;

  SUBCASE("regression threshold on per-sample mse") {
    // errors: 0.0025, 0, 0.08
    CHECK(accuracy(y, b, AccuracyMode::regression(0.01)) == doctest::Approx(2.0 / 3));
    CHECK(accuracy(y, b, AccuracyMode::regression(0.001)) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("regression threshold on max abs") {
    CHECK(accuracy(y, b, AccuracyMode::regression(0.06, RegressionError::max_abs)) ==
          doctest::Approx(2.0 / 3));
  }
  SUBCASE("argmax breaks ties toward the lowest index") {
    // row 1 ties at index 0, label 1 -> wrong
    CHECK(accuracy(y, b, AccuracyMode::argmax()) == doctest::Approx(2.0 / 3));
  }
  SUBCASE("nearest target") {
    auto table = std::make_shared<Matrix>(2, 2);
    *table << 0, 0, 1, 1;
    // row 2 (0.5, 0.9) is closer to (1, 1)
    CHECK(accuracy(y, b, AccuracyMode::nearest(table)) == doctest::Approx(1.0));
  }
}

TEST_CASE("spec validation and string round trips") {
  CHECK_THROWS_AS((MlpSpec{{3}, Activation::tanh, LossKind::mse}.validate()), DomainError);
  CHECK_THROWS_AS((MlpSpec{{3, 0, 2}, Activation::tanh, LossKind::mse}.validate()), DomainError);
  CHECK(parse_activation(to_string(Activation::relu)) == Activation::relu);
  CHECK(parse_loss_kind("ce") == LossKind::cross_entropy);
  CHECK(parse_loss_kind(to_string(LossKind::mse)) == LossKind::mse);
  CHECK(parse_init_scheme(to_string(InitScheme::fan_in)) == InitScheme::fan_in);
  CHECK_THROWS_AS(parse_activation("sigmoid"), DomainError);
}
