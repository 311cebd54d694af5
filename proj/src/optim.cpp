#include "groklab/optim.hpp"

#include "groklab/errors.hpp"

#include <Eigen/Core>

#include <cmath>

namespace groklab {

std::string to_string(OptimKind k) {
  switch (k) {
    case OptimKind::sgd: return "sgd";
    case OptimKind::adam: return "adam";
    case OptimKind::adamw: return "adamw";
  }
  return "?";
}

OptimKind parse_optim_kind(const std::string& s) {
  if (s == "sgd") return OptimKind::sgd;
  if (s == "adam") return OptimKind::adam;
  if (s == "adamw") return OptimKind::adamw;
  throw DomainError("unknown optimizer '" + s + "'");
}

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw DomainError("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw DomainError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw DomainError("Adam eps must be > 0");
}

void opt_step(const OptimConfig& cfg, OptimState& state, std::span<double> params,
              std::span<const double> grad) {
  if (params.size() != grad.size()) throw DomainError("parameter/gradient layout mismatch");
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient entry", state.step + 1);
  }
  const std::size_t n = params.size();
  const double lr = cfg.lr;
  const double wd = cfg.weight_decay;
  ++state.step;

  if (cfg.kind == OptimKind::sgd) {
    for (std::size_t i = 0; i < n; ++i) params[i] -= lr * (grad[i] + wd * params[i]);
    return;
  }

  if (state.first_moment.size() != n) {
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  using Arr = Eigen::Map<Eigen::ArrayXd>;
  Arr p(params.data(), n);
  Arr m(state.first_moment.data(), n);
  Arr v(state.second_moment.data(), n);
  Eigen::Map<const Eigen::ArrayXd> g(grad.data(), n);
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  if (cfg.kind == OptimKind::adam) {
    const Eigen::ArrayXd gc = g + wd * p;
    m = b1 * m + (1.0 - b1) * gc;
    v = b2 * v + (1.0 - b2) * gc.square();
    p -= lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
  } else {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    p = p * (1.0 - lr * wd) - lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
  }
}

OptimStepResult opt_step(const OptimConfig& cfg, OptimState state, ParamVector params,
                         const ParamVector& grad) {
  opt_step(cfg, state, params.values(), grad.values());
  return {std::move(params), std::move(state)};
}

void project_norm(std::span<double> p, double target) {
  std::span<double> groups[] = {p};
  project_norm(std::span<const std::span<double>>(groups), target);
}

ParamVector project_norm(ParamVector p, double target) {
  project_norm(p.values(), target);
  return p;
}

void project_norm(std::span<const std::span<double>> groups, double target) {
  if (!(target > 0.0)) throw DomainError("projection target norm must be > 0");
  double sq = 0.0;
  for (auto g : groups) {
    const double n = l2_norm(g);
    sq += n * n;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) throw DomainError("cannot project a zero-norm parameter vector");
  const double factor = target / norm;
  for (auto g : groups) {
    for (double& v : g) v *= factor;
  }
}

double decay_norm_prediction(double w0, double gamma, double t) {
  if (!(w0 > 0.0)) throw DomainError("initial norm must be > 0");
  return w0 * std::exp(-gamma * t);
}

}  // namespace groklab
