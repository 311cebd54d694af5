#pragma once

#include "groklab/nn.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace groklab {

enum class OptimKind { sgd, adam, adamw };

std::string to_string(OptimKind k);
OptimKind parse_optim_kind(const std::string& s);

struct OptimConfig {
  OptimKind kind = OptimKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

struct OptimState {
  std::int64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

// One update, in place.
//   sgd:   p <- p - lr (g + wd p)
//   adam:  Adam on g + wd p (coupled L2)
//   adamw: p <- p (1 - lr wd) - lr adam(g) (decoupled)
// Throws NumericError (carrying the step index) if g has a non-finite entry.
void opt_step(const OptimConfig& cfg, OptimState& state, std::span<double> params,
              std::span<const double> grad);

// Value-semantics form.
struct OptimStepResult {
  ParamVector params;
  OptimState state;
};
OptimStepResult opt_step(const OptimConfig& cfg, OptimState state, ParamVector params,
                         const ParamVector& grad);

class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void step(std::span<double> params, std::span<const double> grad) {
    opt_step(cfg_, state_, params, grad);
  }
  const OptimConfig& config() const { return cfg_; }
  const OptimState& state() const { return state_; }

 private:
  OptimConfig cfg_;
  OptimState state_;
};

// Rescales p so that its L2 norm equals target. Throws DomainError on a
// zero-norm input or non-positive target.
void project_norm(std::span<double> p, double target);
ParamVector project_norm(ParamVector p, double target);

// Joint projection of several parameter groups sharing one global norm.
void project_norm(std::span<const std::span<double>> groups, double target);

// w0 exp(-gamma t)
double decay_norm_prediction(double w0, double gamma, double t);

}  // namespace groklab
