#pragma once

// Dense MLP engine: parameter layout, initialization, forward/backward,
// losses and accuracy. Everything is 64-bit.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace groklab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { tanh, relu };
enum class LossKind { mse, cross_entropy };

std::string to_string(Activation a);
std::string to_string(LossKind k);
Activation parse_activation(const std::string& s);
LossKind parse_loss_kind(const std::string& s);

// Weight init bound per layer of fan-in f. kaiming: sqrt(6/f) for relu and
// 1/sqrt(f) for tanh. fan_in: 1/sqrt(f) for every activation (the PyTorch
// nn.Linear default). Biases always use 1/sqrt(f).
enum class InitScheme { kaiming, fan_in };

std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

struct MlpSpec {
  std::vector<int> widths;
  Activation activation = Activation::tanh;
  LossKind loss = LossKind::mse;
  InitScheme init = InitScheme::kaiming;

  // Throws DomainError unless there are >= 2 widths, all >= 1.
  void validate() const;
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  std::size_t num_params() const;
};

// Layer l maps widths[l] -> widths[l+1]. Its weight is stored as a
// rows x cols = out x in row-major block followed by the out biases.
struct LayerShape {
  int rows = 0;
  int cols = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

class ParamVector {
 public:
  ParamVector() = default;
  // All-zero parameters laid out for `spec`.
  explicit ParamVector(const MlpSpec& spec);

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<LayerShape>& layout() const { return layout_; }

  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<Vector> bias(int layer);
  Eigen::Map<const Vector> bias(int layer) const;

  // L2 norm over every entry, biases included.
  double norm() const;

  bool operator==(const ParamVector& other) const { return values_ == other.values_; }

 private:
  // Aligned so vectorized reductions round the same way on every thread.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
  std::vector<LayerShape> layout_;
};

double l2_norm(std::span<const double> v);

// Uniform draw with the bounds of spec.init.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

// Multiplies every entry by alpha > 0.
ParamVector scale_params(ParamVector p, double alpha);

struct Batch {
  Matrix inputs;
  Matrix targets;
  std::vector<int> labels;  // empty when the task has no class labels

  Eigen::Index size() const { return inputs.rows(); }
  bool has_labels() const { return !labels.empty(); }
  void validate() const;
};

Matrix forward(const MlpSpec& spec, const ParamVector& p, const Matrix& inputs);

double loss_value(const Matrix& outputs, const Batch& batch, LossKind kind);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

LossGrad loss_grad(const MlpSpec& spec, const ParamVector& p, const Batch& batch, LossKind kind);
inline LossGrad loss_grad(const MlpSpec& spec, const ParamVector& p, const Batch& batch) {
  return loss_grad(spec, p, batch, spec.loss);
}

// Allocation-light variant for training loops. `grad` must already have the
// layout of `p`. When `input_grad` is non-null it receives dloss/dinputs.
double loss_grad_into(const MlpSpec& spec, const ParamVector& p, const Batch& batch,
                      LossKind kind, ParamVector& grad, Matrix* input_grad = nullptr);

// Per-sample error compared against theta in regression mode.
enum class RegressionError {
  sample_mse,  // mean over output dims of squared error
  max_abs,     // max over output dims of |error|
};

struct AccuracyMode {
  enum class Kind { regression_threshold, argmax, nearest_target };
  Kind kind = Kind::argmax;
  double theta = 0.01;
  RegressionError error = RegressionError::sample_mse;
  // Candidate output rows for nearest_target, one per class.
  std::shared_ptr<const Matrix> target_table;

  static AccuracyMode regression(double theta,
                                 RegressionError error = RegressionError::sample_mse);
  static AccuracyMode argmax();
  static AccuracyMode nearest(std::shared_ptr<const Matrix> table);
};

// regression_threshold: a sample is correct when its error (see
// RegressionError) is below theta.
// argmax: correct when the row argmax (lowest index on ties) equals the label.
// nearest_target: correct when the closest table row (squared L2, lowest
// index on ties) is the label's row.
double accuracy(const Matrix& outputs, const Batch& batch, const AccuracyMode& mode);

}  // namespace groklab
