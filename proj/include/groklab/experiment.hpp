#pragma once

// Training runs, metrics over time, weight-decay sweeps and the de-grokking
// pair, plus the CSV/JSON record formats.

#include "groklab/nn.hpp"
#include "groklab/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace groklab {

enum class TaskKind { teacher_student, addition, mnist };

std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

struct ExperimentConfig {
  TaskKind task = TaskKind::teacher_student;

  // teacher-student
  int n_train = 100;
  int n_test = 100;
  double theta = 0.01;
  RegressionError regression_error = RegressionError::sample_mse;

  // addition
  int p = 10;
  double messiness = 1.0;
  int train_size = 45;
  double lr_representation = 1e-3;  // eta_R; the decoder uses optim.lr (eta_D)

  // mnist
  std::string mnist_dir;
  int mnist_test_subset = 2000;
  LossKind loss = LossKind::mse;

  double alpha = 1.0;
  OptimConfig optim;
  std::int64_t steps = 100000;
  int batch_size = 0;  // 0 = full batch
  bool constrained = false;  // pin the weight norm at alpha * w0 after every step
  std::uint64_t seed = 0;
  std::int64_t log_every = 0;  // 0 = every step to 100, then geometric x1.1

  // Optional early exit once both train and test accuracy reach this level.
  std::optional<double> stop_at_accuracy;

  void validate() const;
};

// Task-specific defaults (optimizer, learning rate, batch mode, steps).
ExperimentConfig default_config(TaskKind task);

nlohmann::json to_json(const ExperimentConfig& c);
// Applies the keys present in `j` on top of `base`.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base);

struct RunRow {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double weight_norm = 0.0;

  bool operator==(const RunRow&) const = default;
};

enum class RunStatus { completed, diverged };

struct RunRecords {
  std::vector<RunRow> rows;
  nlohmann::json config;  // echo of the producing ExperimentConfig
  RunStatus status = RunStatus::completed;
  std::string message;
  double wall_time_s = 0.0;
  double initial_norm = 0.0;  // w0 of the standard draw before scaling
};

// Steps at which run_training evaluates metrics.
std::vector<std::int64_t> log_schedule(std::int64_t steps, std::int64_t log_every);

RunRecords run_training(const ExperimentConfig& config);

enum class Metric { train_loss, test_loss, train_acc, test_acc, weight_norm };
Metric parse_metric(const std::string& s);
std::string to_string(Metric m);
double metric_value(const RunRow& row, Metric m);

// First logged step at which an accuracy metric is >= level, or a loss /
// norm metric is <= level.
std::optional<std::int64_t> time_to_level(const RunRecords& records, Metric metric, double level);

struct PowerLawFit {
  double slope = 0.0;      // d log t / d log x
  double intercept = 0.0;  // natural-log units
  double residual = 0.0;   // RMS of log residuals
  std::size_t points = 0;
};

// Least squares of log y on log x over pairs with finite positive entries.
std::optional<PowerLawFit> fit_power_law(const std::vector<double>& x,
                                         const std::vector<std::optional<double>>& y);

struct SweepResult {
  std::string param;
  Metric metric = Metric::test_acc;
  double level = 0.0;
  std::vector<double> values;
  std::vector<std::optional<std::int64_t>> outcomes;
  std::vector<RunRecords> runs;
  std::optional<PowerLawFit> fit;
  std::string fit_note;  // why the fit is missing, when it is
};

// Sets `param` (weight_decay, alpha, lr, n_train, train_size) on a copy of
// `base`. Throws DomainError for unknown parameters.
ExperimentConfig with_param(ExperimentConfig base, const std::string& param, double value);

// Independent runs per value, executed on up to `threads` workers; results
// match sequential execution.
SweepResult sweep(const ExperimentConfig& base, const std::string& param,
                  const std::vector<double>& values, Metric metric, double level,
                  unsigned threads = 1);

// Builds the sweep result from precomputed time-to-level outcomes.
SweepResult sweep_from_outcomes(const std::string& param, const std::vector<double>& values,
                                std::vector<std::optional<std::int64_t>> outcomes, Metric metric,
                                double level);

struct DegrokResult {
  RunRecords unconstrained;
  RunRecords constrained;
};

struct DegrokOptions {
  double unconstrained_alpha = 1.0;
  double constrained_alpha = 0.8;
};

// Addition task only. Run A keeps weight decay and no norm constraint; run B
// pins the weight norm at constrained_alpha * w0.
DegrokResult degrok_experiment(const ExperimentConfig& addition_config,
                               const DegrokOptions& options = {}, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Persistence

inline constexpr const char* kRecordsCsvHeader =
    "step,train_loss,test_loss,train_acc,test_acc,weight_norm";

enum class RecordFormat { csv, json };

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
// Inverse of format_double; ParseError prefixed with `where` otherwise.
double parse_double(const std::string& field, const std::string& where);

void write_records(const RunRecords& records, const std::filesystem::path& path,
                   RecordFormat format);
// Format inferred from the extension (.json, otherwise CSV).
void write_records(const RunRecords& records, const std::filesystem::path& path);
RunRecords read_records(const std::filesystem::path& path);

std::string records_to_csv(const RunRecords& records);
RunRecords records_from_csv(const std::string& text, const std::string& source = "<memory>");
nlohmann::json records_to_json(const RunRecords& records);
RunRecords records_from_json(const nlohmann::json& j);

}  // namespace groklab
