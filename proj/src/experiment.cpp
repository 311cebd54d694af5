#include "groklab/experiment.hpp"

#include "groklab/errors.hpp"
#include "groklab/parallel.hpp"
#include "groklab/rng.hpp"
#include "groklab/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace groklab {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::teacher_student: return "teacher-student";
    case TaskKind::addition: return "addition";
    case TaskKind::mnist: return "mnist";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "teacher-student" || s == "teacher_student") return TaskKind::teacher_student;
  if (s == "addition") return TaskKind::addition;
  if (s == "mnist") return TaskKind::mnist;
  throw DomainError("unknown task '" + s + "'");
}

void ExperimentConfig::validate() const {
  optim.validate();
  if (!(alpha > 0.0)) throw DomainError("alpha must be > 0");
  if (steps < 0) throw DomainError("steps must be >= 0");
  if (batch_size < 0) throw DomainError("batch size must be >= 0");
  if (log_every < 0) throw DomainError("log_every must be >= 0");
  if (!(theta > 0.0)) throw DomainError("accuracy threshold theta must be > 0");
  if (task == TaskKind::teacher_student && (n_train < 1 || n_test < 1)) {
    throw DomainError("teacher-student sample counts must be >= 1");
  }
  if (task == TaskKind::addition) {
    if (p < 1) throw DomainError("addition base p must be >= 1");
    if (!(messiness >= 0.0 && messiness <= 1.0)) throw DomainError("messiness must lie in [0, 1]");
    if (train_size < 1 || train_size > p * (p + 1) / 2) throw DomainError("train size out of range");
    if (!(lr_representation > 0.0)) throw DomainError("representation learning rate must be > 0");
  }
  if (task == TaskKind::mnist && (n_train < 1 || mnist_test_subset < 1)) {
    throw DomainError("MNIST subset sizes must be >= 1");
  }
}

ExperimentConfig default_config(TaskKind task) {
  ExperimentConfig c;
  c.task = task;
  switch (task) {
    case TaskKind::teacher_student:
      c.optim.kind = OptimKind::adamw;
      c.optim.lr = 3e-4;
      c.steps = 100000;
      c.n_train = 100;
      c.n_test = 100;
      break;
    case TaskKind::addition:
      c.optim.kind = OptimKind::adamw;
      c.optim.lr = 1e-3;
      c.lr_representation = 1e-3;
      c.steps = 20000;
      break;
    case TaskKind::mnist:
      c.optim.kind = OptimKind::adamw;
      c.optim.lr = 1e-3;
      c.batch_size = 200;
      c.n_train = 1000;
      c.alpha = 9.0;
      c.optim.weight_decay = 0.1;  // inside the 1/gamma range; alpha 9 decays to ~w0 in ~2e4 steps
      c.steps = 100000;
      break;
  }
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = to_string(c.task);
  j["alpha"] = c.alpha;
  j["optimizer"] = to_string(c.optim.kind);
  j["lr"] = c.optim.lr;
  j["beta1"] = c.optim.beta1;
  j["beta2"] = c.optim.beta2;
  j["eps"] = c.optim.eps;
  j["weight_decay"] = c.optim.weight_decay;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["constrained"] = c.constrained;
  j["seed"] = c.seed;
  j["log_every"] = c.log_every;
  j["loss"] = c.loss == LossKind::mse ? "mse" : "ce";
  switch (c.task) {
    case TaskKind::teacher_student:
      j["n_train"] = c.n_train;
      j["n_test"] = c.n_test;
      j["theta"] = c.theta;
      j["regression_error"] = c.regression_error == RegressionError::max_abs ? "max_abs" : "sample_mse";
      break;
    case TaskKind::addition:
      j["p"] = c.p;
      j["messiness"] = c.messiness;
      j["train_size"] = c.train_size;
      j["lr_representation"] = c.lr_representation;
      break;
    case TaskKind::mnist:
      j["n_train"] = c.n_train;
      j["mnist_dir"] = c.mnist_dir;
      j["mnist_test_subset"] = c.mnist_test_subset;
      break;
  }
  if (c.stop_at_accuracy) j["stop_at_accuracy"] = *c.stop_at_accuracy;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c) {
  if (!j.is_object()) throw DomainError("experiment config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "task") c.task = parse_task_kind(v.get<std::string>());
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "optimizer") c.optim.kind = parse_optim_kind(v.get<std::string>());
      else if (key == "lr") c.optim.lr = v.get<double>();
      else if (key == "beta1") c.optim.beta1 = v.get<double>();
      else if (key == "beta2") c.optim.beta2 = v.get<double>();
      else if (key == "eps") c.optim.eps = v.get<double>();
      else if (key == "weight_decay") c.optim.weight_decay = v.get<double>();
      else if (key == "steps") c.steps = v.get<std::int64_t>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "constrained") c.constrained = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "log_every") c.log_every = v.get<std::int64_t>();
      else if (key == "loss") c.loss = parse_loss_kind(v.get<std::string>());
      else if (key == "n_train") c.n_train = v.get<int>();
      else if (key == "n_test") c.n_test = v.get<int>();
      else if (key == "theta") c.theta = v.get<double>();
      else if (key == "regression_error") {
        const auto e = v.get<std::string>();
        if (e == "max_abs") c.regression_error = RegressionError::max_abs;
        else if (e == "sample_mse") c.regression_error = RegressionError::sample_mse;
        else throw DomainError("unknown regression_error '" + e + "'");
      }
      else if (key == "p") c.p = v.get<int>();
      else if (key == "messiness") c.messiness = v.get<double>();
      else if (key == "train_size") c.train_size = v.get<int>();
      else if (key == "lr_representation") c.lr_representation = v.get<double>();
      else if (key == "mnist_dir") c.mnist_dir = v.get<std::string>();
      else if (key == "mnist_test_subset") c.mnist_test_subset = v.get<int>();
      else if (key == "stop_at_accuracy") c.stop_at_accuracy = v.get<double>();
      else throw DomainError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad config value: ") + e.what());
  }
  return c;
}

std::vector<std::int64_t> log_schedule(std::int64_t steps, std::int64_t log_every) {
  std::vector<std::int64_t> out;
  if (log_every > 0) {
    for (std::int64_t s = 0; s <= steps; s += log_every) out.push_back(s);
  } else {
    std::int64_t s = 0;
    while (s <= steps) {
      out.push_back(s);
      s = s < 100 ? s + 1 : s + (s + 9) / 10;  // ceil(1.1 s) in integers
    }
  }
  if (out.back() != steps) out.push_back(steps);
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr std::uint64_t kStreamStudent = 11;
constexpr std::uint64_t kStreamMinibatch = 12;
constexpr std::uint64_t kStreamMnistSubset = 13;
constexpr std::uint64_t kStreamMnistTest = 14;

struct PreparedTask {
  MlpSpec spec;
  Batch train;
  Batch test;
  AccuracyMode accuracy;
  std::optional<AdditionTask> addition;  // set when the representation is trainable
};

std::filesystem::path mnist_directory(const ExperimentConfig& cfg) {
  if (!cfg.mnist_dir.empty()) return cfg.mnist_dir;
  if (const char* env = std::getenv("GROKLAB_MNIST_DIR"); env != nullptr && *env != '\0') return env;
  throw IoError("MNIST directory not given (use --mnist-dir or GROKLAB_MNIST_DIR)");
}

PreparedTask prepare_task(const ExperimentConfig& cfg) {
  PreparedTask t;
  switch (cfg.task) {
    case TaskKind::teacher_student: {
      auto ts = gen_teacher_student(cfg.seed, cfg.n_train, cfg.n_test);
      t.spec = teacher_student_spec();
      t.train = std::move(ts.train);
      t.test = std::move(ts.test);
      t.accuracy = AccuracyMode::regression(cfg.theta, cfg.regression_error);
      break;
    }
    case TaskKind::addition: {
      auto add = gen_addition_task(cfg.p, cfg.messiness, cfg.train_size, cfg.seed);
      t.spec = addition_decoder_spec();
      t.accuracy = add.accuracy_mode();
      t.addition = std::move(add);
      break;
    }
    case TaskKind::mnist: {
      auto full = load_mnist(MnistPaths::in_directory(mnist_directory(cfg)));
      t.spec = {{784, 200, 200, kMnistClasses}, Activation::relu, cfg.loss};
      t.train = subset(full.train, static_cast<std::size_t>(cfg.n_train),
                       derive_seed(cfg.seed, kStreamMnistSubset));
      const auto test_n = std::min<std::size_t>(cfg.mnist_test_subset, full.test.size());
      t.test = subset(full.test, test_n, derive_seed(cfg.seed, kStreamMnistTest));
      t.accuracy = AccuracyMode::argmax();
      break;
    }
  }
  return t;
}

struct Evaluation {
  double loss = 0.0;
  double acc = 0.0;
};

Evaluation evaluate(const MlpSpec& spec, const ParamVector& params, const Batch& batch,
                    const AccuracyMode& mode) {
  const Matrix y = forward(spec, params, batch.inputs);
  return {loss_value(y, batch, spec.loss), accuracy(y, batch, mode)};
}

class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t population, std::size_t batch, std::uint64_t seed)
      : order_(population), batch_(batch), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    cursor_ = population;
  }

  std::span<const std::size_t> next() {
    if (cursor_ + batch_ > order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    std::span<const std::size_t> out(order_.data() + cursor_, batch_);
    cursor_ += batch_;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_;
  Rng rng_;
};

}  // namespace

RunRecords run_training(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  RunRecords rec;
  rec.config = to_json(cfg);

  PreparedTask task = prepare_task(cfg);
  const MlpSpec& spec = task.spec;
  ParamVector params = init_params(spec, derive_seed(cfg.seed, kStreamStudent));
  rec.initial_norm = params.norm();
  params = scale_params(std::move(params), cfg.alpha);
  const double target_norm = cfg.alpha * rec.initial_norm;

  std::vector<double> representation;
  if (task.addition) representation = task.addition->representation;

  OptimConfig decoder_cfg = cfg.optim;
  if (cfg.constrained) decoder_cfg.weight_decay = 0.0;
  Optimizer decoder_opt(decoder_cfg);
  OptimConfig rep_cfg = cfg.optim;
  rep_cfg.lr = cfg.lr_representation;
  rep_cfg.weight_decay = 0.0;
  Optimizer rep_opt(rep_cfg);

  auto refresh_addition_batches = [&] {
    task.train = addition_batch(*task.addition, task.addition->train_indices, representation);
    task.test = addition_batch(*task.addition, task.addition->test_indices, representation);
  };
  if (task.addition) refresh_addition_batches();

  const bool minibatch = cfg.batch_size > 0 && cfg.batch_size < task.train.size();
  MinibatchSampler sampler(static_cast<std::size_t>(task.train.size()),
                           minibatch ? static_cast<std::size_t>(cfg.batch_size) : 1,
                           derive_seed(cfg.seed, kStreamMinibatch));

  const auto schedule = log_schedule(cfg.steps, cfg.log_every);
  std::size_t next_log = 0;
  auto log_row = [&](std::int64_t step) {
    if (task.addition) refresh_addition_batches();
    const auto tr = evaluate(spec, params, task.train, task.accuracy);
    const auto te = evaluate(spec, params, task.test, task.accuracy);
    rec.rows.push_back({step, tr.loss, te.loss, tr.acc, te.acc, params.norm()});
    return std::isfinite(tr.loss) && std::isfinite(te.loss);
  };

  ParamVector grad(spec);
  Matrix input_grad;
  std::vector<double> rep_grad(representation.size());

  for (std::int64_t step = 0; step <= cfg.steps; ++step) {
    if (next_log < schedule.size() && schedule[next_log] == step) {
      ++next_log;
      if (!log_row(step)) {
        rec.status = RunStatus::diverged;
        rec.message = "non-finite loss at step " + std::to_string(step);
        break;
      }
      const RunRow& last = rec.rows.back();
      if (cfg.stop_at_accuracy && last.train_acc >= *cfg.stop_at_accuracy &&
          last.test_acc >= *cfg.stop_at_accuracy) {
        break;
      }
    }
    if (step == cfg.steps) break;

    try {
      double loss = 0.0;
      if (task.addition) {
        task.train = addition_batch(*task.addition, task.addition->train_indices, representation);
        loss = loss_grad_into(spec, params, task.train, spec.loss, grad, &input_grad);
        std::fill(rep_grad.begin(), rep_grad.end(), 0.0);
        for (std::size_t r = 0; r < task.addition->train_indices.size(); ++r) {
          const auto& pr = task.addition->pairs[task.addition->train_indices[r]];
          rep_grad[pr.i] += input_grad(static_cast<Eigen::Index>(r), 0);
          rep_grad[pr.j] += input_grad(static_cast<Eigen::Index>(r), 0);
        }
      } else if (minibatch) {
        const Batch b = select_rows(task.train, sampler.next());
        loss = loss_grad_into(spec, params, b, spec.loss, grad);
      } else {
        loss = loss_grad_into(spec, params, task.train, spec.loss, grad);
      }
      if (!std::isfinite(loss)) throw NumericError("non-finite training loss", step + 1);
      decoder_opt.step(params.values(), grad.values());
      if (task.addition) rep_opt.step(representation, rep_grad);
      if (cfg.constrained) project_norm(params.values(), target_norm);
    } catch (const NumericError& e) {
      rec.status = RunStatus::diverged;
      rec.message = e.what();
      break;
    }
  }

  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Metrics and sweeps

Metric parse_metric(const std::string& s) {
  if (s == "train_loss" || s == "train-loss") return Metric::train_loss;
  if (s == "test_loss" || s == "test-loss") return Metric::test_loss;
  if (s == "train_acc" || s == "train-acc") return Metric::train_acc;
  if (s == "test_acc" || s == "test-acc") return Metric::test_acc;
  if (s == "weight_norm" || s == "weight-norm") return Metric::weight_norm;
  throw DomainError("unknown metric '" + s + "'");
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::train_loss: return "train_loss";
    case Metric::test_loss: return "test_loss";
    case Metric::train_acc: return "train_acc";
    case Metric::test_acc: return "test_acc";
    case Metric::weight_norm: return "weight_norm";
  }
  return "?";
}

double metric_value(const RunRow& row, Metric m) {
  switch (m) {
    case Metric::train_loss: return row.train_loss;
    case Metric::test_loss: return row.test_loss;
    case Metric::train_acc: return row.train_acc;
    case Metric::test_acc: return row.test_acc;
    case Metric::weight_norm: return row.weight_norm;
  }
  return 0.0;
}

std::optional<std::int64_t> time_to_level(const RunRecords& records, Metric metric, double level) {
  const bool rising = metric == Metric::train_acc || metric == Metric::test_acc;
  for (const auto& row : records.rows) {
    const double v = metric_value(row, metric);
    if (rising ? v >= level : v <= level) return row.step;
  }
  return std::nullopt;
}

std::optional<PowerLawFit> fit_power_law(const std::vector<double>& x,
                                         const std::vector<std::optional<double>>& y) {
  if (x.size() != y.size()) throw DomainError("fit inputs differ in length");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] && std::isfinite(*y[i]) && *y[i] > 0.0 && x[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(*y[i]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  PowerLawFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  fit.points = lx.size();
  return fit;
}

ExperimentConfig with_param(ExperimentConfig c, const std::string& param, double value) {
  if (param == "weight_decay" || param == "weight-decay") c.optim.weight_decay = value;
  else if (param == "alpha") c.alpha = value;
  else if (param == "lr") c.optim.lr = value;
  else if (param == "n_train" || param == "n-train") c.n_train = static_cast<int>(value);
  else if (param == "train_size" || param == "train-size") c.train_size = static_cast<int>(value);
  else throw DomainError("cannot sweep over '" + param + "'");
  return c;
}

SweepResult sweep_from_outcomes(const std::string& param, const std::vector<double>& values,
                                std::vector<std::optional<std::int64_t>> outcomes, Metric metric,
                                double level) {
  SweepResult r;
  r.param = param;
  r.metric = metric;
  r.level = level;
  r.values = values;
  r.outcomes = std::move(outcomes);
  std::vector<std::optional<double>> y;
  for (const auto& o : r.outcomes) {
    y.push_back(o ? std::optional<double>(static_cast<double>(*o)) : std::nullopt);
  }
  r.fit = fit_power_law(r.values, y);
  if (!r.fit) r.fit_note = "fewer than 2 finite outcomes";
  return r;
}

SweepResult sweep(const ExperimentConfig& base, const std::string& param,
                  const std::vector<double>& values, Metric metric, double level,
                  unsigned threads) {
  std::vector<ExperimentConfig> configs;
  for (double v : values) configs.push_back(with_param(base, param, v));
  for (const auto& c : configs) c.validate();
  std::vector<RunRecords> runs(values.size());
  parallel_for(values.size(), threads, [&](std::size_t i) { runs[i] = run_training(configs[i]); });
  std::vector<std::optional<std::int64_t>> outcomes;
  for (const auto& r : runs) outcomes.push_back(time_to_level(r, metric, level));
  SweepResult result = sweep_from_outcomes(param, values, std::move(outcomes), metric, level);
  result.runs = std::move(runs);
  return result;
}

DegrokResult degrok_experiment(const ExperimentConfig& cfg, const DegrokOptions& options,
                               unsigned threads) {
  if (cfg.task != TaskKind::addition) throw DomainError("de-grokking experiment needs the addition task");
  ExperimentConfig a = cfg;
  a.alpha = options.unconstrained_alpha;
  a.constrained = false;
  ExperimentConfig b = cfg;
  b.alpha = options.constrained_alpha;
  b.constrained = true;
  DegrokResult out;
  parallel_for(2, threads, [&](std::size_t i) {
    if (i == 0) out.unconstrained = run_training(a);
    else out.constrained = run_training(b);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

std::string records_to_csv(const RunRecords& records) {
  std::string out = kRecordsCsvHeader;
  out += '\n';
  for (const auto& r : records.rows) {
    out += std::to_string(r.step);
    for (double v : {r.train_loss, r.test_loss, r.train_acc, r.test_acc, r.weight_norm}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

double parse_double(const std::string& field, const std::string& where) {
  if (field == "nan") return std::nan("");
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw ParseError(where + ": cannot parse number '" + field + "'");
  }
  return v;
}

RunRecords records_from_csv(const std::string& text, const std::string& source) {
  RunRecords rec;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kRecordsCsvHeader) throw ParseError(where + ": unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 6) {
      throw ParseError(where + ": expected 6 fields, found " + std::to_string(fields.size()));
    }
    RunRow row;
    const double step = parse_double(fields[0], where);
    if (step != std::floor(step)) throw ParseError(where + ": step is not an integer");
    row.step = static_cast<std::int64_t>(step);
    row.train_loss = parse_double(fields[1], where);
    row.test_loss = parse_double(fields[2], where);
    row.train_acc = parse_double(fields[3], where);
    row.test_acc = parse_double(fields[4], where);
    row.weight_norm = parse_double(fields[5], where);
    if (!rec.rows.empty() && row.step <= rec.rows.back().step) {
      throw ParseError(where + ": steps must be strictly increasing");
    }
    rec.rows.push_back(row);
  }
  if (line_no == 0) throw ParseError(source + ": empty file");
  return rec;
}

nlohmann::json records_to_json(const RunRecords& records) {
  nlohmann::json j;
  j["config"] = records.config;
  j["status"] = records.status == RunStatus::completed ? "completed" : "diverged";
  j["message"] = records.message;
  j["wall_time_s"] = records.wall_time_s;
  j["initial_norm"] = records.initial_norm;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : records.rows) {
    rows.push_back({{"step", r.step},
                    {"train_loss", r.train_loss},
                    {"test_loss", r.test_loss},
                    {"train_acc", r.train_acc},
                    {"test_acc", r.test_acc},
                    {"weight_norm", r.weight_norm}});
  }
  return j;
}

RunRecords records_from_json(const nlohmann::json& j) {
  RunRecords rec;
  try {
    rec.config = j.value("config", nlohmann::json::object());
    rec.status = j.value("status", std::string("completed")) == "diverged" ? RunStatus::diverged
                                                                           : RunStatus::completed;
    rec.message = j.value("message", std::string());
    rec.wall_time_s = j.value("wall_time_s", 0.0);
    rec.initial_norm = j.value("initial_norm", 0.0);
    for (const auto& r : j.at("rows")) {
      rec.rows.push_back({r.at("step").get<std::int64_t>(), r.at("train_loss").get<double>(),
                          r.at("test_loss").get<double>(), r.at("train_acc").get<double>(),
                          r.at("test_acc").get<double>(), r.at("weight_norm").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed records JSON: ") + e.what());
  }
  return rec;
}

void write_records(const RunRecords& records, const std::filesystem::path& path,
                   RecordFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  if (format == RecordFormat::csv) {
    out << records_to_csv(records);
  } else {
    out << records_to_json(records).dump(2) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_records(const RunRecords& records, const std::filesystem::path& path) {
  write_records(records, path, path.extension() == ".json" ? RecordFormat::json : RecordFormat::csv);
}

RunRecords read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    try {
      return records_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  return records_from_csv(text, path.string());
}

}  // namespace groklab
