// groklab command-line interface: train, landscape, dynamics, sweep, plot.

#include "groklab/dynamics.hpp"
#include "groklab/errors.hpp"
#include "groklab/experiment.hpp"
#include "groklab/landscape.hpp"
#include "groklab/parallel.hpp"
#include "groklab/plot.hpp"
#include "groklab/tasks.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace groklab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;
constexpr int kExitDiverged = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw DomainError(path + ": malformed JSON: " + e.what());
  }
}

// "a,b,c", "log:lo:hi:n" or "lin:lo:hi:n".
std::vector<double> parse_values(const std::string& spec, const std::string& flag) {
  try {
    auto parts = [](const std::string& s, char sep) {
      std::vector<std::string> out;
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, sep)) out.push_back(item);
      return out;
    };
    if (spec.rfind("log:", 0) == 0 || spec.rfind("lin:", 0) == 0) {
      const auto p = parts(spec, ':');
      if (p.size() != 4) throw DomainError("expected kind:lo:hi:n");
      const double lo = std::stod(p[1]), hi = std::stod(p[2]);
      const int n = std::stoi(p[3]);
      return p[0] == "log" ? log_space(lo, hi, n) : lin_space(lo, hi, n);
    }
    std::vector<double> out;
    for (const auto& s : parts(spec, ',')) out.push_back(std::stod(s));
    if (out.empty()) throw DomainError("empty list");
    return out;
  } catch (const std::exception& e) {
    throw DomainError(flag + ": cannot parse '" + spec + "' (" + e.what() + ")");
  }
}

std::pair<double, double> parse_point(const std::string& s, const std::string& flag) {
  const auto v = parse_values(s, flag);
  if (v.size() != 2) throw DomainError(flag + " expects 'w,m'");
  return {v[0], v[1]};
}

// Training flags shared by `train` and `sweep`. Each set flag becomes a
// config key applied after the --config file.
struct TrainFlags {
  std::string config_file;
  std::string task;
  double alpha = 0, weight_decay = 0, lr = 0, messiness = 0, lr_repr = 0, theta = 0;
  std::string optimizer, mnist_dir, loss;
  std::int64_t steps = 0, log_every = 0;
  int batch_size = 0, p = 0, n_train = 0;
  std::uint64_t seed = 0;
  bool constrained = false;

  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app) {
    opts["config"] = app->add_option("--config", config_file, "JSON ExperimentConfig file");
    opts["task"] = app->add_option("--task", task, "teacher-student | addition | mnist");
    opts["alpha"] = app->add_option("--alpha", alpha, "initialization scale")->check(CLI::PositiveNumber);
    opts["weight_decay"] =
        app->add_option("--weight-decay", weight_decay, "weight decay gamma")->check(CLI::NonNegativeNumber);
    opts["optimizer"] = app->add_option("--optimizer", optimizer, "sgd | adam | adamw");
    opts["lr"] = app->add_option("--lr", lr, "learning rate (decoder for addition)")->check(CLI::PositiveNumber);
    opts["lr_representation"] =
        app->add_option("--lr-representation", lr_repr, "addition representation learning rate")
            ->check(CLI::PositiveNumber);
    opts["steps"] = app->add_option("--steps", steps, "optimizer steps")->check(CLI::NonNegativeNumber);
    opts["batch_size"] =
        app->add_option("--batch-size", batch_size, "minibatch size, 0 = full batch")->check(CLI::NonNegativeNumber);
    opts["constrained"] = app->add_flag("--constrained-norm", constrained,
                                        "pin the weight norm at alpha * w0 after every step");
    opts["seed"] = app->add_option("--seed", seed, "seed");
    opts["p"] = app->add_option("--p", p, "addition base")->check(CLI::PositiveNumber);
    opts["messiness"] = app->add_option("--messiness", messiness, "addition representation messiness m")
                            ->check(CLI::Range(0.0, 1.0));
    opts["n_train"] = app->add_option("--n-train", n_train, "training set size")->check(CLI::PositiveNumber);
    opts["mnist_dir"] = app->add_option("--mnist-dir", mnist_dir, "directory with the MNIST IDX files");
    opts["loss"] = app->add_option("--loss", loss, "mse | ce");
    opts["log_every"] =
        app->add_option("--log-every", log_every, "0 = geometric cadence, else every k steps")
            ->check(CLI::NonNegativeNumber);
    opts["theta"] = app->add_option("--theta", theta, "regression accuracy threshold")->check(CLI::PositiveNumber);
  }

  bool set(const std::string& k) const { return opts.at(k)->count() > 0; }

  ExperimentConfig build() const {
    json file = json::object();
    if (set("config")) file = read_json_file(config_file);
    if (!file.is_object()) throw DomainError(config_file + ": config must be a JSON object");

    TaskKind kind = TaskKind::teacher_student;
    if (set("task")) kind = parse_task_kind(task);
    else if (file.contains("task")) kind = parse_task_kind(file["task"].get<std::string>());

    json patch = json::object();
    patch["task"] = to_string(kind);
    if (set("alpha")) patch["alpha"] = alpha;
    if (set("weight_decay")) patch["weight_decay"] = weight_decay;
    if (set("optimizer")) patch["optimizer"] = optimizer;
    if (set("lr")) patch["lr"] = lr;
    if (set("lr_representation")) patch["lr_representation"] = lr_repr;
    if (set("steps")) patch["steps"] = steps;
    if (set("batch_size")) patch["batch_size"] = batch_size;
    if (set("constrained")) patch["constrained"] = constrained;
    if (set("seed")) patch["seed"] = seed;
    if (set("p")) patch["p"] = p;
    if (set("messiness")) patch["messiness"] = messiness;
    if (set("n_train")) patch[kind == TaskKind::addition ? "train_size" : "n_train"] = n_train;
    if (set("mnist_dir")) patch["mnist_dir"] = mnist_dir;
    if (set("loss")) patch["loss"] = loss;
    if (set("log_every")) patch["log_every"] = log_every;
    if (set("theta")) patch["theta"] = theta;

    ExperimentConfig cfg = default_config(kind);
    cfg = config_from_json(file, cfg);
    cfg = config_from_json(patch, cfg);
    cfg.validate();
    return cfg;
  }
};

int cmd_train(const TrainFlags& f, const std::string& out) {
  const ExperimentConfig cfg = f.build();
  const RunRecords rec = run_training(cfg);
  if (out.empty()) std::cout << records_to_csv(rec);
  else write_records(rec, out);
  if (rec.status == RunStatus::diverged) {
    std::cerr << "diverged: " << rec.message << "\n";
    return kExitDiverged;
  }
  return kExitOk;
}

int cmd_sweep(const TrainFlags& f, const std::string& param, const std::string& values,
              const std::string& metric, double level, const std::string& out, unsigned threads) {
  const ExperimentConfig cfg = f.build();
  const auto vals = parse_values(values, "--values");
  const SweepResult r = sweep(cfg, param, vals, parse_metric(metric), level, threads);
  json j;
  j["param"] = r.param;
  j["metric"] = to_string(r.metric);
  j["level"] = r.level;
  j["values"] = r.values;
  auto outcomes = json::array();
  for (const auto& o : r.outcomes) {
    if (o) outcomes.push_back(*o);
    else outcomes.push_back(nullptr);
  }
  j["outcomes"] = outcomes;
  if (r.fit) {
    j["fit"] = {{"slope", r.fit->slope},
                {"intercept", r.fit->intercept},
                {"residual", r.fit->residual},
                {"points", r.fit->points}};
  } else {
    j["fit"] = nullptr;
    j["fit_note"] = r.fit_note;
  }
  j["config"] = to_json(cfg);
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_text_file(j.dump(2) + "\n", out);
  bool diverged = false;
  for (const auto& run : r.runs) diverged = diverged || run.status == RunStatus::diverged;
  return diverged ? kExitDiverged : kExitOk;
}

struct LandscapeFlags {
  std::string task = "teacher-student", axis = "alpha", w_grid, n_grid, m_grid, out, mnist_dir;
  std::int64_t sphere_steps = 10000;
  double sphere_lr = 1e-3;
  std::uint64_t seed = 0;
  int restarts = 1, p = 10, train_size = 45;
  double messiness = 1.0;
  bool alpha_units = false;
  unsigned threads = default_thread_count();
};

int cmd_landscape(const LandscapeFlags& f) {
  SphereMinConfig sc;
  sc.steps = f.sphere_steps;
  sc.lr = f.sphere_lr;
  sc.seed = f.seed;
  sc.restarts = f.restarts;
  sc.validate();
  const TaskKind kind = parse_task_kind(f.task);
  if (f.w_grid.empty()) throw DomainError("--w-grid is required");
  std::vector<double> w = parse_values(f.w_grid, "--w-grid");

  auto mnist_task = [&] {
    std::string dir = f.mnist_dir;
    if (dir.empty()) {
      if (const char* env = std::getenv("GROKLAB_MNIST_DIR")) dir = env;
    }
    if (dir.empty()) throw DomainError("MNIST needs --mnist-dir or GROKLAB_MNIST_DIR");
    return load_mnist(MnistPaths::in_directory(dir));
  };

  json doc;
  if (f.axis == "alpha") {
    SupervisedProblem pr;
    if (kind == TaskKind::teacher_student) pr = make_problem(gen_teacher_student(f.seed));
    else if (kind == TaskKind::addition) pr = make_problem(gen_addition_task(f.p, f.messiness, f.train_size, f.seed));
    else pr = make_problem(subset(mnist_task(), 1000, f.seed));
    const ReducedCurve curve = reduced_curve_1d(pr, w, sc, f.threads);
    doc = curve_to_json(curve);
    doc["task"] = to_string(kind);
    doc["cfg"] = to_json(sc);
    if (curve.points.size() >= 5) {
      const ShapeMetrics m = shape_metrics(curve);
      doc["shape"] = {{"argmin_alpha", m.argmin_alpha}, {"is_l", m.is_l}, {"is_u", m.is_u}};
    }
  } else if (f.axis == "wm" || f.axis == "wN") {
    ProblemFactory factory;
    SecondAxis second;
    std::vector<double> values;
    MlpSpec spec;
    if (f.axis == "wm") {
      if (kind != TaskKind::addition) throw DomainError("--axis wm is implemented for --task addition");
      if (f.m_grid.empty()) throw DomainError("--m-grid is required for --axis wm");
      second = SecondAxis::messiness;
      values = parse_values(f.m_grid, "--m-grid");
      factory = addition_messiness_factory(f.p, f.train_size, f.seed);
      spec = addition_decoder_spec();
    } else {
      if (f.n_grid.empty()) throw DomainError("--n-grid is required for --axis wN");
      second = SecondAxis::data_size;
      values = parse_values(f.n_grid, "--n-grid");
      if (kind == TaskKind::mnist) {
        factory = mnist_data_size_factory(mnist_task(), f.seed, LossKind::mse);
        spec = {{784, 200, 200, kMnistClasses}, Activation::relu, LossKind::mse};
      } else if (kind == TaskKind::teacher_student) {
        factory = teacher_student_data_size_factory(f.seed, 100);
        spec = teacher_student_spec();
      } else {
        throw DomainError("--axis wN is implemented for teacher-student and mnist");
      }
    }
    if (f.alpha_units) {
      const double w0 = standard_norm(spec, f.seed);
      for (double& x : w) x *= w0;
    }
    const LandscapeGrid g = reduced_grid(factory, to_string(kind), w, second, values, sc, f.threads);
    doc = grid_to_json(g);
  } else {
    throw DomainError("--axis must be wN, wm or alpha");
  }
  if (f.out.empty()) std::cout << doc.dump() << "\n";
  else write_text_file(doc.dump() + "\n", f.out);
  return kExitOk;
}

struct DynamicsFlags {
  std::string grid, start, out, target;
  double eta_d = 1.0, eta_r = 1.0, gamma = 0.01, dt = 1.0;
  std::int64_t steps = 100000;
  int record_every = 1;
};

int cmd_dynamics(const DynamicsFlags& f) {
  if (f.grid.empty()) throw DomainError("--grid is required");
  if (f.start.empty()) throw DomainError("--start is required");
  const LandscapeGrid g = read_grid(f.grid);
  DynamicsConfig cfg;
  cfg.eta_d = f.eta_d;
  cfg.eta_r = f.eta_r;
  cfg.gamma = f.gamma;
  cfg.dt = f.dt;
  cfg.max_steps = f.steps;
  cfg.record_every = f.record_every;
  if (!f.target.empty()) cfg.target = parse_point(f.target, "--target");
  const auto [w0, m0] = parse_point(f.start, "--start");
  const ReducedTrajectory traj = integrate_reduced(g, w0, m0, cfg);
  if (f.out.empty()) std::cout << trajectory_to_csv(traj);
  else write_trajectory(traj, f.out);
  std::cerr << "status: " << to_string(traj.status) << "\n";
  return kExitOk;
}

struct PlotFlags {
  std::string in, kind, out, grid, field = "train_loss", title;
  double contour = 0;
  bool losses = false, no_norm = false, linear_color = false;
  CLI::Option* contour_opt = nullptr;
};

int cmd_plot(const PlotFlags& f) {
  if (f.in.empty() || f.out.empty() || f.kind.empty()) throw DomainError("--in, --kind and --out are required");
  std::string svg;
  HeatmapOptions h;
  h.field = f.field;
  h.log_color = !f.linear_color;
  h.title = f.title;
  if (f.contour_opt->count()) h.contour_level = f.contour;
  switch (parse_plot_kind(f.kind)) {
    case PlotKind::curves: {
      CurvesOptions c;
      c.accuracy = !f.losses;
      c.show_norm = !f.no_norm;
      c.title = f.title;
      svg = render_curves_svg(read_records(f.in), c);
      break;
    }
    case PlotKind::heatmap:
      svg = render_heatmap_svg(read_grid(f.in), h);
      break;
    case PlotKind::trajectory: {
      const ReducedTrajectory traj = read_trajectory(f.in);
      svg = f.grid.empty() ? render_trajectory_svg(traj, f.title)
                           : render_trajectory_svg(read_grid(f.grid), traj, h);
      break;
    }
  }
  write_text_file(svg, f.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groklab: weight-norm landscapes and grokking experiments"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  std::string train_out;
  auto* train = app.add_subcommand("train", "run one training experiment");
  train_flags.add(train);
  train->add_option("--out", train_out, "records file (.csv or .json); stdout if omitted");

  TrainFlags sweep_flags;
  std::string sweep_param = "weight_decay", sweep_values, sweep_metric = "test_acc", sweep_out;
  double sweep_level = 0.95;
  unsigned sweep_threads = default_thread_count();
  auto* sw = app.add_subcommand("sweep", "time-to-level across a parameter sweep");
  sweep_flags.add(sw);
  sw->add_option("--param", sweep_param, "weight_decay | alpha | lr | n_train | train_size");
  sw->add_option("--values", sweep_values, "values: a,b,c or log:lo:hi:n")->required();
  sw->add_option("--metric", sweep_metric, "train_loss | test_loss | train_acc | test_acc | weight_norm");
  sw->add_option("--level", sweep_level, "metric level");
  sw->add_option("--out", sweep_out, "summary JSON; stdout if omitted");
  sw->add_option("--threads", sweep_threads, "worker threads")->check(CLI::PositiveNumber);

  LandscapeFlags lf;
  auto* land = app.add_subcommand("landscape", "reduced loss curve or grid");
  land->add_option("--task", lf.task, "teacher-student | addition | mnist");
  land->add_option("--axis", lf.axis, "alpha | wN | wm");
  land->add_option("--w-grid", lf.w_grid, "norms (alpha values for --axis alpha)");
  land->add_option("--n-grid", lf.n_grid, "data sizes for --axis wN");
  land->add_option("--m-grid", lf.m_grid, "messiness values for --axis wm");
  land->add_option("--sphere-steps", lf.sphere_steps, "optimizer steps per cell")->check(CLI::NonNegativeNumber);
  land->add_option("--sphere-lr", lf.sphere_lr, "sphere minimization learning rate")->check(CLI::PositiveNumber);
  land->add_option("--restarts", lf.restarts, "restarts per cell")->check(CLI::PositiveNumber);
  land->add_option("--seed", lf.seed, "seed");
  land->add_option("--p", lf.p, "addition base")->check(CLI::PositiveNumber);
  land->add_option("--n-train", lf.train_size, "addition training pairs")->check(CLI::PositiveNumber);
  land->add_option("--messiness", lf.messiness, "messiness for an addition alpha curve")->check(CLI::Range(0.0, 1.0));
  land->add_option("--mnist-dir", lf.mnist_dir, "directory with the MNIST IDX files");
  land->add_flag("--alpha-units", lf.alpha_units, "read --w-grid as multiples of w0");
  land->add_option("--threads", lf.threads, "worker threads")->check(CLI::PositiveNumber);
  land->add_option("--out", lf.out, "output JSON; stdout if omitted");

  DynamicsFlags df;
  auto* dyn = app.add_subcommand("dynamics", "integrate reduced (w, m) dynamics on a grid");
  dyn->add_option("--grid", df.grid, "landscape grid JSON (wm axis)");
  dyn->add_option("--start", df.start, "start point w,m");
  dyn->add_option("--target", df.target, "stop in the cell containing w,m");
  dyn->add_option("--eta-d", df.eta_d, "decoder rate eta_D")->check(CLI::PositiveNumber);
  dyn->add_option("--eta-r", df.eta_r, "representation rate eta_R")->check(CLI::PositiveNumber);
  dyn->add_option("--gamma", df.gamma, "weight decay gamma")->check(CLI::NonNegativeNumber);
  dyn->add_option("--dt", df.dt, "Euler step")->check(CLI::PositiveNumber);
  dyn->add_option("--steps", df.steps, "maximum steps")->check(CLI::PositiveNumber);
  dyn->add_option("--record-every", df.record_every, "sample cadence")->check(CLI::PositiveNumber);
  dyn->add_option("--out", df.out, "trajectory CSV; stdout if omitted");

  PlotFlags pf;
  auto* plot = app.add_subcommand("plot", "render an SVG");
  plot->add_option("--in", pf.in, "records, grid or trajectory file");
  plot->add_option("--kind", pf.kind, "curves | heatmap | trajectory");
  plot->add_option("--out", pf.out, "SVG path");
  plot->add_option("--grid", pf.grid, "grid JSON drawn under a trajectory");
  plot->add_option("--field", pf.field, "grid field for heatmaps");
  pf.contour_opt = plot->add_option("--contour", pf.contour, "contour level on heatmaps");
  plot->add_option("--title", pf.title, "plot title");
  plot->add_flag("--losses", pf.losses, "curves: plot losses instead of accuracies");
  plot->add_flag("--no-norm", pf.no_norm, "curves: omit the weight-norm overlay");
  plot->add_flag("--linear-color", pf.linear_color, "heatmaps: linear color scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return kExitDomain;
  }

  try {
    if (*train) return cmd_train(train_flags, train_out);
    if (*sw) return cmd_sweep(sweep_flags, sweep_param, sweep_values, sweep_metric, sweep_level, sweep_out,
                              sweep_threads);
    if (*land) return cmd_landscape(lf);
    if (*dyn) return cmd_dynamics(df);
    if (*plot) return cmd_plot(pf);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  }
  return kExitDomain;
}
