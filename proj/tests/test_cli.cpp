#include "groklab/experiment.hpp"
#include "groklab/landscape.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace groklab;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args) {
  const std::string cmd = std::string(GROKLAB_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("groklab_cli_" + name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("train writes records") {
  const auto out = tmp("train.csv");
  const auto r = run("train --task teacher-student --steps 20 --seed 3 --out " + out.string());
  CHECK(r.code == 0);
  const auto rec = read_records(out);
  CHECK(rec.rows.back().step == 20);
  // stdout when --out is omitted
  const auto s = run("train --steps 2 --log-every 1");
  CHECK(s.code == 0);
  CHECK(s.output.rfind(kRecordsCsvHeader, 0) == 0);
}

TEST_CASE("config file and flag precedence") {
  const auto cfg = tmp("cfg.json");
  std::ofstream(cfg) << R"({"alpha": 3.0, "steps": 7, "weight_decay": 0.25})";
  const auto out = tmp("prec.json");
  const auto r = run("train --config " + cfg.string() + " --steps 3 --out " + out.string());
  REQUIRE(r.code == 0);
  const auto rec = read_records(out);
  CHECK(rec.config["alpha"] == 3.0);        // from the file
  CHECK(rec.config["weight_decay"] == 0.25);
  CHECK(rec.config["steps"] == 3);          // flag wins
  CHECK(rec.rows.back().step == 3);
}

TEST_CASE("exit codes") {
  const auto neg = run("train --alpha -1 --steps 5");
  CHECK(neg.code == 1);
  CHECK(neg.output.find("--alpha") != std::string::npos);
  CHECK(run("train --bogus").code == 1);
  CHECK(run("frobnicate").code == 1);
  const auto bad_cfg = tmp("bad.json");
  std::ofstream(bad_cfg) << R"({"alpah": 1.0})";
  const auto unk = run("train --config " + bad_cfg.string());
  CHECK(unk.code == 1);
  CHECK(unk.output.find("alpah") != std::string::npos);
  CHECK(run("train --config /nonexistent/groklab.json").code == 2);
  CHECK(run("plot --in /nonexistent/r.csv --kind curves --out " + tmp("x.svg").string()).code == 2);
  CHECK(run("train --steps 2 --out /nonexistent/dir/r.csv").code == 2);
  const auto div = run("train --optimizer sgd --lr 1e10 --steps 50 --out " + tmp("div.csv").string());
  CHECK(div.code == 3);
  CHECK(run("train --task mnist --mnist-dir /nonexistent/mnist --steps 1").code == 2);
}

TEST_CASE("plot, landscape and dynamics") {
  const auto rec = tmp("p.csv");
  REQUIRE(run("train --steps 30 --out " + rec.string()).code == 0);
  const auto svg = tmp("p.svg");
  CHECK(run("plot --in " + rec.string() + " --kind curves --out " + svg.string()).code == 0);
  CHECK(slurp(svg).rfind("<svg", 0) == 0);

  const auto curve = tmp("curve.json");
  CHECK(run("landscape --task teacher-student --axis alpha --w-grid 0.5,1,2 --sphere-steps 20 --out " +
            curve.string()).code == 0);
  CHECK(slurp(curve).find("\"points\"") != std::string::npos);

  const auto grid = tmp("grid.json");
  const auto g = run("landscape --task addition --axis wm --alpha-units --w-grid log:0.5:4:3 --m-grid 0,1 "
                     "--sphere-steps 5 --out " + grid.string());
  REQUIRE(g.code == 0);
  const auto lg = read_grid(grid);
  CHECK(lg.rows() == 3);
  CHECK(lg.cols() == 2);
  CHECK(lg.meta["C_convention"] == "w0/sqrt(P)");
  CHECK(lg.w_axis.front() == doctest::Approx(0.5 * lg.meta["w0"].get<double>()));

  const auto heat = tmp("heat.svg");
  CHECK(run("plot --in " + grid.string() + " --kind heatmap --out " + heat.string()).code == 0);
  const double w = lg.w_axis[1];
  const auto traj = tmp("traj.csv");
  const auto d = run("dynamics --grid " + grid.string() + " --start " + std::to_string(w) +
                     ",0.5 --steps 10 --out " + traj.string());
  CHECK(d.code == 0);
  CHECK(slurp(traj).rfind("t,w,m,train_loss,test_loss\n", 0) == 0);
  CHECK(run("plot --in " + traj.string() + " --kind trajectory --grid " + grid.string() + " --out " +
            tmp("traj.svg").string()).code == 0);
  CHECK(run("dynamics --grid " + grid.string() + " --start 1e9,0.5 --steps 10").code == 1);
  CHECK(run("dynamics --grid /nonexistent/g.json --start 1,0.5").code == 2);
}

TEST_CASE("sweep") {
  const auto out = tmp("sweep.json");
  const auto r = run("sweep --param weight_decay --values 0,0.5 --metric train_loss --level 100 --steps 5 --out " +
                     out.string());
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["values"].size() == 2);
  CHECK(run("sweep --param depth --values 1,2 --steps 5").code == 1);
}
