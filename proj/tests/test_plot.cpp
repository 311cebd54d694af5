#include "groklab/errors.hpp"
#include "groklab/plot.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace groklab;

namespace {

// Minimal XML balance check: every open tag is closed in order, one root.
bool well_formed(const std::string& s, std::string* root = nullptr) {
  std::vector<std::string> stack;
  int roots = 0;
  std::size_t i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const std::size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    const std::string tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) {
      ++roots;
      if (root) *root = name;
    }
    if (tag.back() != '/') stack.push_back(name);
  }
  return stack.empty() && roots == 1;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t i = s.find(needle); i != std::string::npos; i = s.find(needle, i + 1)) ++n;
  return n;
}

RunRecords records() {
  RunRecords r;
  for (int k = 0; k <= 40; ++k) {
    const double t = k;
    r.rows.push_back({k * k, 1.0 / (1 + t), 2.0 / (1 + 0.5 * t), t / 40.0, t * t / 1600.0, 10.0 - 0.1 * t});
  }
  return r;
}

LandscapeGrid grid() {
  LandscapeGrid g;
  g.kind = SecondAxis::messiness;
  g.w_axis = log_space(0.5, 8.0, 5);
  g.second_axis = lin_space(0.0, 1.0, 4);
  g.train_loss.resize(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) g.train_loss(i, j) = 0.01 + 0.2 * (4 - i) + 0.1 * j;
  g.test_loss = 2.0 * g.train_loss;
  g.train_err = Matrix::Zero(5, 4);
  g.test_err = Matrix::Zero(5, 4);
  g.failed = decltype(g.failed)::Constant(5, 4, false);
  return g;
}

}  // namespace

TEST_CASE("the checker rejects broken markup") {
  CHECK(well_formed("<svg><g><rect/></g></svg>"));
  CHECK_FALSE(well_formed("<svg><g></svg>"));
  CHECK_FALSE(well_formed("<svg></svg><svg></svg>"));
}

TEST_CASE("curves") {
  const std::string svg = render_curves_svg(records());
  CHECK(svg.rfind("<svg", 0) == 0);
  std::string root;
  CHECK(well_formed(svg, &root));
  CHECK(root == "svg");
  CHECK(count(svg, "<polyline") == 3);
  CurvesOptions no_norm;
  no_norm.show_norm = false;
  no_norm.title = "a < b & c";
  const std::string two = render_curves_svg(records(), no_norm);
  CHECK(count(two, "<polyline") == 2);
  CHECK(two.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(well_formed(two));
  CurvesOptions losses;
  losses.accuracy = false;
  CHECK(well_formed(render_curves_svg(records(), losses)));
  CHECK_THROWS_AS(render_curves_svg(RunRecords{}), DomainError);
}

TEST_CASE("heatmap") {
  auto g = grid();
  HeatmapOptions opt;
  const std::string svg = render_heatmap_svg(g, opt);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(well_formed(svg));
  CHECK(count(svg, "class=\"cell\"") == 20);
  CHECK(count(svg, "class=\"contour\"") == 0);
  opt.contour_level = 0.4;
  const std::string c = render_heatmap_svg(g, opt);
  CHECK(count(c, "class=\"contour\"") > 0);
  CHECK(well_formed(c));
  g.failed(0, 0) = true;
  g.train_loss(0, 0) = std::nan("");
  CHECK(well_formed(render_heatmap_svg(g, opt)));
  opt.field = "nonsense";
  CHECK_THROWS_AS(render_heatmap_svg(g, opt), DomainError);
}

TEST_CASE("trajectory") {
  const auto g = grid();
  ReducedTrajectory tr;
  tr.samples = {{0, 6.0, 0.9, 1, 2, 0}, {1, 4.0, 0.7, 1, 2, 0}, {2, 2.0, 0.4, 1, 2, 0}};
  const std::string over = render_trajectory_svg(g, tr);
  CHECK(well_formed(over));
  CHECK(count(over, "class=\"path\"") == 1);
  CHECK(count(over, "class=\"cell\"") == 20);
  const std::string alone = render_trajectory_svg(tr, "path");
  CHECK(well_formed(alone));
  CHECK(count(alone, "class=\"path\"") == 1);
  CHECK_THROWS_AS(render_trajectory_svg(ReducedTrajectory{}), DomainError);
}

TEST_CASE("file output") {
  const auto path = std::filesystem::temp_directory_path() / "groklab_test_plot.svg";
  write_text_file(render_curves_svg(records()), path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().rfind("<svg", 0) == 0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_text_file("x", "/nonexistent/dir/out.svg"), IoError);
  CHECK(parse_plot_kind("heatmap") == PlotKind::heatmap);
  CHECK_THROWS_AS(parse_plot_kind("pie"), DomainError);
}
