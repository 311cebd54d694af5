#pragma once

// Static SVG renderings of run records, landscape grids and trajectories.

#include "groklab/dynamics.hpp"
#include "groklab/experiment.hpp"
#include "groklab/landscape.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace groklab {

enum class PlotKind { curves, heatmap, trajectory };

std::string to_string(PlotKind k);
PlotKind parse_plot_kind(const std::string& s);

struct CurvesOptions {
  bool accuracy = true;   // plot accuracies, else losses (log y)
  bool show_norm = true;  // dashed weight-norm overlay on a right axis
  std::string title;
};

struct HeatmapOptions {
  std::string field = "train_loss";  // train_loss | test_loss | train_err | test_err
  bool log_color = true;
  std::optional<double> contour_level;
  std::string title;
};

// Log-x step axis; one polyline per series.
std::string render_curves_svg(const RunRecords& records, const CurvesOptions& opt = {});
// One rect per grid cell; second axis on x, w (log) on y.
std::string render_heatmap_svg(const LandscapeGrid& grid, const HeatmapOptions& opt = {});
// Heatmap with the path overlaid.
std::string render_trajectory_svg(const LandscapeGrid& grid, const ReducedTrajectory& traj,
                                  const HeatmapOptions& opt = {});
// Path alone in (m, log w).
std::string render_trajectory_svg(const ReducedTrajectory& traj, const std::string& title = "");

void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace groklab
