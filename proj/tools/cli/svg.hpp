#pragma once

// Minimal SVG charts for the command outputs: stacked line panels and a
// heatmap. Output is a pure function of the data, so files diff cleanly.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace headneck::cli::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  bool log_x = false;
};

/// Panels stacked top to bottom, sharing the width.
std::string line_chart(const std::vector<Panel>& panels, const std::string& title, const std::string& config_hash);

/// Cells shaded by value within [0, max]; empty rows drawn hatched.
std::string heatmap(const std::vector<std::string>& rows, const std::vector<std::string>& columns,
                    const Eigen::MatrixXd& values, const std::vector<bool>& flagged, const std::string& title,
                    const std::string& config_hash);

void write(const std::filesystem::path& path, const std::string& svg);

}  // namespace headneck::cli::svg
