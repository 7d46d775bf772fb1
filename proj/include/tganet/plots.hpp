#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tganet::plots {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line chart of each series against its index (epochs), written as PNG.
void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series);

/// Grouped bars: one group per category, one bar per series entry.
void write_bar_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<std::string>& categories, const std::vector<Series>& series);

}  // namespace tganet::plots
