#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "tganet/attributes.hpp"

namespace tganet::test {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tganet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Independent 8-connected component count by iterative flood fill.
inline int flood_fill_components(const BinaryMask& mask) {
  cv::Mat1i seen = cv::Mat1i::zeros(mask.size());
  int components = 0;
  std::vector<cv::Point> stack;
  for (int y = 0; y < mask.rows; ++y) {
    for (int x = 0; x < mask.cols; ++x) {
      if (!mask(y, x) || seen(y, x)) continue;
      ++components;
      stack.assign(1, {x, y});
      seen(y, x) = 1;
      while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= mask.cols || ny >= mask.rows) continue;
            if (!mask(ny, nx) || seen(ny, nx)) continue;
            seen(ny, nx) = 1;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  return components;
}

/// Random {0,1} mask with at least one foreground pixel.
inline BinaryMask random_mask(std::mt19937_64& rng, int rows, int cols, double density) {
  std::bernoulli_distribution fg(density);
  BinaryMask m(rows, cols);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) m(y, x) = fg(rng) ? 1 : 0;
  if (cv::countNonZero(m) == 0) m(rows / 2, cols / 2) = 1;
  return m;
}

/// Mask whose first `fg` pixels in raster order are set.
inline BinaryMask mask_with_area(int rows, int cols, int fg) {
  BinaryMask m = BinaryMask::zeros(rows, cols);
  for (int i = 0; i < fg; ++i) m(i / cols, i % cols) = 1;
  return m;
}

}  // namespace tganet::test
