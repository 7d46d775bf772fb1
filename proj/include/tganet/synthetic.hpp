#pragma once

#include <cstdint>
#include <filesystem>

namespace tganet::data {

/// Writes `<root>/images/*.png` and `<root>/masks/*.png` with elliptical
/// "polyps" on a textured background. Sample i has one blob when i is even,
/// two otherwise, and a small/medium/large area by i % 3.
void write_synthetic_dataset(const std::filesystem::path& root, int count, int size, std::uint64_t seed);

}  // namespace tganet::data
