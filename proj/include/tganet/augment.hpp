#pragma once

#include <cstdint>
#include <random>

#include <opencv2/core.hpp>

#include "tganet/attributes.hpp"

namespace tganet::data {

struct AugmentOptions {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_rotate = 0.5;
  double p_dropout = 0.5;
  double rotate_limit_deg = 35.0;
  int max_holes = 8;
  /// Largest hole side as a fraction of the image side (32 px at 256).
  double max_hole_fraction = 0.125;
};

/// Derives the per-sample augmentation seed from (global seed, epoch, sample index).
std::uint64_t augment_seed(std::uint64_t global_seed, std::int64_t epoch, std::int64_t sample_index);

/// Uniform draws computed directly from mt19937_64 output (whose sequence is
/// fixed by the standard), so results do not depend on the library's
/// distribution implementations.
class AugmentRng {
 public:
  explicit AugmentRng(std::uint64_t seed) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi);  // inclusive

 private:
  std::mt19937_64 engine_;
};

struct AugmentedPair {
  cv::Mat3f image;
  BinaryMask mask;
};

/// Flips and rotation hit image and mask alike (mask via nearest neighbor);
/// coarse dropout touches the image only.
AugmentedPair augment_pair(const cv::Mat3f& image, const BinaryMask& mask, std::uint64_t rng_state,
                           const AugmentOptions& options = {});

}  // namespace tganet::data
