#pragma once

// Dataset indexing, deterministic splits, preprocessing and batching.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <torch/types.h>

#include "tganet/attributes.hpp"

namespace tganet::data {

struct DatasetEntry {
  std::string sample_id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
};

struct ExcludedSample {
  std::string sample_id;
  std::string reason;
};

struct DatasetIndex {
  std::string source_name;
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;  // sorted by sample_id
  std::vector<ExcludedSample> excluded;

  const DatasetEntry& find(const std::string& sample_id) const;
};

/// Pairs `<root>/images/*` with `<root>/masks/*` by filename stem; empty masks
/// are dropped and reported in `excluded`.
DatasetIndex index_dataset(const std::filesystem::path& root, std::string source_name = "");

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

inline constexpr int kSplitManifestVersion = 1;

struct SplitManifest {
  int format_version = kSplitManifestVersion;
  std::string source_name;
  std::string root;
  std::string mode = "random";  // or "official"
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::vector<std::string> train, valid, test;
  std::int64_t mask_size = 256;
  std::optional<SizeThresholds> thresholds;

  const std::vector<std::string>& split(const std::string& name) const;
};

/// Seeded Fisher-Yates shuffle then contiguous train/valid/test cut. Valid and
/// test sizes are floored; the remainder goes to train.
SplitManifest split_dataset(const DatasetIndex& index, SplitRatios ratios, std::uint64_t seed);

/// Uses given train/test stem lists verbatim; the last `valid_fraction` of the
/// train list becomes the validation split.
SplitManifest split_official(const DatasetIndex& index, const std::vector<std::string>& train_ids,
                             const std::vector<std::string>& test_ids, double valid_fraction = 0.1);

/// One stem per line; blank lines and extensions are ignored.
std::vector<std::string> read_id_list(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const SplitManifest& m);
void from_json(const nlohmann::json& j, SplitManifest& m);
void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);

struct PreprocessedPair {
  cv::Mat3f image;  // RGB in [0, 1]
  BinaryMask mask;  // {0, 1}
};

/// Bilinear resize of the BGR image to RGB [0,1]; nearest resize of the mask,
/// binarized at intensity > 127.
PreprocessedPair preprocess_pair(const cv::Mat& image, const cv::Mat& mask, std::int64_t size = 256);
PreprocessedPair load_pair(const DatasetEntry& entry, std::int64_t size);

struct Sample {
  std::string sample_id;
  cv::Mat3f image;
  BinaryMask mask;
  AttributeLabel label;
};

/// Loads and labels the listed samples. Labels come from the preprocessed,
/// un-augmented mask.
std::vector<Sample> load_samples(const DatasetIndex& index, std::span<const std::string> ids, std::int64_t size,
                                 const SizeThresholds& thresholds);

/// Fits size thresholds on the preprocessed masks of `ids`.
SizeThresholds fit_thresholds(const DatasetIndex& index, std::span<const std::string> ids, std::int64_t size);

struct Batch {
  torch::Tensor images;        // (B, 3, S, S) in [0, 1]
  torch::Tensor masks;         // (B, 1, S, S) in {0, 1}
  torch::Tensor count_labels;  // (B,)
  torch::Tensor size_labels;   // (B,)
  std::vector<std::string> ids;
};

torch::Tensor image_to_tensor(const cv::Mat3f& image);
torch::Tensor mask_to_tensor(const BinaryMask& mask);

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> order);

}  // namespace tganet::data
