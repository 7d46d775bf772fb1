#include "tganet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "tganet/errors.hpp"

namespace tganet::data {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kImageExtensions = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff"};

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingDirectory, "missing directory " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    auto ext = item.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (!kImageExtensions.contains(ext)) continue;
    auto [it, inserted] = files.emplace(item.path().stem().string(), item.path());
    if (!inserted && item.path() < it->second) it->second = item.path();
  }
  return files;
}

cv::Mat read_mask(const fs::path& path) {
  cv::Mat mask = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (mask.empty()) throw Error(ErrorKind::CorruptImage, "cannot decode mask " + path.string());
  return mask;
}

void check_ratios(const SplitRatios& r) {
  if (r.train < 0 || r.valid < 0 || r.test < 0 || std::abs(r.train + r.valid + r.test - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidConfig, "split ratios must be non-negative and sum to 1");
  }
}

std::int64_t floor_count(std::size_t n, double ratio) {
  // Guard against 0.29 * 100 = 28.999... style representation error.
  return static_cast<std::int64_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

}  // namespace

const DatasetEntry& DatasetIndex::find(const std::string& sample_id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), sample_id,
                             [](const DatasetEntry& e, const std::string& id) { return e.sample_id < id; });
  if (it == entries.end() || it->sample_id != sample_id) {
    throw Error(ErrorKind::UnpairedSample, "sample '" + sample_id + "' is not in dataset " + source_name);
  }
  return *it;
}

DatasetIndex index_dataset(const fs::path& root, std::string source_name) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::MissingDirectory, "missing dataset root " + root.string());
  const auto images = files_by_stem(root / "images");
  const auto masks = files_by_stem(root / "masks");

  for (const auto& [stem, path] : images) {
    if (!masks.contains(stem)) throw Error(ErrorKind::UnpairedSample, "image '" + stem + "' has no mask");
  }
  for (const auto& [stem, path] : masks) {
    if (!images.contains(stem)) throw Error(ErrorKind::UnpairedSample, "mask '" + stem + "' has no image");
  }

  DatasetIndex index;
  index.source_name = source_name.empty() ? root.filename().string() : std::move(source_name);
  index.root = root;
  for (const auto& [stem, image_path] : images) {
    const auto& mask_path = masks.at(stem);
    if (cv::countNonZero(read_mask(mask_path) > 127) == 0) {
      index.excluded.push_back({stem, "empty mask"});
      std::clog << "excluded " << stem << ": empty mask\n";
      continue;
    }
    index.entries.push_back({stem, image_path, mask_path});
  }
  return index;
}

const std::vector<std::string>& SplitManifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "valid") return valid;
  if (name == "test") return test;
  throw Error(ErrorKind::InvalidConfig, "unknown split '" + name + "' (expected train, valid or test)");
}

SplitManifest split_dataset(const DatasetIndex& index, SplitRatios ratios, std::uint64_t seed) {
  check_ratios(ratios);
  if (index.entries.empty()) throw Error(ErrorKind::EmptyDataset, "dataset " + index.source_name + " is empty");

  std::vector<std::string> ids;
  for (const auto& e : index.entries) ids.push_back(e.sample_id);
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    // Rejection sampling keeps the draw unbiased and library independent.
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng(); while (r >= limit);
    std::swap(ids[i], ids[r % bound]);
  }

  const auto n_valid = floor_count(ids.size(), ratios.valid);
  const auto n_test = floor_count(ids.size(), ratios.test);
  const auto n_train = static_cast<std::int64_t>(ids.size()) - n_valid - n_test;

  SplitManifest m;
  m.source_name = index.source_name;
  m.root = index.root.string();
  m.seed = seed;
  m.ratios = ratios;
  m.train.assign(ids.begin(), ids.begin() + n_train);
  m.valid.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
  m.test.assign(ids.begin() + n_train + n_valid, ids.end());
  return m;
}

SplitManifest split_official(const DatasetIndex& index, const std::vector<std::string>& train_ids,
                             const std::vector<std::string>& test_ids, double valid_fraction) {
  if (train_ids.empty() || test_ids.empty()) {
    throw Error(ErrorKind::EmptyDataset, "official split lists must be non-empty");
  }
  for (const auto* list : {&train_ids, &test_ids}) {
    for (const auto& id : *list) index.find(id);
  }
  const auto n_valid = floor_count(train_ids.size(), valid_fraction);
  const auto n_train = static_cast<std::int64_t>(train_ids.size()) - n_valid;

  SplitManifest m;
  m.source_name = index.source_name;
  m.root = index.root.string();
  m.mode = "official";
  m.ratios = {1.0 - valid_fraction, valid_fraction, 0.0};
  m.train.assign(train_ids.begin(), train_ids.begin() + n_train);
  m.valid.assign(train_ids.begin() + n_train, train_ids.end());
  m.test = test_ids;
  return m;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read id list " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
    if (line.empty()) continue;
    ids.push_back(fs::path(line).stem().string());
  }
  return ids;
}

void to_json(nlohmann::json& j, const SplitManifest& m) {
  j = nlohmann::json{{"format_version", m.format_version},
                     {"source_name", m.source_name},
                     {"root", m.root},
                     {"mode", m.mode},
                     {"seed", m.seed},
                     {"ratios", {m.ratios.train, m.ratios.valid, m.ratios.test}},
                     {"mask_size", m.mask_size},
                     {"train", m.train},
                     {"valid", m.valid},
                     {"test", m.test}};
  if (m.thresholds) {
    j["thresholds"] = {{"t_small_max", m.thresholds->small_max()}, {"t_medium_max", m.thresholds->medium_max()}};
  } else {
    j["thresholds"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, SplitManifest& m) {
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kSplitManifestVersion) {
    throw Error(ErrorKind::CheckpointVersionMismatch,
                "split manifest version " + std::to_string(m.format_version) + " is not supported");
  }
  m.source_name = j.at("source_name").get<std::string>();
  m.root = j.value("root", std::string());
  m.mode = j.value("mode", std::string("random"));
  m.seed = j.value("seed", std::uint64_t{0});
  const auto r = j.at("ratios").get<std::array<double, 3>>();
  m.ratios = {r[0], r[1], r[2]};
  m.mask_size = j.value("mask_size", std::int64_t{256});
  m.train = j.at("train").get<std::vector<std::string>>();
  m.valid = j.at("valid").get<std::vector<std::string>>();
  m.test = j.at("test").get<std::vector<std::string>>();
  if (j.contains("thresholds") && !j["thresholds"].is_null()) {
    m.thresholds.emplace(j["thresholds"].at("t_small_max").get<double>(),
                         j["thresholds"].at("t_medium_max").get<double>());
  }
}

void save_manifest(const SplitManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << nlohmann::json(manifest).dump(2) << '\n';
}

SplitManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read split manifest " + path.string());
  return nlohmann::json::parse(in).get<SplitManifest>();
}

PreprocessedPair preprocess_pair(const cv::Mat& image, const cv::Mat& mask, std::int64_t size) {
  if (image.empty() || image.channels() != 3 || image.depth() != CV_8U) {
    throw Error(ErrorKind::CorruptImage, "expected an 8-bit 3-channel image");
  }
  if (mask.empty() || mask.channels() != 1) throw Error(ErrorKind::CorruptImage, "expected a single-channel mask");
  const cv::Size target(static_cast<int>(size), static_cast<int>(size));

  cv::Mat resized;
  cv::resize(image, resized, target, 0, 0, cv::INTER_LINEAR);
  cv::cvtColor(resized, resized, cv::COLOR_BGR2RGB);
  PreprocessedPair out;
  resized.convertTo(out.image, CV_32FC3, 1.0 / 255.0);

  cv::Mat resized_mask;
  cv::resize(mask, resized_mask, target, 0, 0, cv::INTER_NEAREST);
  out.mask = resized_mask > 127;
  out.mask.setTo(1, out.mask);
  return out;
}

PreprocessedPair load_pair(const DatasetEntry& entry, std::int64_t size) {
  cv::Mat image = cv::imread(entry.image_path.string(), cv::IMREAD_COLOR);
  if (image.empty()) throw Error(ErrorKind::CorruptImage, "cannot decode image " + entry.image_path.string());
  return preprocess_pair(image, read_mask(entry.mask_path), size);
}

std::vector<Sample> load_samples(const DatasetIndex& index, std::span<const std::string> ids, std::int64_t size,
                                 const SizeThresholds& thresholds) {
  std::vector<Sample> samples;
  samples.reserve(ids.size());
  for (const auto& id : ids) {
    auto pair = load_pair(index.find(id), size);
    auto label = derive_attributes(pair.mask, thresholds);
    samples.push_back({id, std::move(pair.image), std::move(pair.mask), label});
  }
  return samples;
}

SizeThresholds fit_thresholds(const DatasetIndex& index, std::span<const std::string> ids, std::int64_t size) {
  std::vector<BinaryMask> masks;
  masks.reserve(ids.size());
  for (const auto& id : ids) masks.push_back(load_pair(index.find(id), size).mask);
  return fit_size_thresholds(masks);
}

torch::Tensor image_to_tensor(const cv::Mat3f& image) {
  cv::Mat3f contiguous = image.isContinuous() ? image : image.clone();
  return torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kFloat32)
      .permute({2, 0, 1})
      .clone();
}

torch::Tensor mask_to_tensor(const BinaryMask& mask) {
  cv::Mat1b contiguous = mask.isContinuous() ? mask : mask.clone();
  return torch::from_blob(contiguous.data, {1, contiguous.rows, contiguous.cols}, torch::kUInt8)
      .ne(0)
      .to(torch::kFloat32);
}

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> order) {
  Batch batch;
  std::vector<torch::Tensor> images, masks;
  std::vector<AttributeLabel> labels;
  for (auto i : order) {
    const auto& s = samples[i];
    images.push_back(image_to_tensor(s.image));
    masks.push_back(mask_to_tensor(s.mask));
    labels.push_back(s.label);
    batch.ids.push_back(s.sample_id);
  }
  batch.images = torch::stack(images);
  batch.masks = torch::stack(masks);
  batch.count_labels = torch::empty({static_cast<std::int64_t>(labels.size())}, torch::kInt64);
  batch.size_labels = torch::empty_like(batch.count_labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    batch.count_labels[static_cast<std::int64_t>(i)] = static_cast<std::int64_t>(labels[i].count_class);
    batch.size_labels[static_cast<std::int64_t>(i)] = static_cast<std::int64_t>(labels[i].size_class);
  }
  return batch;
}

}  // namespace tganet::data
