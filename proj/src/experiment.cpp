#include "tganet/experiment.hpp"

#include <fstream>
#include <iostream>

#include "tganet/errors.hpp"

namespace tganet {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

nlohmann::json metrics_json(const metrics::MetricSet& m) {
  return {{"miou", m.miou}, {"mdsc", m.mdsc}, {"recall", m.recall}, {"precision", m.precision}, {"f2", m.f2}};
}

nlohmann::json loss_json(const loss::LossBreakdown& b) {
  return {{"ce_count", b.ce_count}, {"ce_size", b.ce_size}, {"bce_seg", b.bce_seg},
          {"dice_seg", b.dice_seg}, {"total", b.total}};
}

}  // namespace

void to_json(nlohmann::json& j, const ExperimentManifest& e) {
  j = nlohmann::json{{"format_version", kExperimentFormatVersion},
                     {"dataset", {{"root", e.dataset_root}, {"name", e.dataset_name}}},
                     {"network", e.network},
                     {"train", e.train},
                     {"split_manifest", e.split_manifest},
                     {"embeddings", {{"source", e.embeddings_source}, {"k", e.network.embedding_k}}},
                     {"output_dir", e.output_dir},
                     {"variant", e.variant}};
  if (e.thresholds) {
    j["thresholds"] = {{"t_small_max", e.thresholds->small_max()}, {"t_medium_max", e.thresholds->medium_max()}};
  } else {
    j["thresholds"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, ExperimentManifest& e) {
  if (j.value("format_version", 0) != kExperimentFormatVersion) {
    throw Error(ErrorKind::CheckpointVersionMismatch, "unsupported experiment manifest version");
  }
  e.dataset_root = j.at("dataset").value("root", std::string());
  e.dataset_name = j.at("dataset").value("name", std::string());
  e.network = j.value("network", nlohmann::json::object()).get<NetworkConfig>();
  e.train = j.value("train", nlohmann::json::object()).get<training::TrainConfig>();
  e.split_manifest = j.value("split_manifest", std::string());
  e.embeddings_source = j.at("embeddings").value("source", std::string("seed:42"));
  e.output_dir = j.value("output_dir", std::string());
  e.variant = j.value("variant", std::string("full"));
  e.thresholds.reset();
  if (j.contains("thresholds") && !j["thresholds"].is_null()) {
    e.thresholds.emplace(j["thresholds"].at("t_small_max").get<double>(),
                         j["thresholds"].at("t_medium_max").get<double>());
  }
}

ExperimentManifest load_experiment(const fs::path& path) { return read_json(path).get<ExperimentManifest>(); }

void save_experiment(const ExperimentManifest& e, const fs::path& path) { write_json(nlohmann::json(e), path); }

ExperimentManifest experiment_for_split(const fs::path& split_manifest) {
  const auto split = data::load_manifest(split_manifest);
  ExperimentManifest e;
  e.dataset_root = split.root;
  e.dataset_name = split.source_name;
  e.split_manifest = fs::absolute(split_manifest).lexically_normal().string();
  e.thresholds = split.thresholds;
  e.network.input_size = split.mask_size;
  return e;
}

void apply_override(ExperimentManifest& e, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorKind::InvalidConfig, "override must look like key=value: '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }

  auto j = nlohmann::json(e);
  nlohmann::json::json_pointer pointer;
  std::size_t start = 0;
  while (start <= key.size()) {
    const auto dot = key.find('.', start);
    pointer /= key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!j.contains(pointer)) throw Error(ErrorKind::InvalidConfig, "unknown configuration key '" + key + "'");
  j[pointer] = value;
  // The embedding dimension lives in the network config.
  if (key == "embeddings.k") j["network"]["embedding_k"] = value;
  try {
    e = j.get<ExperimentManifest>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::InvalidConfig, "bad value for '" + key + "': " + ex.what());
  }
}

training::TrainHistory run_training(const ExperimentManifest& e) {
  if (e.output_dir.empty()) throw Error(ErrorKind::InvalidConfig, "experiment has no output_dir");
  if (!e.thresholds) throw Error(ErrorKind::InvalidConfig, "experiment has no size thresholds; run prepare first");
  e.network.validate();
  e.train.validate();
  const fs::path out(e.output_dir);
  fs::create_directories(out);
  save_experiment(e, out / kExperimentFile);

  const auto split = data::load_manifest(e.split_manifest);
  const auto index = data::index_dataset(e.dataset_root, e.dataset_name);
  const auto size = e.network.input_size;
  const auto train_samples = data::load_samples(index, split.train, size, *e.thresholds);
  const auto valid_samples = data::load_samples(index, split.valid, size, *e.thresholds);
  const auto embeddings = AttributeEmbeddings::load(e.embeddings_source, e.network.embedding_k);

  auto result = training::train(e.network, e.train, embeddings, train_samples, valid_samples,
                                {out / kCheckpointFile, out / kStepLogFile});
  const auto& history = result.history;
  {
    auto csv = open_output(out / kHistoryFile);
    training::write_history_csv(csv, history);
  }
  write_json({{"experiment", nlohmann::json(e)},
              {"seed", e.train.seed},
              {"code_hash", std::string(source_hash())},
              {"dataset", e.dataset_name},
              {"variant", e.variant},
              {"parameter_count", result.model->parameter_count()},
              {"epochs", history.epochs.size()},
              {"steps", history.steps},
              {"stop_reason", history.stop_reason},
              {"best_epoch", history.best_epoch},
              {"best_monitor", history.best_monitor}},
             out / kRunFile);
  return history;
}

training::Evaluation run_evaluation(const EvaluationRequest& request) {
  const auto experiment = load_experiment(request.run_dir / kExperimentFile);
  if (!experiment.thresholds) throw Error(ErrorKind::InvalidConfig, "training run has no size thresholds");
  const auto split_path = request.split_manifest.empty() ? fs::path(experiment.split_manifest) : request.split_manifest;
  const auto split = data::load_manifest(split_path);
  const auto index = data::index_dataset(split.root, split.source_name);
  std::vector<std::string> ids;
  if (request.split == "all") {
    for (const auto* part : {&split.train, &split.valid, &split.test}) ids.insert(ids.end(), part->begin(), part->end());
  } else {
    ids = split.split(request.split);
  }
  if (ids.empty()) throw Error(ErrorKind::EmptyDataset, "split '" + request.split + "' of " + split.source_name + " is empty");
  const auto samples = data::load_samples(index, ids, experiment.network.input_size, *experiment.thresholds);

  auto evaluation = training::evaluate_model(request.run_dir / kCheckpointFile, samples, experiment.train.batch_size);

  const auto out = request.output_dir.empty() ? request.run_dir : request.output_dir;
  fs::create_directories(out);
  if (fs::absolute(out) != fs::absolute(request.run_dir)) save_experiment(experiment, out / kExperimentFile);
  const std::string method = experiment.variant == "full" ? "TGANet" : std::string(ablation_title(parse_ablation_variant(experiment.variant)));
  {
    auto csv = open_output(out / kMetricsFile);
    metrics::write_metrics_csv(csv, evaluation.summary.records);
  }
  {
    auto csv = open_output(out / kStratifiedCsvFile);
    metrics::write_stratified_csv(csv, evaluation.stratified, method);
  }
  {
    auto txt = open_output(out / kStratifiedTextFile);
    txt << metrics::format_stratified_table(evaluation.stratified, method);
  }
  nlohmann::json stratified = nlohmann::json::object();
  for (std::size_t b = 0; b < metrics::kBucketNames.size(); ++b) {
    const auto& v = evaluation.stratified.mdsc[b];
    stratified[metrics::kBucketNames[b]] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  write_json({{"method", method},
              {"variant", experiment.variant},
              {"train_dataset", experiment.dataset_name},
              {"eval_dataset", split.source_name},
              {"split", request.split},
              {"samples", samples.size()},
              {"thresholds", {{"t_small_max", experiment.thresholds->small_max()},
                              {"t_medium_max", experiment.thresholds->medium_max()},
                              {"source", experiment.dataset_name}}},
              {"aggregate", metrics_json(evaluation.summary.aggregate)},
              {"loss", loss_json(evaluation.summary.loss)},
              {"stratified_mdsc", stratified}},
             out / kSummaryFile);
  return evaluation;
}

}  // namespace tganet
