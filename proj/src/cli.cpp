#include "tganet/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "tganet/checkpoint.hpp"
#include "tganet/data.hpp"
#include "tganet/errors.hpp"
#include "tganet/experiment.hpp"
#include "tganet/plots.hpp"
#include "tganet/synthetic.hpp"

namespace tganet::cli {

namespace fs = std::filesystem;

namespace {

std::string default_data_root() {
  const char* env = std::getenv("TGANET_DATA_ROOT");
  return env ? env : "";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

// ---- synth -----------------------------------------------------------------

int cmd_synth(CLI::App& app, std::vector<std::string>& argv) {
  std::string out;
  int count = 30;
  int size = 256;
  std::uint64_t seed = 0;
  app.add_option("--out", out, "Output dataset root")->required();
  app.add_option("--count", count, "Number of image/mask pairs")->check(CLI::PositiveNumber);
  app.add_option("--size", size, "Square image side in pixels")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Generator seed");
  app.parse(argv);
  data::write_synthetic_dataset(out, count, size, seed);
  std::cout << "wrote " << count << " synthetic pairs to " << out << '\n';
  return 0;
}

// ---- prepare ---------------------------------------------------------------

int cmd_prepare(CLI::App& app, std::vector<std::string>& argv) {
  std::string root = default_data_root();
  std::string name;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t size = 256;
  data::SplitRatios ratios;
  double official_valid = 0.1;
  app.add_option("--data", root, "Dataset root with images/ and masks/ (default $TGANET_DATA_ROOT)");
  app.add_option("--name", name, "Dataset name (default: root directory name)");
  app.add_option("--seed", seed, "Split seed");
  app.add_option("--size", size, "Preprocessing size used to fit size thresholds");
  app.add_option("--valid", ratios.valid, "Validation fraction for random splits");
  app.add_option("--test", ratios.test, "Test fraction for random splits");
  app.add_option("--official-valid", official_valid, "Validation fraction carved from an official train list");
  app.add_option("--out", out, "Split manifest path (default: <name>_split.json)");
  app.parse(argv);
  if (root.empty()) throw Error(ErrorKind::MissingDirectory, "no dataset root given (--data or TGANET_DATA_ROOT)");
  if (name.empty()) name = fs::path(root).lexically_normal().filename().string();
  if (name.empty()) name = fs::path(root).lexically_normal().parent_path().filename().string();
  if (out.empty()) out = name + "_split.json";
  ratios.train = 1.0 - ratios.valid - ratios.test;

  const auto index = data::index_dataset(root, name);
  const fs::path train_list = fs::path(root) / "train.txt";
  const fs::path test_list = fs::path(root) / "test.txt";
  data::SplitManifest manifest;
  if (fs::exists(train_list) && fs::exists(test_list)) {
    manifest = data::split_official(index, data::read_id_list(train_list), data::read_id_list(test_list),
                                     official_valid);
    manifest.seed = seed;
  } else {
    manifest = data::split_dataset(index, ratios, seed);
  }
  manifest.root = fs::absolute(root).lexically_normal().string();
  manifest.mask_size = size;
  manifest.thresholds = data::fit_thresholds(index, manifest.train, size);
  data::save_manifest(manifest, out);
  std::cout << manifest.mode << " split of " << name << ": train " << manifest.train.size() << ", valid "
            << manifest.valid.size() << ", test " << manifest.test.size() << "; excluded " << index.excluded.size()
            << "; size thresholds " << manifest.thresholds->small_max() << ' ' << manifest.thresholds->medium_max()
            << " -> " << out << '\n';
  return 0;
}

// ---- train / ablate ----------------------------------------------------------

struct ExperimentOptions {
  std::string config;
  std::string split;
  std::vector<std::string> overrides;
};

void add_experiment_options(CLI::App& app, ExperimentOptions& o) {
  app.add_option("--config", o.config, "Experiment JSON to start from");
  app.add_option("--split", o.split, "Split manifest from `prepare`");
  app.add_option("--set", o.overrides, "Override key=value, e.g. train.lr=1e-3 or network.fem_width=8");
}

ExperimentManifest build_experiment(const ExperimentOptions& o) {
  ExperimentManifest e;
  if (!o.config.empty()) {
    e = load_experiment(o.config);
    if (!o.split.empty()) {
      const auto from_split = experiment_for_split(o.split);
      e.dataset_root = from_split.dataset_root;
      e.dataset_name = from_split.dataset_name;
      e.split_manifest = from_split.split_manifest;
      e.thresholds = from_split.thresholds;
    }
  } else if (!o.split.empty()) {
    e = experiment_for_split(o.split);
  } else {
    throw Error(ErrorKind::InvalidConfig, "need --split or --config");
  }
  for (const auto& assignment : o.overrides) apply_override(e, assignment);
  return e;
}

void report_history(const ExperimentManifest& e, const training::TrainHistory& h) {
  std::cout << e.variant << ": " << h.epochs.size() << " epochs, " << h.steps << " steps, stopped ("
            << h.stop_reason << "), best epoch " << h.best_epoch << " monitor " << h.best_monitor << " -> "
            << e.output_dir << '\n';
}

void report_evaluation(const training::Evaluation& ev, const fs::path& out) {
  const auto& m = ev.summary.aggregate;
  std::cout << "mIoU " << m.miou << " mDSC " << m.mdsc << " recall " << m.recall << " precision " << m.precision
            << " F2 " << m.f2 << " -> " << out.string() << '\n';
}

int cmd_train(CLI::App& app, std::vector<std::string>& argv) {
  ExperimentOptions o;
  std::string out;
  std::string variant;
  add_experiment_options(app, o);
  app.add_option("--out", out, "Run directory");
  app.add_option("--variant", variant, "Ablation variant: full, no-label-classifier, no-msfa, no-fem, no-all");
  app.parse(argv);
  auto e = build_experiment(o);
  if (!out.empty()) e.output_dir = out;
  if (!variant.empty()) {
    const auto v = parse_ablation_variant(variant);
    e.variant = std::string(to_string(v));
    e.network = apply_variant(apply_variant(e.network, AblationVariant::Full), v);
  }
  report_history(e, run_training(e));
  return 0;
}

int cmd_ablate(CLI::App& app, std::vector<std::string>& argv) {
  ExperimentOptions o;
  std::string out;
  std::vector<std::string> variants;
  bool all = false;
  std::string eval_split = "test";
  add_experiment_options(app, o);
  app.add_option("--out", out, "Parent directory; one run directory per variant")->required();
  app.add_option("--variant", variants, "Variant(s) to run");
  app.add_flag("--all", all, "Run every variant in table order");
  app.add_option("--eval-split", eval_split, "Split evaluated after training");
  app.parse(argv);
  std::vector<AblationVariant> selected;
  if (all) {
    selected.assign(kAblationOrder.begin(), kAblationOrder.end());
  } else {
    for (const auto& v : variants) selected.push_back(parse_ablation_variant(v));
  }
  if (selected.empty()) throw Error(ErrorKind::InvalidConfig, "ablate needs --variant or --all");
  const auto base = build_experiment(o);
  for (const auto v : selected) {
    auto e = base;
    e.variant = std::string(to_string(v));
    e.network = apply_variant(apply_variant(base.network, AblationVariant::Full), v);
    e.output_dir = (fs::path(out) / e.variant).string();
    std::cout << ablation_title(v) << '\n';
    report_history(e, run_training(e));
    EvaluationRequest request;
    request.run_dir = e.output_dir;
    request.split = eval_split;
    report_evaluation(run_evaluation(request), e.output_dir);
  }
  return 0;
}

// ---- eval / cross-eval -------------------------------------------------------

int cmd_eval(CLI::App& app, std::vector<std::string>& argv, bool cross) {
  EvaluationRequest request;
  std::string run_dir;
  std::string manifest;
  std::string out;
  request.split = cross ? "all" : "test";
  app.add_option("--run", run_dir, "Training run directory")->required();
  auto* opt = app.add_option("--manifest", manifest, "Split manifest of the evaluated dataset");
  if (cross) opt->required();
  app.add_option("--split", request.split, "train, valid, test or all");
  auto* out_opt = app.add_option("--out", out, "Output directory (default: the run directory)");
  if (cross) out_opt->required();
  app.parse(argv);
  request.run_dir = run_dir;
  request.split_manifest = manifest;
  request.output_dir = out;
  const auto evaluation = run_evaluation(request);
  report_evaluation(evaluation, out.empty() ? run_dir : out);
  return 0;
}

// ---- infer -------------------------------------------------------------------

int cmd_infer(CLI::App& app, std::vector<std::string>& argv) {
  std::string checkpoint_path;
  std::string image_path;
  std::string out_dir;
  app.add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  app.add_option("--image", image_path, "Input image")->required();
  app.add_option("--out-dir", out_dir, "Output directory (default: next to the image)");
  app.parse(argv);

  auto checkpoint = load_checkpoint(checkpoint_path);
  auto& model = checkpoint.model;
  model->eval();
  const auto size = model->config().input_size;

  const cv::Mat raw = cv::imread(image_path, cv::IMREAD_COLOR);
  if (raw.empty()) throw Error(ErrorKind::CorruptImage, "cannot decode " + image_path);
  const cv::Mat1b no_mask = cv::Mat1b::zeros(raw.size());
  const auto pair = data::preprocess_pair(raw, no_mask, size);

  torch::NoGradGuard no_grad;
  const auto output = model->forward(data::image_to_tensor(pair.image).unsqueeze(0));
  const auto prob = torch::nn::functional::interpolate(
                        output.mask_prob, torch::nn::functional::InterpolateFuncOptions()
                                              .size(std::vector<std::int64_t>{raw.rows, raw.cols})
                                              .mode(torch::kBilinear)
                                              .align_corners(false))
                        .squeeze()
                        .contiguous();
  const auto binary = prob.gt(0.5).to(torch::kUInt8).mul(255).contiguous();
  cv::Mat1b mask(raw.rows, raw.cols);
  std::memcpy(mask.data, binary.data_ptr<std::uint8_t>(), static_cast<std::size_t>(raw.rows) * raw.cols);

  const fs::path in(image_path);
  const fs::path dir = out_dir.empty() ? in.parent_path() : fs::path(out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  const auto mask_path = dir / (in.stem().string() + "_mask.png");
  const auto attr_path = dir / (in.stem().string() + "_attr.json");
  if (!cv::imwrite(mask_path.string(), mask)) throw Error(ErrorKind::Io, "cannot write " + mask_path.string());

  nlohmann::json attrs = nlohmann::json::object();
  if (output.logits) {
    const auto p = attribute_probabilities(*output.logits).to(torch::kDouble).squeeze(0).contiguous();
    for (std::size_t i = 0; i < kAttributeWords.size(); ++i) attrs[std::string(kAttributeWords[i])] = p[i].item<double>();
  } else {
    for (const auto& w : kAttributeWords) attrs[std::string(w)] = nullptr;
  }
  write_text(attr_path, attrs.dump(2) + "\n");
  std::cout << mask_path.string() << '\n' << attr_path.string() << '\n';
  return 0;
}

// ---- report ------------------------------------------------------------------

struct RunSummary {
  fs::path dir;
  nlohmann::json summary;
  std::map<std::string, std::vector<double>> history;  // column -> per-epoch values
};

std::map<std::string, std::vector<double>> read_csv_columns(const fs::path& path) {
  std::map<std::string, std::vector<double>> columns;
  std::ifstream in(path);
  if (!in) return columns;
  std::string line;
  std::vector<std::string> header;
  if (std::getline(in, line)) {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::size_t i = 0;
    for (std::string cell; std::getline(ss, cell, ',') && i < header.size(); ++i) {
      columns[header[i]].push_back(std::strtod(cell.c_str(), nullptr));
    }
  }
  return columns;
}

std::vector<fs::path> collect_runs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> runs;
  for (const auto& input : inputs) {
    const fs::path p(input);
    if (fs::exists(p / kSummaryFile)) {
      runs.push_back(p);
      continue;
    }
    if (!fs::is_directory(p)) throw Error(ErrorKind::MissingDirectory, input + " is not a run directory");
    std::vector<fs::path> children;
    for (const auto& entry : fs::directory_iterator(p)) {
      if (entry.is_directory() && fs::exists(entry.path() / kSummaryFile)) children.push_back(entry.path());
    }
    if (children.empty()) throw Error(ErrorKind::MissingDirectory, input + " holds no evaluated runs");
    std::sort(children.begin(), children.end());
    runs.insert(runs.end(), children.begin(), children.end());
  }
  return runs;
}

std::string run_label(const RunSummary& r) {
  std::string label = r.summary.value("method", r.dir.filename().string());
  const auto train = r.summary.value("train_dataset", std::string());
  const auto eval = r.summary.value("eval_dataset", std::string());
  if (train != eval) label += " (" + train + "->" + eval + ")";
  return label;
}

void write_metric_row(std::ostream& out, const nlohmann::json& m) {
  out << m.at("miou").get<double>() << ',' << m.at("mdsc").get<double>() << ',' << m.at("recall").get<double>()
      << ',' << m.at("precision").get<double>() << ',' << m.at("f2").get<double>() << '\n';
}

int cmd_report(CLI::App& app, std::vector<std::string>& argv) {
  std::vector<std::string> inputs;
  std::string out;
  app.add_option("--runs", inputs, "Run directories, or parents of run directories")->required();
  app.add_option("--out", out, "Report directory")->required();
  app.parse(argv);

  std::vector<RunSummary> runs;
  for (const auto& dir : collect_runs(inputs)) {
    RunSummary r{dir, read_json(dir / kSummaryFile), read_csv_columns(dir / kHistoryFile)};
    runs.push_back(std::move(r));
  }
  fs::create_directories(out);

  std::ostringstream comparison;
  comparison << std::setprecision(10);
  comparison << "run,method,variant,train_dataset,eval_dataset,split,samples,miou,mdsc,recall,precision,f2\n";
  for (const auto& r : runs) {
    const auto& s = r.summary;
    comparison << r.dir.filename().string() << ',' << s.value("method", "") << ',' << s.value("variant", "") << ','
               << s.value("train_dataset", "") << ',' << s.value("eval_dataset", "") << ',' << s.value("split", "")
               << ',' << s.value("samples", 0) << ',';
    write_metric_row(comparison, s.at("aggregate"));
  }
  write_text(fs::path(out) / "comparison.csv", comparison.str());

  std::ostringstream ablation;
  ablation << std::setprecision(10);
  ablation << "index,method,variant,miou,mdsc,recall,precision,f2\n";
  // One row per variant, taken from the directory holding the most variants (an ablate output).
  auto same_dataset = [](const RunSummary& r) {
    return r.summary.value("train_dataset", "") == r.summary.value("eval_dataset", "");
  };
  std::map<fs::path, std::set<std::string>> variants_by_parent;
  for (const auto& r : runs) {
    if (same_dataset(r)) variants_by_parent[r.dir.parent_path()].insert(r.summary.value("variant", ""));
  }
  int row = 0;
  for (std::size_t i = 0; i < kAblationOrder.size(); ++i) {
    const std::string name(to_string(kAblationOrder[i]));
    const RunSummary* chosen = nullptr;
    for (const auto& r : runs) {
      if (r.summary.value("variant", "") != name || !same_dataset(r)) continue;
      if (chosen == nullptr || variants_by_parent[r.dir.parent_path()].size() >
                                   variants_by_parent[chosen->dir.parent_path()].size()) {
        chosen = &r;
      }
    }
    if (chosen == nullptr) continue;
    ablation << ++row << ',' << ablation_title(kAblationOrder[i]) << ',' << name << ',';
    write_metric_row(ablation, chosen->summary.at("aggregate"));
  }
  write_text(fs::path(out) / "ablation.csv", ablation.str());

  std::vector<plots::Series> loss_series;
  std::vector<plots::Series> mdsc_series;
  for (const auto& r : runs) {
    const auto label = run_label(r);
    if (auto it = r.history.find("train_total"); it != r.history.end()) loss_series.push_back({label + " train", it->second});
    if (auto it = r.history.find("valid_total"); it != r.history.end()) loss_series.push_back({label + " valid", it->second});
    if (auto it = r.history.find("valid_mdsc"); it != r.history.end()) mdsc_series.push_back({label, it->second});
  }
  if (!loss_series.empty()) plots::write_line_plot(fs::path(out) / "loss.png", "Loss per epoch", loss_series);
  if (!mdsc_series.empty()) plots::write_line_plot(fs::path(out) / "valid_mdsc.png", "Validation mDSC per epoch", mdsc_series);

  std::vector<std::string> categories;
  std::vector<plots::Series> bars = {{"mIoU", {}}, {"mDSC", {}}, {"Recall", {}}, {"Precision", {}}, {"F2", {}}};
  for (const auto& r : runs) {
    categories.push_back(run_label(r));
    const auto& m = r.summary.at("aggregate");
    bars[0].values.push_back(m.at("miou").get<double>());
    bars[1].values.push_back(m.at("mdsc").get<double>());
    bars[2].values.push_back(m.at("recall").get<double>());
    bars[3].values.push_back(m.at("precision").get<double>());
    bars[4].values.push_back(m.at("f2").get<double>());
  }
  plots::write_bar_plot(fs::path(out) / "metrics.png", "Test metrics", categories, bars);
  std::cout << runs.size() << " runs -> " << out << '\n';
  return 0;
}

using Command = int (*)(CLI::App&, std::vector<std::string>&);

const std::map<std::string, std::pair<Command, const char*>>& commands() {
  static const std::map<std::string, std::pair<Command, const char*>> table = {
      {"synth", {cmd_synth, "Write a synthetic image/mask dataset"}},
      {"prepare", {cmd_prepare, "Index a dataset, split it and fit size thresholds"}},
      {"train", {cmd_train, "Train one experiment"}},
      {"eval", {[](CLI::App& a, std::vector<std::string>& v) { return cmd_eval(a, v, false); },
                "Evaluate a run on a split"}},
      {"cross-eval", {[](CLI::App& a, std::vector<std::string>& v) { return cmd_eval(a, v, true); },
                      "Evaluate a run on another dataset"}},
      {"ablate", {cmd_ablate, "Train and evaluate ablation variants"}},
      {"infer", {cmd_infer, "Predict a mask and attributes for one image"}},
      {"report", {cmd_report, "Merge evaluated runs into tables and plots"}},
  };
  return table;
}

std::string usage() {
  std::string text = "usage: tganet <command> [options]\ncommands:\n";
  for (const auto& [name, entry] : commands()) text += "  " + name + std::string(12 - name.size(), ' ') + entry.second + '\n';
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    if (args.empty()) throw Error(ErrorKind::UnknownCommand, "no command given");
    if (args[0] == "-h" || args[0] == "--help" || args[0] == "help") {
      std::cout << usage();
      return 0;
    }
    const auto it = commands().find(args[0]);
    if (it == commands().end()) throw Error(ErrorKind::UnknownCommand, "unknown command '" + args[0] + "'");
    CLI::App app(it->second.second, "tganet " + args[0]);
    // CLI11 consumes a reversed argument vector.
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    try {
      return it->second.first(app, rest);
    } catch (const CLI::CallForHelp&) {
      std::cout << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      std::cerr << "error: " << args[0] << ": " << e.what() << '\n';
      return 2;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace tganet::cli
