#include "tganet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <iostream>
#include <random>

#include "tganet/checkpoint.hpp"
#include "tganet/errors.hpp"

namespace tganet::training {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::InvalidConfig, what);
  };
  require(lr > 0.0, "lr must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(max_epochs > 0, "max_epochs must be positive");
  require(lr_reduce_factor > 0.0 && lr_reduce_factor < 1.0, "lr_reduce_factor must lie in (0, 1)");
  require(lr_patience >= 1 && early_stop_patience >= 1, "patiences must be at least 1");
  require(monitor == "valid_total" || monitor == "valid_mdsc", "monitor must be valid_total or valid_mdsc");
  require(min_delta >= 0.0 && min_lr >= 0.0, "min_delta and min_lr must be non-negative");
  require(max_steps >= 0, "max_steps must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  const auto& a = c.augment_options;
  j = nlohmann::json{{"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"lr_reduce_factor", c.lr_reduce_factor},
                     {"lr_patience", c.lr_patience},
                     {"early_stop_patience", c.early_stop_patience},
                     {"monitor", c.monitor},
                     {"min_delta", c.min_delta},
                     {"min_lr", c.min_lr},
                     {"seed", c.seed},
                     {"augment", c.augment},
                     {"max_steps", c.max_steps},
                     {"augment_options",
                      {{"p_hflip", a.p_hflip},
                       {"p_vflip", a.p_vflip},
                       {"p_rotate", a.p_rotate},
                       {"p_dropout", a.p_dropout},
                       {"rotate_limit_deg", a.rotate_limit_deg},
                       {"max_holes", a.max_holes},
                       {"max_hole_fraction", a.max_hole_fraction}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d = c;
  c.lr = j.value("lr", d.lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.lr_reduce_factor = j.value("lr_reduce_factor", d.lr_reduce_factor);
  c.lr_patience = j.value("lr_patience", d.lr_patience);
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.monitor = j.value("monitor", d.monitor);
  c.min_delta = j.value("min_delta", d.min_delta);
  c.min_lr = j.value("min_lr", d.min_lr);
  c.seed = j.value("seed", d.seed);
  c.augment = j.value("augment", d.augment);
  c.max_steps = j.value("max_steps", d.max_steps);
  if (j.contains("augment_options")) {
    const auto& a = j["augment_options"];
    auto& o = c.augment_options;
    o.p_hflip = a.value("p_hflip", o.p_hflip);
    o.p_vflip = a.value("p_vflip", o.p_vflip);
    o.p_rotate = a.value("p_rotate", o.p_rotate);
    o.p_dropout = a.value("p_dropout", o.p_dropout);
    o.rotate_limit_deg = a.value("rotate_limit_deg", o.rotate_limit_deg);
    o.max_holes = a.value("max_holes", o.max_holes);
    o.max_hole_fraction = a.value("max_hole_fraction", o.max_hole_fraction);
  }
}

ScheduleDecision update_schedule(double monitor_value, ScheduleState& state, const TrainConfig& config) {
  ScheduleDecision d;
  const double gain = !state.best ? 0.0 : (config.minimize() ? *state.best - monitor_value : monitor_value - *state.best);
  d.improved = !state.best || gain >= config.min_delta;
  if (d.improved) {
    state.best = monitor_value;
    state.epochs_since_improvement = 0;
    state.epochs_since_reduction = 0;
  } else {
    ++state.epochs_since_improvement;
    ++state.epochs_since_reduction;
    if (state.epochs_since_reduction >= config.lr_patience) {
      const double reduced = std::max(state.lr * config.lr_reduce_factor, config.min_lr);
      d.reduced = reduced < state.lr;
      state.lr = reduced;
      state.epochs_since_reduction = 0;
    }
    d.stop = state.epochs_since_improvement >= config.early_stop_patience;
  }
  d.new_lr = state.lr;
  return d;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,lr,train_ce_count,train_ce_size,train_bce_seg,train_dice_seg,train_total,"
         "valid_ce_count,valid_ce_size,valid_bce_seg,valid_dice_seg,valid_total,"
         "valid_miou,valid_mdsc,valid_recall,valid_precision,valid_f2,monitor,improved\n";
  out << std::setprecision(10);
  for (const auto& r : history.epochs) {
    const auto& t = r.train;
    const auto& v = r.valid;
    const auto& m = r.valid_metrics;
    out << r.epoch << ',' << r.lr << ',' << t.ce_count << ',' << t.ce_size << ',' << t.bce_seg << ','
        << t.dice_seg << ',' << t.total << ',' << v.ce_count << ',' << v.ce_size << ',' << v.bce_seg << ','
        << v.dice_seg << ',' << v.total << ',' << m.miou << ',' << m.mdsc << ',' << m.recall << ','
        << m.precision << ',' << m.f2 << ',' << r.monitor << ',' << (r.improved ? 1 : 0) << '\n';
  }
}

EvalSummary evaluate_samples(TGANet& model, std::span<const data::Sample> samples, std::int64_t batch_size) {
  if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "no samples to evaluate");
  torch::NoGradGuard no_grad;
  model->eval();
  EvalSummary summary;
  std::vector<metrics::MetricSet> all;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> order(end - start);
    std::iota(order.begin(), order.end(), start);
    auto batch = data::make_batch(samples, order);
    auto output = model->forward(batch.images);
    auto terms = loss::joint_loss(output, batch.masks, batch.count_labels, batch.size_labels);
    summary.loss += terms.values() * static_cast<double>(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& s = samples[order[i]];
      auto counts = metrics::confusion_counts(output.mask_prob[static_cast<std::int64_t>(i)],
                                              batch.masks[static_cast<std::int64_t>(i)]);
      auto m = metrics::compute_metric_set(counts);
      summary.records.push_back({s.sample_id, m, s.label});
      all.push_back(m);
    }
  }
  summary.loss = summary.loss * (1.0 / static_cast<double>(samples.size()));
  summary.aggregate = metrics::aggregate(all);
  return summary;
}

namespace {

bool finite(const loss::LossBreakdown& b) {
  return std::isfinite(b.ce_count) && std::isfinite(b.ce_size) && std::isfinite(b.bce_seg) &&
         std::isfinite(b.dice_seg) && std::isfinite(b.total);
}

void set_lr(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

}  // namespace

TrainResult train(const NetworkConfig& net_config, const TrainConfig& config, const AttributeEmbeddings& embeddings,
                  std::span<const data::Sample> train_samples, std::span<const data::Sample> valid_samples,
                  const TrainOutputs& outputs) {
  config.validate();
  if (train_samples.empty()) throw Error(ErrorKind::EmptyDataset, "training split is empty");
  if (valid_samples.empty()) throw Error(ErrorKind::EmptyDataset, "validation split is empty");

  torch::manual_seed(config.seed);
  TrainResult result;
  result.model = TGANet(net_config, embeddings);
  auto& model = result.model;
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(config.lr));

  std::ofstream step_log;
  if (!outputs.step_log.empty()) {
    if (outputs.step_log.has_parent_path()) fs::create_directories(outputs.step_log.parent_path());
    step_log.open(outputs.step_log);
    step_log << loss::kStepCsvHeader << '\n';
  }

  ScheduleState schedule;
  schedule.lr = config.lr;
  auto& history = result.history;
  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(train_samples.size());

  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng() % (i + 1)]);

    model->train();
    loss::LossBreakdown epoch_loss;
    std::size_t seen = 0;
    bool step_budget_spent = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<data::Sample> batch_samples;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train_samples[order[i]];
        if (config.augment) {
          auto aug = data::augment_pair(s.image, s.mask,
                                        data::augment_seed(config.seed, epoch, static_cast<std::int64_t>(order[i])),
                                        config.augment_options);
          batch_samples.push_back({s.sample_id, aug.image, aug.mask, s.label});
        } else {
          batch_samples.push_back(s);
        }
      }
      std::vector<std::size_t> identity(batch_samples.size());
      std::iota(identity.begin(), identity.end(), 0);
      auto batch = data::make_batch(batch_samples, identity);

      auto output = model->forward(batch.images);
      auto terms = loss::joint_loss(output, batch.masks, batch.count_labels, batch.size_labels);
      const auto values = terms.values();
      if (!finite(values)) {
        const auto snapshot = outputs.checkpoint.empty() ? fs::path("diverged.ckpt")
                                                         : fs::path(outputs.checkpoint).replace_filename("diverged.ckpt");
        save_checkpoint(snapshot, model, &optimizer, {epoch, values.total});
        throw Error(ErrorKind::DivergedLoss, "non-finite loss at step " + std::to_string(history.steps + 1) +
                                                 " (epoch " + std::to_string(epoch) + "); snapshot at " +
                                                 snapshot.string());
      }
      optimizer.zero_grad();
      terms.total.backward();
      optimizer.step();

      ++history.steps;
      epoch_loss += values * static_cast<double>(batch_samples.size());
      seen += batch_samples.size();
      if (step_log.is_open()) loss::write_csv_row(step_log, history.steps, values);
      if (config.max_steps > 0 && history.steps >= config.max_steps) {
        step_budget_spent = true;
        break;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = schedule.lr;
    record.train = epoch_loss * (1.0 / static_cast<double>(seen));
    auto valid = evaluate_samples(model, valid_samples, config.batch_size);
    record.valid = valid.loss;
    record.valid_metrics = valid.aggregate;
    record.monitor = config.minimize() ? valid.loss.total : valid.aggregate.mdsc;

    const auto decision = update_schedule(record.monitor, schedule, config);
    record.improved = decision.improved;
    if (decision.improved) {
      history.best_epoch = epoch;
      history.best_monitor = record.monitor;
      if (!outputs.checkpoint.empty()) {
        save_checkpoint(outputs.checkpoint, model, &optimizer, {epoch, record.monitor});
      }
    }
    history.epochs.push_back(record);
    std::clog << "epoch " << epoch << " lr " << record.lr << " train " << record.train.total << " valid "
              << record.valid.total << " mDSC " << record.valid_metrics.mdsc << (decision.improved ? " *" : "")
              << '\n';
    if (decision.reduced) set_lr(optimizer, decision.new_lr);

    if (step_budget_spent) {
      history.stop_reason = "max_steps";
      break;
    }
    if (decision.stop) {
      history.stop_reason = "early_stopping";
      break;
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
  return result;
}

Evaluation evaluate_model(const fs::path& checkpoint, std::span<const data::Sample> samples,
                          std::int64_t batch_size) {
  if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "evaluation split is empty");
  auto loaded = load_checkpoint(checkpoint);
  Evaluation e;
  e.summary = evaluate_samples(loaded.model, samples, batch_size);
  std::vector<metrics::LabeledMetrics> labeled;
  for (const auto& r : e.summary.records) labeled.push_back({r.metrics, r.label});
  e.stratified = metrics::stratified_report(labeled);
  return e;
}

}  // namespace tganet::training
