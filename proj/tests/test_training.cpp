#include "testing.hpp"

#include <fstream>

#include "support.hpp"
#include "tganet/checkpoint.hpp"
#include "tganet/data.hpp"
#include "tganet/errors.hpp"
#include "tganet/experiment.hpp"
#include "tganet/synthetic.hpp"
#include "tganet/training.hpp"

using namespace tganet;
namespace fs = std::filesystem;

namespace {

training::TrainConfig flat_config() {
  training::TrainConfig c;
  c.lr = 1e-4;
  c.lr_patience = 5;
  c.early_stop_patience = 20;
  return c;
}

struct SyntheticSplit {
  std::vector<data::Sample> train, valid;
  SizeThresholds thresholds{0.1, 0.2};
};

SyntheticSplit synthetic_split(const std::string& name, int count) {
  const auto root = test::temp_dir(name);
  data::write_synthetic_dataset(root, count, 32, 3);
  const auto index = data::index_dataset(root, name);
  std::vector<std::string> ids;
  for (const auto& e : index.entries) ids.push_back(e.sample_id);
  SyntheticSplit s;
  s.thresholds = data::fit_thresholds(index, ids, 32);
  const std::vector<std::string> train(ids.begin(), ids.end() - 3), valid(ids.end() - 3, ids.end());
  s.train = data::load_samples(index, train, 32, s.thresholds);
  s.valid = data::load_samples(index, valid, 32, s.thresholds);
  return s;
}

}  // namespace

TEST_CASE("schedule keeps lr while improving") {
  auto config = flat_config();
  training::ScheduleState state;
  state.lr = config.lr;
  for (int i = 0; i < 30; ++i) {
    const auto d = training::update_schedule(1.0 - 0.01 * i, state, config);
    CHECK(d.improved);
    CHECK_FALSE(d.reduced);
    CHECK_FALSE(d.stop);
    CHECK(d.new_lr == 1e-4);
  }
}

TEST_CASE("schedule reduces once after lr_patience flat epochs") {
  auto config = flat_config();
  training::ScheduleState state;
  state.lr = config.lr;
  training::update_schedule(1.0, state, config);
  for (int i = 1; i < config.lr_patience; ++i) CHECK_FALSE(training::update_schedule(1.0, state, config).reduced);
  const auto d = training::update_schedule(1.0, state, config);
  CHECK(d.reduced);
  CHECK(d.new_lr == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK_FALSE(d.stop);
  // An improvement smaller than min_delta does not count.
  CHECK_FALSE(training::update_schedule(1.0 - 5e-7, state, config).improved);
}

TEST_CASE("schedule stops after early_stop_patience flat epochs") {
  auto config = flat_config();
  training::ScheduleState state;
  state.lr = config.lr;
  training::update_schedule(0.5, state, config);
  std::vector<double> lrs;
  for (int i = 1; i < config.early_stop_patience; ++i) {
    const auto d = training::update_schedule(0.5, state, config);
    CHECK_FALSE(d.stop);
    lrs.push_back(d.new_lr);
  }
  CHECK(training::update_schedule(0.5, state, config).stop);
  for (std::size_t i = 1; i < lrs.size(); ++i) {
    CHECK(lrs[i] <= lrs[i - 1]);
    if (lrs[i] < lrs[i - 1]) CHECK(lrs[i] == doctest::Approx(lrs[i - 1] * config.lr_reduce_factor).epsilon(1e-12));
  }
  CHECK(lrs.back() == doctest::Approx(1e-7).epsilon(1e-9));  // floor reached after 4 reductions
}

TEST_CASE("schedule maximizes mDSC") {
  auto config = flat_config();
  config.monitor = "valid_mdsc";
  training::ScheduleState state;
  state.lr = config.lr;
  training::update_schedule(0.5, state, config);
  CHECK(training::update_schedule(0.6, state, config).improved);
  CHECK_FALSE(training::update_schedule(0.55, state, config).improved);
}

TEST_CASE("config validation and json") {
  training::TrainConfig c;
  c.monitor = "train_total";
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.seed = 77;
  c.augment_options.max_holes = 3;
  const auto back = nlohmann::json(c).get<training::TrainConfig>();
  CHECK(back.seed == 77);
  CHECK(back.augment_options.max_holes == 3);
  CHECK(back.lr == c.lr);
}

TEST_CASE("training run, checkpoint and evaluation consistency") {
  auto split = synthetic_split("train_run", 12);
  auto net = NetworkConfig::tiny();
  training::TrainConfig config;
  config.lr = 1e-3;
  config.batch_size = 3;
  config.max_epochs = 6;
  config.lr_patience = 1;
  config.early_stop_patience = 3;
  config.seed = 5;
  const auto dir = test::temp_dir("train_run_out");
  const auto emb = AttributeEmbeddings::from_seed(42, net.embedding_k);
  auto result = training::train(net, config, emb, split.train, split.valid, {dir / "best.ckpt", dir / "steps.csv"});
  const auto& h = result.history;
  REQUIRE_FALSE(h.epochs.empty());
  CHECK(h.steps == static_cast<std::int64_t>(h.epochs.size()) * 3);

  double best = h.epochs.front().monitor;
  for (std::size_t i = 0; i < h.epochs.size(); ++i) {
    best = std::min(best, h.epochs[i].monitor);
    if (i > 0) CHECK(h.epochs[i].lr <= h.epochs[i - 1].lr);
  }
  CHECK(h.best_monitor == best);

  const auto loaded = load_checkpoint(dir / "best.ckpt");
  CHECK(loaded.meta.epoch == h.best_epoch);
  CHECK(loaded.meta.best_metric == h.best_monitor);
  CHECK(loaded.model->config() == net);

  const auto eval = training::evaluate_model(dir / "best.ckpt", split.valid, config.batch_size);
  CHECK(std::abs(eval.summary.loss.total - h.best_monitor) <= 1e-6);

  torch::optim::Adam fresh(loaded.model->parameters(), torch::optim::AdamOptions(1.0));
  restore_optimizer(loaded, fresh);
  CHECK(fresh.state().size() > 0);

  std::ifstream steps(dir / "steps.csv");
  std::string header;
  std::getline(steps, header);
  CHECK(header == loss::kStepCsvHeader);
}

TEST_CASE("early stopping ends the run before max_epochs") {
  auto split = synthetic_split("early_stop", 8);
  training::TrainConfig config;
  config.lr = 1e-3;
  config.batch_size = 5;
  config.max_epochs = 50;
  config.early_stop_patience = 2;
  config.lr_patience = 1;
  config.min_delta = 1e9;  // nothing after the first epoch counts as progress
  const auto emb = AttributeEmbeddings::from_seed(1, 8);
  auto result = training::train(NetworkConfig::tiny(), config, emb, split.train, split.valid, {});
  CHECK(result.history.stop_reason == "early_stopping");
  CHECK(result.history.epochs.size() == 3);
  CHECK(result.history.best_epoch == 1);
}

TEST_CASE("segmentation loss falls during the first epochs") {
  auto split = synthetic_split("smoke", 13);
  training::TrainConfig config;
  config.lr = 1e-3;
  config.batch_size = 10;
  config.max_epochs = 5;
  config.augment = false;
  config.seed = 2;
  const auto emb = AttributeEmbeddings::from_seed(42, 8);
  auto result = training::train(NetworkConfig::tiny(), config, emb, split.train, split.valid, {});
  const auto& e = result.history.epochs;
  REQUIRE(e.size() == 5);
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i].train.dice_seg < e[i - 1].train.dice_seg);
}

TEST_CASE("missing samples are reported") {
  std::vector<data::Sample> none;
  auto split = synthetic_split("empty_split", 6);
  CHECK_THROWS_AS((training::train(NetworkConfig::tiny(), {}, AttributeEmbeddings::from_seed(1, 8), none, split.valid, {})), Error);
  try {
    training::evaluate_model("does-not-matter.ckpt", none, 4);
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDataset);
  }
}

TEST_CASE("checkpoint version mismatch") {
  const auto dir = test::temp_dir("ckpt_version");
  torch::manual_seed(0);
  TGANet model(NetworkConfig::tiny(), AttributeEmbeddings::from_seed(1, 8));
  save_checkpoint(dir / "a.ckpt", model, nullptr, {3, 0.25});
  const auto ok = load_checkpoint(dir / "a.ckpt");
  CHECK(ok.meta.epoch == 3);
  for (const auto& item : model->named_parameters()) CHECK(torch::equal(item.value(), ok.model->named_parameters()[item.key()]));
  for (const auto& item : model->named_buffers()) CHECK(torch::equal(item.value(), ok.model->named_buffers()[item.key()]));

  auto bytes = torch::pickle_load([&] {
    std::ifstream in(dir / "a.ckpt", std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
  }());
  auto dict = bytes.toGenericDict();
  dict.insert_or_assign("format_version", c10::IValue(std::int64_t{99}));
  const auto data = torch::pickle_save(c10::IValue(dict));
  std::ofstream(dir / "b.ckpt", std::ios::binary).write(data.data(), static_cast<std::streamsize>(data.size()));
  try {
    load_checkpoint(dir / "b.ckpt");
    FAIL("expected CheckpointVersionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CheckpointVersionMismatch);
  }
}
