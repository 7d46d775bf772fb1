#include "testing.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "support.hpp"
#include "tganet/checkpoint.hpp"
#include "tganet/cli.hpp"
#include "tganet/data.hpp"
#include "tganet/errors.hpp"
#include "tganet/experiment.hpp"
#include "tganet/synthetic.hpp"

using namespace tganet;
namespace fs = std::filesystem;

TEST_CASE("unknown and malformed commands fail") {
  CHECK((cli::run({"bogus"}) != 0));
  CHECK((cli::run({}) != 0));
  CHECK((cli::run({"prepare", "--no-such-flag"}) != 0));
  CHECK((cli::run({"eval"}) != 0));
  CHECK((cli::run({"help"}) == 0));
}

TEST_CASE("overrides") {
  ExperimentManifest e;
  e.thresholds = SizeThresholds(0.1, 0.2);
  apply_override(e, "network.fem_width=8");
  apply_override(e, "train.lr=1e-3");
  apply_override(e, "train.monitor=valid_mdsc");
  apply_override(e, "network.use_msfa=false");
  apply_override(e, "embeddings.k=16");
  apply_override(e, "network.decoder_widths=[8,8,4]");
  CHECK(e.network.fem_width == 8);
  CHECK(e.train.lr == 1e-3);
  CHECK(e.train.monitor == "valid_mdsc");
  CHECK_FALSE(e.network.use_msfa);
  CHECK(e.network.embedding_k == 16);
  CHECK((e.network.decoder_widths == std::array<std::int64_t, 3>{8, 8, 4}));
  for (const char* bad : {"network.nope=1", "noequals", "=3", "network.fem_width=\"wide\""}) {
    try {
      apply_override(e, bad);
      FAIL(bad);
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::InvalidConfig);
    }
  }

  const auto dir = test::temp_dir("experiment_json");
  save_experiment(e, dir / "e.json");
  const auto back = load_experiment(dir / "e.json");
  CHECK(back.network == e.network);
  CHECK(back.train.lr == e.train.lr);
  CHECK(back.thresholds->medium_max() == 0.2);
}

TEST_CASE("prepare picks official lists and the data root from the environment") {
  const auto root = test::temp_dir("cli_prepare");
  data::write_synthetic_dataset(root / "set", 20, 32, 1);
  const auto index = data::index_dataset(root / "set");
  {
    std::ofstream train(root / "set" / "train.txt"), test(root / "set" / "test.txt");
    for (std::size_t i = 0; i < index.entries.size(); ++i)
      (i < 15 ? train : test) << index.entries[i].sample_id << ".png\n";
  }
  ::setenv("TGANET_DATA_ROOT", (root / "set").c_str(), 1);
  const auto manifest_path = (root / "split.json").string();
  REQUIRE((cli::run({"prepare", "--name", "synthetic", "--size", "32", "--out", manifest_path}) == 0));
  ::unsetenv("TGANET_DATA_ROOT");
  const auto m = data::load_manifest(manifest_path);
  CHECK(m.mode == "official");
  CHECK(m.source_name == "synthetic");
  CHECK(m.train.size() == 14);
  CHECK(m.valid.size() == 1);
  CHECK(m.test.size() == 5);
  CHECK(m.mask_size == 32);
  CHECK(m.thresholds.has_value());

  fs::remove(root / "set" / "train.txt");
  REQUIRE((cli::run({"prepare", "--data", (root / "set").string(), "--seed", "7", "--size", "32", "--out", manifest_path}) == 0));
  const auto r = data::load_manifest(manifest_path);
  CHECK(r.mode == "random");
  CHECK(r.train.size() == 16);
  CHECK(r.valid.size() == 2);
  CHECK(r.test.size() == 2);

  CHECK((cli::run({"prepare", "--data", (root / "missing").string()}) != 0));
}

TEST_CASE("infer writes a mask and attribute probabilities") {
  const auto dir = test::temp_dir("cli_infer");
  torch::manual_seed(0);
  TGANet model(NetworkConfig::tiny(), AttributeEmbeddings::from_seed(42, 8));
  save_checkpoint(dir / "c.ckpt", model, nullptr, {});
  cv::Mat3b image(40, 52, cv::Vec3b(30, 90, 160));
  cv::imwrite((dir / "x.png").string(), image);
  REQUIRE((cli::run({"infer", "--checkpoint", (dir / "c.ckpt").string(), "--image", (dir / "x.png").string()}) == 0));

  const cv::Mat mask = cv::imread((dir / "x_mask.png").string(), cv::IMREAD_UNCHANGED);
  REQUIRE_FALSE(mask.empty());
  CHECK(mask.type() == CV_8UC1);
  CHECK(mask.size() == image.size());
  CHECK(cv::countNonZero((mask != 0) & (mask != 255)) == 0);

  std::ifstream in(dir / "x_attr.json");
  const auto attrs = nlohmann::json::parse(in);
  double count = 0, size = 0;
  for (const char* k : {"one", "many"}) count += attrs.at(k).get<double>();
  for (const char* k : {"small", "medium", "large"}) size += attrs.at(k).get<double>();
  CHECK(count == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(size == doctest::Approx(1.0).epsilon(1e-5));

  CHECK((cli::run({"infer", "--checkpoint", (dir / "c.ckpt").string(), "--image", (dir / "none.png").string()}) != 0));
}
