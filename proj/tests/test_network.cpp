#include "testing.hpp"

#include <torch/torch.h>

#include "tganet/errors.hpp"
#include "tganet/tganet.hpp"

using namespace tganet;

namespace {

// Realized size of the default configuration; update only on a deliberate architecture change.
constexpr std::int64_t kGoldenParameterCount = 19981748;

torch::Tensor param(torch::nn::Module& m, const std::string& name) {
  auto params = m.named_parameters();
  auto* p = params.find(name);
  REQUIRE_MESSAGE(p != nullptr, name);
  return *p;
}

TGANet make_model(NetworkConfig config, std::uint64_t seed = 0) {
  torch::manual_seed(seed);
  return TGANet(config, AttributeEmbeddings::from_seed(42, config.embedding_k));
}

double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

}  // namespace

TEST_CASE("encoder stage shapes") {
  auto model = make_model(NetworkConfig{});
  model->eval();
  torch::NoGradGuard no_grad;
  auto e = model->encode(torch::rand({2, 3, 256, 256}));
  CHECK((e[0].sizes() == torch::IntArrayRef{2, 64, 128, 128}));
  CHECK((e[1].sizes() == torch::IntArrayRef{2, 256, 64, 64}));
  CHECK((e[2].sizes() == torch::IntArrayRef{2, 512, 32, 32}));
  CHECK((e[3].sizes() == torch::IntArrayRef{2, 1024, 16, 16}));

  NetworkConfig half;
  half.input_size = 128;
  auto small = make_model(half);
  small->eval();
  auto h = small->encode(torch::rand({1, 3, 128, 128}));
  CHECK((h[0].sizes() == torch::IntArrayRef{1, 64, 64, 64}));
  CHECK((h[3].sizes() == torch::IntArrayRef{1, 1024, 8, 8}));
}

TEST_CASE("malformed input shapes are rejected") {
  auto model = make_model(NetworkConfig::tiny());
  for (auto shape : {std::vector<std::int64_t>{1, 1, 32, 32}, {1, 3, 30, 32}, {3, 32, 32}}) {
    try {
      model->forward(torch::rand(shape));
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
  }
}

TEST_CASE("non-finite pixels propagate and the debug check catches them") {
  auto model = make_model(NetworkConfig::tiny());
  model->eval();
  torch::NoGradGuard no_grad;
  auto image = torch::rand({1, 3, 32, 32});
  image[0][1][5][7] = std::numeric_limits<float>::quiet_NaN();
  auto e = model->encode(model->standardize(image));
  CHECK(torch::isnan(e[0]).any().item<bool>());

  model->set_check_finite(true);
  try {
    model->forward(image);
    FAIL("expected NonFiniteFeature");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::NonFiniteFeature);
  }
}

TEST_CASE("attribute heads") {
  auto model = make_model(NetworkConfig::tiny());
  torch::NoGradGuard no_grad;
  param(*model, "count_head.bias").zero_();
  param(*model, "size_head.bias").zero_();
  auto logits = model->classify_attributes(torch::zeros({4, 128, 2, 2}));
  CHECK((logits.count.sizes() == torch::IntArrayRef{4, 2}));
  CHECK((logits.size.sizes() == torch::IntArrayRef{4, 3}));
  CHECK(max_abs(logits.count) == 0.0);
  CHECK(max_abs(logits.size) == 0.0);
  auto p = attribute_probabilities(logits);
  CHECK((torch::allclose(p.slice(1, 0, 2), torch::full({4, 2}, 0.5))));
  CHECK((torch::allclose(p.slice(1, 2, 5), torch::full({4, 3}, 1.0 / 3))));

  auto random = attribute_probabilities(model->classify_attributes(torch::randn({6, 128, 2, 2}) * 5));
  auto counts = random.slice(1, 0, 2).sum(1);
  auto sizes = random.slice(1, 2, 5).sum(1);
  CHECK(max_abs(counts - 1) <= 1e-6);
  CHECK(max_abs(sizes - 1) <= 1e-6);
}

TEST_CASE("feature enhancement shape and gate ranges") {
  NetworkConfig config;
  config.fem_width = 64;
  torch::manual_seed(1);
  nn::FeatureEnhancement fem(256, config);
  auto trace = fem->trace(torch::randn({1, 256, 64, 64}));
  CHECK((trace.output.sizes() == torch::IntArrayRef{1, 64, 64, 64}));
  CHECK(trace.channel_gates.size() == 4);
  for (const auto& g : trace.channel_gates) {
    CHECK(g.min().item<double>() >= 0.0);
    CHECK(g.max().item<double>() <= 1.0);
  }
  CHECK(trace.spatial_gate.min().item<double>() >= 0.0);
  CHECK(trace.spatial_gate.max().item<double>() <= 1.0);

  nn::ChannelAttention cam(16, 4);
  nn::SpatialAttention sam(7);
  auto x = torch::randn({2, 16, 8, 8}) * 100;
  for (const auto& g : {cam->gate(x), sam->gate(x)}) {
    CHECK(g.min().item<double>() >= 0.0);
    CHECK(g.max().item<double>() <= 1.0);
  }
}

TEST_CASE("label features") {
  auto model = make_model(NetworkConfig::tiny());
  torch::NoGradGuard no_grad;
  param(*model, "label_fc1.bias").zero_();
  param(*model, "label_fc2.bias").zero_();
  CHECK((max_abs(model->compute_label_features(torch::zeros({3, 5, 8}))) == 0.0));
  CHECK((model->compute_label_features(torch::rand({3, 5, 8})).sizes() == torch::IntArrayRef{3, 8}));

  // Positive weights and inputs keep every ReLU active, so the map is linear.
  param(*model, "label_fc1.weight").abs_();
  param(*model, "label_fc2.weight").abs_();
  auto fusion = torch::rand({2, 5, 8}) + 0.1;
  auto once = model->compute_label_features(fusion);
  auto twice = model->compute_label_features(2 * fusion);
  CHECK(torch::allclose(twice, 2 * once, 1e-5, 1e-6));

  try {
    model->compute_label_features(torch::zeros({1, 5, 9}));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("decoder block shape and label gate algebra") {
  NetworkConfig config;
  torch::manual_seed(2);
  nn::DecoderBlock block(64, 64, 256, config);
  block->eval();
  torch::NoGradGuard no_grad;
  auto deep = torch::randn({1, 64, 16, 16});
  auto skip = torch::randn({1, 64, 32, 32});
  auto lf = torch::randn({1, config.label_feature_dim});
  auto r = block->forward(deep, skip, lf);
  CHECK((r.out.sizes() == torch::IntArrayRef{1, 256, 32, 32}));
  CHECK((r.gate.sizes() == torch::IntArrayRef{1, 256, 1, 1}));
  CHECK(r.gate.min().item<double>() >= 0.0);
  CHECK(r.gate.max().item<double>() <= 1.0);

  // Hand-rolled per-channel multiply.
  auto expected = torch::empty_like(r.cbam);
  for (std::int64_t c = 0; c < 256; ++c) expected[0][c] = r.cbam[0][c] * r.gate[0][c][0][0].item<float>();
  CHECK(torch::equal(r.out, expected));

  auto bias = block->label_gate[2]->named_parameters()["bias"];
  bias.fill_(1e4);
  auto open = block->forward(deep, skip, lf);
  CHECK(torch::equal(open.out, open.cbam));
  bias.fill_(-1e4);
  auto closed = block->forward(deep, skip, lf);
  CHECK(max_abs(closed.out) == 0.0);
}

TEST_CASE("decode_block gate forced through the full model") {
  auto model = make_model(NetworkConfig::tiny());
  model->eval();
  torch::NoGradGuard no_grad;
  auto deep = torch::randn({2, 8, 2, 2});
  auto skip = torch::randn({2, 8, 4, 4});
  auto lf = torch::randn({2, 8});
  for (std::size_t stage = 0; stage < 3; ++stage) {
    auto bias = model->decoder(stage)->label_gate[2]->named_parameters()["bias"];
    bias.fill_(1e4);
    auto open = model->decode_block(stage, deep, skip, lf);
    CHECK(torch::equal(open.out, open.cbam));
    bias.fill_(-1e4);
    CHECK(max_abs(model->decode_block(stage, deep, skip, lf).out) == 0.0);
    deep = torch::randn({2, 16, 4 << stage, 4 << stage});
    skip = torch::randn({2, 8, 8 << stage, 8 << stage});
  }
}

TEST_CASE("multi-scale aggregation") {
  torch::manual_seed(4);
  nn::MultiScaleAggregation msfa(std::array<std::int64_t, 3>{256, 128, 64}, 64);
  msfa->eval();
  torch::NoGradGuard no_grad;
  auto m = msfa->forward(torch::randn({1, 256, 32, 32}), torch::randn({1, 128, 64, 64}), torch::randn({1, 64, 128, 128}));
  CHECK((m.sizes() == torch::IntArrayRef{1, 64, 128, 128}));
  auto z = msfa->forward(torch::zeros({1, 256, 32, 32}), torch::zeros({1, 128, 64, 64}), torch::zeros({1, 64, 128, 128}));
  CHECK(max_abs(z) == 0.0);

  NetworkConfig off = NetworkConfig::tiny();
  off.use_msfa = false;
  auto model = make_model(off);
  auto d3 = torch::randn({1, 8, 16, 16});
  CHECK((torch::equal(model->aggregate_multiscale(torch::randn({1, 16, 4, 4}), torch::randn({1, 16, 8, 8}), d3), d3)));
}

TEST_CASE("full forward pass") {
  auto model = make_model(NetworkConfig{});
  model->eval();
  torch::NoGradGuard no_grad;
  auto out = model->forward(torch::rand({2, 3, 256, 256}));
  CHECK((out.mask_prob.sizes() == torch::IntArrayRef{2, 1, 256, 256}));
  CHECK(out.mask_prob.min().item<double>() >= 0.0);
  CHECK(out.mask_prob.max().item<double>() <= 1.0);
  REQUIRE(out.logits.has_value());
  CHECK((out.logits->count.sizes() == torch::IntArrayRef{2, 2}));
  CHECK((out.logits->size.sizes() == torch::IntArrayRef{2, 3}));
}

TEST_CASE("mask keeps the input size for every variant and size") {
  for (auto variant : kAblationOrder) {
    for (std::int64_t size : {32, 48, 64}) {
      auto config = apply_variant(NetworkConfig::tiny(), variant);
      config.input_size = size;
      auto model = make_model(config);
      auto out = model->forward(torch::rand({1, 3, size, size}));
      CHECK((out.mask_prob.sizes() == torch::IntArrayRef{1, 1, size, size}));
      CHECK(out.logits.has_value() == (variant != AblationVariant::NoLabelClassifier && variant != AblationVariant::NoAll));
    }
  }
  auto chained = NetworkConfig::tiny();
  chained.chain_label_attention = true;
  CHECK((make_model(chained)->forward(torch::rand({2, 3, 32, 32})).mask_prob.sizes() ==
        torch::IntArrayRef{2, 1, 32, 32}));
}

TEST_CASE("evaluation mode is batch independent and deterministic") {
  auto model = make_model(NetworkConfig::tiny(), 9);
  model->eval();
  torch::NoGradGuard no_grad;
  auto image = torch::rand({1, 3, 32, 32});
  auto single = model->forward(image);
  auto again = model->forward(image);
  CHECK(max_abs(again.mask_prob - single.mask_prob) <= 1e-7);

  // Batched kernels reorder float accumulation; compare in double.
  model->to(torch::kFloat64);
  auto image64 = image.to(torch::kFloat64);
  auto one = model->forward(image64);
  auto pair = model->forward(torch::cat({torch::rand_like(image64), image64}));
  CHECK(max_abs(pair.mask_prob[1] - one.mask_prob[0]) <= 1e-10);
  CHECK(max_abs(pair.logits->size[1] - one.logits->size[0]) <= 1e-10);
  CHECK(max_abs(pair.logits->count[1] - one.logits->count[0]) <= 1e-10);
}

TEST_CASE("embedding table must match k") {
  auto model = make_model(NetworkConfig::tiny());
  try {
    model->set_embeddings(AttributeEmbeddings::from_seed(1, 9));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("parameter counts") {
  const NetworkConfig full;
  const auto n_full = parameter_count(full);
  CHECK(n_full == kGoldenParameterCount);
  CHECK(std::abs(static_cast<double>(n_full) - 19.84e6) <= 0.15 * 19.84e6);
  CHECK(make_model(NetworkConfig::tiny())->parameter_count() == parameter_count(NetworkConfig::tiny()));

  const auto n_all = parameter_count(apply_variant(full, AblationVariant::NoAll));
  for (auto v : {AblationVariant::NoLabelClassifier, AblationVariant::NoMsfa, AblationVariant::NoFem}) {
    const auto n = parameter_count(apply_variant(full, v));
    CHECK(n_all < n);
    CHECK(n < n_full);
  }
  auto wide = full;
  wide.fem_width *= 2;
  CHECK(parameter_count(wide) > n_full);
}
