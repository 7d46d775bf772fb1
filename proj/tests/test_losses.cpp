#include "testing.hpp"

#include <cmath>
#include <random>

#include <torch/torch.h>

#include "tganet/losses.hpp"

using namespace tganet;

namespace {

double scalar(const torch::Tensor& t) { return t.item<double>(); }

torch::Tensor binary(std::int64_t n, std::int64_t size, double density, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({n, 1, size, size}, gen, torch::dtype(torch::kFloat64)).lt(density).to(torch::kFloat64);
}

double bce_oracle(const torch::Tensor& p, const torch::Tensor& g) {
  auto pa = p.contiguous().view(-1);
  auto ga = g.contiguous().view(-1);
  double sum = 0.0;
  for (std::int64_t i = 0; i < pa.numel(); ++i) {
    double q = std::clamp(pa[i].item<double>(), 1e-7, 1.0 - 1e-7);
    double t = ga[i].item<double>();
    sum += -(t * std::log(q) + (1 - t) * std::log(1 - q));
  }
  return sum / static_cast<double>(pa.numel());
}

}  // namespace

TEST_CASE("dice loss identities") {
  auto mask = torch::zeros({1, 1, 64, 64}, torch::kFloat64);
  mask.slice(2, 8, 48).slice(3, 8, 48).fill_(1);  // 1600 foreground pixels
  CHECK(scalar(loss::dice_loss(mask, mask)) <= 1e-3);
  auto empty = torch::zeros({1, 1, 8, 8}, torch::kFloat64);
  CHECK(scalar(loss::dice_loss(empty, empty)) == 0.0);

  auto p = torch::tensor({1.0, 1.0}, torch::kFloat64).view({1, 1, 1, 2});
  auto g = torch::tensor({1.0, 0.0}, torch::kFloat64).view({1, 1, 1, 2});
  CHECK(scalar(loss::dice_loss(p, g, 0.0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("dice loss range and symmetry") {
  for (int i = 0; i < 20; ++i) {
    auto a = binary(3, 8, 0.4, i);
    auto b = binary(3, 8, 0.3, 100 + i);
    const double ab = scalar(loss::dice_loss(a, b));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == doctest::Approx(scalar(loss::dice_loss(b, a))).epsilon(1e-12));
    auto soft = torch::rand({3, 1, 8, 8}, torch::kFloat64);
    const double s = scalar(loss::dice_loss(soft, b));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("binary cross entropy") {
  auto half = torch::full({2, 1, 8, 8}, 0.5, torch::kFloat64);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(scalar(loss::binary_cross_entropy(half, binary(2, 8, 0.5, i))) - std::log(2.0)) <= 1e-9);

  auto g = binary(1, 8, 0.5, 7);
  CHECK(scalar(loss::binary_cross_entropy(g, g)) == doctest::Approx(-std::log(1 - 1e-7)).epsilon(1e-6));
  CHECK(scalar(loss::binary_cross_entropy(g, g)) < 2e-6);

  for (int i = 0; i < 10; ++i) {
    auto p = torch::rand({1, 1, 8, 8}, torch::kFloat64);
    auto t = binary(1, 8, 0.5, 50 + i);
    CHECK(std::abs(scalar(loss::binary_cross_entropy(p, t)) - bce_oracle(p, t)) <= 1e-9);
  }
}

TEST_CASE("binary cross entropy is convex in the prediction") {
  for (int i = 0; i < 50; ++i) {
    auto g = binary(1, 8, 0.5, 200 + i);
    auto p1 = torch::rand({1, 1, 8, 8}, torch::kFloat64);
    auto p2 = torch::rand({1, 1, 8, 8}, torch::kFloat64);
    const double mid = scalar(loss::binary_cross_entropy((p1 + p2) / 2, g));
    const double avg = 0.5 * (scalar(loss::binary_cross_entropy(p1, g)) + scalar(loss::binary_cross_entropy(p2, g)));
    CHECK(mid <= avg + 1e-12);
  }
}

TEST_CASE("classification cross entropy") {
  AttributeLogits uniform{torch::zeros({1, 2}, torch::kFloat64), torch::zeros({1, 3}, torch::kFloat64)};
  auto terms = loss::classification_loss(uniform, torch::tensor({1}, torch::kLong), torch::tensor({2}, torch::kLong));
  CHECK(scalar(terms.ce_count) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(scalar(terms.ce_size) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  AttributeLogits sure{torch::tensor({10.0, -10.0}, torch::kFloat64).view({1, 2}), torch::zeros({1, 3}, torch::kFloat64)};
  const double saturated = scalar(loss::classification_loss(sure, torch::tensor({0}, torch::kLong), torch::tensor({0}, torch::kLong)).ce_count);
  CHECK(saturated == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
  CHECK(saturated == doctest::Approx(2.06e-9).epsilon(1e-2));

  auto count = torch::randn({4, 2}, torch::kFloat64) * 3;
  auto size = torch::randn({4, 3}, torch::kFloat64) * 3;
  auto cl = torch::tensor({0, 1, 1, 0}, torch::kLong);
  auto sl = torch::tensor({2, 0, 1, 2}, torch::kLong);
  auto t = loss::classification_loss({count, size}, cl, sl);
  auto lse = [](const torch::Tensor& row, std::int64_t label) {
    double m = row.max().item<double>();
    double s = 0.0;
    for (std::int64_t j = 0; j < row.size(0); ++j) s += std::exp(row[j].item<double>() - m);
    return m + std::log(s) - row[label].item<double>();
  };
  double oc = 0.0, os = 0.0;
  for (int b = 0; b < 4; ++b) {
    oc += lse(count[b], cl[b].item<std::int64_t>());
    os += lse(size[b], sl[b].item<std::int64_t>());
  }
  CHECK(std::abs(scalar(t.ce_count) - oc / 4) <= 1e-9);
  CHECK(std::abs(scalar(t.ce_size) - os / 4) <= 1e-9);
}

TEST_CASE("joint loss composition") {
  auto gt = binary(2, 16, 0.4, 3);
  NetworkOutput out;
  out.mask_prob = torch::rand({2, 1, 16, 16}, torch::kFloat64);
  out.mask_logits = torch::logit(out.mask_prob);
  out.logits = AttributeLogits{torch::randn({2, 2}, torch::kFloat64), torch::randn({2, 3}, torch::kFloat64)};
  auto cl = torch::tensor({0, 1}, torch::kLong);
  auto sl = torch::tensor({2, 1}, torch::kLong);
  auto j = loss::joint_loss(out, gt, cl, sl);
  const auto v = j.values();
  CHECK(std::abs(v.total - (v.ce_count + v.ce_size + v.bce_seg + v.dice_seg)) <= 1e-6);
  CHECK(v.total >= 0.0);
  auto ce = loss::classification_loss(*out.logits, cl, sl);
  CHECK(v.ce_count == scalar(ce.ce_count));
  CHECK(v.bce_seg == scalar(loss::binary_cross_entropy(out.mask_prob, gt)));
  CHECK(v.dice_seg == scalar(loss::dice_loss(out.mask_prob, gt)));

  NetworkOutput perfect;
  perfect.mask_prob = torch::zeros({2, 1, 64, 64}, torch::kFloat64);
  perfect.mask_prob.slice(2, 0, 40).slice(3, 0, 40).fill_(1);
  perfect.mask_logits = perfect.mask_prob;
  perfect.logits = AttributeLogits{torch::tensor({{30.0, -30.0}, {-30.0, 30.0}}, torch::kFloat64),
                                   torch::tensor({{-30.0, -30.0, 30.0}, {-30.0, 30.0, -30.0}}, torch::kFloat64)};
  CHECK(loss::joint_loss(perfect, perfect.mask_prob, cl, sl).values().total <= 1e-2);
}

TEST_CASE("joint loss without classifiers") {
  auto gt = binary(2, 8, 0.5, 9);
  NetworkOutput out;
  out.mask_prob = torch::rand({2, 1, 8, 8}, torch::kFloat64).requires_grad_();
  out.mask_logits = out.mask_prob;
  auto j = loss::joint_loss(out, gt, torch::tensor({0, 1}, torch::kLong), torch::tensor({0, 1}, torch::kLong));
  const auto v = j.values();
  CHECK(v.ce_count == 0.0);
  CHECK(v.ce_size == 0.0);
  CHECK(v.total == doctest::Approx(v.bce_seg + v.dice_seg).epsilon(1e-12));
  j.total.backward();
  CHECK(out.mask_prob.grad().defined());
}

TEST_CASE("losses are invariant to pixel and batch permutations") {
  auto p = torch::rand({4, 1, 8, 8}, torch::kFloat64);
  auto g = binary(4, 8, 0.5, 21);
  auto perm = torch::randperm(64, torch::kLong);
  auto pp = p.view({4, 64}).index_select(1, perm).view({4, 1, 8, 8});
  auto gp = g.view({4, 64}).index_select(1, perm).view({4, 1, 8, 8});
  auto bperm = torch::tensor({2, 0, 3, 1}, torch::kLong);
  CHECK(scalar(loss::dice_loss(pp, gp)) == doctest::Approx(scalar(loss::dice_loss(p, g))).epsilon(1e-12));
  CHECK(scalar(loss::binary_cross_entropy(pp, gp)) == doctest::Approx(scalar(loss::binary_cross_entropy(p, g))).epsilon(1e-12));
  CHECK(scalar(loss::dice_loss(p.index_select(0, bperm), g.index_select(0, bperm))) ==
        doctest::Approx(scalar(loss::dice_loss(p, g))).epsilon(1e-12));
}
