// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/gradcheck_suite.hpp"
#include "xprompt/losses.hpp"

namespace xprompt {
namespace {

using testing::random_tensor;

SegmentationMask random_mask(Rng& rng, std::size_t h, std::size_t w, int max_id) {
  SegmentationMask m(h, w);
  for (auto& id : m.ids) id = static_cast<std::uint8_t>(rng.uniform_int(0, max_id));
  return m;
}

// Saturated logits that put (almost) all mass on the given ids.
Tensor confident_logits(const SegmentationMask& m, std::size_t classes, double margin = 40.0) {
  std::vector<double> v(m.ids.size() * classes, 0.0);
  for (std::size_t p = 0; p < m.ids.size(); ++p) v[p * classes + m.ids[p]] = margin;
  return Tensor::from({m.height, m.width, classes}, std::move(v));
}

std::vector<double> ce_oracle(const Tensor& logits, const SegmentationMask& gt) {
  const std::size_t C = logits.dim(2);
  std::vector<double> ce(gt.ids.size());
  for (std::size_t p = 0; p < ce.size(); ++p) {
    double mx = -1e300, z = 0.0;
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.values()[p * C + c]);
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits.values()[p * C + c] - mx);
    ce[p] = -(logits.values()[p * C + gt.ids[p]] - mx - std::log(z));
  }
  return ce;
}

TEST(Losses, SoftJaccardHandCase) {
  // Object probabilities [1, 0.5, 0, 0] against ground truth [1, 1, 0, 0]:
  // intersection 1.5, union 1.5 + 2 - 1.5 = 2, IoU 0.75.
  const Tensor probs = Tensor::from({1, 4, 2}, {0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 1.0, 0.0});
  SegmentationMask gt(1, 4, 0);
  gt.ids = {1, 1, 0, 0};
  EXPECT_NEAR(soft_jaccard_loss(probs, gt).item(), 0.25, 1e-15);
}

TEST(Losses, SoftJaccardExtremes) {
  Rng rng(1);
  const SegmentationMask gt = random_mask(rng, 8, 8, 2);
  EXPECT_EQ(soft_jaccard_loss(one_hot(gt, 3), gt).item(), 0.0);
  SegmentationMask shifted(8, 8);
  for (std::size_t p = 0; p < 64; ++p) shifted.ids[p] = static_cast<std::uint8_t>((gt.ids[p] + 1) % 3);
  EXPECT_EQ(soft_jaccard_loss(one_hot(shifted, 3), gt).item(), 1.0);
}

TEST(Losses, SoftJaccardStaysInUnitInterval) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const SegmentationMask gt = random_mask(rng, 6, 5, 3);
    const double v = soft_jaccard_loss(ops::softmax(random_tensor({6, 5, 4}, rng, 3.0)), gt).item();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Losses, SoftJaccardSkipsObjectsAbsentEverywhere) {
  // Object 2 is neither in the ground truth nor predicted, so only object 1
  // contributes and the perfect object-1 prediction scores zero loss.
  SegmentationMask gt(2, 2, 0);
  gt.ids = {1, 1, 0, 0};
  EXPECT_EQ(soft_jaccard_loss(one_hot(gt, 3), gt).item(), 0.0);
  EXPECT_EQ(soft_jaccard_loss(one_hot(SegmentationMask(2, 2, 0), 3), SegmentationMask(2, 2, 0)).item(), 0.0);
}

TEST(Losses, BootstrappedSortAndMeanHandCase) {
  // Two classes, target 0 everywhere; logit_1 = log(e^c - 1) gives CE = c.
  std::vector<double> v;
  for (double c : {0.3, 0.1, 0.4, 0.2}) v.insert(v.end(), {0.0, std::log(std::exp(c) - 1.0)});
  const Tensor logits = Tensor::from({2, 2, 2}, v);
  const SegmentationMask gt(2, 2, 0);
  EXPECT_NEAR(bootstrapped_ce_loss(logits, gt, 0.5).item(), 0.35, 1e-12);
  EXPECT_NEAR(bootstrapped_ce_loss(logits, gt, 1.0).item(), 0.25, 1e-12);
  EXPECT_NEAR(bootstrapped_ce_loss(logits, gt, 0.25).item(), 0.4, 1e-12);
}

TEST(Losses, BootstrappedMatchesSortOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const SegmentationMask gt = random_mask(rng, 5, 7, 2);
    const Tensor logits = random_tensor({5, 7, 3}, rng, 2.0);
    auto ce = ce_oracle(logits, gt);
    const double plain = ops::mean(pixel_cross_entropy(logits, gt)).item();
    double mean_all = 0.0;
    for (double c : ce) mean_all += c / double(ce.size());
    EXPECT_NEAR(plain, mean_all, 1e-12);
    EXPECT_NEAR(bootstrapped_ce_loss(logits, gt, 1.0).item(), mean_all, 1e-12);
    const double keep = 0.1 + 0.8 * rng.uniform();
    std::sort(ce.begin(), ce.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::ceil(keep * double(ce.size())));
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top += ce[i] / double(k);
    const double boot = bootstrapped_ce_loss(logits, gt, keep).item();
    EXPECT_NEAR(boot, top, 1e-12);
    EXPECT_GE(boot, mean_all - 1e-15);
    EXPECT_LE(boot, mean_all / keep + 1e-12);
    EXPECT_GE(boot, 0.0);
  }
}

TEST(Losses, BootstrappedRejectsBadKeepRatio) {
  const Tensor logits = Tensor::zeros({2, 2, 2});
  const SegmentationMask gt(2, 2, 0);
  EXPECT_THROW(bootstrapped_ce_loss(logits, gt, 0.0), ContractError);
  EXPECT_THROW(bootstrapped_ce_loss(logits, gt, 1.5), ContractError);
}

TEST(Losses, PerfectPredictionIsNearZero) {
  Rng rng(4);
  const SegmentationMask gt = random_mask(rng, 8, 8, 2);
  const Tensor logits = confident_logits(gt, 3);
  EXPECT_LE(bootstrapped_ce_loss(logits, gt, 0.15).item(), 1e-6);
  EXPECT_LE(combined_loss(logits, gt, 0.15).item(), 1e-6);
}

TEST(Losses, CombinedIsHalfOfEachComponent) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const SegmentationMask gt = random_mask(rng, 6, 6, 2);
    const Tensor logits = random_tensor({6, 6, 3}, rng, 2.0);
    const double keep = 0.2 + 0.8 * rng.uniform();
    const double ce = bootstrapped_ce_loss(logits, gt, keep).item();
    const double jac = soft_jaccard_loss(ops::softmax(logits), gt).item();
    EXPECT_NEAR(combined_loss(logits, gt, keep).item(), 0.5 * ce + 0.5 * jac, 1e-14);
  }
}

TEST(Losses, CombinedGradientMatchesFiniteDifferences) {
  const auto results = module_gradchecks(20, 5);
  bool found = false;
  for (const auto& r : results) {
    if (r.name.find("combined") == std::string::npos) continue;
    found = true;
    EXPECT_LT(r.max_error, 1e-4);
  }
  EXPECT_TRUE(found);
}

TEST(Losses, KeepRatioSchedule) {
  EXPECT_EQ(keep_ratio_at(0, 1000, 0.1, 0.15), 1.0);
  EXPECT_EQ(keep_ratio_at(99, 1000, 0.1, 0.15), 1.0);
  EXPECT_NEAR(keep_ratio_at(999, 1000, 0.1, 0.15), 0.15, 1e-15);
  const double mid = keep_ratio_at(549, 1000, 0.1, 0.15);
  EXPECT_GT(mid, 0.15);
  EXPECT_LT(mid, 1.0);
  double prev = 1.0;
  for (std::size_t s = 0; s < 1000; ++s) {
    const double k = keep_ratio_at(s, 1000, 0.1, 0.15);
    EXPECT_LE(k, prev);
    prev = k;
  }
}

TEST(Losses, ShapeMismatchIsRejected) {
  EXPECT_THROW(pixel_cross_entropy(Tensor::zeros({2, 3, 2}), SegmentationMask(2, 2, 0)), ContractError);
  SegmentationMask gt(2, 2, 0);
  gt.ids[0] = 3;
  EXPECT_THROW(pixel_cross_entropy(Tensor::zeros({2, 2, 2}), gt), ContractError);
}

}  // namespace
}  // namespace xprompt
