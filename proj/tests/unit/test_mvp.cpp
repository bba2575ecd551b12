// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/mvp.hpp"

namespace xprompt {
namespace {

using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_tensor;

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ModelConfig small_config(std::size_t D = 32) {
  ModelConfig cfg;
  cfg.embed_dim = D;
  return cfg;
}

void fill(const Tensor& t, double v) {
  for (auto& x : testing::mut(t)) x = v;
}

void randomize(const Tensor& t, Rng& rng, double scale) {
  for (auto& x : testing::mut(t)) x = rng.normal(0.0, scale);
}

PrompterParams random_prompter(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  PrompterParams p = make_prompter(store, cfg, rng);
  for (const auto& e : store.entries()) randomize(e.tensor, rng, 0.3);
  return p;
}

void zero_attention(const PrompterParams& p) {
  for (const Tensor& t : {p.spatial_avg_w, p.spatial_avg_b, p.spatial_max_w, p.spatial_max_b, p.mlp1_w, p.mlp1_b,
                          p.mlp2_w, p.mlp2_b})
    fill(t, 0.0);
}

// "Same" 2-d convolution of a single-channel grid with a k x k kernel.
double conv_at(const std::vector<double>& img, std::size_t h, std::size_t w, const Tensor& kernel, std::size_t y,
               std::size_t x) {
  const std::size_t k = kernel.dim(0), pad = k / 2;
  double acc = 0.0;
  for (std::size_t ky = 0; ky < k; ++ky)
    for (std::size_t kx = 0; kx < k; ++kx) {
      const auto iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
      const auto ix = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
      if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) continue;
      acc += img[static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)] * kernel.values()[ky * k + kx];
    }
  return acc;
}

std::vector<double> spatial_oracle(const Tensor& grid, const PrompterParams& p) {
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2);
  std::vector<double> avg(h * w), mx(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0.0, m = -1e300;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = grid.values()[i * d + c];
      s += v;
      m = std::max(m, v);
    }
    avg[i] = s / static_cast<double>(d);
    mx[i] = m;
  }
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      out[y * w + x] = sigm(conv_at(avg, h, w, p.spatial_avg_w, y, x) + p.spatial_avg_b.item() +
                            conv_at(mx, h, w, p.spatial_max_w, y, x) + p.spatial_max_b.item());
  return out;
}

std::vector<double> mlp_oracle(const std::vector<double>& v, const PrompterParams& p) {
  const std::size_t D = v.size(), hid = p.mlp1_b.numel();
  std::vector<double> hidden(hid), out(D);
  for (std::size_t j = 0; j < hid; ++j) {
    double a = p.mlp1_b.values()[j];
    for (std::size_t i = 0; i < D; ++i) a += p.mlp1_w.values()[j * D + i] * v[i];
    hidden[j] = std::max(0.0, a);
  }
  for (std::size_t o = 0; o < D; ++o) {
    double a = p.mlp2_b.values()[o];
    for (std::size_t j = 0; j < hid; ++j) a += p.mlp2_w.values()[o * hid + j] * hidden[j];
    out[o] = a;
  }
  return out;
}

std::vector<double> channel_oracle(const Tensor& grid, const PrompterParams& p) {
  const std::size_t n = grid.dim(0) * grid.dim(1), d = grid.dim(2);
  std::vector<double> avg(d, 0.0), mx(d, -1e300);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      avg[c] += grid.values()[i * d + c] / static_cast<double>(n);
      mx[c] = std::max(mx[c], grid.values()[i * d + c]);
    }
  const auto a = mlp_oracle(avg, p), m = mlp_oracle(mx, p);
  std::vector<double> out(d);
  for (std::size_t c = 0; c < d; ++c) out[c] = sigm(a[c] + m[c]);
  return out;
}

std::vector<double> fuse_oracle(const Tensor& rgb, const Tensor& x, const PrompterParams& p) {
  const std::size_t n = rgb.dim(0), D = rgb.dim(1);
  std::vector<double> out(n * D);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t o = 0; o < D; ++o) {
      double a = p.fuse_b.values()[o];
      for (std::size_t i = 0; i < D; ++i) {
        a += p.fuse_w.values()[o * 2 * D + i] * rgb.values()[t * D + i];
        a += p.fuse_w.values()[o * 2 * D + D + i] * x.values()[t * D + i];
      }
      out[t * D + o] = a;
    }
  return out;
}

TEST(Mvp, SelectorWeightsPickOneModality) {
  Rng rng(1);
  const auto cfg = small_config(8);
  ParamStore store;
  const PrompterParams p = make_prompter(store, cfg, rng);
  const Tensor rgb = random_tensor({3, 8}, rng), x = random_tensor({3, 8}, rng);
  std::vector<double> sel_rgb(8 * 16, 0.0), sel_x(8 * 16, 0.0);
  for (std::size_t o = 0; o < 8; ++o) sel_rgb[o * 16 + o] = 1.0, sel_x[o * 16 + 8 + o] = 1.0;
  std::copy(sel_rgb.begin(), sel_rgb.end(), testing::mut(p.fuse_w).begin());
  EXPECT_TRUE(bit_equal(fuse_16x(rgb, x, p), rgb));
  std::copy(sel_x.begin(), sel_x.end(), testing::mut(p.fuse_w).begin());
  EXPECT_TRUE(bit_equal(fuse_16x(rgb, x, p), x));
}

TEST(Mvp, FuseMatchesMatmulOracle) {
  Rng rng(2);
  const auto cfg = small_config(16);
  ParamStore store;
  const PrompterParams p = random_prompter(store, cfg, rng);
  const Tensor rgb = random_tensor({2, 16}, rng), x = random_tensor({2, 16}, rng);
  EXPECT_LT(max_abs_diff(fuse_16x(rgb, x, p).values(), fuse_oracle(rgb, x, p)), 1e-12);
  EXPECT_THROW(fuse_16x(rgb, random_tensor({3, 16}, rng), p), ContractError);
}

TEST(Mvp, ZeroConvsGiveHalfSpatialAttention) {
  Rng rng(3);
  ParamStore store;
  const PrompterParams p = make_prompter(store, small_config(16), rng);
  zero_attention(p);
  const Tensor a = spatial_attention(random_tensor({3, 5, 16}, rng), p);
  ASSERT_EQ(a.shape(), (Shape{3, 5, 1}));
  for (double v : a.values()) EXPECT_EQ(v, 0.5);
}

TEST(Mvp, SpatialAttentionMatchesPoolConvOracle) {
  Rng rng(4);
  ParamStore store;
  const PrompterParams p = random_prompter(store, small_config(16), rng);
  const Tensor grid = random_tensor({4, 4, 16}, rng);
  EXPECT_LT(max_abs_diff(spatial_attention(grid, p).values(), spatial_oracle(grid, p)), 1e-12);
}

TEST(Mvp, ZeroMlpGivesHalfChannelAttention) {
  Rng rng(5);
  ParamStore store;
  const PrompterParams p = make_prompter(store, small_config(32), rng);
  zero_attention(p);
  const Tensor a = channel_attention(random_tensor({2, 3, 32}, rng), p);
  ASSERT_EQ(a.numel(), 32u);
  for (double v : a.values()) EXPECT_EQ(v, 0.5);
}

TEST(Mvp, ConstantGridDoublesTheMlp) {
  Rng rng(6);
  ParamStore store;
  const PrompterParams p = random_prompter(store, small_config(32), rng);
  std::vector<double> vec(32), vals;
  for (auto& v : vec) v = rng.normal();
  for (int i = 0; i < 6; ++i) vals.insert(vals.end(), vec.begin(), vec.end());
  const Tensor a = channel_attention(Tensor::from({2, 3, 32}, vals), p);
  const auto m = mlp_oracle(vec, p);
  for (std::size_t c = 0; c < 32; ++c) EXPECT_NEAR(a.values()[c], sigm(2.0 * m[c]), 1e-12);
}

TEST(Mvp, ChannelAttentionMatchesMlpOracle) {
  Rng rng(7);
  ParamStore store;
  const PrompterParams p = random_prompter(store, small_config(32), rng);
  const Tensor grid = random_tensor({3, 2, 32}, rng);
  EXPECT_LT(max_abs_diff(channel_attention(grid, p).values(), channel_oracle(grid, p)), 1e-12);
}

TEST(Mvp, AttentionStaysInOpenUnitInterval) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore store;
    const PrompterParams p = random_prompter(store, small_config(16), rng);
    const Tensor grid = random_tensor({3, 3, 16}, rng, 2.0);
    for (const Tensor& a : {spatial_attention(grid, p), channel_attention(grid, p)})
      for (double v : a.values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
  }
}

TEST(Mvp, PromptEmbedEqualsBroadcastTripleLoop) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore store;
    const PrompterParams p = random_prompter(store, small_config(16), rng);
    const std::size_t h = 2, w = 2, D = 16;
    const Tensor rgb = random_tensor({h * w, D}, rng), x = random_tensor({h * w, D}, rng);
    const Tensor z0 = prompt_embed(rgb, x, h, w, p);
    const auto fused = fuse_oracle(rgb, x, p);
    const Tensor grid = Tensor::from({h, w, D}, fused);
    const auto as = spatial_oracle(grid, p), ac = channel_oracle(grid, p);
    for (std::size_t i = 0; i < h * w; ++i)
      for (std::size_t d = 0; d < D; ++d) {
        const double expected = as[i] * ac[d] * fused[i * D + d];
        EXPECT_NEAR(z0.values()[i * D + d], expected, 1e-12);
        EXPECT_LE(std::abs(z0.values()[i * D + d]), std::abs(fused[i * D + d]));
      }
  }
}

TEST(Mvp, ZeroAttentionScalesFusedTokensByAQuarter) {
  Rng rng(10);
  ParamStore store;
  const PrompterParams p = make_prompter(store, small_config(16), rng);
  zero_attention(p);
  fill(p.fuse_w, 0.0);
  for (std::size_t o = 0; o < 16; ++o) testing::mut(p.fuse_w)[o * 32 + o] = 1.0;
  const Tensor rgb = random_tensor({6, 16}, rng), x = random_tensor({6, 16}, rng);
  const Tensor z0 = prompt_embed(rgb, x, 2, 3, p);
  for (std::size_t i = 0; i < z0.numel(); ++i) EXPECT_EQ(z0.values()[i], 0.25 * rgb.values()[i]);
  // Decoder prompts pass the RGB grids through untouched at initialization.
  const Tensor r4 = random_tensor({8, 12, 4}, rng), x4 = random_tensor({8, 12, 4}, rng);
  const Tensor r8 = random_tensor({4, 6, 8}, rng), x8 = random_tensor({4, 6, 8}, rng);
  const auto prompts = multiscale_prompts(r4, r8, x4, x8, p);
  EXPECT_TRUE(bit_equal(prompts.p4, r4));
  EXPECT_TRUE(bit_equal(prompts.p8, r8));
}

TEST(Mvp, FreshPrompterStartsFromRgbSelector) {
  Rng rng(11);
  ParamStore store;
  const PrompterParams p = make_prompter(store, small_config(16), rng);
  for (std::size_t o = 0; o < 16; ++o)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(p.fuse_w.values()[o * 32 + i], o == i ? 1.0 : 0.0);
  double worst = 0.0;
  for (std::size_t o = 0; o < 16; ++o)
    for (std::size_t i = 16; i < 32; ++i) worst = std::max(worst, std::abs(p.fuse_w.values()[o * 32 + i]));
  EXPECT_GT(worst, 0.0);
  EXPECT_LT(worst, 1e-2);
  EXPECT_EQ(p.mlp1_w.dim(0), 1u);  // D / 16
  EXPECT_EQ(p.spatial_avg_w.dim(0), 7u);
}

TEST(Mvp, MultiscalePromptsMatchLinearOracle) {
  Rng rng(12);
  ParamStore store;
  const PrompterParams p = random_prompter(store, small_config(16), rng);
  const Tensor r4 = random_tensor({2, 2, 4}, rng), x4 = random_tensor({2, 2, 4}, rng);
  const Tensor r8 = random_tensor({1, 1, 8}, rng), x8 = random_tensor({1, 1, 8}, rng);
  const auto prompts = multiscale_prompts(r4, r8, x4, x8, p);
  auto check = [](const Tensor& got, const Tensor& rgb, const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t d = rgb.dim(2), n = rgb.dim(0) * rgb.dim(1);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t o = 0; o < d; ++o) {
        double a = rgb.values()[t * d + o] + b.values()[o];
        for (std::size_t i = 0; i < d; ++i) {
          a += w.values()[o * 2 * d + i] * rgb.values()[t * d + i];
          a += w.values()[o * 2 * d + d + i] * x.values()[t * d + i];
        }
        EXPECT_NEAR(got.values()[t * d + o], a, 1e-12);
      }
  };
  check(prompts.p4, r4, x4, p.adapter4_w, p.adapter4_b);
  check(prompts.p8, r8, x8, p.adapter8_w, p.adapter8_b);
  EXPECT_THROW(multiscale_prompts(r4, r8, r4, random_tensor({1, 2, 8}, rng), p), ContractError);
}

}  // namespace
}  // namespace xprompt
