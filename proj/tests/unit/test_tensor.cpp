// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/gradcheck_suite.hpp"
#include "xprompt/tensor.hpp"

namespace xprompt {
namespace {

using namespace ops;
using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::to_vec;

TEST(Tensor, MatmulByIdentityIsIdentity) {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(to_vec(matmul(a, eye)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  Rng rng(3);
  const Tensor a = random_tensor({5, 7}, rng);
  const Tensor b = random_tensor({7, 3}, rng);
  const Tensor c = matmul(a, b);
  const auto A = a.values(), B = b.values();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < 7; ++p) acc += A[i * 7 + p] * B[p * 3 + j];
      EXPECT_NEAR(c.values()[i * 3 + j], acc, 1e-12);
    }
}

TEST(Tensor, LinearMatchesLoopAcrossTileEdges) {
  // Row and column counts straddle the kernel's register tiles.
  Rng rng(4);
  for (std::size_t rows : {1u, 2u, 3u, 5u}) {
    for (std::size_t n : {1u, 4u, 6u, 9u}) {
      const Tensor x = random_tensor({rows, 5}, rng);
      const Tensor w = random_tensor({n, 5}, rng);
      const Tensor b = random_tensor({n}, rng);
      const Tensor y = linear(x, w, b);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = b.values()[j];
          for (std::size_t p = 0; p < 5; ++p) acc += x.values()[i * 5 + p] * w.values()[j * 5 + p];
          EXPECT_EQ(y.values()[i * n + j], acc);
        }
    }
  }
}

TEST(Tensor, SigmoidAndSoftmaxSymmetry) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  const Tensor s = softmax(Tensor::from({3}, {0, 0, 0}));
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Tensor, SoftmaxRowsAreNormalized) {
  Rng rng(5);
  for (int seed = 0; seed < 20; ++seed) {
    const Tensor s = softmax(random_tensor({4, 6}, rng, 5.0));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        const double v = s.values()[r * 6 + c];
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Tensor, ConvCornerAndCenterByHand) {
  const Tensor x = Tensor::full({6, 6, 1}, 1.0);
  const Tensor w = Tensor::full({3, 3, 1, 1}, 1.0);
  const Tensor y = conv2d(x, w, Tensor(), {1, 1});
  ASSERT_EQ(y.shape(), (Shape{6, 6, 1}));
  EXPECT_EQ(y.values()[0], 4.0);
  EXPECT_EQ(y.values()[2 * 6 + 3], 9.0);
  EXPECT_EQ(y.values()[5], 4.0);
  EXPECT_EQ(y.values()[1], 6.0);
}

TEST(Tensor, ConvOutputShapeArithmetic) {
  const Tensor x = Tensor::zeros({64, 64, 3});
  const Tensor w = Tensor::zeros({7, 7, 3, 8});
  EXPECT_EQ(conv2d(x, w, Tensor(), {4, 3}).shape(), (Shape{16, 16, 8}));
  EXPECT_THROW(conv2d(Tensor::zeros({2, 2, 1}), Tensor::zeros({5, 5, 1, 1}), Tensor(), {1, 0}), ContractError);
}

TEST(Tensor, SigmoidDerivativeAtZero) {
  const Tensor x = Tensor::from({1}, {0.0}, true);
  backward(sigmoid(x));
  EXPECT_EQ(x.grad()[0], 0.25);
}

TEST(Tensor, SumGradientIsOnes) {
  const Tensor x = Tensor::from({2, 3}, {1, -2, 3, 4, 5, -6}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tensor, WeightGradOfSummedProductIsOuterProduct) {
  // y = sum(W x): dy/dW[i][j] = x[j] for every row i.
  const Tensor w = Tensor::from({2, 2}, {0.3, -0.7, 1.1, 0.2}, true);
  const Tensor x = Tensor::from({2, 1}, {2.0, -5.0});
  backward(sum(matmul(w, x)));
  const std::vector<double> expected{2.0, -5.0, 2.0, -5.0};
  EXPECT_LT(max_abs_diff(w.grad(), expected), 1e-15);
  // Central differences agree.
  const double err = grad_check([&x](const Tensor& W) { return sum(matmul(W, x)); }, w, 1e-6);
  EXPECT_LT(err, 1e-9);
}

TEST(Tensor, BackwardRejectsNonScalar) {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Tensor, UnreachableParameterHasNoGradient) {
  const Tensor a = Tensor::from({2}, {1, 2}, true);
  const Tensor b = Tensor::from({2}, {3, 4}, true);
  backward(sum(a));
  EXPECT_TRUE(a.has_grad());
  EXPECT_FALSE(b.has_grad());
}

TEST(Tensor, GradCheckLinearAndLayerNorm) {
  Rng rng(11);
  const Tensor w = random_tensor({4, 8}, rng);
  const Tensor b = random_tensor({4}, rng);
  const double lin = grad_check([&](const Tensor& x) { return linear(x, w, b); }, random_tensor({1, 8}, rng), 1e-5);
  EXPECT_LT(lin, 1e-6);
  const Tensor g = random_tensor({16}, rng);
  const Tensor beta = random_tensor({16}, rng);
  const Tensor mix = random_tensor({16}, rng);
  const double ln = grad_check([&](const Tensor& x) { return mul_trailing(layer_norm(x, g, beta), mix); },
                               random_tensor({1, 16}, rng), 1e-5);
  EXPECT_LT(ln, 1e-5);
}

TEST(Tensor, GradCheckOfConstantFunctionIsZero) {
  const Tensor c = Tensor::from({1}, {3.0});
  EXPECT_EQ(grad_check([&c](const Tensor&) { return c; }, Tensor::from({3}, {1, 2, 3}), 1e-6), 0.0);
}

TEST(Tensor, GradCheckRejectsBadEpsilon) {
  EXPECT_THROW(grad_check([](const Tensor& x) { return sum(x); }, Tensor::zeros({1}), 1e-2), ContractError);
}

TEST(Tensor, EveryOpPassesGradcheckOverTwentySeeds) {
  const auto results = op_gradchecks(20, 17);
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) {
    EXPECT_GE(r.cases, 20u) << r.name;
    EXPECT_LT(r.max_error, 1e-4) << r.name;
  }
}

TEST(Tensor, ConcatThenSliceRecoversOperands) {
  Rng rng(8);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Shape sa{2, 3, 4}, sb{2, 3, 4};
    sb[axis] = 5;
    const Tensor a = random_tensor(sa, rng);
    const Tensor b = random_tensor(sb, rng);
    const Tensor c = concat({a, b}, axis);
    EXPECT_TRUE(bit_equal(slice(c, axis, 0, sa[axis]), a));
    EXPECT_TRUE(bit_equal(slice(c, axis, sa[axis], sb[axis]), b));
  }
}

TEST(Tensor, ForwardIsBitDeterministic) {
  auto run = [] {
    Rng rng(21);
    const Tensor x = random_tensor({8, 8, 3}, rng);
    const Tensor w = random_tensor({3, 3, 3, 4}, rng);
    const Tensor y = gelu(conv2d(x, w, Tensor(), {1, 1}));
    return upsample_bilinear(y, 2);
  };
  EXPECT_TRUE(bit_equal(run(), run()));
}

TEST(Tensor, ShapeMismatchNamesTheOp) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected a shape error";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Tensor, NonFiniteOutputIsReported) {
  EXPECT_THROW(log(Tensor::from({1}, {0.0})), NumericError);
  EXPECT_THROW(scale(Tensor::from({1}, {std::numeric_limits<double>::max()}), 10.0), NumericError);
}

TEST(Tensor, NoGradGuardSkipsRecording) {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = scale(x, 3.0);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, GradShapeMatchesValues) {
  Rng rng(9);
  const Tensor x = random_tensor({3, 4}, rng, 1.0, true);
  backward(sum(gelu(x)));
  EXPECT_EQ(x.grad().size(), x.numel());
  EXPECT_EQ(numel(x.shape()), x.values().size());
}

TEST(Tensor, BilinearUpsampleOfConstantIsConstant) {
  const Tensor y = upsample_bilinear(Tensor::full({3, 2, 2}, 1.5), 2);
  ASSERT_EQ(y.shape(), (Shape{6, 4, 2}));
  for (double v : y.values()) EXPECT_EQ(v, 1.5);
}

TEST(Tensor, BilinearUpsampleHalfPixelWeights) {
  // Along a 1 x 2 row [0, 1] upsampled by 2 the half-pixel sample points are
  // -0.25, 0.25, 0.75, 1.25 (clamped), giving 0, 0.25, 0.75, 1.
  const Tensor y = upsample_bilinear(Tensor::from({1, 2, 1}, {0.0, 1.0}), 2);
  const std::vector<double> row{y.values()[0], y.values()[1], y.values()[2], y.values()[3]};
  EXPECT_EQ(row, (std::vector<double>{0.0, 0.25, 0.75, 1.0}));
}

TEST(Tensor, AttentionMatchesHandComputation) {
  // One head, two tokens, d = 1: scores q*k, softmax, weighted values.
  const Tensor q = Tensor::from({2, 1}, {1.0, 2.0});
  const Tensor k = Tensor::from({2, 1}, {0.5, -1.0});
  const Tensor v = Tensor::from({2, 1}, {3.0, 7.0});
  const Tensor out = multi_head_attention(q, k, v, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    const double s0 = q.values()[i] * 0.5, s1 = q.values()[i] * -1.0;
    const double e0 = std::exp(s0), e1 = std::exp(s1);
    EXPECT_NEAR(out.values()[i], (3.0 * e0 + 7.0 * e1) / (e0 + e1), 1e-14);
  }
}

}  // namespace
}  // namespace xprompt
