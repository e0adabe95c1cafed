// Copyright 2026 The lvcade Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "lvcade/nn/layers.hpp"
#include "nn_oracles.hpp"

namespace nn = lvcade::nn;
using lvcade::Rng;

namespace {

double max_diff(const nn::Tensor& a, const nn::Tensor& b) {
  EXPECT_EQ(a.shape, b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST(Gelu, KnownValues) {
  EXPECT_EQ(nn::gelu(0.0), 0.0);
  EXPECT_NEAR(nn::gelu(1.0), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(nn::gelu(-1.0), -0.15865525393145707, 1e-12);
  for (double x = -4.0; x <= 4.0; x += 0.37) EXPECT_NEAR(nn::gelu(x), oracle::gelu(x), 1e-14);
}

TEST(Gelu, DerivativeMatchesFiniteDifference) {
  for (double x = -3.0; x <= 3.0; x += 0.25) {
    const double h = 1e-6;
    EXPECT_NEAR(nn::gelu_grad(x), (nn::gelu(x + h) - nn::gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Conv1d, SamePaddingAndBias) {
  Rng rng(1);
  nn::Conv1d conv("c", 1, 1, 3, true, rng);
  conv.weight().value.data = {1.0, 2.0, 3.0};
  conv.bias().value.data = {0.5};
  const nn::Tensor x({1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  const nn::Tensor y = conv.forward(x);
  // y[t] = x[t-1] + 2 x[t] + 3 x[t+1] + 0.5
  EXPECT_EQ(y.data, (std::vector<double>{8.5, 14.5, 20.5, 11.5}));
}

TEST(ConvBlk, IdentityKernelIsGelu) {
  Rng rng(2);
  nn::ConvBlk blk("b", 3, 3, 3, rng);
  blk.conv().weight().value.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) blk.conv().weight().value[(i * 3 + i) * 3 + 1] = 1.0;
  const nn::Tensor x = oracle::random_tensor({2, 3, 7}, rng);
  const nn::Tensor y = blk.forward(x, nn::Context{});
  const double s = 1.0 / std::sqrt(1.0 + nn::BatchNorm1d::kEps);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data[i], nn::gelu(x.data[i] * s), 1e-15);
}

TEST(ConvBlk, ZeroKernelGivesZero) {
  Rng rng(3);
  nn::ConvBlk blk("b", 4, 5, 3, rng);
  blk.conv().weight().value.fill(0.0);
  const nn::Tensor y = blk.forward(oracle::random_tensor({2, 4, 6}, rng), nn::Context{});
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

class ConvBlkOracle : public ::testing::TestWithParam<bool> {};

TEST_P(ConvBlkOracle, MatchesLoopReference) {
  const bool training = GetParam();
  Rng rng(4);
  nn::ConvBlk blk("b", 6, 4, 5, rng);
  oracle::randomize_bn(blk.bn(), rng);
  const nn::Tensor z = oracle::random_tensor({2, 3, 9, 6}, rng);
  const nn::Tensor expect = oracle::conv_blk(z, blk, training);
  Rng drop(5);
  const nn::Tensor got =
      nn::to_channels_last(blk.forward(nn::to_channels_first(z), nn::Context{training, &drop}), 2, 3);
  EXPECT_LT(max_diff(got, expect), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Modes, ConvBlkOracle, ::testing::Values(false, true));

TEST(BatchNorm, RunningStatisticsUpdate) {
  nn::BatchNorm1d bn("bn", 1);
  const nn::Tensor x({2, 1, 2}, std::vector<double>{1, 2, 3, 6});
  Rng rng(6);
  bn.forward(x, nn::Context{true, &rng});
  // mean 3, biased var 3.5, unbiased 14/3
  EXPECT_NEAR(bn.running_mean().value[0], 0.3, 1e-15);
  EXPECT_NEAR(bn.running_var().value[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
  bn.forward(x, nn::Context{});
  EXPECT_NEAR(bn.running_mean().value[0], 0.3, 1e-15);
}

TEST(BatchNorm, TrainingOutputHasZeroMeanUnitVariance) {
  Rng rng(7);
  nn::BatchNorm1d bn("bn", 3);
  nn::Tensor x = oracle::random_tensor({4, 3, 10}, rng);
  for (auto& v : x.data) v = 5.0 + 3.0 * v;
  const nn::Tensor y = bn.forward(x, nn::Context{true, &rng});
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 10; ++t) m += y.data[(b * 3 + c) * 10 + t] / 40.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 10; ++t) v += std::pow(y.data[(b * 3 + c) * 10 + t] - m, 2) / 40.0;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(Dropout, EvalIsIdentity) {
  Rng rng(8);
  nn::Dropout d(0.5);
  const nn::Tensor x = oracle::random_tensor({3, 4, 5}, rng);
  EXPECT_EQ(d.forward(x, nn::Context{false, &rng}), x);
  EXPECT_EQ(d.backward(x), x);
}

TEST(Dropout, TrainingKeepsExpectationAndRoutesGradient) {
  Rng rng(9);
  nn::Dropout d(0.25);
  const nn::Tensor x({20000}, 1.0);
  const nn::Tensor y = d.forward(x, nn::Context{true, &rng});
  double sum = 0.0;
  std::size_t zeros = 0;
  for (double v : y.data) {
    sum += v;
    if (v == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
  }
  EXPECT_NEAR(sum / 20000.0, 1.0, 0.02);
  EXPECT_NEAR(double(zeros) / 20000.0, 0.25, 0.02);
  const nn::Tensor g = d.backward(x);
  EXPECT_EQ(g, y);
}

TEST(Dropout, TrainingWithoutRngThrows) {
  nn::Dropout d(0.5);
  EXPECT_THROW(d.forward(nn::Tensor({4}, 1.0), nn::Context{true, nullptr}), lvcade::Error);
}

TEST(Layout, ChannelsFirstRoundTrip) {
  Rng rng(10);
  const nn::Tensor z = oracle::random_tensor({2, 3, 4, 5}, rng);
  const nn::Tensor y = nn::to_channels_first(z);
  EXPECT_EQ(y.shape, (nn::Shape{6, 5, 4}));
  EXPECT_EQ(y.data[(4 * 5 + 2) * 4 + 3], oracle::at4(z, 1, 1, 3, 2));
  EXPECT_EQ(nn::to_channels_last(y, 2, 3), z);
}
