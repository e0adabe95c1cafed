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

#pragma once

// Layers with hand-written backward passes. Each layer caches what its
// backward needs during forward, so a layer instance appears at most once in
// a forward graph.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lvcade/nn/tensor.hpp"

namespace lvcade::nn {

/// Temporal convolution over [N, in, L] with zero padding (k-1)/2.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, bool bias, Rng& rng)
      : in_(in), out_(out), k_(kernel), has_bias_(bias), weight_(name + ".weight", {out, in, kernel}) {
    if (kernel % 2 == 0) throw Error(ErrorKind::ShapeMismatch, name + ": kernel size must be odd");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    for (auto& w : weight_.value.data) w = rng.uniform(-bound, bound);
    if (bias) {
      bias_ = Param(name + ".bias", {out});
      for (auto& b : bias_.value.data) b = rng.uniform(-bound, bound);
    }
  }

  Tensor forward(const Tensor& x) {
    expect_rank(x, 3, "Conv1d");
    if (x.dim(1) != in_) throw Error(ErrorKind::ShapeMismatch, weight_.name + ": input width " +
                                                                   std::to_string(x.dim(1)) + " != " + std::to_string(in_));
    x_ = x;
    const std::size_t n = x.dim(0), l = x.dim(2);
    const long pad = static_cast<long>(k_ / 2);
    Tensor y({n, out_, l});
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_; ++o) {
        double* yr = &y.data[(b * out_ + o) * l];
        if (has_bias_) std::fill(yr, yr + l, bias_.value[o]);
        for (std::size_t i = 0; i < in_; ++i) {
          const double* xr = &x.data[(b * in_ + i) * l];
          for (std::size_t j = 0; j < k_; ++j) {
            const double w = weight_.value[(o * in_ + i) * k_ + j];
            const long shift = static_cast<long>(j) - pad;
            const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
            const std::size_t hi = shift > 0 ? l - static_cast<std::size_t>(shift) : l;
            for (std::size_t t = lo; t < hi; ++t) yr[t] += w * xr[static_cast<long>(t) + shift];
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const std::size_t n = x_.dim(0), l = x_.dim(2);
    const long pad = static_cast<long>(k_ / 2);
    Tensor gx(x_.shape);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_; ++o) {
        const double* gr = &gy.data[(b * out_ + o) * l];
        if (has_bias_) {
          double s = 0.0;
          for (std::size_t t = 0; t < l; ++t) s += gr[t];
          bias_.grad[o] += s;
        }
        for (std::size_t i = 0; i < in_; ++i) {
          const double* xr = &x_.data[(b * in_ + i) * l];
          double* gxr = &gx.data[(b * in_ + i) * l];
          for (std::size_t j = 0; j < k_; ++j) {
            const std::size_t widx = (o * in_ + i) * k_ + j;
            const double w = weight_.value[widx];
            const long shift = static_cast<long>(j) - pad;
            const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
            const std::size_t hi = shift > 0 ? l - static_cast<std::size_t>(shift) : l;
            double gw = 0.0;
            for (std::size_t t = lo; t < hi; ++t) {
              gw += gr[t] * xr[static_cast<long>(t) + shift];
              gxr[static_cast<long>(t) + shift] += w * gr[t];
            }
            weight_.grad[widx] += gw;
          }
        }
      }
    }
    return gx;
  }

  void collect(std::vector<Param*>& params) {
    params.push_back(&weight_);
    if (has_bias_) params.push_back(&bias_);
  }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  std::size_t in_width() const { return in_; }
  std::size_t out_width() const { return out_; }

 private:
  std::size_t in_ = 0, out_ = 0, k_ = 1;
  bool has_bias_ = false;
  Param weight_, bias_;
  Tensor x_;
};

/// Per-channel normalization over (N, L) of [N, C, L].
class BatchNorm1d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t channels)
      : c_(channels),
        gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        running_mean_(name + ".running_mean", {channels}),
        running_var_(name + ".running_var", {channels}) {
    gamma_.value.fill(1.0);
    running_var_.value.fill(1.0);
  }

  Tensor forward(const Tensor& x, const Context& ctx) {
    expect_rank(x, 3, "BatchNorm1d");
    if (x.dim(1) != c_) throw Error(ErrorKind::ShapeMismatch, gamma_.name + ": channel mismatch");
    const std::size_t n = x.dim(0), l = x.dim(2);
    const double m = static_cast<double>(n * l);
    training_ = ctx.training;
    xhat_ = Tensor(x.shape);
    inv_std_.assign(c_, 0.0);
    Tensor y(x.shape);
    for (std::size_t c = 0; c < c_; ++c) {
      double mean, var;
      if (training_) {
        mean = 0.0;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t t = 0; t < l; ++t) mean += x.data[(b * c_ + c) * l + t];
        mean /= m;
        var = 0.0;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t t = 0; t < l; ++t) {
            const double d = x.data[(b * c_ + c) * l + t] - mean;
            var += d * d;
          }
        var /= m;
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        running_mean_.value[c] = (1 - kMomentum) * running_mean_.value[c] + kMomentum * mean;
        running_var_.value[c] = (1 - kMomentum) * running_var_.value[c] + kMomentum * unbiased;
      } else {
        mean = running_mean_.value[c];
        var = running_var_.value[c];
      }
      const double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_[c] = inv;
      const double g = gamma_.value[c], be = beta_.value[c];
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t t = 0; t < l; ++t) {
          const std::size_t idx = (b * c_ + c) * l + t;
          const double xh = (x.data[idx] - mean) * inv;
          xhat_.data[idx] = xh;
          y.data[idx] = g * xh + be;
        }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const std::size_t n = xhat_.dim(0), l = xhat_.dim(2);
    const double m = static_cast<double>(n * l);
    Tensor gx(xhat_.shape);
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t t = 0; t < l; ++t) {
          const std::size_t idx = (b * c_ + c) * l + t;
          sum_g += gy.data[idx];
          sum_gx += gy.data[idx] * xhat_.data[idx];
        }
      beta_.grad[c] += sum_g;
      gamma_.grad[c] += sum_gx;
      const double g = gamma_.value[c], inv = inv_std_[c];
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t t = 0; t < l; ++t) {
          const std::size_t idx = (b * c_ + c) * l + t;
          gx.data[idx] = training_
                             ? g * inv / m * (m * gy.data[idx] - sum_g - xhat_.data[idx] * sum_gx)
                             : g * inv * gy.data[idx];
        }
    }
    return gx;
  }

  void collect(std::vector<Param*>& params) {
    params.push_back(&gamma_);
    params.push_back(&beta_);
  }
  void collect_buffers(std::vector<Param*>& buffers) {
    buffers.push_back(&running_mean_);
    buffers.push_back(&running_var_);
  }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  Param& running_mean() { return running_mean_; }
  Param& running_var() { return running_var_; }

 private:
  std::size_t c_ = 0;
  Param gamma_, beta_, running_mean_, running_var_;
  bool training_ = false;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

/// Exact GELU, x * Phi(x).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi * kInvSqrt2;
  return cdf + x * pdf;
}

class Gelu {
 public:
  Tensor forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = gelu(x.data[i]);
    return y;
  }
  Tensor backward(const Tensor& gy) {
    Tensor gx(gy.shape);
    for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] = gy.data[i] * gelu_grad(x_.data[i]);
    return gx;
  }

 private:
  Tensor x_;
};

/// Inverted dropout; identity outside training or at rate 0.
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate) : rate_(rate) {}

  Tensor forward(const Tensor& x, const Context& ctx) {
    active_ = ctx.training && rate_ > 0.0;
    if (!active_) return x;
    if (!ctx.rng) throw Error(ErrorKind::InvalidInput, "dropout in training mode needs an RNG");
    const double keep = 1.0 - rate_;
    mask_.assign(x.size(), 0.0);
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = ctx.rng->uniform() < keep ? 1.0 / keep : 0.0;
      y.data[i] = x.data[i] * mask_[i];
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    if (!active_) return gy;
    Tensor gx(gy.shape);
    for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] = gy.data[i] * mask_[i];
    return gx;
  }

 private:
  double rate_ = 0.0;
  bool active_ = false;
  std::vector<double> mask_;
};

/// Temporal convolution, batch normalization, GELU.
class ConvBlk {
 public:
  ConvBlk() = default;
  ConvBlk(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng)
      : conv_(name + ".conv", in, out, kernel, false, rng), bn_(name + ".bn", out) {}

  Tensor forward(const Tensor& x, const Context& ctx) {
    return act_.forward(bn_.forward(conv_.forward(x), ctx));
  }
  Tensor backward(const Tensor& gy) { return conv_.backward(bn_.backward(act_.backward(gy))); }

  void collect(std::vector<Param*>& params) {
    conv_.collect(params);
    bn_.collect(params);
  }
  void collect_buffers(std::vector<Param*>& buffers) { bn_.collect_buffers(buffers); }

  Conv1d& conv() { return conv_; }
  BatchNorm1d& bn() { return bn_; }

 private:
  Conv1d conv_;
  BatchNorm1d bn_;
  Gelu act_;
};

}  // namespace lvcade::nn
