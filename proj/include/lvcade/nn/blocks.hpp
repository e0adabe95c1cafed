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

// Convolution-attention, convolutional feedforward and downsample blocks.
// Block inputs and outputs are [B, C, L, D] (batch, spatial, temporal,
// feature). Convolutions run along L; attention runs across C separately
// for every (batch, time) pair.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lvcade/nn/layers.hpp"

namespace lvcade::nn {

/// Multi-head softmax attention across the spatial axis.
///
/// Queries, keys and values are read from channels-first tensors produced by
/// ConvBlks: row (b * spatial + i), channel offset + h * head_dim + e, time l.
/// The merged output is [B*Cq, H*head_dim, L] in the same channel layout.
class SpatialAttention {
 public:
  struct Layout {
    std::size_t batch = 0, query_spatial = 0, key_spatial = 0, length = 0;
    std::size_t heads = 0, head_dim = 0;
    std::size_t q_width = 0, kv_width = 0;   // channel counts of the sources
    std::size_t q_off = 0, k_off = 0, v_off = 0;
  };

  Tensor forward(const Tensor& q_src, const Tensor& kv_src, const Layout& lay) {
    lay_ = lay;
    q_src_ = q_src;
    kv_src_ = kv_src;
    const std::size_t cq = lay.query_spatial, ck = lay.key_spatial, dh = lay.head_dim, l = lay.length;
    const std::size_t width = lay.heads * dh;
    weights_.assign(lay.batch * l * lay.heads * cq * ck, 0.0);
    Tensor out({lay.batch * cq, width, l});
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> scores(ck);
    for (std::size_t b = 0; b < lay.batch; ++b)
      for (std::size_t t = 0; t < l; ++t)
        for (std::size_t h = 0; h < lay.heads; ++h) {
          double* a = &weights_[(((b * l + t) * lay.heads + h) * cq) * ck];
          for (std::size_t i = 0; i < cq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < ck; ++j) {
              double s = 0.0;
              for (std::size_t e = 0; e < dh; ++e) s += q(b, i, h, e, t) * k(b, j, h, e, t);
              scores[j] = s * scale;
              mx = std::max(mx, scores[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < ck; ++j) {
              scores[j] = std::exp(scores[j] - mx);
              z += scores[j];
            }
            for (std::size_t j = 0; j < ck; ++j) a[i * ck + j] = scores[j] / z;
            for (std::size_t e = 0; e < dh; ++e) {
              double acc = 0.0;
              for (std::size_t j = 0; j < ck; ++j) acc += a[i * ck + j] * v(b, j, h, e, t);
              out.data[((b * cq + i) * width + h * dh + e) * l + t] = acc;
            }
          }
        }
    return out;
  }

  /// Gradients with respect to the query and key/value sources.
  std::pair<Tensor, Tensor> backward(const Tensor& g_out) {
    const auto& lay = lay_;
    const std::size_t cq = lay.query_spatial, ck = lay.key_spatial, dh = lay.head_dim, l = lay.length;
    const std::size_t width = lay.heads * dh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor gq(q_src_.shape), gkv(kv_src_.shape);
    std::vector<double> ga(ck);
    for (std::size_t b = 0; b < lay.batch; ++b)
      for (std::size_t t = 0; t < l; ++t)
        for (std::size_t h = 0; h < lay.heads; ++h) {
          const double* a = &weights_[(((b * l + t) * lay.heads + h) * cq) * ck];
          for (std::size_t i = 0; i < cq; ++i) {
            auto go = [&](std::size_t e) { return g_out.data[((b * cq + i) * width + h * dh + e) * l + t]; };
            double dot = 0.0;
            for (std::size_t j = 0; j < ck; ++j) {
              double s = 0.0;
              for (std::size_t e = 0; e < dh; ++e) {
                s += go(e) * v(b, j, h, e, t);
                gkv.data[kv_index(b, j, lay.v_off + h * dh + e, t)] += a[i * ck + j] * go(e);
              }
              ga[j] = s;
              dot += s * a[i * ck + j];
            }
            for (std::size_t j = 0; j < ck; ++j) {
              const double gs = a[i * ck + j] * (ga[j] - dot) * scale;
              if (gs == 0.0) continue;
              for (std::size_t e = 0; e < dh; ++e) {
                gq.data[q_index(b, i, lay.q_off + h * dh + e, t)] += gs * k(b, j, h, e, t);
                gkv.data[kv_index(b, j, lay.k_off + h * dh + e, t)] += gs * q(b, i, h, e, t);
              }
            }
          }
        }
    return {std::move(gq), std::move(gkv)};
  }

  /// Softmax weights, indexed [b][t][h][i][j].
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::size_t q_index(std::size_t b, std::size_t i, std::size_t ch, std::size_t t) const {
    return ((b * lay_.query_spatial + i) * lay_.q_width + ch) * lay_.length + t;
  }
  std::size_t kv_index(std::size_t b, std::size_t j, std::size_t ch, std::size_t t) const {
    return ((b * lay_.key_spatial + j) * lay_.kv_width + ch) * lay_.length + t;
  }
  double q(std::size_t b, std::size_t i, std::size_t h, std::size_t e, std::size_t t) const {
    return q_src_.data[q_index(b, i, lay_.q_off + h * lay_.head_dim + e, t)];
  }
  double k(std::size_t b, std::size_t j, std::size_t h, std::size_t e, std::size_t t) const {
    return kv_src_.data[kv_index(b, j, lay_.k_off + h * lay_.head_dim + e, t)];
  }
  double v(std::size_t b, std::size_t j, std::size_t h, std::size_t e, std::size_t t) const {
    return kv_src_.data[kv_index(b, j, lay_.v_off + h * lay_.head_dim + e, t)];
  }

  Layout lay_;
  Tensor q_src_, kv_src_;
  std::vector<double> weights_;
};

inline void check_heads(std::size_t width, std::size_t heads, const std::string& where) {
  if (heads == 0 || width % heads != 0)
    throw Error(ErrorKind::ShapeMismatch,
                where + ": width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
}

/// Self convolution-attention: one ConvBlk yields Q, K and V jointly,
/// attention mixes spatial positions, an output ConvBlk projects back, and
/// the result is added to the input.
class SelfConvAttention {
 public:
  SelfConvAttention() = default;
  SelfConvAttention(const std::string& name, std::size_t width, std::size_t heads, std::size_t kernel,
                    double dropout, Rng& rng)
      : width_(width), heads_(heads),
        qkv_((check_heads(width, heads, name), name + ".qkv"), width, 3 * width, kernel, rng),
        out_(name + ".out", width, width, kernel, rng),
        drop_(dropout) {}

  Tensor forward(const Tensor& z, const Context& ctx) {
    expect_rank(z, 4, "SelfConvAttention");
    if (z.dim(3) != width_) throw Error(ErrorKind::ShapeMismatch, "SelfConvAttention: feature width mismatch");
    b_ = z.dim(0);
    c_ = z.dim(1);
    const std::size_t l = z.dim(2);
    const Tensor qkv = qkv_.forward(to_channels_first(z), ctx);
    const SpatialAttention::Layout lay{b_, c_, c_, l, heads_, width_ / heads_, 3 * width_, 3 * width_,
                                       0, width_, 2 * width_};
    const Tensor merged = attn_.forward(qkv, qkv, lay);
    Tensor y = to_channels_last(drop_.forward(out_.forward(merged, ctx), ctx), b_, c_);
    add_into(y, z);
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor g_merged = out_.backward(drop_.backward(to_channels_first(gy)));
    auto [gq, gkv] = attn_.backward(g_merged);
    add_into(gq, gkv);  // both views of the same qkv tensor
    Tensor gz = to_channels_last(qkv_.backward(gq), b_, c_);
    add_into(gz, gy);
    return gz;
  }

  void collect(std::vector<Param*>& p) {
    qkv_.collect(p);
    out_.collect(p);
  }
  void collect_buffers(std::vector<Param*>& p) {
    qkv_.collect_buffers(p);
    out_.collect_buffers(p);
  }

  ConvBlk& qkv() { return qkv_; }
  ConvBlk& out() { return out_; }
  const SpatialAttention& attention() const { return attn_; }

 private:
  std::size_t width_ = 0, heads_ = 1;
  ConvBlk qkv_, out_;
  SpatialAttention attn_;
  Dropout drop_;
  std::size_t b_ = 0, c_ = 0;
};

/// Cross convolution-attention: queries from `query`, keys and values from
/// `source`; the result is added to `query`.
class CrossConvAttention {
 public:
  CrossConvAttention() = default;
  CrossConvAttention(const std::string& name, std::size_t width, std::size_t heads, std::size_t kernel,
                     double dropout, Rng& rng)
      : width_(width), heads_(heads),
        q_((check_heads(width, heads, name), name + ".q"), width, width, kernel, rng),
        kv_(name + ".kv", width, 2 * width, kernel, rng),
        out_(name + ".out", width, width, kernel, rng),
        drop_(dropout) {}

  Tensor forward(const Tensor& source, const Tensor& query, const Context& ctx) {
    expect_rank(source, 4, "CrossConvAttention source");
    expect_rank(query, 4, "CrossConvAttention query");
    if (source.dim(0) != query.dim(0) || source.dim(2) != query.dim(2) || source.dim(3) != width_ ||
        query.dim(3) != width_)
      throw Error(ErrorKind::ShapeMismatch, "CrossConvAttention: source " + shape_string(source.shape) +
                                                " and query " + shape_string(query.shape) + " disagree");
    b_ = query.dim(0);
    cq_ = query.dim(1);
    ck_ = source.dim(1);
    const std::size_t l = query.dim(2);
    const Tensor qs = q_.forward(to_channels_first(query), ctx);
    const Tensor kvs = kv_.forward(to_channels_first(source), ctx);
    const SpatialAttention::Layout lay{b_, cq_, ck_, l, heads_, width_ / heads_, width_, 2 * width_,
                                       0, 0, width_};
    const Tensor merged = attn_.forward(qs, kvs, lay);
    Tensor y = to_channels_last(drop_.forward(out_.forward(merged, ctx), ctx), b_, cq_);
    add_into(y, query);
    return y;
  }

  /// Returns (gradient wrt source, gradient wrt query).
  std::pair<Tensor, Tensor> backward(const Tensor& gy) {
    const Tensor g_merged = out_.backward(drop_.backward(to_channels_first(gy)));
    auto [gq, gkv] = attn_.backward(g_merged);
    Tensor g_query = to_channels_last(q_.backward(gq), b_, cq_);
    add_into(g_query, gy);
    Tensor g_source = to_channels_last(kv_.backward(gkv), b_, ck_);
    return {std::move(g_source), std::move(g_query)};
  }

  void collect(std::vector<Param*>& p) {
    q_.collect(p);
    kv_.collect(p);
    out_.collect(p);
  }
  void collect_buffers(std::vector<Param*>& p) {
    q_.collect_buffers(p);
    kv_.collect_buffers(p);
    out_.collect_buffers(p);
  }

  ConvBlk& q() { return q_; }
  ConvBlk& kv() { return kv_; }
  ConvBlk& out() { return out_; }
  const SpatialAttention& attention() const { return attn_; }

 private:
  std::size_t width_ = 0, heads_ = 1;
  ConvBlk q_, kv_, out_;
  SpatialAttention attn_;
  Dropout drop_;
  std::size_t b_ = 0, cq_ = 0, ck_ = 0;
};

/// Three ConvBlks, each followed by dropout, plus a residual connection.
class ConvFeedForward {
 public:
  ConvFeedForward() = default;
  ConvFeedForward(const std::string& name, std::size_t width, std::size_t kernel, double dropout, Rng& rng) {
    for (std::size_t i = 0; i < 3; ++i) {
      blks_.emplace_back(name + ".blk" + std::to_string(i), width, width, kernel, rng);
      drops_.emplace_back(dropout);
    }
  }

  Tensor forward(const Tensor& z, const Context& ctx) {
    expect_rank(z, 4, "ConvFeedForward");
    b_ = z.dim(0);
    c_ = z.dim(1);
    Tensor h = to_channels_first(z);
    for (std::size_t i = 0; i < blks_.size(); ++i) h = drops_[i].forward(blks_[i].forward(h, ctx), ctx);
    Tensor y = to_channels_last(h, b_, c_);
    add_into(y, z);
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor g = to_channels_first(gy);
    for (std::size_t i = blks_.size(); i-- > 0;) g = blks_[i].backward(drops_[i].backward(g));
    Tensor gz = to_channels_last(g, b_, c_);
    add_into(gz, gy);
    return gz;
  }

  void collect(std::vector<Param*>& p) {
    for (auto& b : blks_) b.collect(p);
  }
  void collect_buffers(std::vector<Param*>& p) {
    for (auto& b : blks_) b.collect_buffers(p);
  }

  ConvBlk& blk(std::size_t i) { return blks_.at(i); }

 private:
  std::vector<ConvBlk> blks_;
  std::vector<Dropout> drops_;
  std::size_t b_ = 0, c_ = 0;
};

/// Inverse pixel shuffle [B, C, L, D] -> [B, C/p, L/q, D*p*q].
/// Element (c, l, d) lands at (c/p, l/q, d*p*q + (c%p)*q + l%q).
inline Tensor pixel_unshuffle(const Tensor& z, std::size_t p, std::size_t q) {
  expect_rank(z, 4, "pixel_unshuffle");
  const std::size_t b = z.dim(0), c = z.dim(1), l = z.dim(2), d = z.dim(3);
  if (p == 0 || q == 0 || c % p != 0 || l % q != 0)
    throw Error(ErrorKind::ShapeMismatch, "pixel_unshuffle: " + shape_string(z.shape) + " not divisible by (" +
                                              std::to_string(p) + ", " + std::to_string(q) + ")");
  const std::size_t c2 = c / p, l2 = l / q, d2 = d * p * q;
  Tensor out({b, c2, l2, d2});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t li = 0; li < l; ++li)
        for (std::size_t di = 0; di < d; ++di)
          out.data[((n * c2 + ci / p) * l2 + li / q) * d2 + di * p * q + (ci % p) * q + li % q] =
              z.data[((n * c + ci) * l + li) * d + di];
  return out;
}

/// Exact inverse of pixel_unshuffle.
inline Tensor pixel_shuffle(const Tensor& y, std::size_t p, std::size_t q) {
  expect_rank(y, 4, "pixel_shuffle");
  const std::size_t b = y.dim(0), c2 = y.dim(1), l2 = y.dim(2), d2 = y.dim(3);
  if (p == 0 || q == 0 || d2 % (p * q) != 0) throw Error(ErrorKind::ShapeMismatch, "pixel_shuffle: bad factors");
  const std::size_t c = c2 * p, l = l2 * q, d = d2 / (p * q);
  Tensor out({b, c, l, d});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t li = 0; li < l; ++li)
        for (std::size_t di = 0; di < d; ++di)
          out.data[((n * c + ci) * l + li) * d + di] =
              y.data[((n * c2 + ci / p) * l2 + li / q) * d2 + di * p * q + (ci % p) * q + li % q];
  return out;
}

/// Pixel unshuffle followed by a width-1 temporal convolution to `out` features.
class Downsample {
 public:
  Downsample() = default;
  Downsample(const std::string& name, std::size_t in, std::size_t out, std::size_t p, std::size_t q, Rng& rng)
      : p_(p), q_(q), conv_(name + ".conv", in * p * q, out, 1, true, rng) {}

  Tensor forward(const Tensor& z) {
    const Tensor s = pixel_unshuffle(z, p_, q_);
    b_ = s.dim(0);
    c_ = s.dim(1);
    return to_channels_last(conv_.forward(to_channels_first(s)), b_, c_);
  }

  Tensor backward(const Tensor& gy) {
    return pixel_shuffle(to_channels_last(conv_.backward(to_channels_first(gy)), b_, c_), p_, q_);
  }

  void collect(std::vector<Param*>& p) { conv_.collect(p); }
  Conv1d& conv() { return conv_; }

 private:
  std::size_t p_ = 1, q_ = 1;
  Conv1d conv_;
  std::size_t b_ = 0, c_ = 0;
};

}  // namespace lvcade::nn
