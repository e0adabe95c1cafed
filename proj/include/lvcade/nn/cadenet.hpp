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

// Convolution-attention encoder-decoder classifier.
//
//   X [B, C, L, 7] -> embedding ConvBlk -> 3 x (self conv-attention,
//   conv feedforward, downsample) -> M x (cross conv-attention against a
//   learnable query, conv feedforward) -> pooled heads -> softmax.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvcade/nn/blocks.hpp"
#include "lvcade/signal_io.hpp"

namespace lvcade::nn {

struct StageConfig {
  std::size_t width = 40;
  /// Spatial and temporal downsample factors applied at the end of the stage.
  std::size_t p = 1;
  std::size_t q = 1;
};

struct ModelConfig {
  std::vector<StageConfig> stages{{40, 2, 2}, {40, 1, 2}, {40, 1, 1}};
  std::size_t decoder_blocks = 2;
  std::size_t heads = 5;
  std::size_t kernel = 3;
  std::size_t query_spatial = 2;
  std::size_t classes = 2;
  std::size_t in_features = 7;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  /// Use eps/2 for the uniform target share regardless of class count.
  bool literal_smoothing = false;
  /// Optional spatial permutation applied to the input so that sensors of a
  /// group occupy consecutive positions. Empty means identity.
  std::vector<std::size_t> channel_order;

  std::size_t stage_output_width(std::size_t s) const {
    return s + 1 < stages.size() ? stages[s + 1].width : stages.back().width;
  }
  std::size_t latent_width() const { return stages.back().width; }

  /// Desk-scale default.
  static ModelConfig desk() { return {}; }

  /// Two-class gradient-check model: D = 10, factors (2,2), (1,2), (1,1), one decoder block.
  static ModelConfig tiny() {
    ModelConfig c;
    c.stages = {{10, 2, 2}, {10, 1, 2}, {10, 1, 1}};
    c.decoder_blocks = 1;
    c.dropout = 0.0;
    return c;
  }

  /// Six-class model for 22-channel, 1000-sample clips with ~5.87 M parameters.
  static ModelConfig standard() {
    ModelConfig c;
    c.stages = {{220, 2, 4}, {220, 1, 5}, {220, 1, 5}};
    c.classes = 6;
    return c;
  }

  /// Larger six-class variant with ~11.79 M parameters.
  static ModelConfig large() {
    ModelConfig c = standard();
    for (auto& s : c.stages) s.width = 310;
    return c;
  }

  static ModelConfig preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "tiny") return tiny();
    if (name == "standard") return standard();
    if (name == "large") return large();
    throw Error(ErrorKind::ConfigInvalid, "unknown model preset '" + name + "'");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) stages.push_back({{"width", s.width}, {"p", s.p}, {"q", s.q}});
  return {{"stages", stages},
          {"decoder_blocks", c.decoder_blocks},
          {"heads", c.heads},
          {"kernel", c.kernel},
          {"query_spatial", c.query_spatial},
          {"classes", c.classes},
          {"in_features", c.in_features},
          {"dropout", c.dropout},
          {"label_smoothing", c.label_smoothing},
          {"literal_smoothing", c.literal_smoothing},
          {"channel_order", c.channel_order}};
}

/// Fields absent from `j` keep the values of `base`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  try {
    if (j.contains("preset")) base = ModelConfig::preset(j.at("preset").get<std::string>());
    if (j.contains("stages")) {
      base.stages.clear();
      for (const auto& s : j.at("stages"))
        base.stages.push_back({s.at("width").get<std::size_t>(), s.value("p", std::size_t{1}),
                               s.value("q", std::size_t{1})});
    }
    base.decoder_blocks = j.value("decoder_blocks", base.decoder_blocks);
    base.heads = j.value("heads", base.heads);
    base.kernel = j.value("kernel", base.kernel);
    base.query_spatial = j.value("query_spatial", base.query_spatial);
    base.classes = j.value("classes", base.classes);
    base.in_features = j.value("in_features", base.in_features);
    base.dropout = j.value("dropout", base.dropout);
    base.label_smoothing = j.value("label_smoothing", base.label_smoothing);
    base.literal_smoothing = j.value("literal_smoothing", base.literal_smoothing);
    base.channel_order = j.value("channel_order", base.channel_order);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("model config: ") + e.what());
  }
  return base;
}

/// Throws ShapeMismatch unless the config fits [*, channels, length, in_features].
inline void validate_config(const ModelConfig& c, std::size_t channels, std::size_t length) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::ShapeMismatch, m); };
  if (c.stages.empty()) fail("at least one encoder stage is required");
  if (c.decoder_blocks < 1) fail("decoder needs at least one block");
  if (c.kernel % 2 == 0) fail("kernel size must be odd");
  if (c.classes < 2) fail("need at least two classes");
  if (c.query_spatial < 1) fail("query spatial size must be >= 1");
  if (!c.channel_order.empty()) {
    auto sorted = c.channel_order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      if (sorted[i] != i || sorted.size() != channels) fail("channel_order must be a permutation of the channels");
  }
  std::size_t ch = channels, len = length;
  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    const auto& st = c.stages[s];
    if (st.width == 0 || st.width % c.heads != 0)
      fail("stage " + std::to_string(s) + " width " + std::to_string(st.width) + " not divisible by " +
           std::to_string(c.heads) + " heads");
    if (st.p == 0 || st.q == 0 || ch % st.p != 0 || len % st.q != 0)
      fail("stage " + std::to_string(s) + " cannot downsample " + std::to_string(ch) + "x" + std::to_string(len) +
           " by (" + std::to_string(st.p) + ", " + std::to_string(st.q) + ")");
    ch /= st.p;
    len /= st.q;
  }
}

/// Spatial and temporal size after the encoder.
inline std::pair<std::size_t, std::size_t> latent_extent(const ModelConfig& c, std::size_t channels,
                                                         std::size_t length) {
  for (const auto& s : c.stages) {
    channels /= s.p;
    length /= s.q;
  }
  return {channels, length};
}

/// Learnable parameter count without building the model.
inline std::size_t parameter_count(const ModelConfig& c, std::size_t channels, std::size_t length) {
  validate_config(c, channels, length);
  const std::size_t k = c.kernel;
  auto convblk = [&](std::size_t in, std::size_t out) { return in * out * k + 2 * out; };
  std::size_t n = convblk(c.in_features, c.stages.front().width);
  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    const std::size_t d = c.stages[s].width;
    n += convblk(d, 3 * d) + convblk(d, d);  // self attention
    n += 3 * convblk(d, d);                   // feedforward
    n += d * c.stages[s].p * c.stages[s].q * c.stage_output_width(s) + c.stage_output_width(s);
  }
  const std::size_t d = c.latent_width();
  const auto [qc, ql] = latent_extent(c, channels, length);
  n += c.query_spatial * ql * d;
  n += c.decoder_blocks * (convblk(d, d) + convblk(d, 2 * d) + convblk(d, d) + 3 * convblk(d, d));
  n += c.decoder_blocks * (2 * d * c.classes + c.classes + 1);
  (void)qc;
  return n;
}

/// Softmax of each row of a [rows, cols] array.
inline std::vector<double> softmax_rows(const std::vector<double>& logits, std::size_t rows, std::size_t cols) {
  std::vector<double> p(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, logits[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (p[r * cols + c] = std::exp(logits[r * cols + c] - mx));
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= z;
  }
  return p;
}

/// Smoothed target share of class n: (1 - eps) * y + eps / N, or eps / 2 in
/// literal mode.
inline double smoothed_target(bool is_true, double eps, std::size_t classes, bool literal) {
  return (is_true ? 1.0 - eps : 0.0) + (literal ? eps / 2.0 : eps / static_cast<double>(classes));
}

/// Label-smoothed cross entropy of probabilities P [B, N] against one-hot Y.
inline double smoothed_cross_entropy(const Tensor& probs, const Tensor& onehot, double eps, bool literal = false) {
  expect_rank(probs, 2, "loss");
  expect_shape(onehot, probs.shape, "loss labels");
  const std::size_t b = probs.dim(0), n = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t c = 0; c < n; ++c) {
      const double p = probs.data[i * n + c];
      if (!(p > 0.0) || !std::isfinite(p))
        throw Error(ErrorKind::NonFiniteProbability, "probability " + std::to_string(p) + " at row " +
                                                         std::to_string(i) + ", class " + std::to_string(c));
      total += smoothed_target(onehot.data[i * n + c] > 0.5, eps, n, literal) * std::log(p);
    }
  return -total / static_cast<double>(b);
}

class CadeNet {
 public:
  CadeNet(ModelConfig config, std::size_t channels, std::size_t length, std::uint64_t seed)
      : config_(std::move(config)), channels_(channels), length_(length), rng_(seed) {
    validate_config(config_, channels, length);
    Rng init(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto& c = config_;
    embed_ = ConvBlk("embed", c.in_features, c.stages.front().width, c.kernel, init);
    for (std::size_t s = 0; s < c.stages.size(); ++s) {
      const std::string pre = "encoder." + std::to_string(s);
      const auto& st = c.stages[s];
      self_attn_.emplace_back(pre + ".attn", st.width, c.heads, c.kernel, c.dropout, init);
      enc_ff_.emplace_back(pre + ".ff", st.width, c.kernel, c.dropout, init);
      down_.emplace_back(pre + ".down", st.width, c.stage_output_width(s), st.p, st.q, init);
    }
    const std::size_t d = c.latent_width();
    const auto [qc, ql] = latent_extent(c, channels, length);
    (void)qc;
    query_ = Param("decoder.query", {c.query_spatial, ql, d});
    const double qs = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : query_.value.data) v = init.normal() * qs;
    for (std::size_t j = 0; j < c.decoder_blocks; ++j) {
      const std::string pre = "decoder." + std::to_string(j);
      cross_attn_.emplace_back(pre + ".attn", d, c.heads, c.kernel, c.dropout, init);
      dec_ff_.emplace_back(pre + ".ff", d, c.kernel, c.dropout, init);
      Param w(pre + ".fc.weight", {c.classes, 2 * d});
      Param bias(pre + ".fc.bias", {c.classes});
      const double bound = 1.0 / std::sqrt(static_cast<double>(2 * d));
      for (auto& v : w.value.data) v = init.uniform(-bound, bound);
      for (auto& v : bias.value.data) v = init.uniform(-bound, bound);
      fc_w_.push_back(std::move(w));
      fc_b_.push_back(std::move(bias));
    }
    head_w_ = Param("head.block_weights", {c.decoder_blocks});
    head_w_.value.fill(1.0 / static_cast<double>(c.decoder_blocks));
  }

  const ModelConfig& config() const { return config_; }
  std::size_t input_channels() const { return channels_; }
  std::size_t input_length() const { return length_; }

  /// Stage outputs of the encoder, after each downsample.
  std::vector<Tensor> encode(const Tensor& x, const Context& ctx) {
    expect_rank(x, 4, "CadeNet input");
    if (x.dim(1) != channels_ || x.dim(2) != length_ || x.dim(3) != config_.in_features)
      throw Error(ErrorKind::ShapeMismatch, "CadeNet input " + shape_string(x.shape) + " does not match [B, " +
                                                std::to_string(channels_) + ", " + std::to_string(length_) + ", " +
                                                std::to_string(config_.in_features) + "]");
    batch_ = x.dim(0);
    const Tensor xin = config_.channel_order.empty() ? x : permute_spatial(x, config_.channel_order, false);
    Tensor z = to_channels_last(embed_.forward(to_channels_first(xin), ctx), batch_, channels_);
    std::vector<Tensor> outs;
    for (std::size_t s = 0; s < config_.stages.size(); ++s) {
      z = self_attn_[s].forward(z, ctx);
      z = enc_ff_[s].forward(z, ctx);
      z = down_[s].forward(z);
      outs.push_back(z);
    }
    return outs;
  }

  /// One feature map per decoder block, each shaped like the broadcast query.
  std::vector<Tensor> decode(const Tensor& latent, const Context& ctx) {
    const std::size_t b = latent.dim(0);
    Tensor q({b, query_.value.dim(0), query_.value.dim(1), query_.value.dim(2)});
    const std::size_t per = query_.value.size();
    for (std::size_t i = 0; i < b; ++i) std::copy(query_.value.data.begin(), query_.value.data.end(), q.data.begin() + static_cast<long>(i * per));
    std::vector<Tensor> feats;
    for (std::size_t j = 0; j < cross_attn_.size(); ++j) {
      q = cross_attn_[j].forward(latent, q, ctx);
      q = dec_ff_[j].forward(q, ctx);
      feats.push_back(q);
    }
    return feats;
  }

  /// Combined logits [B, N] from decoder features: per block mean and max
  /// pooling over spatial and temporal axes, a fully connected layer, and a
  /// learnable weighted sum across blocks.
  Tensor head_logits(const std::vector<Tensor>& feats) {
    if (feats.size() != fc_w_.size())
      throw Error(ErrorKind::ShapeMismatch, "head expects " + std::to_string(fc_w_.size()) + " feature maps");
    const std::size_t n = config_.classes;
    head_in_ = feats;
    pooled_.clear();
    block_logits_.clear();
    argmax_.clear();
    const std::size_t b = feats.front().dim(0);
    Tensor logits({b, n});
    for (std::size_t j = 0; j < feats.size(); ++j) {
      const Tensor& z = feats[j];
      expect_shape(z, feats.front().shape, "head feature");
      const std::size_t cl = z.dim(1) * z.dim(2), d = z.dim(3);
      Tensor pooled({b, 2 * d});
      std::vector<std::size_t> arg(b * d, 0);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
          std::size_t am = 0;
          for (std::size_t r = 0; r < cl; ++r) {
            const double v = z.data[(i * cl + r) * d + k];
            sum += v;
            if (v > mx) {
              mx = v;
              am = r;
            }
          }
          pooled.data[i * 2 * d + k] = sum / static_cast<double>(cl);
          pooled.data[i * 2 * d + d + k] = mx;
          arg[i * d + k] = am;
        }
      Tensor lj({b, n});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < n; ++c) {
          double acc = fc_b_[j].value[c];
          for (std::size_t k = 0; k < 2 * d; ++k) acc += fc_w_[j].value[c * 2 * d + k] * pooled.data[i * 2 * d + k];
          lj.data[i * n + c] = acc;
          logits.data[i * n + c] += head_w_.value[j] * acc;
        }
      pooled_.push_back(std::move(pooled));
      block_logits_.push_back(std::move(lj));
      argmax_.push_back(std::move(arg));
    }
    return logits;
  }

  /// Class probabilities [B, N].
  Tensor forward(const Tensor& x, const Context& ctx) {
    const auto stages = encode(x, ctx);
    const auto feats = decode(stages.back(), ctx);
    logits_ = head_logits(feats);
    recorded_ = true;
    has_loss_ = false;
    return Tensor(logits_.shape, softmax_rows(logits_.data, logits_.dim(0), logits_.dim(1)));
  }

  Tensor forward(const Tensor& x, bool training) {
    Context ctx{training, &rng_};
    return forward(x, ctx);
  }

  /// Loss of the recorded forward pass against integer labels; seeds the
  /// gradient used by backward().
  double loss(const std::vector<int>& labels) {
    if (!recorded_) throw Error(ErrorKind::NoForwardRecorded, "loss() before forward()");
    const std::size_t b = logits_.dim(0), n = logits_.dim(1);
    if (labels.size() != b) throw Error(ErrorKind::ShapeMismatch, "label count != batch size");
    const double eps = config_.label_smoothing;
    const auto probs = softmax_rows(logits_.data, b, n);
    dlogits_ = Tensor({b, n});
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n)
        throw Error(ErrorKind::ShapeMismatch, "label out of range");
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, logits_.data[i * n + c]);
      double z = 0.0;
      for (std::size_t c = 0; c < n; ++c) z += std::exp(logits_.data[i * n + c] - mx);
      const double log_z = mx + std::log(z);
      double tsum = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double t = smoothed_target(static_cast<std::size_t>(labels[i]) == c, eps, n, config_.literal_smoothing);
        total -= t * (logits_.data[i * n + c] - log_z);
        tsum += t;
        dlogits_.data[i * n + c] = -t;
      }
      for (std::size_t c = 0; c < n; ++c) dlogits_.data[i * n + c] += probs[i * n + c] * tsum;
    }
    for (auto& g : dlogits_.data) g /= static_cast<double>(b);
    has_loss_ = true;
    return total / static_cast<double>(b);
  }

  /// Accumulates parameter gradients of the recorded loss and returns the
  /// gradient with respect to the input.
  Tensor backward() {
    if (!recorded_ || !has_loss_) throw Error(ErrorKind::NoForwardRecorded, "backward() needs forward() and loss()");
    return backward_from_logits(dlogits_);
  }

  /// Backward from an arbitrary gradient on the combined logits.
  Tensor backward_from_logits(const Tensor& g_logits) {
    if (!recorded_) throw Error(ErrorKind::NoForwardRecorded, "backward() before forward()");
    const std::size_t n = config_.classes;
    const std::size_t b = g_logits.dim(0);
    std::vector<Tensor> g_feats;
    for (std::size_t j = 0; j < head_in_.size(); ++j) {
      const Tensor& z = head_in_[j];
      const std::size_t cl = z.dim(1) * z.dim(2), d = z.dim(3);
      Tensor g_pooled({b, 2 * d});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < n; ++c) {
          const double g = g_logits.data[i * n + c];
          head_w_.grad[j] += g * block_logits_[j].data[i * n + c];
          const double gl = g * head_w_.value[j];
          fc_b_[j].grad[c] += gl;
          for (std::size_t k = 0; k < 2 * d; ++k) {
            fc_w_[j].grad[c * 2 * d + k] += gl * pooled_[j].data[i * 2 * d + k];
            g_pooled.data[i * 2 * d + k] += gl * fc_w_[j].value[c * 2 * d + k];
          }
        }
      Tensor gz(z.shape);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          const double gm = g_pooled.data[i * 2 * d + k] / static_cast<double>(cl);
          for (std::size_t r = 0; r < cl; ++r) gz.data[(i * cl + r) * d + k] = gm;
          gz.data[(i * cl + argmax_[j][i * d + k]) * d + k] += g_pooled.data[i * 2 * d + d + k];
        }
      g_feats.push_back(std::move(gz));
    }

    // Decoder blocks in reverse; block j's output feeds both the head and block j+1.
    Tensor g_latent;
    Tensor g_q = std::move(g_feats.back());
    for (std::size_t j = cross_attn_.size(); j-- > 0;) {
      const Tensor g_attn = dec_ff_[j].backward(g_q);
      auto [g_src, g_query] = cross_attn_[j].backward(g_attn);
      if (g_latent.data.empty()) g_latent = std::move(g_src);
      else add_into(g_latent, g_src);
      if (j > 0) {
        g_q = std::move(g_query);
        add_into(g_q, g_feats[j - 1]);
      } else {
        const std::size_t per = query_.value.size();
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t e = 0; e < per; ++e) query_.grad[e] += g_query.data[i * per + e];
      }
    }

    Tensor g = std::move(g_latent);
    for (std::size_t s = config_.stages.size(); s-- > 0;) {
      g = down_[s].backward(g);
      g = enc_ff_[s].backward(g);
      g = self_attn_[s].backward(g);
    }
    g = to_channels_last(embed_.backward(to_channels_first(g)), batch_, channels_);
    if (!config_.channel_order.empty()) g = permute_spatial(g, config_.channel_order, true);
    return g;
  }

  std::vector<Param*> parameters() {
    std::vector<Param*> p;
    embed_.collect(p);
    for (std::size_t s = 0; s < self_attn_.size(); ++s) {
      self_attn_[s].collect(p);
      enc_ff_[s].collect(p);
      down_[s].collect(p);
    }
    p.push_back(&query_);
    for (std::size_t j = 0; j < cross_attn_.size(); ++j) {
      cross_attn_[j].collect(p);
      dec_ff_[j].collect(p);
      p.push_back(&fc_w_[j]);
      p.push_back(&fc_b_[j]);
    }
    p.push_back(&head_w_);
    return p;
  }

  std::vector<Param*> buffers() {
    std::vector<Param*> p;
    embed_.collect_buffers(p);
    for (std::size_t s = 0; s < self_attn_.size(); ++s) {
      self_attn_[s].collect_buffers(p);
      enc_ff_[s].collect_buffers(p);
    }
    for (std::size_t j = 0; j < cross_attn_.size(); ++j) {
      cross_attn_[j].collect_buffers(p);
      dec_ff_[j].collect_buffers(p);
    }
    return p;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  Rng& rng() { return rng_; }
  std::size_t step = 0;

  // Sub-module access for tests and tooling.
  ConvBlk& embedding() { return embed_; }
  SelfConvAttention& self_attention(std::size_t s) { return self_attn_.at(s); }
  ConvFeedForward& encoder_feedforward(std::size_t s) { return enc_ff_.at(s); }
  Downsample& downsample(std::size_t s) { return down_.at(s); }
  CrossConvAttention& cross_attention(std::size_t j) { return cross_attn_.at(j); }
  ConvFeedForward& decoder_feedforward(std::size_t j) { return dec_ff_.at(j); }
  Param& query() { return query_; }
  Param& fc_weight(std::size_t j) { return fc_w_.at(j); }
  Param& fc_bias(std::size_t j) { return fc_b_.at(j); }
  Param& block_weights() { return head_w_; }
  const std::vector<Tensor>& pooled() const { return pooled_; }

 private:
  static Tensor permute_spatial(const Tensor& x, const std::vector<std::size_t>& order, bool inverse) {
    const std::size_t b = x.dim(0), c = x.dim(1), per = x.dim(2) * x.dim(3);
    Tensor out(x.shape);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t src = inverse ? k : order[k];
        const std::size_t dst = inverse ? order[k] : k;
        std::copy_n(x.data.begin() + static_cast<long>((i * c + src) * per), per,
                    out.data.begin() + static_cast<long>((i * c + dst) * per));
      }
    return out;
  }

  ModelConfig config_;
  std::size_t channels_, length_;
  Rng rng_;

  ConvBlk embed_;
  std::vector<SelfConvAttention> self_attn_;
  std::vector<ConvFeedForward> enc_ff_;
  std::vector<Downsample> down_;
  Param query_;
  std::vector<CrossConvAttention> cross_attn_;
  std::vector<ConvFeedForward> dec_ff_;
  std::vector<Param> fc_w_, fc_b_;
  Param head_w_;

  // Recorded forward state.
  std::size_t batch_ = 0;
  bool recorded_ = false, has_loss_ = false;
  std::vector<Tensor> head_in_, pooled_, block_logits_;
  std::vector<std::vector<std::size_t>> argmax_;
  Tensor logits_, dlogits_;
};

// ---------------------------------------------------------------------------
// Checkpoints: `<stem>.json` manifest plus `<stem>.bin` little-endian f64.
// ---------------------------------------------------------------------------

inline std::filesystem::path manifest_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".json");
}
inline std::filesystem::path payload_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

inline void save_checkpoint(CadeNet& model, const std::filesystem::path& stem, const nlohmann::json& extra = {}) {
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  auto add = [&](Param* p, const char* kind) {
    entries.push_back({{"name", p->name},
                       {"kind", kind},
                       {"shape", p->value.shape},
                       {"offset", payload.size()},
                       {"count", p->value.size()}});
    payload.append(reinterpret_cast<const char*>(p->value.data.data()), p->value.size() * sizeof(double));
  };
  for (auto* p : model.parameters()) add(p, "param");
  for (auto* p : model.buffers()) add(p, "buffer");
  nlohmann::json manifest{{"format", "lvcade-checkpoint-1"},
                          {"dtype", "f64"},
                          {"step", model.step},
                          {"input", {{"channels", model.input_channels()}, {"length", model.input_length()}}},
                          {"config", to_json(model.config())},
                          {"tensors", entries}};
  if (!extra.is_null()) manifest["extra"] = extra;
  io::write_file(manifest_path(stem), manifest.dump(2));
  io::write_file(payload_path(stem), payload);
}

inline CadeNet load_checkpoint(const std::filesystem::path& stem, std::uint64_t seed = 0) {
  if (!std::filesystem::exists(manifest_path(stem)) || !std::filesystem::exists(payload_path(stem)))
    throw Error(ErrorKind::CheckpointMissing, stem.string());
  const auto mbytes = io::read_file(manifest_path(stem));
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(std::string_view(mbytes.data(), mbytes.size()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, std::string("checkpoint manifest: ") + e.what());
  }
  const auto payload = io::read_file(payload_path(stem));
  CadeNet model(model_config_from_json(m.at("config")), m.at("input").at("channels").get<std::size_t>(),
                m.at("input").at("length").get<std::size_t>(), seed);
  model.step = m.value("step", std::size_t{0});
  std::vector<Param*> all = model.parameters();
  for (auto* b : model.buffers()) all.push_back(b);
  const auto& entries = m.at("tensors");
  if (entries.size() != all.size())
    throw Error(ErrorKind::HeaderPayloadMismatch, "checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& e = entries[i];
    Param* p = all[i];
    if (e.at("name").get<std::string>() != p->name || e.at("shape").get<Shape>() != p->value.shape)
      throw Error(ErrorKind::HeaderPayloadMismatch, "checkpoint entry '" + e.at("name").get<std::string>() +
                                                        "' does not match model tensor '" + p->name + "'");
    const auto offset = e.at("offset").get<std::size_t>();
    const auto bytes = p->value.size() * sizeof(double);
    if (offset + bytes > payload.size())
      throw Error(ErrorKind::HeaderPayloadMismatch, "checkpoint payload too short for '" + p->name + "'");
    std::memcpy(p->value.data.data(), payload.data() + offset, bytes);
  }
  return model;
}

}  // namespace lvcade::nn
