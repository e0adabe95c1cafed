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

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "lvcade/metrics.hpp"
#include "lvcade/nn/cadenet.hpp"
#include "lvcade/synth.hpp"

namespace lvcade::train {

struct TrainConfig {
  double learning_rate = 5e-4;
  double decay_factor = 0.5;
  std::size_t decay_every = 5;
  std::size_t patience = 5;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Record eval-mode loss and accuracy on the training split after each epoch.
  bool track_train_metrics = false;
  /// Stop as soon as tracked training accuracy reaches this value (0 disables).
  double stop_at_train_accuracy = 0.0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !(decay_factor > 0.0) || decay_every == 0 || patience == 0 || batch_size == 0 ||
        max_epochs == 0 || !(weight_decay >= 0.0))
      throw Error(ErrorKind::ConfigInvalid, "train config fields must be positive (patience >= 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},     {"patience", c.patience},
          {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
          {"seed", c.seed},                   {"weight_decay", c.weight_decay},
          {"track_train_metrics", c.track_train_metrics},
          {"stop_at_train_accuracy", c.stop_at_train_accuracy}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.track_train_metrics = j.value("track_train_metrics", c.track_train_metrics);
    c.stop_at_train_accuracy = j.value("stop_at_train_accuracy", c.stop_at_train_accuracy);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Step decay: lr * factor^floor(epoch / every), epochs counted from 0.
inline double learning_rate_at(const TrainConfig& c, std::size_t epoch) {
  return c.learning_rate * std::pow(c.decay_factor, static_cast<double>(epoch / c.decay_every));
}

/// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when training should stop after this epoch.
  bool update(double metric) {
    if (!best_ || metric > *best_) {
      best_ = metric;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }
  bool improved_last() const { return stale_ == 0; }
  double best() const { return best_.value_or(0.0); }

 private:
  std::size_t patience_;
  std::optional<double> best_;
  std::size_t stale_ = 0;
};

/// Decoupled weight-decay Adam.
class AdamW {
 public:
  AdamW(std::vector<nn::Param*> params, const TrainConfig& c)
      : params_(std::move(params)), beta1_(c.beta1), beta2_(c.beta2), eps_(c.adam_eps), wd_(c.weight_decay) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i]->value.data;
      const auto& g = params_[i]->grad.data;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] -= lr * wd_ * w[k];
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
        w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
      }
    }
  }

 private:
  std::vector<nn::Param*> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
};

/// [B, C, L, 7] tensor from clips, in the given order.
inline nn::Tensor batch_tensor(const synth::Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
  const auto& first = data.clips[indices.front()];
  const std::size_t per = first.data.size();
  nn::Tensor x({indices.size(), first.channels, first.length, longview::kFeatureCount});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& clip = data.clips[indices[i]];
    if (clip.data.size() != per) throw Error(ErrorKind::ShapeMismatch, "clips in a batch differ in shape");
    std::copy(clip.data.begin(), clip.data.end(), x.data.begin() + static_cast<long>(i * per));
  }
  return x;
}

inline nn::Tensor batch_tensor(const synth::Dataset& data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch_tensor(data, idx);
}

struct Prediction {
  std::vector<int> classes;
  std::vector<std::vector<double>> probabilities;
};

/// Eval-mode class probabilities, `batch` clips at a time.
inline Prediction predict(nn::CadeNet& model, const synth::Dataset& data, std::size_t batch = 64) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "nothing to predict");
  Prediction out;
  const std::size_t n = model.config().classes;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    const auto p = model.forward(batch_tensor(data, idx), false);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<double> row(p.data.begin() + static_cast<long>(i * n), p.data.begin() + static_cast<long>((i + 1) * n));
      out.classes.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
      out.probabilities.push_back(std::move(row));
    }
  }
  return out;
}

inline MetricsReport evaluate(nn::CadeNet& model, const synth::Dataset& data) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "evaluation set is empty");
  const auto pred = predict(model, data);
  return compute_metrics(data.labels(), pred.classes, model.config().classes);
}

/// Mean eval-mode loss over a dataset.
inline double dataset_loss(nn::CadeNet& model, const synth::Dataset& data, std::size_t batch = 64) {
  double total = 0.0;
  const auto labels = data.labels();
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx;
    std::vector<int> lab;
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) {
      idx.push_back(i);
      lab.push_back(labels[i]);
    }
    model.forward(batch_tensor(data, idx), false);
    total += model.loss(lab) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_train_loss;
  std::optional<double> train_accuracy;
  MetricsReport val;
  bool improved = false;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"learning_rate", r.learning_rate},
                   {"train_loss", r.train_loss},
                   {"val", to_json(r.val)},
                   {"improved", r.improved}};
  if (r.eval_train_loss) j["eval_train_loss"] = *r.eval_train_loss;
  if (r.train_accuracy) j["train_accuracy"] = *r.train_accuracy;
  return j;
}

/// Parameter and buffer values of a model at one point in training.
struct Snapshot {
  std::vector<std::vector<double>> values;
  std::size_t step = 0;

  static Snapshot take(nn::CadeNet& model) {
    Snapshot s;
    for (auto* p : model.parameters()) s.values.push_back(p->value.data);
    for (auto* p : model.buffers()) s.values.push_back(p->value.data);
    s.step = model.step;
    return s;
  }
  void restore(nn::CadeNet& model) const {
    std::size_t i = 0;
    for (auto* p : model.parameters()) p->value.data = values.at(i++);
    for (auto* p : model.buffers()) p->value.data = values.at(i++);
    model.step = step;
  }
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Snapshot best;
  bool stopped_early = false;
};

/// Thrown when the loss stops being finite; carries the history so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, std::vector<EpochRecord> history)
      : Error(ErrorKind::NonFiniteLoss, message), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

/// Trains with AdamW and step-decayed learning rate, selects the epoch with
/// the best validation balanced accuracy, and stops after `patience` epochs
/// without improvement. The model is left holding the best checkpoint.
inline TrainResult train(nn::CadeNet& model, const synth::Dataset& train_set, const synth::Dataset& val_set,
                         const TrainConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  if (val_set.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
  AdamW opt(model.parameters(), config);
  EarlyStopping stopper(config.patience);
  Rng order_rng(config.seed ^ 0x5bd1e995ULL);
  TrainResult result;
  const auto labels = train_set.labels();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = learning_rate_at(config, epoch);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> lab;
      for (auto i : idx) lab.push_back(labels[i]);
      model.zero_grad();
      model.forward(batch_tensor(train_set, idx), true);
      const double loss = model.loss(lab);
      if (!std::isfinite(loss)) {
        result.history.push_back(rec);
        throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch), result.history);
      }
      model.backward();
      opt.step(rec.learning_rate);
      ++model.step;
      loss_sum += loss * static_cast<double>(idx.size());
    }
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (config.track_train_metrics) {
      rec.eval_train_loss = dataset_loss(model, train_set);
      rec.train_accuracy = evaluate(model, train_set).acc;
    }
    rec.val = evaluate(model, val_set);
    const bool stop = stopper.update(rec.val.bacc);
    rec.improved = stopper.improved_last();
    if (rec.improved) {
      result.best_epoch = epoch;
      result.best = Snapshot::take(model);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.stop_at_train_accuracy > 0.0 && rec.train_accuracy &&
        *rec.train_accuracy >= config.stop_at_train_accuracy)
      break;
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  result.best.restore(model);
  return result;
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

struct RepeatReport {
  std::vector<MetricsReport> runs;
  MetricSummary bacc, ckap, wf1, acc;
};

inline MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

inline nlohmann::json to_json(const RepeatReport& r) {
  auto sj = [](const MetricSummary& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}}; };
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& m : r.runs) runs.push_back(to_json(m));
  return {{"runs", runs}, {"bacc", sj(r.bacc)}, {"ckap", sj(r.ckap)}, {"wf1", sj(r.wf1)}, {"acc", sj(r.acc)}};
}

using ModelFactory = std::function<nn::CadeNet(std::uint64_t seed)>;

/// R independent runs. Run r draws its validation split from `pool` with
/// seeds[r] and trains a fresh model from factory(seeds[r]); `test` stays
/// fixed. Reports per-metric mean and sample std.
inline RepeatReport repeat_protocol(const ModelFactory& factory, const synth::Dataset& pool,
                                    const synth::Dataset& test, const TrainConfig& config,
                                    const std::vector<std::uint64_t>& seeds, double val_fraction = 0.2,
                                    const std::function<void(std::size_t, const MetricsReport&)>& on_run = {}) {
  if (seeds.size() < 2) throw Error(ErrorKind::ConfigInvalid, "repeat protocol needs at least two runs");
  if (pool.size() < 2) throw Error(ErrorKind::EmptyDataset, "pool too small to split");
  RepeatReport report;
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    Rng rng(seeds[r]);
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(pool.size()))), 1, pool.size() - 1);
    synth::Dataset tr, va;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? va : tr).clips.push_back(pool.clips[idx[i]]);
    auto model = factory(seeds[r]);
    TrainConfig c = config;
    c.seed = seeds[r];
    train(model, tr, va, c);
    report.runs.push_back(evaluate(model, test));
    if (on_run) on_run(r, report.runs.back());
  }
  auto collect = [&](double MetricsReport::*f) {
    std::vector<double> v;
    for (const auto& m : report.runs) v.push_back(m.*f);
    return summarize(v);
  };
  report.bacc = collect(&MetricsReport::bacc);
  report.ckap = collect(&MetricsReport::ckap);
  report.wf1 = collect(&MetricsReport::wf1);
  report.acc = collect(&MetricsReport::acc);
  return report;
}

}  // namespace lvcade::train
