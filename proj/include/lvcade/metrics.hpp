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

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "lvcade/error.hpp"

namespace lvcade {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [truth][prediction]

struct MetricsReport {
  double bacc = 0.0;
  double ckap = 0.0;
  double wf1 = 0.0;
  double acc = 0.0;
  ConfusionMatrix confusion;
  std::size_t n_samples = 0;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                        std::size_t classes) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::ShapeMismatch, "truth/prediction length mismatch");
  ConfusionMatrix m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
        static_cast<std::size_t>(predicted[i]) >= classes)
      throw Error(ErrorKind::InvalidInput, "class id out of range");
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

/// Balanced accuracy, Cohen's kappa, support-weighted F1 and accuracy.
///
/// Classes absent from both truth and prediction are left out of the
/// balanced-accuracy mean; a class that is predicted but never true counts
/// with recall 0.
inline MetricsReport metrics_from_confusion(const ConfusionMatrix& m) {
  const std::size_t k = m.size();
  std::vector<double> row(k, 0.0), col(k, 0.0);
  double n = 0.0, diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (m[i].size() != k) throw Error(ErrorKind::ShapeMismatch, "confusion matrix must be square");
    for (std::size_t j = 0; j < k; ++j) {
      const double v = static_cast<double>(m[i][j]);
      row[i] += v;
      col[j] += v;
      n += v;
    }
    diag += static_cast<double>(m[i][i]);
  }
  if (n == 0.0) throw Error(ErrorKind::EmptyDataset, "no samples to score");

  MetricsReport r;
  r.confusion = m;
  r.n_samples = static_cast<std::size_t>(n);
  r.acc = diag / n;

  double recall_sum = 0.0, counted = 0.0, f1_sum = 0.0, chance = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double tp = static_cast<double>(m[i][i]);
    if (row[i] > 0.0 || col[i] > 0.0) {
      recall_sum += row[i] > 0.0 ? tp / row[i] : 0.0;
      counted += 1.0;
    }
    const double precision = col[i] > 0.0 ? tp / col[i] : 0.0;
    const double recall = row[i] > 0.0 ? tp / row[i] : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    f1_sum += row[i] * f1;
    chance += row[i] * col[i];
  }
  r.bacc = recall_sum / counted;
  r.wf1 = f1_sum / n;
  const double pe = chance / (n * n);
  r.ckap = pe < 1.0 ? (r.acc - pe) / (1.0 - pe) : (r.acc == 1.0 ? 1.0 : 0.0);
  return r;
}

inline MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.empty()) throw Error(ErrorKind::EmptyDataset, "no samples to score");
  return metrics_from_confusion(confusion_matrix(truth, predicted, classes));
}

/// {bacc, ckap, wf1, acc, confusion, n_samples}
inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"bacc", r.bacc}, {"ckap", r.ckap}, {"wf1", r.wf1},
          {"acc", r.acc},   {"confusion", r.confusion}, {"n_samples", r.n_samples}};
}

}  // namespace lvcade
