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
#include <string>
#include <unordered_set>
#include <vector>

namespace lvcade {

struct Annotation {
  std::size_t sample = 0;
  int class_id = 0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct AnnotationLabel {
  int class_id = 0;
  std::string name;
};

/// Multichannel recording, channel-major: data[c * samples + t].
struct Recording {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double rate = 0.0;
  std::vector<std::string> labels;
  std::vector<double> data;
  std::vector<Annotation> annotations;

  Recording() = default;
  Recording(std::size_t c, std::size_t t, double hz)
      : channels(c), samples(t), rate(hz), labels(c), data(c * t, 0.0) {
    for (std::size_t i = 0; i < c; ++i) labels[i] = "ch" + std::to_string(i);
  }

  std::span<double> row(std::size_t c) { return {data.data() + c * samples, samples}; }
  std::span<const double> row(std::size_t c) const {
    return {data.data() + c * samples, samples};
  }
  double& at(std::size_t c, std::size_t t) { return data[c * samples + t]; }
  double at(std::size_t c, std::size_t t) const { return data[c * samples + t]; }

  friend bool operator==(const Recording&, const Recording&) = default;
};

/// Every violated Recording invariant, one message each. Empty iff valid.
inline std::vector<std::string> validate(const Recording& rec) {
  std::vector<std::string> out;
  if (rec.channels < 1) out.push_back("channel count must be >= 1");
  if (rec.samples < 2) out.push_back("sample count must be >= 2");
  if (!(rec.rate > 0.0)) out.push_back("sampling rate must be > 0");
  if (rec.data.size() != rec.channels * rec.samples)
    out.push_back("data size " + std::to_string(rec.data.size()) + " != channels*samples " +
                  std::to_string(rec.channels * rec.samples));
  if (rec.labels.size() != rec.channels)
    out.push_back("label count " + std::to_string(rec.labels.size()) + " != channel count " +
                  std::to_string(rec.channels));
  std::unordered_set<std::string> seen;
  std::unordered_set<std::string> reported;
  for (const auto& l : rec.labels) {
    if (!seen.insert(l).second && reported.insert(l).second)
      out.push_back("duplicate label '" + l + "'");
  }
  for (const auto& a : rec.annotations) {
    if (a.sample >= rec.samples)
      out.push_back("annotation sample " + std::to_string(a.sample) + " outside [0, " +
                    std::to_string(rec.samples) + ")");
  }
  return out;
}

}  // namespace lvcade
