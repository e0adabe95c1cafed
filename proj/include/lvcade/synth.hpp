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

// Synthetic spike data.
//
// Every example is a short multichannel recording whose center carries the
// event of interest. In the separable regime class 0 is background noise and
// spike classes carry a biphasic triangular wave at the center. In the
// context-dependent regime every class carries the same kind of wave at the
// center; class 0 additionally has waves of equal amplitude recurring in
// the surrounding context, outside the clip window. Only features that look
// beyond the clip can then tell the classes apart.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvcade/error.hpp"
#include "lvcade/longview.hpp"
#include "lvcade/random.hpp"
#include "lvcade/recording.hpp"
#include "lvcade/signal_io.hpp"

namespace lvcade::synth {

struct SynthSpec {
  std::size_t classes = 2;
  std::size_t train_per_class = 100;
  std::size_t val_per_class = 25;
  std::size_t test_per_class = 50;
  /// Negatives per positive in the test split (binary task only); 1 keeps it balanced.
  double test_negative_ratio = 1.0;
  std::size_t channels = 4;
  std::size_t length = 200;
  /// Samples of surrounding signal generated per example (clip at its center).
  std::size_t context = 1200;
  double rate = 200.0;
  double width_min = 10.0;
  double width_max = 40.0;
  double amp_min = 4.0;
  double amp_max = 6.0;
  double noise_std = 1.0;
  bool context_dependent = false;
  /// Long-view window used when featurizing.
  std::size_t window = 100;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigInvalid, "synth: " + m); };
    const double l = static_cast<double>(length);
    if (classes < 2) fail("need at least two classes");
    if (length < 4 || length % 2 != 0) fail("clip length must be even and >= 4");
    if (context < length) fail("context must be at least the clip length");
    if (width_min < l / 20.0 || width_max > l / 2.0 || width_min > width_max)
      fail("width range must lie within [L/20, L/2]");
    if (!(amp_min > noise_std) || amp_max < amp_min) fail("amplitude must exceed the noise std");
    if (train_per_class == 0) fail("empty training split");
  }
};

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"classes", s.classes},       {"train_per_class", s.train_per_class},
          {"val_per_class", s.val_per_class}, {"test_per_class", s.test_per_class},
          {"test_negative_ratio", s.test_negative_ratio},
          {"channels", s.channels},     {"length", s.length},
          {"context", s.context},       {"rate", s.rate},
          {"width_min", s.width_min},   {"width_max", s.width_max},
          {"amp_min", s.amp_min},       {"amp_max", s.amp_max},
          {"noise_std", s.noise_std},   {"context_dependent", s.context_dependent},
          {"window", s.window}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.classes = j.value("classes", s.classes);
    s.train_per_class = j.value("train_per_class", s.train_per_class);
    s.val_per_class = j.value("val_per_class", s.val_per_class);
    s.test_per_class = j.value("test_per_class", s.test_per_class);
    s.test_negative_ratio = j.value("test_negative_ratio", s.test_negative_ratio);
    s.channels = j.value("channels", s.channels);
    s.length = j.value("length", s.length);
    s.context = j.value("context", s.context);
    s.rate = j.value("rate", s.rate);
    s.width_min = j.value("width_min", s.width_min);
    s.width_max = j.value("width_max", s.width_max);
    s.amp_min = j.value("amp_min", s.amp_min);
    s.amp_max = j.value("amp_max", s.amp_max);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.context_dependent = j.value("context_dependent", s.context_dependent);
    s.window = j.value("window", s.window);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

struct Dataset {
  std::vector<longview::Clip> clips;

  std::size_t size() const { return clips.size(); }
  bool empty() const { return clips.empty(); }
  std::vector<int> labels() const {
    std::vector<int> out;
    for (const auto& c : clips) out.push_back(c.label);
    return out;
  }
};

struct Splits {
  Dataset train, val, test;
};

/// Smoothed Gaussian noise with standard deviation `sd`.
inline std::vector<double> smoothed_noise(std::size_t n, double sd, Rng& rng) {
  constexpr std::size_t kSmooth = 4;
  std::vector<double> white(n + kSmooth);
  for (auto& v : white) v = rng.normal();
  std::vector<double> out(n);
  const double scale = sd * std::sqrt(static_cast<double>(kSmooth)) / static_cast<double>(kSmooth);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < kSmooth; ++k) s += white[t + k];
    out[t] = s * scale;
  }
  return out;
}

/// Biphasic triangular wave peaking at `peak`: a rise over a fraction
/// `rise_frac` of `width`, a fall through zero to -0.3 * amp, and a slow
/// return to baseline over width / 2.
inline void add_spike(std::vector<double>& x, double peak, double width, double rise_frac, double amp) {
  const double rise = std::max(1.0, width * rise_frac);
  const double fall = std::max(1.0, width - rise);
  const double back = std::max(1.0, width / 2.0);
  const double trough = -0.3 * amp;
  const long lo = static_cast<long>(std::floor(peak - rise));
  const long hi = static_cast<long>(std::ceil(peak + fall + back));
  for (long t = std::max(0L, lo); t <= std::min(static_cast<long>(x.size()) - 1, hi); ++t) {
    const double u = static_cast<double>(t) - peak;
    double v = 0.0;
    if (u >= -rise && u <= 0.0) v = amp * (1.0 + u / rise);
    else if (u > 0.0 && u <= fall) v = amp + (trough - amp) * (u / fall);
    else if (u > fall && u <= fall + back) v = trough * (1.0 - (u - fall) / back);
    x[static_cast<std::size_t>(t)] += v;
  }
}

/// Recording holding one example; the event sits at sample context/2.
inline Recording synth_example(const SynthSpec& spec, int label, Rng& rng) {
  const std::size_t n = spec.context;
  const std::size_t center = n / 2;
  Recording rec(spec.channels, n, spec.rate);
  const bool spike_class = label > 0;
  const bool center_wave = spike_class || spec.context_dependent;

  // Spike classes split the width range into equal bins.
  double wlo = spec.width_min, whi = spec.width_max;
  if (spike_class && spec.classes > 2) {
    const double bin = (spec.width_max - spec.width_min) / static_cast<double>(spec.classes - 1);
    wlo = spec.width_min + bin * static_cast<double>(label - 1);
    whi = wlo + bin;
  }
  const double width = rng.uniform(wlo, whi);
  const double rise = rng.uniform(0.3, 0.7);
  const double amp = rng.uniform(spec.amp_min, spec.amp_max);

  struct Event {
    double pos, width, rise, amp;
  };
  std::vector<Event> context_events;
  if (spec.context_dependent && !spike_class) {
    const double clear = static_cast<double>(spec.length) / 2.0 + spec.width_max;
    for (int side : {-1, 1}) {
      double pos = static_cast<double>(center) + side * (clear + rng.uniform(0.0, 20.0));
      while (pos > spec.width_max && pos < static_cast<double>(n) - spec.width_max) {
        context_events.push_back({pos, rng.uniform(spec.width_min, spec.width_max), rng.uniform(0.3, 0.7),
                                  rng.uniform(spec.amp_min, spec.amp_max)});
        pos += side * rng.uniform(1.5 * spec.width_max, 2.5 * spec.width_max);
      }
    }
  }

  for (std::size_t c = 0; c < spec.channels; ++c) {
    auto x = smoothed_noise(n, spec.noise_std, rng);
    const double gain = rng.uniform(0.6, 1.0);
    if (center_wave) add_spike(x, static_cast<double>(center), width, rise, amp * gain);
    for (const auto& e : context_events) add_spike(x, e.pos, e.width, e.rise, e.amp * gain);
    std::copy(x.begin(), x.end(), rec.row(c).begin());
  }
  rec.annotations.push_back({center, label});
  return rec;
}

/// Featurized clip for one example.
inline longview::Clip synth_clip(const SynthSpec& spec, int label, Rng& rng) {
  const auto rec = synth_example(spec, label, rng);
  longview::LongViewOptions opt;
  opt.window = spec.window;
  const auto vol = longview::build_feature_volume(rec, opt);
  return longview::extract_clip(vol, rec.annotations.front().sample, spec.length, label);
}

/// Deterministic train/validation/test splits for `seed`.
inline Splits synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Splits s;
  auto fill = [&](Dataset& d, std::size_t per_class, double negative_ratio, std::uint64_t salt) {
    Rng r = rng.split(salt);
    for (std::size_t k = 0; k < spec.classes; ++k) {
      std::size_t count = per_class;
      if (k == 0 && spec.classes == 2) count = static_cast<std::size_t>(std::llround(per_class * negative_ratio));
      for (std::size_t i = 0; i < count; ++i) d.clips.push_back(synth_clip(spec, static_cast<int>(k), r));
    }
    r.shuffle(d.clips);
  };
  fill(s.train, spec.train_per_class, 1.0, 1);
  fill(s.val, spec.val_per_class, 1.0, 2);
  fill(s.test, spec.test_per_class, spec.test_negative_ratio, 3);
  return s;
}

/// Clips centered on every annotation of a feature volume. Annotations too
/// close to the edge keep their zero padding.
inline Dataset dataset_from_volume(const longview::FeatureVolume& vol, std::size_t length) {
  Dataset d;
  for (const auto& a : vol.annotations) d.clips.push_back(longview::extract_clip(vol, a.sample, length, a.class_id));
  return d;
}

// ---------------------------------------------------------------------------
// Clip-set container: header {kind "clip_set", count, channels, length,
// labels, centers}; payload [n][c][l][f] as f32.
// ---------------------------------------------------------------------------

inline std::string encode_dataset(const Dataset& d) {
  const std::size_t c = d.empty() ? 0 : d.clips.front().channels;
  const std::size_t l = d.empty() ? 0 : d.clips.front().length;
  std::vector<int> labels;
  std::vector<std::size_t> centers;
  std::vector<float> payload;
  payload.reserve(d.size() * c * l * longview::kFeatureCount);
  for (const auto& clip : d.clips) {
    if (clip.channels != c || clip.length != l) throw Error(ErrorKind::ShapeMismatch, "clips differ in shape");
    labels.push_back(clip.label);
    centers.push_back(clip.center);
    for (double v : clip.data) payload.push_back(static_cast<float>(v));
  }
  const nlohmann::json header{{"kind", "clip_set"}, {"dtype", "f32"},       {"count", d.size()},
                              {"channels", c},      {"length", l},          {"features", longview::kFeatureCount},
                              {"labels", labels},   {"centers", centers}};
  return io::encode_container(header, payload);
}

inline Dataset decode_dataset(std::span<const char> bytes) {
  namespace dt = io::detail;
  const auto f = io::decode_container(bytes, [](const nlohmann::json& h) {
    dt::require_kind(h, "clip_set");
    if (dt::header_field<std::size_t>(h, "features") != longview::kFeatureCount)
      throw Error(ErrorKind::MalformedHeader, "clip_set must carry 7 features");
    return dt::header_field<std::size_t>(h, "count") * dt::header_field<std::size_t>(h, "channels") *
           dt::header_field<std::size_t>(h, "length") * longview::kFeatureCount;
  });
  const auto n = dt::header_field<std::size_t>(f.header, "count");
  const auto c = dt::header_field<std::size_t>(f.header, "channels");
  const auto l = dt::header_field<std::size_t>(f.header, "length");
  const auto labels = dt::header_field<std::vector<int>>(f.header, "labels");
  const auto centers = dt::header_field<std::vector<std::size_t>>(f.header, "centers");
  if (labels.size() != n || centers.size() != n)
    throw Error(ErrorKind::HeaderPayloadMismatch, "clip_set label/center count differs from clip count");
  Dataset d;
  const std::size_t per = c * l * longview::kFeatureCount;
  for (std::size_t i = 0; i < n; ++i) {
    longview::Clip clip{c, l, centers[i], labels[i], {}};
    clip.data.assign(f.payload.begin() + static_cast<long>(i * per), f.payload.begin() + static_cast<long>((i + 1) * per));
    d.clips.push_back(std::move(clip));
  }
  return d;
}

inline void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(d));
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_dataset(bytes);
}

/// Replaces features 1..6 with copies of the raw signal.
inline Dataset raw_only(Dataset d) {
  for (auto& clip : d.clips)
    for (std::size_t i = 0; i < clip.data.size(); i += longview::kFeatureCount)
      for (std::size_t f = 1; f < longview::kFeatureCount; ++f) clip.data[i + f] = clip.data[i];
  return d;
}

}  // namespace lvcade::synth
