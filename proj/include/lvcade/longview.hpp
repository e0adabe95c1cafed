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

// Long-view morphological features.
//
// Each channel is cut into complete waves (minimum, maximum, minimum). Every
// wave yields amplitude, slope, half-width slope, mean amplitude and
// sharpness scalars, which are painted back onto the time axis around the
// wave's peak and then z-scored against the surrounding waves on the same
// channel. Together with the raw signal and a five-level topology code this
// gives seven features per sample.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvcade/error.hpp"
#include "lvcade/parallel.hpp"
#include "lvcade/recording.hpp"
#include "lvcade/signal_io.hpp"

namespace lvcade::longview {

enum class ExtremumKind { Min, Max };

struct Extremum {
  std::size_t index = 0;
  ExtremumKind kind = ExtremumKind::Min;

  friend bool operator==(const Extremum&, const Extremum&) = default;
};

struct WaveSegment {
  std::size_t t_l = 0, t_o = 0, t_r = 0;
  std::size_t t_hl = 0, t_hr = 0;
  double a_l = 0, a_r = 0;
  double sp_l = 0, sp_r = 0;
  double hsp_l = 0, hsp_r = 0;
  double ma = 0;
  double sn = 0;

  friend bool operator==(const WaveSegment&, const WaveSegment&) = default;
};

inline constexpr std::size_t kFeatureCount = 7;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "raw", "topo", "amp", "meanAmp", "slope", "halfSlope", "sharpness"};

enum Feature : std::size_t { Raw = 0, Topo, Amp, MeanAmp, Slope, HalfSlope, Sharpness };

struct LongViewOptions {
  /// Neighbourhood size in waves; wave k is normalized against k +- window/2.
  std::size_t window = 100;
  /// Use |a_r| (and the matching slopes) instead of the signed right half.
  bool absolute_amplitude = false;
};

/// Alternating extrema. Plateaus collapse to their leftmost sample and the
/// first and last samples count as extrema.
inline std::vector<Extremum> detect_extrema(std::span<const double> x) {
  std::vector<std::size_t> runs;  // leftmost index of each run of equal values
  for (std::size_t t = 0; t < x.size(); ++t)
    if (t == 0 || x[t] != x[t - 1]) runs.push_back(t);
  std::vector<Extremum> out;
  if (runs.size() < 2) return out;
  const std::size_t m = runs.size();
  auto v = [&](std::size_t r) { return x[runs[r]]; };
  out.push_back({runs[0], v(1) > v(0) ? ExtremumKind::Min : ExtremumKind::Max});
  for (std::size_t r = 1; r + 1 < m; ++r) {
    const bool above_left = v(r) > v(r - 1);
    const bool above_right = v(r) > v(r + 1);
    if (above_left && above_right) out.push_back({runs[r], ExtremumKind::Max});
    else if (!above_left && !above_right) out.push_back({runs[r], ExtremumKind::Min});
  }
  out.push_back({runs[m - 1], v(m - 2) > v(m - 1) ? ExtremumKind::Min : ExtremumKind::Max});
  return out;
}

/// One wave per consecutive (min, max, min) triple; indices only.
inline std::vector<WaveSegment> decompose_waves(std::span<const double>, std::span<const Extremum> extrema) {
  std::vector<WaveSegment> waves;
  for (std::size_t i = 0; i + 2 < extrema.size(); ++i) {
    if (extrema[i].kind != ExtremumKind::Min || extrema[i + 1].kind != ExtremumKind::Max ||
        extrema[i + 2].kind != ExtremumKind::Min)
      continue;
    WaveSegment w;
    w.t_l = extrema[i].index;
    w.t_o = extrema[i + 1].index;
    w.t_r = extrema[i + 2].index;
    waves.push_back(w);
  }
  return waves;
}

/// First sample at or above the left half level in [t_l, t_o), and first
/// sample at or below the right half level in (t_o, t_r]. A left flank that
/// only crosses at t_o itself clamps to t_o - 1.
inline std::pair<std::size_t, std::size_t> half_width_moments(std::span<const double> x, const WaveSegment& w) {
  const double left_half = (x[w.t_l] + x[w.t_o]) / 2.0;
  const double right_half = (x[w.t_o] + x[w.t_r]) / 2.0;
  std::size_t hl = w.t_o - 1;
  for (std::size_t t = w.t_l; t < w.t_o; ++t)
    if (x[t] >= left_half) {
      hl = t;
      break;
    }
  std::size_t hr = w.t_r;
  for (std::size_t t = w.t_o + 1; t <= w.t_r; ++t)
    if (x[t] <= right_half) {
      hr = t;
      break;
    }
  return {hl, hr};
}

/// Fills the amplitude, slope, half-width slope, mean amplitude and
/// sharpness scalars of a wave whose indices and half-width moments are set.
inline WaveSegment wave_properties(std::span<const double> x, WaveSegment w) {
  const double dl = static_cast<double>(w.t_o - w.t_l);
  const double dr = static_cast<double>(w.t_r - w.t_o);
  w.a_l = x[w.t_o] - x[w.t_l];
  w.a_r = x[w.t_r] - x[w.t_o];
  w.sp_l = w.a_l / dl;
  w.sp_r = w.a_r / dr;
  w.hsp_l = w.a_l / (2.0 * static_cast<double>(w.t_o - w.t_hl));
  w.hsp_r = w.a_r / (2.0 * static_cast<double>(w.t_hr - w.t_o));
  w.ma = (w.a_l * dr + w.a_r * dl) / static_cast<double>(w.t_r - w.t_l);
  // 9-sample window around the peak, clamped to the series.
  const std::size_t lo = w.t_o >= 4 ? w.t_o - 4 : 0;
  const std::size_t hi = std::min(w.t_o + 4, x.size() - 1);
  double sum = 0.0;
  for (std::size_t t = lo; t <= hi; ++t) sum += x[t];
  w.sn = std::abs(sum - static_cast<double>(hi - lo + 1) * x[w.t_o]);
  return w;
}

/// Per-channel waves with half-width moments and properties filled.
inline std::vector<WaveSegment> analyze_channel(std::span<const double> x) {
  if (x.size() < 3) return {};
  const auto extrema = detect_extrema(x);
  auto waves = decompose_waves(x, extrema);
  for (auto& w : waves) {
    std::tie(w.t_hl, w.t_hr) = half_width_moments(x, w);
    w = wave_properties(x, w);
  }
  return waves;
}

/// Five-level position code: peak 1, minima -1, half-width moments 0,
/// between a half-width moment and the peak 0.5, otherwise -0.5.
inline std::vector<double> topology_feature(std::size_t length, std::span<const WaveSegment> waves) {
  std::vector<double> topo(length, -0.5);
  for (const auto& w : waves) {
    for (std::size_t t = w.t_hl + 1; t < w.t_o; ++t) topo[t] = 0.5;
    for (std::size_t t = w.t_o + 1; t < w.t_hr; ++t) topo[t] = 0.5;
  }
  for (const auto& w : waves) {
    topo[w.t_hl] = 0.0;
    topo[w.t_hr] = 0.0;
  }
  // Extrema take precedence over coincident half-width moments.
  for (const auto& w : waves) {
    topo[w.t_l] = -1.0;
    topo[w.t_r] = -1.0;
    topo[w.t_o] = 1.0;
  }
  return topo;
}

/// Left/right or whole-wave scalar of a sided feature.
struct SidedValue {
  double left = 0.0;
  double right = 0.0;
};

/// The five interpolated feature scalars of one wave.
struct WaveScalars {
  SidedValue amp, slope, half_slope;
  double mean_amp = 0.0, sharpness = 0.0;
};

inline WaveScalars scalars_of(const WaveSegment& w, bool absolute_amplitude = false) {
  WaveScalars s{{w.a_l, w.a_r}, {w.sp_l, w.sp_r}, {w.hsp_l, w.hsp_r}, w.ma, w.sn};
  if (absolute_amplitude) {
    s.amp.right = std::abs(s.amp.right);
    s.slope.right = std::abs(s.slope.right);
    s.half_slope.right = std::abs(s.half_slope.right);
  }
  return s;
}

/// Painted series, in order amp, meanAmp, slope, halfSlope, sharpness.
/// Left values cover [t_hl, t_o), right values [t_o, t_hr], whole-wave values
/// [t_hl, t_hr]. Later waves overwrite shared boundary samples; samples
/// outside every wave stay 0.
inline std::array<std::vector<double>, 5> interpolate_features(std::span<const WaveSegment> waves,
                                                               std::span<const WaveScalars> scalars,
                                                               std::size_t length) {
  std::array<std::vector<double>, 5> f;
  for (auto& s : f) s.assign(length, 0.0);
  for (std::size_t k = 0; k < waves.size(); ++k) {
    const auto& w = waves[k];
    const auto& s = scalars[k];
    for (std::size_t t = w.t_hl; t <= w.t_hr; ++t) {
      const bool left = t < w.t_o;
      f[0][t] = left ? s.amp.left : s.amp.right;
      f[1][t] = s.mean_amp;
      f[2][t] = left ? s.slope.left : s.slope.right;
      f[3][t] = left ? s.half_slope.left : s.half_slope.right;
      f[4][t] = s.sharpness;
    }
  }
  return f;
}

inline std::array<std::vector<double>, 5> interpolate_features(std::span<const WaveSegment> waves,
                                                               std::size_t length) {
  std::vector<WaveScalars> s;
  s.reserve(waves.size());
  for (const auto& w : waves) s.push_back(scalars_of(w));
  return interpolate_features(waves, s, length);
}

/// Z-scores every wave's scalars against waves k - window/2 .. k + window/2
/// (clamped to the channel). Left and right halves of sided features are
/// normalized against the matching half of every neighbour.
inline std::vector<WaveScalars> longview_normalize(std::span<const WaveScalars> raw, std::size_t window) {
  constexpr double kMinStd = 1e-8;
  const std::size_t n = raw.size();
  const std::size_t half = window / 2;
  std::vector<WaveScalars> out(raw.begin(), raw.end());
  std::vector<double> pool;
  pool.reserve(2 * half + 1);

  auto moments = [&] {
    const double ref = pool.front();
    double shift = 0.0;
    for (double v : pool) shift += v - ref;
    const double mean = ref + shift / static_cast<double>(pool.size());
    double var = 0.0;
    for (double v : pool) var += (v - mean) * (v - mean);
    return std::pair{mean, std::max(std::sqrt(var / static_cast<double>(pool.size())), kMinStd)};
  };

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = k >= half ? k - half : 0;
    const std::size_t hi = std::min(n - 1, k + half);
    auto norm_sided = [&](SidedValue WaveScalars::*field) {
      auto& v = out[k].*field;
      pool.clear();
      for (std::size_t j = lo; j <= hi; ++j) pool.push_back((raw[j].*field).left);
      const auto [mu_l, sd_l] = moments();
      v.left = (v.left - mu_l) / sd_l;
      pool.clear();
      for (std::size_t j = lo; j <= hi; ++j) pool.push_back((raw[j].*field).right);
      const auto [mu_r, sd_r] = moments();
      v.right = (v.right - mu_r) / sd_r;
    };
    auto norm_whole = [&](double WaveScalars::*field) {
      pool.clear();
      for (std::size_t j = lo; j <= hi; ++j) pool.push_back(raw[j].*field);
      const auto [mu, sd] = moments();
      out[k].*field = (out[k].*field - mu) / sd;
    };
    norm_sided(&WaveScalars::amp);
    norm_sided(&WaveScalars::slope);
    norm_sided(&WaveScalars::half_slope);
    norm_whole(&WaveScalars::mean_amp);
    norm_whole(&WaveScalars::sharpness);
  }
  return out;
}

/// Channels x samples x 7, stored [c][t][f].
struct FeatureVolume {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double rate = 0.0;
  std::vector<std::string> labels;
  std::vector<double> data;
  std::vector<Annotation> annotations;
  /// Complete waves found on each channel.
  std::vector<std::size_t> wave_counts;

  double& at(std::size_t c, std::size_t t, std::size_t f) { return data[(c * samples + t) * kFeatureCount + f]; }
  double at(std::size_t c, std::size_t t, std::size_t f) const {
    return data[(c * samples + t) * kFeatureCount + f];
  }
};

/// Raw signal plus six long-view feature series for one channel.
inline std::array<std::vector<double>, kFeatureCount> channel_features(std::span<const double> x,
                                                                      const LongViewOptions& opt,
                                                                      std::size_t* wave_count = nullptr) {
  const auto waves = analyze_channel(x);
  if (wave_count) *wave_count = waves.size();
  std::vector<WaveScalars> raw;
  raw.reserve(waves.size());
  for (const auto& w : waves) raw.push_back(scalars_of(w, opt.absolute_amplitude));
  const auto normalized = longview_normalize(raw, opt.window);
  auto painted = interpolate_features(waves, normalized, x.size());
  std::array<std::vector<double>, kFeatureCount> out;
  out[Raw].assign(x.begin(), x.end());
  out[Topo] = topology_feature(x.size(), waves);
  out[Amp] = std::move(painted[0]);
  out[MeanAmp] = std::move(painted[1]);
  out[Slope] = std::move(painted[2]);
  out[HalfSlope] = std::move(painted[3]);
  out[Sharpness] = std::move(painted[4]);
  return out;
}

inline FeatureVolume build_feature_volume(const Recording& rec, const LongViewOptions& opt = {},
                                          std::size_t jobs = 1) {
  FeatureVolume vol;
  vol.channels = rec.channels;
  vol.samples = rec.samples;
  vol.rate = rec.rate;
  vol.labels = rec.labels;
  vol.annotations = rec.annotations;
  vol.wave_counts.assign(rec.channels, 0);
  vol.data.assign(rec.channels * rec.samples * kFeatureCount, 0.0);
  parallel_for(rec.channels, jobs, [&](std::size_t c) {
    const auto f = channel_features(rec.row(c), opt, &vol.wave_counts[c]);
    for (std::size_t t = 0; t < rec.samples; ++t)
      for (std::size_t k = 0; k < kFeatureCount; ++k) vol.at(c, t, k) = f[k][t];
  });
  return vol;
}

/// Channels x length x 7 slice centered on an annotation point.
struct Clip {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t center = 0;
  int label = 0;
  std::vector<double> data;  // [c][l][f]

  double at(std::size_t c, std::size_t l, std::size_t f) const {
    return data[(c * length + l) * kFeatureCount + f];
  }
};

/// Spans [center - length/2, center + length/2); columns outside the volume
/// are zero.
inline Clip extract_clip(const FeatureVolume& vol, std::size_t center, std::size_t length, int label) {
  if (center >= vol.samples)
    throw Error(ErrorKind::CenterOutOfRange,
                "center " + std::to_string(center) + " outside [0, " + std::to_string(vol.samples) + ")");
  if (length == 0 || length % 2 != 0) throw Error(ErrorKind::InvalidInput, "clip length must be even and > 0");
  Clip clip{vol.channels, length, center, label, std::vector<double>(vol.channels * length * kFeatureCount, 0.0)};
  const long start = static_cast<long>(center) - static_cast<long>(length / 2);
  for (std::size_t c = 0; c < vol.channels; ++c) {
    for (std::size_t l = 0; l < length; ++l) {
      const long t = start + static_cast<long>(l);
      if (t < 0 || t >= static_cast<long>(vol.samples)) continue;
      const double* src = &vol.data[(c * vol.samples + static_cast<std::size_t>(t)) * kFeatureCount];
      std::copy(src, src + kFeatureCount, clip.data.begin() + static_cast<long>((c * length + l) * kFeatureCount));
    }
  }
  return clip;
}

/// Feature-volume persistence in the native container.
inline std::string encode_volume(const FeatureVolume& vol) {
  nlohmann::json ann = nlohmann::json::array();
  for (const auto& a : vol.annotations) ann.push_back({a.sample, a.class_id});
  nlohmann::json header{{"kind", "feature_volume"},
                        {"dtype", "f32"},
                        {"rate", vol.rate},
                        {"channels", vol.channels},
                        {"samples", vol.samples},
                        {"features", std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end())},
                        {"shape", {vol.channels, vol.samples, kFeatureCount}},
                        {"labels", vol.labels},
                        {"wave_counts", vol.wave_counts},
                        {"annotations", ann}};
  std::vector<float> payload(vol.data.size());
  std::transform(vol.data.begin(), vol.data.end(), payload.begin(), [](double v) { return static_cast<float>(v); });
  return io::encode_container(header, payload);
}

inline FeatureVolume decode_volume(std::span<const char> bytes) {
  const auto f = io::decode_container(bytes, [](const nlohmann::json& h) {
    io::detail::require_kind(h, "feature_volume");
    return io::detail::header_field<std::size_t>(h, "channels") *
           io::detail::header_field<std::size_t>(h, "samples") * kFeatureCount;
  });
  FeatureVolume vol;
  vol.channels = io::detail::header_field<std::size_t>(f.header, "channels");
  vol.samples = io::detail::header_field<std::size_t>(f.header, "samples");
  vol.rate = io::detail::header_field<double>(f.header, "rate");
  vol.labels = io::detail::header_field<std::vector<std::string>>(f.header, "labels");
  if (f.header.contains("wave_counts")) vol.wave_counts = f.header["wave_counts"].get<std::vector<std::size_t>>();
  for (const auto& a : io::detail::header_field<nlohmann::json>(f.header, "annotations"))
    vol.annotations.push_back({a.at(0).get<std::size_t>(), a.at(1).get<int>()});
  vol.data.assign(f.payload.begin(), f.payload.end());
  return vol;
}

}  // namespace lvcade::longview
