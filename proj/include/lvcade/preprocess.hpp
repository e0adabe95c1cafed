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
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lvcade/error.hpp"
#include "lvcade/parallel.hpp"
#include "lvcade/recording.hpp"

namespace lvcade::preprocess {

struct FilterSpec {
  double low_hz = 0.1;
  double high_hz = 75.0;
  double notch_hz = 50.0;
  double notch_bandwidth_hz = 2.0;
  /// Band-pass polynomial order; the low-pass prototype has order/2 poles.
  int order = 4;

  static FilterSpec eeg() { return {}; }
  static FilterSpec meg() { return {3.0, 40.0, 50.0, 2.0, 4}; }
};

struct MontagePair {
  std::string anode;
  std::string cathode;
  std::string out;
};

struct MontageSpec {
  std::vector<MontagePair> pairs;

  /// JSON list of {anode, cathode, out}.
  static MontageSpec from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorKind::ConfigInvalid, "montage must be a JSON list");
    MontageSpec m;
    for (const auto& e : j) {
      try {
        m.pairs.push_back({e.at("anode").get<std::string>(), e.at("cathode").get<std::string>(),
                           e.at("out").get<std::string>()});
      } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::ConfigInvalid, std::string("montage entry: ") + ex.what());
      }
    }
    return m;
  }
};

/// One biquad in transposed direct form II, a0 normalized to 1.
struct Biquad {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};

  double dc_gain() const { return (b[0] + b[1] + b[2]) / (a[0] + a[1] + a[2]); }

  /// State that makes a unit step input produce its steady-state output.
  std::array<double, 2> step_state() const {
    const double g = dc_gain();
    const double z2 = b[2] - a[2] * g;
    const double z1 = b[1] - a[1] * g + z2;
    return {z1, z2};
  }
};

using Cascade = std::vector<Biquad>;

namespace detail {

inline void check_band(const FilterSpec& spec, double rate) {
  const double nyquist = rate / 2.0;
  if (!(spec.low_hz >= 0.0 && spec.low_hz < spec.high_hz && spec.high_hz < nyquist))
    throw Error(ErrorKind::BandOutOfRange, "band [" + std::to_string(spec.low_hz) + ", " +
                                               std::to_string(spec.high_hz) + "] Hz invalid for Nyquist " +
                                               std::to_string(nyquist) + " Hz");
  if (spec.order < 2 || spec.order % 2 != 0)
    throw Error(ErrorKind::BandOutOfRange, "filter order must be an even integer >= 2");
}

inline void check_notch(const FilterSpec& spec, double rate) {
  const double nyquist = rate / 2.0;
  if (!(spec.notch_hz > 0.0 && spec.notch_hz < nyquist && spec.notch_bandwidth_hz > 0.0))
    throw Error(ErrorKind::BandOutOfRange,
                "notch " + std::to_string(spec.notch_hz) + " Hz invalid for Nyquist " + std::to_string(nyquist) + " Hz");
}

inline void run_cascade(const Cascade& sos, std::span<double> x, double initial) {
  double scale = initial;
  for (const auto& s : sos) {
    auto z = s.step_state();
    z[0] *= scale;
    z[1] *= scale;
    for (auto& v : x) {
      const double in = v;
      const double y = s.b[0] * in + z[0];
      z[0] = s.b[1] * in - s.a[1] * y + z[1];
      z[1] = s.b[2] * in - s.a[2] * y;
      v = y;
    }
    scale *= s.dc_gain();
  }
}

}  // namespace detail

/// Digital Butterworth band-pass as second-order sections (bilinear
/// transform with pre-warping). `order` is the band-pass order.
inline Cascade butterworth_bandpass(double low_hz, double high_hz, int order, double rate) {
  using cd = std::complex<double>;
  const int n = order / 2;
  const double fs2 = 2.0 * rate;
  const double wl = fs2 * std::tan(std::numbers::pi * low_hz / rate);
  const double wh = fs2 * std::tan(std::numbers::pi * high_hz / rate);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  std::vector<cd> analog;
  for (int k = 0; k < n; ++k) {
    const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0sq);
    analog.push_back(half + root);
    analog.push_back(half - root);
  }
  // Prototype gain is 1; the transform contributes bw^n and n zeros at s = 0.
  cd gain = std::pow(bw, n) * std::pow(fs2, n);
  std::vector<cd> digital;
  for (const auto& p : analog) {
    gain /= (fs2 - p);
    digital.push_back((fs2 + p) / (fs2 - p));
  }

  Cascade sos;
  for (const auto& z : digital) {
    if (z.imag() <= 0.0) continue;
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -2.0 * z.real(), std::norm(z)};
    sos.push_back(s);
  }
  if (sos.size() != static_cast<std::size_t>(n))
    throw Error(ErrorKind::BandOutOfRange, "band-pass design produced real poles; band too wide");
  for (auto& v : sos.front().b) v *= gain.real();
  return sos;
}

/// Second-order IIR notch with -3 dB bandwidth `bandwidth_hz`.
inline Biquad iir_notch(double notch_hz, double bandwidth_hz, double rate) {
  const double w0 = 2.0 * std::numbers::pi * notch_hz / rate;
  const double bw = 2.0 * std::numbers::pi * bandwidth_hz / rate;
  const double g = 1.0 / (1.0 + std::tan(bw / 2.0));
  Biquad s;
  s.b = {g, -2.0 * g * std::cos(w0), g};
  s.a = {1.0, -2.0 * g * std::cos(w0), 2.0 * g - 1.0};
  return s;
}

/// Zero-phase filtering: odd-reflection padding, forward pass, reverse
/// pass, each started from the steady state of its first sample.
inline std::vector<double> filtfilt(const Cascade& sos, std::span<const double> x, std::size_t padlen) {
  const std::size_t t = x.size();
  padlen = std::min(padlen, t > 1 ? t - 1 : 0);
  std::vector<double> ext(t + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
    ext[padlen + t + i] = 2.0 * x[t - 1] - x[t - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(padlen));
  detail::run_cascade(sos, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  detail::run_cascade(sos, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + t)};
}

namespace detail {

inline Recording map_channels(const Recording& rec, std::size_t jobs, auto&& per_channel) {
  Recording out = rec;
  parallel_for(rec.channels, jobs, [&](std::size_t c) {
    const auto y = per_channel(rec.row(c));
    std::copy(y.begin(), y.end(), out.row(c).begin());
  });
  return out;
}

}  // namespace detail

/// Reflection length: at least 3 * order samples, extended to eight time
/// constants of a pole with decay rate `pole_hz` (in rad/s / 2pi).
inline std::size_t edge_padding(int order, double pole_hz, double rate) {
  const auto base = 3 * static_cast<std::size_t>(order);
  if (!(pole_hz > 0.0)) return base;
  const double tau = rate / (2.0 * std::numbers::pi * pole_hz);
  return std::max(base, static_cast<std::size_t>(std::ceil(8.0 * tau)));
}

inline Recording bandpass(const Recording& rec, const FilterSpec& spec, std::size_t jobs = 1) {
  detail::check_band(spec, rec.rate);
  const auto sos = butterworth_bandpass(spec.low_hz, spec.high_hz, spec.order, rec.rate);
  const std::size_t pad = edge_padding(spec.order, spec.low_hz, rec.rate);
  return detail::map_channels(rec, jobs, [&](std::span<const double> x) { return filtfilt(sos, x, pad); });
}

inline Recording notch(const Recording& rec, const FilterSpec& spec, std::size_t jobs = 1) {
  detail::check_notch(spec, rec.rate);
  const Cascade sos{iir_notch(spec.notch_hz, spec.notch_bandwidth_hz, rec.rate)};
  const std::size_t pad = edge_padding(2, spec.notch_bandwidth_hz / 2.0, rec.rate);
  return detail::map_channels(rec, jobs, [&](std::span<const double> x) { return filtfilt(sos, x, pad); });
}

/// Reduced integer ratio up/down approximating target/source.
inline std::pair<long, long> rational_ratio(double target, double source) {
  constexpr double kScale = 1000.0;
  long up = std::lround(target * kScale);
  long down = std::lround(source * kScale);
  const long g = std::gcd(up, down);
  return {up / g, down / g};
}

/// Kaiser-windowed sinc low-pass for polyphase resampling. Each of the
/// `up` polyphase branches is normalized to unit DC gain.
inline std::vector<double> resample_kernel(long up, long down, double beta = 5.0) {
  const long max_rate = std::max(up, down);
  const long half_len = 10 * max_rate;
  const std::size_t len = static_cast<std::size_t>(2 * half_len + 1);
  const double cutoff = 1.0 / static_cast<double>(max_rate);  // relative to Nyquist
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double m = static_cast<double>(k) - static_cast<double>(half_len);
    const double arg = std::numbers::pi * cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double r = m / static_cast<double>(half_len);
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[k] = cutoff * sinc * w;
  }
  for (long phase = 0; phase < up; ++phase) {
    double sum = 0.0;
    for (std::size_t k = static_cast<std::size_t>(phase); k < len; k += static_cast<std::size_t>(up)) sum += h[k];
    for (std::size_t k = static_cast<std::size_t>(phase); k < len; k += static_cast<std::size_t>(up)) h[k] /= sum;
  }
  return h;
}

/// Polyphase rational resampling of one series; samples outside the series
/// repeat the edge values.
inline std::vector<double> resample_series(std::span<const double> x, long up, long down,
                                           std::span<const double> h, std::size_t out_len) {
  const long half_len = static_cast<long>(h.size() / 2);
  const long n_in = static_cast<long>(x.size());
  std::vector<double> y(out_len, 0.0);
  for (std::size_t m = 0; m < out_len; ++m) {
    // Upsampled-grid position of output m, shifted to the kernel center.
    const long n = static_cast<long>(m) * down + half_len;
    // Input sample i sits at upsampled position i*up and meets tap n - i*up.
    double acc = 0.0;
    for (long i = n / up, k = n - i * up; k < static_cast<long>(h.size()); --i, k += up) {
      const double xv = x[static_cast<std::size_t>(std::clamp(i, 0L, n_in - 1))];
      acc += h[static_cast<std::size_t>(k)] * xv;
    }
    y[m] = acc;
  }
  return y;
}

inline Recording resample(const Recording& rec, double target_rate, std::size_t jobs = 1) {
  if (!(target_rate > 0.0)) throw Error(ErrorKind::InvalidInput, "target rate must be > 0");
  if (target_rate > rec.rate)
    throw Error(ErrorKind::UpsampleRequested, "target " + std::to_string(target_rate) + " Hz exceeds source " +
                                                  std::to_string(rec.rate) + " Hz");
  const auto [up, down] = rational_ratio(target_rate, rec.rate);
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(rec.samples) * target_rate / rec.rate));
  Recording out = rec;
  out.rate = target_rate;
  out.samples = out_len;
  out.data.assign(rec.channels * out_len, 0.0);
  for (auto& a : out.annotations) {
    a.sample = static_cast<std::size_t>(std::llround(static_cast<double>(a.sample) * target_rate / rec.rate));
    a.sample = std::min(a.sample, out_len - 1);
  }
  const auto h = resample_kernel(up, down);
  parallel_for(rec.channels, jobs, [&](std::size_t c) {
    const auto y = resample_series(rec.row(c), up, down, h, out_len);
    std::copy(y.begin(), y.end(), out.row(c).begin());
  });
  return out;
}

enum class ZScoreMode { File, PerChannel };

inline Recording zscore(const Recording& rec, ZScoreMode mode = ZScoreMode::File) {
  constexpr double kMinStd = 1e-12;
  if (rec.samples < 2) throw Error(ErrorKind::InvalidInput, "z-score needs at least 2 samples");
  auto stats = [](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };
  Recording out = rec;
  if (mode == ZScoreMode::File) {
    const auto [mean, sd] = stats(rec.data);
    if (sd < kMinStd) throw Error(ErrorKind::DegenerateStd, "recording is constant");
    for (auto& v : out.data) v = (v - mean) / sd;
    return out;
  }
  for (std::size_t c = 0; c < rec.channels; ++c) {
    const auto [mean, sd] = stats(rec.row(c));
    if (sd < kMinStd) throw Error(ErrorKind::DegenerateStd, "channel '" + rec.labels[c] + "' is constant");
    for (auto& v : out.row(c)) v = (v - mean) / sd;
  }
  return out;
}

inline Recording bipolar_montage(const Recording& rec, const MontageSpec& montage) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < rec.channels; ++c) index.emplace(rec.labels[c], c);
  auto find = [&](const std::string& label) {
    const auto it = index.find(label);
    if (it == index.end()) throw Error(ErrorKind::UnknownLabel, "montage references absent label '" + label + "'");
    return it->second;
  };
  Recording out(montage.pairs.size(), rec.samples, rec.rate);
  out.annotations = rec.annotations;
  for (std::size_t i = 0; i < montage.pairs.size(); ++i) {
    const auto& p = montage.pairs[i];
    const auto a = rec.row(find(p.anode));
    const auto k = rec.row(find(p.cathode));
    auto dst = out.row(i);
    for (std::size_t t = 0; t < rec.samples; ++t) dst[t] = a[t] - k[t];
    out.labels[i] = p.out;
  }
  return out;
}

/// bandpass -> notch -> resample -> zscore. This order is fixed.
inline Recording run_pipeline(const Recording& rec, const FilterSpec& spec, double target_rate,
                              ZScoreMode mode = ZScoreMode::File, std::size_t jobs = 1) {
  auto x = bandpass(rec, spec, jobs);
  x = notch(x, spec, jobs);
  if (target_rate < x.rate) x = resample(x, target_rate, jobs);
  return zscore(x, mode);
}

}  // namespace lvcade::preprocess
