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

// Brute-force reference implementations used by the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "lvcade/random.hpp"

namespace oracle {

struct Wave {
  std::size_t l, o, r, hl, hr;
  double al, ar, spl, spr, hspl, hspr, ma, sn;
};

// 1 for a maximum, -1 for a minimum, 0 otherwise. A sample is a candidate
// only when it starts a run of equal values.
inline int extremum_kind(const std::vector<double>& x, std::size_t t) {
  if (t > 0 && x[t] == x[t - 1]) return 0;
  std::optional<double> before, after;
  for (std::size_t s = t; s-- > 0;)
    if (x[s] != x[t]) {
      before = x[s];
      break;
    }
  for (std::size_t s = t + 1; s < x.size(); ++s)
    if (x[s] != x[t]) {
      after = x[s];
      break;
    }
  if (!before && !after) return 0;
  if (!before) return *after > x[t] ? -1 : 1;
  if (!after) return *before > x[t] ? -1 : 1;
  if (*before < x[t] && *after < x[t]) return 1;
  if (*before > x[t] && *after > x[t]) return -1;
  return 0;
}

inline std::vector<Wave> waves(const std::vector<double>& x) {
  std::vector<std::pair<std::size_t, int>> ext;
  for (std::size_t t = 0; t < x.size(); ++t)
    if (int k = extremum_kind(x, t)) ext.push_back({t, k});
  std::vector<Wave> out;
  for (std::size_t i = 0; i + 2 < ext.size(); ++i) {
    if (ext[i].second != -1 || ext[i + 1].second != 1 || ext[i + 2].second != -1) continue;
    Wave w{};
    w.l = ext[i].first;
    w.o = ext[i + 1].first;
    w.r = ext[i + 2].first;
    const double lh = 0.5 * (x[w.l] + x[w.o]), rh = 0.5 * (x[w.o] + x[w.r]);
    w.hl = w.o - 1;
    for (std::size_t t = w.o; t-- > w.l;)
      if (x[t] >= lh) w.hl = t;  // keeps the leftmost
    w.hr = w.r;
    for (std::size_t t = w.r; t > w.o; --t)
      if (x[t] <= rh) w.hr = t;
    w.al = x[w.o] - x[w.l];
    w.ar = x[w.r] - x[w.o];
    w.spl = w.al / double(w.o - w.l);
    w.spr = w.ar / double(w.r - w.o);
    w.hspl = w.al / (2.0 * double(w.o - w.hl));
    w.hspr = w.ar / (2.0 * double(w.hr - w.o));
    w.ma = (w.al * double(w.r - w.o) + w.ar * double(w.o - w.l)) / double(w.r - w.l);
    double s = 0.0;
    std::size_t n = 0;
    for (long t = long(w.o) - 4; t <= long(w.o) + 4; ++t)
      if (t >= 0 && t < long(x.size())) {
        s += x[std::size_t(t)];
        ++n;
      }
    w.sn = std::abs(s - double(n) * x[w.o]);
    out.push_back(w);
  }
  return out;
}

inline double zscore_in(const std::vector<double>& pool, double v) {
  double mu = 0.0;
  for (double p : pool) mu += p;
  mu /= double(pool.size());
  double var = 0.0;
  for (double p : pool) var += (p - mu) * (p - mu);
  return (v - mu) / std::max(std::sqrt(var / double(pool.size())), 1e-8);
}

// Seven feature series for one channel: raw, topo, amp, meanAmp, slope,
// halfSlope, sharpness.
inline std::array<std::vector<double>, 7> features(const std::vector<double>& x, std::size_t window) {
  const auto ws = waves(x);
  const std::size_t T = x.size(), n = ws.size(), h = window / 2;
  std::array<std::vector<double>, 7> f;
  f[0] = x;
  for (std::size_t k = 1; k < 7; ++k) f[k].assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    bool peak = false, trough = false, half = false, between = false;
    for (const auto& w : ws) {
      peak = peak || t == w.o;
      trough = trough || t == w.l || t == w.r;
      half = half || t == w.hl || t == w.hr;
      between = between || (t > w.hl && t < w.o) || (t > w.o && t < w.hr);
    }
    const double code = peak ? 1.0 : trough ? -1.0 : half ? 0.0 : between ? 0.5 : -0.5;
    f[1][t] = code;
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> al, ar, spl, spr, hl, hr, ma, sn;
    for (std::size_t j = 0; j < n; ++j) {
      if (j + h < k || j > k + h) continue;
      al.push_back(ws[j].al);
      ar.push_back(ws[j].ar);
      spl.push_back(ws[j].spl);
      spr.push_back(ws[j].spr);
      hl.push_back(ws[j].hspl);
      hr.push_back(ws[j].hspr);
      ma.push_back(ws[j].ma);
      sn.push_back(ws[j].sn);
    }
    const auto& w = ws[k];
    for (std::size_t t = w.hl; t <= w.hr; ++t) {
      const bool left = t < w.o;
      f[2][t] = left ? zscore_in(al, w.al) : zscore_in(ar, w.ar);
      f[3][t] = zscore_in(ma, w.ma);
      f[4][t] = left ? zscore_in(spl, w.spl) : zscore_in(spr, w.spr);
      f[5][t] = left ? zscore_in(hl, w.hspl) : zscore_in(hr, w.hspr);
      f[6][t] = zscore_in(sn, w.sn);
    }
  }
  return f;
}

// Moving-average smoothed Gaussian noise with occasional repeated samples.
inline std::vector<double> smoothed_signal(std::size_t T, lvcade::Rng& rng) {
  const std::size_t k = 1 + rng.index(6);
  std::vector<double> w(T + k), x(T, 0.0);
  for (auto& v : w) v = rng.normal();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < k; ++j) x[t] += w[t + j] / double(k);
  for (std::size_t t = 1; t < T; ++t)
    if (rng.uniform() < 0.02) x[t] = x[t - 1];
  return x;
}

}  // namespace oracle
