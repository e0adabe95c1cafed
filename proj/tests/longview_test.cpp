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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lvcade/longview.hpp"
#include "oracles.hpp"

namespace lv = lvcade::longview;
using lv::ExtremumKind;

namespace {

// Rise 2 per sample to 8 at t=4, then fall 1 per sample to 2 at t=10.
std::vector<double> triangle() {
  std::vector<double> x(11);
  for (std::size_t t = 0; t <= 4; ++t) x[t] = 2.0 * double(t);
  for (std::size_t t = 5; t <= 10; ++t) x[t] = 8.0 - double(t - 4);
  return x;
}

lv::WaveSegment triangle_wave() {
  const auto x = triangle();
  auto waves = lv::analyze_channel(x);
  EXPECT_EQ(waves.size(), 1u);
  return waves.at(0);
}

}  // namespace

TEST(DetectExtrema, Alternating) {
  const std::vector<double> x{0, 1, 0, 1, 0};
  const auto e = lv::detect_extrema(x);
  ASSERT_EQ(e.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(e[i].index, i);
    EXPECT_EQ(e[i].kind, i % 2 ? ExtremumKind::Max : ExtremumKind::Min);
  }
}

TEST(DetectExtrema, ConstantIsEmpty) { EXPECT_TRUE(lv::detect_extrema(std::vector<double>{5, 5, 5, 5}).empty()); }

TEST(DetectExtrema, MonotoneHasEndpoints) {
  const auto e = lv::detect_extrema(std::vector<double>{0, 1, 2, 3});
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], (lv::Extremum{0, ExtremumKind::Min}));
  EXPECT_EQ(e[1], (lv::Extremum{3, ExtremumKind::Max}));
}

TEST(DetectExtrema, PlateauTakesLeftmostSample) {
  const auto e = lv::detect_extrema(std::vector<double>{0, 2, 2, 2, 0});
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[1], (lv::Extremum{1, ExtremumKind::Max}));
}

TEST(DetectExtrema, StrictlyAlternatesOnRandomSignals) {
  lvcade::Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto x = oracle::smoothed_signal(300, rng);
    const auto e = lv::detect_extrema(x);
    for (std::size_t k = 1; k < e.size(); ++k) {
      EXPECT_NE(e[k].kind, e[k - 1].kind);
      EXPECT_LT(e[k - 1].index, e[k].index);
    }
  }
}

TEST(DecomposeWaves, PairsMinMaxMin) {
  const std::vector<double> x{0, 1, 0, 1, 0};
  const auto w = lv::decompose_waves(x, lv::detect_extrema(x));
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ((std::array{w[0].t_l, w[0].t_o, w[0].t_r}), (std::array<std::size_t, 3>{0, 1, 2}));
  EXPECT_EQ((std::array{w[1].t_l, w[1].t_o, w[1].t_r}), (std::array<std::size_t, 3>{2, 3, 4}));
}

TEST(DecomposeWaves, IncompleteWaveDropped) {
  const std::vector<lv::Extremum> e{{0, ExtremumKind::Min}, {5, ExtremumKind::Max}};
  EXPECT_TRUE(lv::decompose_waves(std::vector<double>(6), e).empty());
}

TEST(DecomposeWaves, SingleTriple) {
  const std::vector<lv::Extremum> e{{0, ExtremumKind::Min}, {2, ExtremumKind::Max}, {4, ExtremumKind::Min}};
  EXPECT_EQ(lv::decompose_waves(std::vector<double>(5), e).size(), 1u);
}

TEST(DecomposeWaves, PartitionAndSharedMinima) {
  lvcade::Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto x = oracle::smoothed_signal(500, rng);
    const auto w = lv::analyze_channel(x);
    for (std::size_t k = 0; k < w.size(); ++k) {
      EXPECT_LT(w[k].t_l, w[k].t_o);
      EXPECT_LT(w[k].t_o, w[k].t_r);
      EXPECT_LE(w[k].t_l, w[k].t_hl);
      EXPECT_LT(w[k].t_hl, w[k].t_o);
      EXPECT_LT(w[k].t_o, w[k].t_hr);
      EXPECT_LE(w[k].t_hr, w[k].t_r);
      EXPECT_GE(w[k].a_l, 0.0);
      EXPECT_LE(w[k].a_r, 0.0);
      if (k > 0) {
        EXPECT_EQ(w[k - 1].t_r, w[k].t_l);
      }
    }
  }
}

TEST(HalfWidthMoments, LinearFlanks) {
  const auto w = triangle_wave();
  EXPECT_EQ(w.t_hl, 2u);
  EXPECT_EQ(w.t_hr, 7u);
}

TEST(HalfWidthMoments, SymmetricTriangle) {
  const std::vector<double> x{0, 1, 2, 3, 4, 3, 2, 1, 0};
  const auto w = lv::analyze_channel(x).at(0);
  EXPECT_EQ(w.t_o - w.t_hl, w.t_hr - w.t_o);
}

TEST(HalfWidthMoments, TwoSampleFlankClamps) {
  const std::vector<double> x{0, 10, 0};
  const auto w = lv::analyze_channel(x).at(0);
  EXPECT_EQ(w.t_hl, w.t_o - 1);
}

TEST(WaveProperties, TriangleFixture) {
  const auto w = triangle_wave();
  EXPECT_NEAR(w.a_l, 8.0, 1e-12);
  EXPECT_NEAR(w.a_r, -6.0, 1e-12);
  EXPECT_NEAR(w.sp_l, 2.0, 1e-12);
  EXPECT_NEAR(w.sp_r, -1.0, 1e-12);
  EXPECT_NEAR(w.hsp_l, 2.0, 1e-12);
  EXPECT_NEAR(w.hsp_r, -1.0, 1e-12);
  EXPECT_NEAR(w.ma, 2.4, 1e-12);
}

TEST(WaveProperties, SharpnessVanishesOnAffineWindow) {
  std::vector<double> x(30);
  for (std::size_t t = 0; t < 30; ++t) x[t] = 0.5 * double(t) - 3.0;
  lv::WaveSegment w{10, 15, 25, 12, 20};
  EXPECT_NEAR(lv::wave_properties(x, w).sn, 0.0, 1e-12);
}

TEST(WaveProperties, SharpnessOfParabola) {
  std::vector<double> x(21);
  for (std::size_t t = 0; t < 21; ++t) x[t] = std::pow(double(t) - 10.0, 2);
  lv::WaveSegment w{0, 10, 20, 5, 15};
  EXPECT_DOUBLE_EQ(lv::wave_properties(x, w).sn, 60.0);
}

TEST(WaveProperties, SharpnessWindowClampsAtEdges) {
  const std::vector<double> x{0, 3, 1, 0, 0};
  lv::WaveSegment w{0, 1, 3, 0, 2};
  // Window [0, 5): sum 4, five samples at 3.
  EXPECT_DOUBLE_EQ(lv::wave_properties(x, w).sn, 11.0);
}

TEST(Topology, TriangleFixture) {
  const auto w = triangle_wave();
  const std::vector<lv::WaveSegment> ws{w};
  const auto topo = lv::topology_feature(11, ws);
  const std::vector<double> expect{-1, -0.5, 0, 0.5, 1, 0.5, 0.5, 0, -0.5, -0.5, -1};
  EXPECT_EQ(topo, expect);
}

TEST(Topology, ConstantSignal) {
  const std::vector<double> x(40, 1.5);
  const auto f = lv::channel_features(x, {});
  for (double v : f[lv::Topo]) EXPECT_EQ(v, -0.5);
  for (std::size_t k = lv::Amp; k < lv::kFeatureCount; ++k)
    for (double v : f[k]) EXPECT_EQ(v, 0.0);
}

TEST(Topology, Codomain) {
  lvcade::Rng rng(9);
  const std::set<double> allowed{-1.0, -0.5, 0.0, 0.5, 1.0};
  for (int i = 0; i < 30; ++i) {
    const auto x = oracle::smoothed_signal(400, rng);
    for (double v : lv::channel_features(x, {})[lv::Topo]) EXPECT_TRUE(allowed.count(v)) << v;
  }
}

TEST(Interpolate, TriangleFixture) {
  const std::vector<lv::WaveSegment> ws{triangle_wave()};
  const auto f = lv::interpolate_features(ws, 11);
  EXPECT_EQ(f[0], (std::vector<double>{0, 0, 8, 8, -6, -6, -6, -6, 0, 0, 0}));
  for (std::size_t t = 0; t < 11; ++t) EXPECT_EQ(f[1][t], t >= 2 && t <= 7 ? 2.4 : 0.0);
}

TEST(Interpolate, NoWavesAllZero) {
  const auto f = lv::interpolate_features(std::vector<lv::WaveSegment>{}, 7);
  for (const auto& s : f) EXPECT_EQ(s, std::vector<double>(7, 0.0));
}

TEST(Normalize, IdenticalWavesGiveZero) {
  const lv::WaveScalars w{{5.0, -4.0}, {2.5, -1.0}, {2.0, -1.5}, 1.2, 3.0};
  const std::vector<lv::WaveScalars> raw(40, w);
  for (const auto& s : lv::longview_normalize(raw, 100)) {
    EXPECT_EQ(s.amp.left, 0.0);
    EXPECT_EQ(s.amp.right, 0.0);
    EXPECT_EQ(s.slope.left, 0.0);
    EXPECT_EQ(s.slope.right, 0.0);
    EXPECT_EQ(s.half_slope.left, 0.0);
    EXPECT_EQ(s.half_slope.right, 0.0);
    EXPECT_EQ(s.mean_amp, 0.0);
    EXPECT_EQ(s.sharpness, 0.0);
  }
}

TEST(Normalize, ConstructedUnitDeviation) {
  // 150 waves with left amplitudes alternating 1 and 3; wave 75 gets the
  // value a that equals mu + sigma of its own window, found by bisection.
  const std::size_t n = 150, target = 75, window = 100;
  std::vector<lv::WaveScalars> raw(n);
  for (std::size_t k = 0; k < n; ++k) raw[k].amp = {k % 2 ? 3.0 : 1.0, -1.0};
  auto residual = [&](double a) {
    raw[target].amp.left = a;
    std::vector<double> pool;
    for (std::size_t j = target - window / 2; j <= target + window / 2; ++j) pool.push_back(raw[j].amp.left);
    double mu = 0.0, var = 0.0;
    for (double v : pool) mu += v;
    mu /= double(pool.size());
    for (double v : pool) var += (v - mu) * (v - mu);
    return a - mu - std::sqrt(var / double(pool.size()));
  };
  double lo = 2.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0 ? hi : lo) = mid;
  }
  residual(0.5 * (lo + hi));
  const auto out = lv::longview_normalize(raw, window);
  EXPECT_NEAR(out[target].amp.left, 1.0, 1e-9);
}

TEST(Normalize, ShortChannelUsesAllWaves) {
  std::vector<lv::WaveScalars> raw(10);
  for (std::size_t k = 0; k < 10; ++k) raw[k].mean_amp = double(k * k);
  const auto a = lv::longview_normalize(raw, 100);
  for (std::size_t k = 0; k < 10; ++k) {
    std::vector<double> all;
    for (const auto& w : raw) all.push_back(w.mean_amp);
    EXPECT_NEAR(a[k].mean_amp, oracle::zscore_in(all, raw[k].mean_amp), 1e-12);
  }
}

TEST(Normalize, Locality) {
  lvcade::Rng rng(21);
  const std::size_t n = 300, window = 40, k = 50;
  std::vector<lv::WaveScalars> raw(n);
  for (auto& w : raw) w = {{rng.normal(), rng.normal()}, {rng.normal(), rng.normal()},
                           {rng.normal(), rng.normal()}, rng.normal(), rng.normal()};
  const auto before = lv::longview_normalize(raw, window);
  for (std::size_t j = k + window / 2 + 1; j < n; ++j) raw[j].sharpness += 100.0;
  const auto after = lv::longview_normalize(raw, window);
  EXPECT_EQ(before[k].sharpness, after[k].sharpness);
  EXPECT_NE(before[k + window / 2].sharpness, after[k + window / 2].sharpness);
}

TEST(FeatureVolume, MatchesOracle) {
  lvcade::Rng rng(3);
  lvcade::Recording rec(4, 1200, 200.0);
  for (std::size_t c = 0; c < 4; ++c) {
    const auto x = oracle::smoothed_signal(1200, rng);
    std::copy(x.begin(), x.end(), rec.row(c).begin());
  }
  const auto vol = lv::build_feature_volume(rec, {}, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    const auto ref = oracle::features(std::vector<double>(rec.row(c).begin(), rec.row(c).end()), 100);
    for (std::size_t t = 0; t < 1200; ++t)
      for (std::size_t f = 0; f < lv::kFeatureCount; ++f) ASSERT_NEAR(vol.at(c, t, f), ref[f][t], 1e-9);
  }
}

TEST(FeatureVolume, ShapeAndRawIdentity) {
  lvcade::Rng rng(8);
  lvcade::Recording rec(20, 2000, 200.0);
  for (auto& v : rec.data) v = rng.normal();
  const auto vol = lv::build_feature_volume(rec, {}, 4);
  EXPECT_EQ(vol.channels, 20u);
  EXPECT_EQ(vol.samples, 2000u);
  EXPECT_EQ(vol.data.size(), 20u * 2000u * 7u);
  for (std::size_t c = 0; c < 20; ++c)
    for (std::size_t t = 0; t < 2000; ++t) ASSERT_EQ(vol.at(c, t, lv::Raw), rec.at(c, t));
  EXPECT_EQ(vol.wave_counts.size(), 20u);
}

TEST(FeatureVolume, ShiftEquivariance) {
  lvcade::Rng rng(17);
  const auto base = oracle::smoothed_signal(1500, rng);
  const std::size_t s = 37;
  std::vector<double> shifted(base.size());
  for (std::size_t t = 0; t < base.size(); ++t) shifted[t] = t >= s ? base[t - s] : base[0] + 0.0;
  // A plateau prefix does not change the waves of the original content.
  const lv::LongViewOptions opt{20};
  const auto a = lv::channel_features(base, opt);
  const auto b = lv::channel_features(shifted, opt);
  for (std::size_t t = 400; t + 400 < base.size(); ++t)
    for (std::size_t f = 0; f < lv::kFeatureCount; ++f) ASSERT_NEAR(a[f][t], b[f][t + s], 1e-12) << f << " " << t;
}

TEST(FeatureVolume, AbsoluteAmplitudeFlag) {
  const auto x = triangle();
  lv::LongViewOptions opt{100, true};
  const auto w = lv::analyze_channel(x);
  const auto s = lv::scalars_of(w[0], true);
  EXPECT_EQ(s.amp.right, 6.0);
  EXPECT_EQ(s.slope.right, 1.0);
  EXPECT_EQ(lv::channel_features(x, opt)[lv::Raw], x);
}

TEST(Clip, SpanAtStart) {
  lv::FeatureVolume vol;
  vol.channels = 1;
  vol.samples = 2000;
  vol.data.resize(2000 * 7);
  for (std::size_t t = 0; t < 2000; ++t) vol.at(0, t, 0) = double(t) + 1.0;
  const auto c = lv::extract_clip(vol, 100, 200, 1);
  EXPECT_EQ(c.at(0, 0, 0), 1.0);
  EXPECT_EQ(c.at(0, 199, 0), 200.0);
  const auto p = lv::extract_clip(vol, 50, 200, 0);
  for (std::size_t l = 0; l < 50; ++l) EXPECT_EQ(p.at(0, l, 0), 0.0);
  EXPECT_EQ(p.at(0, 50, 0), 1.0);
  EXPECT_EQ(p.label, 0);
  EXPECT_EQ(p.center, 50u);
}

TEST(Clip, Errors) {
  lv::FeatureVolume vol;
  vol.channels = 1;
  vol.samples = 10;
  vol.data.resize(70);
  EXPECT_THROW(lv::extract_clip(vol, 10, 4, 0), lvcade::Error);
  try {
    lv::extract_clip(vol, 10, 4, 0);
  } catch (const lvcade::Error& e) {
    EXPECT_EQ(e.kind(), lvcade::ErrorKind::CenterOutOfRange);
  }
  EXPECT_THROW(lv::extract_clip(vol, 5, 3, 0), lvcade::Error);
}

TEST(FeatureVolume, ContainerRoundTrip) {
  lvcade::Rng rng(2);
  lvcade::Recording rec(3, 300, 250.0);
  for (auto& v : rec.data) v = static_cast<float>(rng.normal());
  rec.annotations = {{10, 1}, {200, 0}};
  const auto vol = lv::build_feature_volume(rec);
  const auto bytes = lv::encode_volume(vol);
  const auto back = lv::decode_volume(std::span<const char>(bytes.data(), bytes.size()));
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.samples, 300u);
  EXPECT_EQ(back.labels, vol.labels);
  EXPECT_EQ(back.wave_counts, vol.wave_counts);
  ASSERT_EQ(back.annotations.size(), 2u);
  for (std::size_t i = 0; i < vol.data.size(); ++i) ASSERT_EQ(back.data[i], double(float(vol.data[i])));
  for (std::size_t t = 0; t < 300; ++t) EXPECT_EQ(back.at(1, t, lv::Raw), rec.at(1, t));
}
