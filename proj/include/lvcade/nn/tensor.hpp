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
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lvcade/error.hpp"
#include "lvcade/random.hpp"

namespace lvcade::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape))
      throw Error(ErrorKind::ShapeMismatch, "value count does not match shape " + shape_string(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void expect_shape(const Tensor& t, const Shape& s, const char* where) {
  if (t.shape != s)
    throw Error(ErrorKind::ShapeMismatch,
                std::string(where) + ": expected " + shape_string(s) + ", got " + shape_string(t.shape));
}

inline void expect_rank(const Tensor& t, std::size_t rank, const char* where) {
  if (t.shape.size() != rank)
    throw Error(ErrorKind::ShapeMismatch, std::string(where) + ": expected rank " + std::to_string(rank) +
                                              ", got " + shape_string(t.shape));
}

inline void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

/// Learnable array with its gradient. Buffers (running statistics) share the
/// type but are never handed to the optimizer.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Forward-pass mode. Training uses batch statistics and dropout.
struct Context {
  bool training = false;
  Rng* rng = nullptr;
};

/// [B, C, L, D] -> [B*C, D, L]
inline Tensor to_channels_first(const Tensor& z) {
  expect_rank(z, 4, "to_channels_first");
  const std::size_t b = z.dim(0), c = z.dim(1), l = z.dim(2), d = z.dim(3);
  Tensor out({b * c, d, l});
  for (std::size_t n = 0; n < b * c; ++n)
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t k = 0; k < d; ++k) out.data[(n * d + k) * l + t] = z.data[(n * l + t) * d + k];
  return out;
}

/// [B*C, D, L] -> [B, C, L, D]
inline Tensor to_channels_last(const Tensor& y, std::size_t b, std::size_t c) {
  expect_rank(y, 3, "to_channels_last");
  const std::size_t d = y.dim(1), l = y.dim(2);
  if (y.dim(0) != b * c) throw Error(ErrorKind::ShapeMismatch, "to_channels_last: batch*spatial mismatch");
  Tensor out({b, c, l, d});
  for (std::size_t n = 0; n < b * c; ++n)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t t = 0; t < l; ++t) out.data[(n * l + t) * d + k] = y.data[(n * d + k) * l + t];
  return out;
}

}  // namespace lvcade::nn
