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

#include <stdexcept>
#include <string>
#include <string_view>

namespace lvcade {

enum class ErrorKind {
  // signal-io
  FileNotFound,
  MalformedHeader,
  MixedRates,
  TruncatedRecords,
  HeaderPayloadMismatch,
  InvalidInput,
  // preprocess
  BandOutOfRange,
  UpsampleRequested,
  DegenerateStd,
  UnknownLabel,
  // longview
  CenterOutOfRange,
  // cadenet
  ShapeMismatch,
  NonFiniteProbability,
  NoForwardRecorded,
  // trainer
  NonFiniteLoss,
  EmptyDataset,
  // cli
  ConfigInvalid,
  CheckpointMissing,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::MixedRates: return "MixedRates";
    case ErrorKind::TruncatedRecords: return "TruncatedRecords";
    case ErrorKind::HeaderPayloadMismatch: return "HeaderPayloadMismatch";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::BandOutOfRange: return "BandOutOfRange";
    case ErrorKind::UpsampleRequested: return "UpsampleRequested";
    case ErrorKind::DegenerateStd: return "DegenerateStd";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::CenterOutOfRange: return "CenterOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteProbability: return "NonFiniteProbability";
    case ErrorKind::NoForwardRecorded: return "NoForwardRecorded";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::CheckpointMissing: return "CheckpointMissing";
  }
  return "Unknown";
}

/// Numerical failures map to a distinct CLI exit code from input errors.
constexpr bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::NonFiniteLoss || kind == ErrorKind::DegenerateStd ||
         kind == ErrorKind::NonFiniteProbability;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace lvcade
