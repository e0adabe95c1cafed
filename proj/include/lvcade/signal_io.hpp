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
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lvcade/error.hpp"
#include "lvcade/recording.hpp"

namespace lvcade::io {

static_assert(std::endian::native == std::endian::little,
              "payload codecs assume a little-endian host");

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::InvalidInput, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// EDF subset: continuous records, one shared sampling rate, 16-bit samples.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\0')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
  return s;
}

inline double ascii_number(std::string_view field, std::string_view what) {
  const auto s = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
    throw Error(ErrorKind::MalformedHeader,
                "non-numeric " + std::string(what) + " field '" + std::string(field) + "'");
  return value;
}

inline long ascii_integer(std::string_view field, std::string_view what) {
  const double v = ascii_number(field, what);
  if (v != std::floor(v))
    throw Error(ErrorKind::MalformedHeader,
                "non-integer " + std::string(what) + " field '" + std::string(field) + "'");
  return static_cast<long>(v);
}

inline std::string ascii_field(std::string_view value, std::size_t width) {
  std::string s(value.substr(0, width));
  s.resize(width, ' ');
  return s;
}

inline std::string ascii_number_field(double v, std::size_t width) {
  std::ostringstream os;
  os << std::setprecision(static_cast<int>(width)) << v;
  auto s = os.str();
  if (s.size() > width) s = s.substr(0, width);
  return ascii_field(s, width);
}

}  // namespace detail

/// Per-signal linear map from stored integers to physical units.
struct EdfScaling {
  double phys_min = -1.0;
  double phys_max = 1.0;
  double dig_min = -32768.0;
  double dig_max = 32767.0;

  double gain() const { return (phys_max - phys_min) / (dig_max - dig_min); }
  double physical(double digital) const { return (digital - dig_min) * gain() + phys_min; }
};

inline constexpr std::size_t kEdfFixedHeader = 256;
inline constexpr std::size_t kEdfSignalHeader = 256;

inline Recording parse_edf(std::span<const char> bytes) {
  if (bytes.size() < kEdfFixedHeader)
    throw Error(ErrorKind::MalformedHeader,
                "file shorter than the 256-byte fixed header (" + std::to_string(bytes.size()) + ")");
  const std::string_view head(bytes.data(), kEdfFixedHeader);
  const auto version = detail::trim(head.substr(0, 8));
  if (version != "0") throw Error(ErrorKind::MalformedHeader, "unsupported version '" + std::string(version) + "'");

  const long header_bytes = detail::ascii_integer(head.substr(184, 8), "header bytes");
  long n_records = detail::ascii_integer(head.substr(236, 8), "number of records");
  const double duration = detail::ascii_number(head.substr(244, 8), "record duration");
  const long ns = detail::ascii_integer(head.substr(252, 4), "signal count");
  if (ns < 1) throw Error(ErrorKind::MalformedHeader, "signal count must be >= 1");
  if (!(duration > 0.0)) throw Error(ErrorKind::MalformedHeader, "record duration must be > 0");

  const std::size_t nsig = static_cast<std::size_t>(ns);
  const std::size_t expected_header = kEdfFixedHeader + nsig * kEdfSignalHeader;
  if (header_bytes != static_cast<long>(expected_header))
    throw Error(ErrorKind::MalformedHeader,
                "header byte count " + std::to_string(header_bytes) + " != " + std::to_string(expected_header));
  if (bytes.size() < expected_header)
    throw Error(ErrorKind::TruncatedRecords, "file ends inside the signal headers");

  const std::string_view sig(bytes.data() + kEdfFixedHeader, nsig * kEdfSignalHeader);
  // Signal header fields are stored field-major: all labels, then all transducers, ...
  auto field = [&](std::size_t offset, std::size_t width, std::size_t i) {
    return sig.substr(offset * nsig + i * width, width);
  };
  std::vector<std::string> labels(nsig);
  std::vector<EdfScaling> scale(nsig);
  std::vector<long> spr(nsig);
  for (std::size_t i = 0; i < nsig; ++i) {
    labels[i] = std::string(detail::trim(field(0, 16, i)));
    scale[i].phys_min = detail::ascii_number(field(16 + 80 + 8, 8, i), "physical minimum");
    scale[i].phys_max = detail::ascii_number(field(16 + 80 + 8 + 8, 8, i), "physical maximum");
    scale[i].dig_min = detail::ascii_number(field(16 + 80 + 8 + 16, 8, i), "digital minimum");
    scale[i].dig_max = detail::ascii_number(field(16 + 80 + 8 + 24, 8, i), "digital maximum");
    spr[i] = detail::ascii_integer(field(16 + 80 + 8 + 32 + 80, 8, i), "samples per record");
    if (scale[i].dig_max == scale[i].dig_min)
      throw Error(ErrorKind::MalformedHeader, "signal '" + labels[i] + "' has digital min == max");
    if (spr[i] < 1)
      throw Error(ErrorKind::MalformedHeader, "signal '" + labels[i] + "' has no samples per record");
  }
  for (std::size_t i = 1; i < nsig; ++i)
    if (spr[i] != spr[0])
      throw Error(ErrorKind::MixedRates, "signal '" + labels[i] + "' has " + std::to_string(spr[i]) +
                                             " samples/record, expected " + std::to_string(spr[0]));

  const std::size_t per_record = static_cast<std::size_t>(spr[0]);
  const std::size_t record_bytes = nsig * per_record * 2;
  const std::size_t available = bytes.size() - expected_header;
  if (n_records == -1) n_records = static_cast<long>(available / record_bytes);
  if (n_records < 1) throw Error(ErrorKind::MalformedHeader, "number of records must be >= 1");
  const std::size_t nrec = static_cast<std::size_t>(n_records);
  if (available < nrec * record_bytes)
    throw Error(ErrorKind::TruncatedRecords, "header promises " + std::to_string(nrec * record_bytes) +
                                                 " data bytes, file has " + std::to_string(available));

  Recording rec;
  rec.channels = nsig;
  rec.samples = nrec * per_record;
  rec.rate = static_cast<double>(per_record) / duration;
  rec.labels = std::move(labels);
  rec.data.assign(rec.channels * rec.samples, 0.0);
  const char* p = bytes.data() + expected_header;
  for (std::size_t r = 0; r < nrec; ++r) {
    for (std::size_t c = 0; c < nsig; ++c) {
      for (std::size_t s = 0; s < per_record; ++s, p += 2) {
        std::int16_t d;
        std::memcpy(&d, p, 2);
        rec.at(c, r * per_record + s) = scale[c].physical(static_cast<double>(d));
      }
    }
  }
  return rec;
}

inline Recording read_edf(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_edf(bytes);
}

/// Writes the same EDF subset `read_edf` accepts. Physical values are
/// quantized to 16 bits through `scaling`, which is shared by all signals.
inline std::string encode_edf(const Recording& rec, double record_seconds, const EdfScaling& scaling) {
  const double per_record_d = rec.rate * record_seconds;
  const auto per_record = static_cast<std::size_t>(std::llround(per_record_d));
  if (per_record < 1 || std::abs(per_record_d - static_cast<double>(per_record)) > 1e-9 ||
      rec.samples % per_record != 0)
    throw Error(ErrorKind::InvalidInput, "record length must divide the recording evenly");
  const std::size_t nsig = rec.channels;
  const std::size_t nrec = rec.samples / per_record;
  using detail::ascii_field;
  using detail::ascii_number_field;

  std::string out;
  out += ascii_field("0", 8);
  out += ascii_field("X X X X", 80);
  out += ascii_field("Startdate X X X X", 80);
  out += ascii_field("01.01.00", 8);
  out += ascii_field("00.00.00", 8);
  out += ascii_number_field(static_cast<double>(kEdfFixedHeader + nsig * kEdfSignalHeader), 8);
  out += ascii_field("", 44);
  out += ascii_number_field(static_cast<double>(nrec), 8);
  out += ascii_number_field(record_seconds, 8);
  out += ascii_number_field(static_cast<double>(nsig), 4);
  auto each = [&](auto&& fn) {
    for (std::size_t i = 0; i < nsig; ++i) out += fn(i);
  };
  each([&](std::size_t i) { return ascii_field(rec.labels[i], 16); });
  each([&](std::size_t) { return ascii_field("", 80); });
  each([&](std::size_t) { return ascii_field("uV", 8); });
  each([&](std::size_t) { return ascii_number_field(scaling.phys_min, 8); });
  each([&](std::size_t) { return ascii_number_field(scaling.phys_max, 8); });
  each([&](std::size_t) { return ascii_number_field(scaling.dig_min, 8); });
  each([&](std::size_t) { return ascii_number_field(scaling.dig_max, 8); });
  each([&](std::size_t) { return ascii_field("", 80); });
  each([&](std::size_t) { return ascii_number_field(static_cast<double>(per_record), 8); });
  each([&](std::size_t) { return ascii_field("", 32); });

  const double inv_gain = 1.0 / scaling.gain();
  for (std::size_t r = 0; r < nrec; ++r) {
    for (std::size_t c = 0; c < nsig; ++c) {
      for (std::size_t s = 0; s < per_record; ++s) {
        double d = std::round((rec.at(c, r * per_record + s) - scaling.phys_min) * inv_gain + scaling.dig_min);
        d = std::clamp(d, scaling.dig_min, scaling.dig_max);
        const auto v = static_cast<std::int16_t>(d);
        char b[2];
        std::memcpy(b, &v, 2);
        out.append(b, 2);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation sidecar: CSV with header `sample_index,class_id`.
// ---------------------------------------------------------------------------

inline std::vector<Annotation> parse_annotations_csv(std::string_view text) {
  std::vector<Annotation> out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      if (detail::trim(line) != "sample_index,class_id")
        throw Error(ErrorKind::MalformedHeader, "annotation CSV must start with 'sample_index,class_id'");
      header = false;
      continue;
    }
    if (detail::trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorKind::MalformedHeader, "annotation line " + std::to_string(lineno) + " lacks a comma");
    const long idx = detail::ascii_integer(std::string_view(line).substr(0, comma), "sample_index");
    const long cls = detail::ascii_integer(std::string_view(line).substr(comma + 1), "class_id");
    if (idx < 0 || cls < 0)
      throw Error(ErrorKind::MalformedHeader, "negative value on annotation line " + std::to_string(lineno));
    out.push_back({static_cast<std::size_t>(idx), static_cast<int>(cls)});
  }
  if (header) throw Error(ErrorKind::MalformedHeader, "empty annotation CSV");
  return out;
}

inline std::vector<Annotation> read_annotations_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_annotations_csv(std::string_view(bytes.data(), bytes.size()));
}

inline std::string encode_annotations_csv(std::span<const Annotation> annotations) {
  std::string out = "sample_index,class_id\n";
  for (const auto& a : annotations) out += std::to_string(a.sample) + "," + std::to_string(a.class_id) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Native container: magic, u64 header length, JSON header, f32 payload.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kNativeMagic = "LVCNAT1\n";

struct NativeFile {
  nlohmann::json header;
  std::vector<float> payload;
};

inline std::string encode_container(const nlohmann::json& header, std::span<const float> payload) {
  const std::string h = header.dump();
  std::string out(kNativeMagic);
  const std::uint64_t len = h.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += h;
  out.append(reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(float));
  return out;
}

/// Header of a container, without checking the payload.
inline nlohmann::json container_header(std::span<const char> bytes, std::size_t* payload_offset = nullptr) {
  if (bytes.size() < kNativeMagic.size() + 8 ||
      std::string_view(bytes.data(), kNativeMagic.size()) != kNativeMagic)
    throw Error(ErrorKind::InvalidInput, "not a native container (bad magic)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kNativeMagic.size(), sizeof len);
  const std::size_t body = kNativeMagic.size() + sizeof len;
  if (len > bytes.size() - body) throw Error(ErrorKind::MalformedHeader, "header length exceeds file size");
  if (payload_offset) *payload_offset = body + len;
  try {
    return nlohmann::json::parse(std::string_view(bytes.data() + body, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, std::string("header JSON: ") + e.what());
  }
}

/// Splits a container. The payload must hold exactly the number of floats
/// `count` derives from the header.
template <typename CountFn>
NativeFile decode_container(std::span<const char> bytes, CountFn&& count) {
  std::size_t offset = 0;
  NativeFile f;
  f.header = container_header(bytes, &offset);
  const std::size_t values = count(f.header);
  const std::size_t payload_bytes = bytes.size() - offset;
  if (payload_bytes != values * sizeof(float))
    throw Error(ErrorKind::HeaderPayloadMismatch, "header implies " + std::to_string(values * sizeof(float)) +
                                                      " payload bytes, found " + std::to_string(payload_bytes));
  f.payload.resize(values);
  std::memcpy(f.payload.data(), bytes.data() + offset, payload_bytes);
  return f;
}

inline nlohmann::json recording_header(const Recording& rec) {
  nlohmann::json ann = nlohmann::json::array();
  for (const auto& a : rec.annotations) ann.push_back({a.sample, a.class_id});
  return {{"kind", "recording"}, {"dtype", "f32"},      {"rate", rec.rate},
          {"channels", rec.channels}, {"samples", rec.samples}, {"labels", rec.labels},
          {"annotations", ann}};
}

inline std::string encode_native(const Recording& rec) {
  std::vector<float> payload(rec.data.size());
  std::transform(rec.data.begin(), rec.data.end(), payload.begin(),
                 [](double v) { return static_cast<float>(v); });
  return encode_container(recording_header(rec), payload);
}

inline void write_native(const Recording& rec, const std::filesystem::path& path) {
  write_file(path, encode_native(rec));
}

namespace detail {

template <typename T>
T header_field(const nlohmann::json& h, const char* key) {
  if (!h.contains(key)) throw Error(ErrorKind::MalformedHeader, std::string("header lacks '") + key + "'");
  try {
    return h.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::MalformedHeader, std::string("header field '") + key + "' has the wrong type");
  }
}

inline void require_kind(const nlohmann::json& h, std::string_view kind) {
  const auto k = header_field<std::string>(h, "kind");
  if (k != kind)
    throw Error(ErrorKind::InvalidInput, "expected a '" + std::string(kind) + "' container, found '" + k + "'");
  if (header_field<std::string>(h, "dtype") != "f32")
    throw Error(ErrorKind::MalformedHeader, "only dtype f32 is supported");
}

}  // namespace detail

inline std::string container_kind(std::span<const char> bytes) {
  return detail::header_field<std::string>(container_header(bytes), "kind");
}

inline Recording decode_native(std::span<const char> bytes) {
  const auto f = decode_container(bytes, [](const nlohmann::json& h) {
    detail::require_kind(h, "recording");
    return detail::header_field<std::size_t>(h, "channels") * detail::header_field<std::size_t>(h, "samples");
  });
  Recording rec;
  rec.channels = detail::header_field<std::size_t>(f.header, "channels");
  rec.samples = detail::header_field<std::size_t>(f.header, "samples");
  rec.rate = detail::header_field<double>(f.header, "rate");
  rec.labels = detail::header_field<std::vector<std::string>>(f.header, "labels");
  for (const auto& a : detail::header_field<nlohmann::json>(f.header, "annotations"))
    rec.annotations.push_back({a.at(0).get<std::size_t>(), a.at(1).get<int>()});
  rec.data.assign(f.payload.begin(), f.payload.end());
  return rec;
}

inline Recording read_native(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_native(bytes);
}

/// EDF by extension, native container otherwise.
inline Recording read_any(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".edf" ? read_edf(path) : read_native(path);
}

}  // namespace lvcade::io
