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

// lvcade command-line tool.
//
//   lvcade synth       --config C --out DIR
//   lvcade preprocess  --in REC --out REC [--modality eeg|meg] [--montage M]
//   lvcade featurize   --in REC --out VOL [--window W] [--clips SET --length L]
//   lvcade train       --config C --train SET --val SET --out STEM
//   lvcade evaluate    --checkpoint STEM --data SET [--out JSON]
//   lvcade predict     --checkpoint STEM --data SET --out CSV
//   lvcade repeat      --config C --pool SET --test SET --seeds 1,2,3 [--out JSON]
//
// Failures print one JSON object on stderr and exit 2 (input) or 3
// (numerical). Every written artifact gets a `.provenance.json` sidecar.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvcade/error.hpp"
#include "lvcade/longview.hpp"
#include "lvcade/metrics.hpp"
#include "lvcade/nn/cadenet.hpp"
#include "lvcade/preprocess.hpp"
#include "lvcade/signal_io.hpp"
#include "lvcade/synth.hpp"
#include "lvcade/trainer.hpp"

#ifndef LVCADE_VERSION
#define LVCADE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using lvcade::Error;
using lvcade::ErrorKind;

namespace {

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::InvalidInput, "sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string file_sha256(const fs::path& p) {
  const auto bytes = lvcade::io::read_file(p);
  return sha256_hex(std::string_view(bytes.data(), bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  lvcade::io::write_file(p, text);
}

void write_provenance(const fs::path& out, const std::string& command, const json& settings,
                      const std::vector<fs::path>& inputs) {
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"sha256", file_sha256(p)}});
  const json doc{{"tool", "lvcade"},
                 {"version", LVCADE_VERSION},
                 {"command", command},
                 {"settings", settings},
                 {"settings_sha256", sha256_hex(settings.dump())},
                 {"inputs", in}};
  write_text(fs::path(out.string() + ".provenance.json"), doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string modality = "eeg";
  lvcade::preprocess::FilterSpec filter = lvcade::preprocess::FilterSpec::eeg();
  double target_rate = 200.0;
  std::string zscore = "file";
  std::optional<lvcade::preprocess::MontageSpec> montage;
  lvcade::longview::LongViewOptions longview;
  lvcade::synth::SynthSpec synth;
  lvcade::nn::ModelConfig model;
  lvcade::train::TrainConfig train;
  bool raw_only = false;

  void set_modality(const std::string& m) {
    if (m == "eeg") {
      filter = lvcade::preprocess::FilterSpec::eeg();
      target_rate = 200.0;
    } else if (m == "meg") {
      filter = lvcade::preprocess::FilterSpec::meg();
      target_rate = 250.0;
    } else {
      throw Error(ErrorKind::ConfigInvalid, "modality must be 'eeg' or 'meg', got '" + m + "'");
    }
    modality = m;
  }
};

json filter_json(const lvcade::preprocess::FilterSpec& f) {
  return {{"low_hz", f.low_hz},
          {"high_hz", f.high_hz},
          {"notch_hz", f.notch_hz},
          {"notch_bandwidth_hz", f.notch_bandwidth_hz},
          {"order", f.order}};
}

json load_json(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorKind::FileNotFound, p.string());
  const auto bytes = lvcade::io::read_file(p);
  try {
    return json::parse(std::string_view(bytes.data(), bytes.size()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, p.string() + ": " + e.what());
  }
}

PipelineConfig pipeline_config(const std::string& path) {
  PipelineConfig c;
  if (path.empty()) return c;
  const json j = load_json(path);
  if (!j.is_object()) throw Error(ErrorKind::ConfigInvalid, "config must be a JSON object");
  static const std::vector<std::string> known{"seed",     "modality", "filter", "target_rate", "zscore",  "montage",
                                              "longview", "synth",    "model",  "train",       "raw_only"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw Error(ErrorKind::ConfigInvalid, "unknown config key '" + k + "'");
  try {
    c.seed = j.value("seed", c.seed);
    c.set_modality(j.value("modality", c.modality));
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      c.filter.low_hz = f.value("low_hz", c.filter.low_hz);
      c.filter.high_hz = f.value("high_hz", c.filter.high_hz);
      c.filter.notch_hz = f.value("notch_hz", c.filter.notch_hz);
      c.filter.notch_bandwidth_hz = f.value("notch_bandwidth_hz", c.filter.notch_bandwidth_hz);
      c.filter.order = f.value("order", c.filter.order);
    }
    c.target_rate = j.value("target_rate", c.target_rate);
    c.zscore = j.value("zscore", c.zscore);
    if (j.contains("montage")) c.montage = lvcade::preprocess::MontageSpec::from_json(j["montage"]);
    if (j.contains("longview")) {
      c.longview.window = j["longview"].value("window", c.longview.window);
      c.longview.absolute_amplitude = j["longview"].value("absolute_amplitude", c.longview.absolute_amplitude);
    }
    if (j.contains("synth")) c.synth = lvcade::synth::synth_spec_from_json(j["synth"]);
    if (j.contains("model")) c.model = lvcade::nn::model_config_from_json(j["model"]);
    if (j.contains("train")) c.train = lvcade::train::train_config_from_json(j["train"]);
    c.raw_only = j.value("raw_only", c.raw_only);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("config: ") + e.what());
  }
  return c;
}

lvcade::preprocess::ZScoreMode zscore_mode(const std::string& s) {
  if (s == "file") return lvcade::preprocess::ZScoreMode::File;
  if (s == "channel") return lvcade::preprocess::ZScoreMode::PerChannel;
  throw Error(ErrorKind::ConfigInvalid, "zscore must be 'file' or 'channel'");
}

lvcade::synth::Dataset load_dataset(const std::string& path, bool raw_only) {
  if (!fs::exists(path)) throw Error(ErrorKind::FileNotFound, path);
  auto d = lvcade::synth::read_dataset(path);
  if (d.empty()) throw Error(ErrorKind::EmptyDataset, path + " holds no clips");
  return raw_only ? lvcade::synth::raw_only(std::move(d)) : d;
}

lvcade::nn::CadeNet build_model(const PipelineConfig& c, const lvcade::synth::Dataset& d, std::uint64_t seed) {
  auto cfg = c.model;
  cfg.in_features = lvcade::longview::kFeatureCount;
  return lvcade::nn::CadeNet(cfg, d.clips.front().channels, d.clips.front().length, seed);
}

json load_manifest_extra(const std::string& stem) {
  const auto m = lvcade::nn::manifest_path(stem);
  if (!fs::exists(m)) throw Error(ErrorKind::CheckpointMissing, stem);
  return load_json(m).value("extra", json::object());
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Options {
  std::string config, in, out, montage, modality, zscore, train, val, data, checkpoint, pool, test, clips, preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> window, length, epochs, batch_size, patience;
  std::optional<double> lr, rate;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  bool raw_only = false, context = false, absolute = false;
};

int cmd_synth(const Options& o) {
  auto c = pipeline_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.context) c.synth.context_dependent = true;
  c.synth.validate();
  const auto splits = lvcade::synth::synth_dataset(c.synth, c.seed);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const json settings{{"seed", c.seed}, {"synth", lvcade::synth::to_json(c.synth)}};
  for (const auto& [name, set] : {std::pair{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}) {
    const fs::path p = dir / (std::string(name) + ".lvc");
    lvcade::synth::write_dataset(*set, p);
    write_provenance(p, "synth", settings, {});
  }
  std::cout << json{{"train", splits.train.size()}, {"val", splits.val.size()}, {"test", splits.test.size()}}.dump()
            << "\n";
  return 0;
}

int cmd_preprocess(const Options& o) {
  auto c = pipeline_config(o.config);
  if (!o.modality.empty()) c.set_modality(o.modality);
  if (o.rate) c.target_rate = *o.rate;
  if (!o.zscore.empty()) c.zscore = o.zscore;
  if (!o.montage.empty()) c.montage = lvcade::preprocess::MontageSpec::from_json(load_json(o.montage));
  if (!fs::exists(o.in)) throw Error(ErrorKind::FileNotFound, o.in);
  auto rec = lvcade::io::read_any(o.in);
  if (c.montage) rec = lvcade::preprocess::bipolar_montage(rec, *c.montage);
  const auto out = lvcade::preprocess::run_pipeline(rec, c.filter, c.target_rate, zscore_mode(c.zscore), o.jobs);
  write_text(o.out, lvcade::io::encode_native(out));
  json montage = nullptr;
  if (c.montage) {
    montage = json::array();
    for (const auto& p : c.montage->pairs) montage.push_back({{"anode", p.anode}, {"cathode", p.cathode}, {"out", p.out}});
  }
  write_provenance(o.out, "preprocess",
                   {{"modality", c.modality},
                    {"filter", filter_json(c.filter)},
                    {"target_rate", c.target_rate},
                    {"zscore", c.zscore},
                    {"montage", montage}},
                   {o.in});
  std::cout << json{{"channels", out.channels}, {"samples", out.samples}, {"rate", out.rate}}.dump() << "\n";
  return 0;
}

int cmd_featurize(const Options& o) {
  auto c = pipeline_config(o.config);
  if (o.window) c.longview.window = *o.window;
  if (o.absolute) c.longview.absolute_amplitude = true;
  if (!fs::exists(o.in)) throw Error(ErrorKind::FileNotFound, o.in);
  const auto rec = lvcade::io::read_native(o.in);
  const auto vol = lvcade::longview::build_feature_volume(rec, c.longview, o.jobs);
  write_text(o.out, lvcade::longview::encode_volume(vol));
  const json settings{{"window", c.longview.window}, {"absolute_amplitude", c.longview.absolute_amplitude}};
  write_provenance(o.out, "featurize", settings, {o.in});
  std::cerr << json{{"wave_counts", vol.wave_counts}}.dump() << "\n";
  json summary{{"shape", {vol.channels, vol.samples, lvcade::longview::kFeatureCount}}};
  if (!o.clips.empty()) {
    if (!o.length) throw Error(ErrorKind::ConfigInvalid, "--clips needs --length");
    const auto d = lvcade::synth::dataset_from_volume(vol, *o.length);
    lvcade::synth::write_dataset(d, o.clips);
    write_provenance(o.clips, "featurize", {{"window", c.longview.window}, {"length", *o.length}}, {o.in});
    summary["clips"] = d.size();
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

void apply_train_overrides(PipelineConfig& c, const Options& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.train.max_epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.patience) c.train.patience = *o.patience;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (!o.preset.empty()) {
    const auto classes = c.model.classes;
    c.model = lvcade::nn::ModelConfig::preset(o.preset);
    c.model.classes = std::max(classes, c.model.classes);
  }
  if (o.raw_only) c.raw_only = true;
  c.train.seed = c.seed;
  c.train.validate();
}

int cmd_train(const Options& o) {
  auto c = pipeline_config(o.config);
  apply_train_overrides(c, o);
  const auto tr = load_dataset(o.train, c.raw_only);
  const auto va = load_dataset(o.val, c.raw_only);
  auto model = build_model(c, tr, c.seed);
  std::string history;
  const auto res = lvcade::train::train(model, tr, va, c.train, [&](const lvcade::train::EpochRecord& r) {
    const auto line = lvcade::train::to_json(r).dump();
    history += line + "\n";
    std::cerr << line << "\n";
  });
  const json extra{{"raw_only", c.raw_only}, {"best_epoch", res.best_epoch}};
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  lvcade::nn::save_checkpoint(model, o.out, extra);
  write_text(o.out + ".history.jsonl", history);
  write_provenance(o.out, "train",
                   {{"seed", c.seed},
                    {"raw_only", c.raw_only},
                    {"model", lvcade::nn::to_json(model.config())},
                    {"train", lvcade::train::to_json(c.train)}},
                   {o.train, o.val});
  std::cout << json{{"best_epoch", res.best_epoch},
                    {"epochs", res.history.size()},
                    {"stopped_early", res.stopped_early},
                    {"val", lvcade::to_json(res.history[res.best_epoch].val)}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  const bool raw = load_manifest_extra(o.checkpoint).value("raw_only", false) || o.raw_only;
  auto model = lvcade::nn::load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o.data, raw);
  const auto text = lvcade::to_json(lvcade::train::evaluate(model, data)).dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
    write_provenance(o.out, "evaluate", {{"checkpoint", o.checkpoint}, {"raw_only", raw}},
                     {lvcade::nn::manifest_path(o.checkpoint), lvcade::nn::payload_path(o.checkpoint), o.data});
  }
  return 0;
}

int cmd_predict(const Options& o) {
  const bool raw = load_manifest_extra(o.checkpoint).value("raw_only", false) || o.raw_only;
  auto model = lvcade::nn::load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o.data, raw);
  const auto pred = lvcade::train::predict(model, data);
  std::ostringstream csv;
  csv << "clip_index,center,predicted_class";
  for (std::size_t k = 0; k < model.config().classes; ++k) csv << ",prob_" << k;
  csv << "\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv << i << "," << data.clips[i].center << "," << pred.classes[i];
    for (double p : pred.probabilities[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", p);
      csv << "," << buf;
    }
    csv << "\n";
  }
  write_text(o.out, csv.str());
  write_provenance(o.out, "predict", {{"checkpoint", o.checkpoint}, {"raw_only", raw}},
                   {lvcade::nn::manifest_path(o.checkpoint), lvcade::nn::payload_path(o.checkpoint), o.data});
  return 0;
}

int cmd_repeat(const Options& o) {
  auto c = pipeline_config(o.config);
  apply_train_overrides(c, o);
  const auto pool = load_dataset(o.pool, c.raw_only);
  const auto test = load_dataset(o.test, c.raw_only);
  const auto factory = [&](std::uint64_t seed) { return build_model(c, pool, seed); };
  const auto rep = lvcade::train::repeat_protocol(factory, pool, test, c.train, o.seeds, 0.2,
                                                  [](std::size_t r, const lvcade::MetricsReport& m) {
                                                    std::cerr << json{{"run", r}, {"test", lvcade::to_json(m)}}.dump()
                                                              << "\n";
                                                  });
  const auto text = lvcade::train::to_json(rep).dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
    write_provenance(o.out, "repeat",
                     {{"seeds", o.seeds}, {"raw_only", c.raw_only}, {"model", lvcade::nn::to_json(c.model)},
                      {"train", lvcade::train::to_json(c.train)}},
                     {o.pool, o.test});
  }
  return 0;
}

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lvcade: long-view spike features and the CadeNet classifier"};
  app.set_version_flag("--version", LVCADE_VERSION);
  app.require_subcommand(1);
  Options o;

  auto jobs = [&](CLI::App* s) { s->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber); };
  auto training = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "Seed for data order and initialization");
    s->add_option("--epochs", o.epochs, "Maximum epochs");
    s->add_option("--batch-size", o.batch_size, "Batch size");
    s->add_option("--patience", o.patience, "Early-stopping patience");
    s->add_option("--lr", o.lr, "Initial learning rate");
    s->add_option("--preset", o.preset, "Model preset: desk, tiny, standard, large");
    s->add_flag("--raw-only", o.raw_only, "Replace the six long-view features with the raw signal");
  };

  auto* synth = app.add_subcommand("synth", "Generate synthetic train/val/test clip sets");
  synth->add_option("--config", o.config, "Pipeline config JSON");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--seed", o.seed, "Seed");
  synth->add_flag("--context", o.context, "Context-dependent regime");

  auto* pre = app.add_subcommand("preprocess", "Montage, band-pass, notch, resample, z-score");
  pre->add_option("--config", o.config, "Pipeline config JSON");
  pre->add_option("--in", o.in, "EDF or native recording")->required();
  pre->add_option("--out", o.out, "Native recording")->required();
  pre->add_option("--modality", o.modality, "eeg or meg")->check(CLI::IsMember({"eeg", "meg"}));
  pre->add_option("--montage", o.montage, "Bipolar montage JSON");
  pre->add_option("--rate", o.rate, "Target rate override");
  pre->add_option("--zscore", o.zscore, "file or channel")->check(CLI::IsMember({"file", "channel"}));
  jobs(pre);

  auto* feat = app.add_subcommand("featurize", "Raw signal plus six long-view features");
  feat->add_option("--config", o.config, "Pipeline config JSON");
  feat->add_option("--in", o.in, "Preprocessed native recording")->required();
  feat->add_option("--out", o.out, "Feature volume")->required();
  feat->add_option("--window", o.window, "Normalization window in waves");
  feat->add_flag("--abs", o.absolute, "Use absolute right amplitude");
  feat->add_option("--clips", o.clips, "Also write a clip set around each annotation");
  feat->add_option("--length", o.length, "Clip length in samples");
  jobs(feat);

  auto* train = app.add_subcommand("train", "Train a model and save the best checkpoint");
  train->add_option("--config", o.config, "Pipeline config JSON");
  train->add_option("--train", o.train, "Training clip set")->required();
  train->add_option("--val", o.val, "Validation clip set")->required();
  train->add_option("--out", o.out, "Checkpoint stem")->required();
  training(train);
  jobs(train);

  auto* eval = app.add_subcommand("evaluate", "Metrics of a checkpoint on a clip set");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint stem")->required();
  eval->add_option("--data", o.data, "Clip set")->required();
  eval->add_option("--out", o.out, "Metrics JSON (stdout if omitted)");
  eval->add_flag("--raw-only", o.raw_only, "Replace features with the raw signal");

  auto* pred = app.add_subcommand("predict", "Per-clip class probabilities as CSV");
  pred->add_option("--checkpoint", o.checkpoint, "Checkpoint stem")->required();
  pred->add_option("--data", o.data, "Clip set")->required();
  pred->add_option("--out", o.out, "CSV path")->required();
  pred->add_flag("--raw-only", o.raw_only, "Replace features with the raw signal");

  auto* rep = app.add_subcommand("repeat", "Repeated training runs with mean and std of test metrics");
  rep->add_option("--config", o.config, "Pipeline config JSON");
  rep->add_option("--pool", o.pool, "Clip set split into train and validation per run")->required();
  rep->add_option("--test", o.test, "Fixed test clip set")->required();
  rep->add_option("--seeds", o.seeds, "Run seeds")->required()->delimiter(',');
  rep->add_option("--out", o.out, "Report JSON (stdout if omitted)");
  training(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 2);
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*pre) return cmd_preprocess(o);
    if (*feat) return cmd_featurize(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_evaluate(o);
    if (*pred) return cmd_predict(o);
    if (*rep) return cmd_repeat(o);
  } catch (const Error& e) {
    return fail(lvcade::to_string(e.kind()), e.detail(), lvcade::is_numerical(e.kind()) ? 3 : 2);
  } catch (const json::exception& e) {
    return fail("ConfigInvalid", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("InvalidInput", e.what(), 2);
  }
  return 2;
}
