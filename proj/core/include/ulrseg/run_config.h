/* Copyright 2026 The ulrseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ULRSEG_RUN_CONFIG_H_
#define ULRSEG_RUN_CONFIG_H_

#include <filesystem>
#include <string>
#include <vector>

#include "ulrseg/datakit.h"
#include "ulrseg/navsim.h"
#include "ulrseg/trainer.h"

namespace ulrseg {

// Environment variable that overrides RunConfig::output_root.
inline constexpr const char* kOutputRootEnv = "ULRSEG_OUTPUT_ROOT";
// Version tag written into every artifact.
inline constexpr int kArtifactFormatVersion = 1;

struct NavSettings {
  navsim::NavConfig nav;
  std::string worlds_dir = "data/worlds";
  // World used by the repeated-trial protocol, relative to worlds_dir.
  std::string world = "world_00.txt";
  int repeats = 5;
  double noise = 0.1;
  int threads = 1;
};

struct EvalSettings {
  // Boundary F tolerance in pixels; negative selects the diagonal default.
  double bf_tolerance = -1.0;
};

// Everything a command needs. Generator input size and scale, segmenter
// class count, ignore index and the navigation image size are taken from
// the dataset section so they cannot disagree.
struct RunConfig {
  std::string name = "run";
  std::string output_root = "runs";
  datakit::DatasetSpec data;
  // Dataset directory; relative paths are resolved against the run root.
  std::string data_dir = "data";
  trainer::ModelConfig model;
  trainer::TrainConfig train;
  NavSettings nav;
  EvalSettings eval;

  // Copies the shared dataset fields into the model and nav sections.
  void Sync();
  // Throws InvalidArgument on any inconsistency.
  void Validate() const;
  // Canonical JSON rendering; parsing it back yields an equal config.
  std::string ToText() const;
};

// Parses a JSON config ('//' comments allowed) on top of the defaults.
// Every `overrides` entry has the form "section.key=value" with a JSON value
// (bare words are taken as strings). Unknown keys, malformed values and
// failed validation raise InvalidArgument.
RunConfig ParseRunConfig(const std::string& text,
                         const std::vector<std::string>& overrides = {});
RunConfig LoadRunConfig(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});

// $ULRSEG_OUTPUT_ROOT when set and non-empty, else cfg.output_root.
std::filesystem::path OutputRoot(const RunConfig& cfg);
// OutputRoot / name.
std::filesystem::path RunDir(const RunConfig& cfg);
std::filesystem::path DataDir(const RunConfig& cfg);

}  // namespace ulrseg

#endif  // ULRSEG_RUN_CONFIG_H_
