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
#ifndef ULRSEG_CHECKPOINT_H_
#define ULRSEG_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ulrseg/autograd.h"

namespace ulrseg::checkpoint {

inline constexpr uint32_t kFormatVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary container: magic "ULRSEGCK", format version, the run-config text,
// string metadata and named tensor sections ("generator", "segmenter",
// "discriminator", "discriminator_rgb", "optimizer", "buffers", ...).
struct Checkpoint {
  uint32_t format_version = kFormatVersion;
  std::string config_text;
  std::map<std::string, std::string> metadata;
  std::map<std::string, NamedTensors> sections;

  bool Has(const std::string& section) const {
    return sections.count(section) > 0;
  }
  const NamedTensors& Section(const std::string& name) const;
  // Copy without optimizer state and training-only networks.
  Checkpoint InferenceOnly() const;
};

// Borrowed view of live tensors, saved without copying them.
using TensorRefs = std::vector<std::pair<std::string, const Tensor*>>;

struct CheckpointRefs {
  std::string config_text;
  std::map<std::string, std::string> metadata;
  std::map<std::string, TensorRefs> sections;
};

TensorRefs Refs(const nn::ParamList& params);
TensorRefs Refs(const nn::BufferList& buffers);

// Written to a temporary file and renamed into place.
void Save(const CheckpointRefs& ckpt, const std::filesystem::path& path);
void Save(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws std::runtime_error on I/O or format errors.
Checkpoint Load(const std::filesystem::path& path);

NamedTensors Capture(const nn::ParamList& params);
NamedTensors Capture(const nn::BufferList& buffers);
// Copies values by name. Every destination must be present with a matching
// shape; throws std::runtime_error naming the first offender otherwise.
void Restore(const NamedTensors& src, const nn::ParamList& params,
             const std::string& what);
void Restore(const NamedTensors& src, const nn::BufferList& buffers,
             const std::string& what);

}  // namespace ulrseg::checkpoint

#endif  // ULRSEG_CHECKPOINT_H_
