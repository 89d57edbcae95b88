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
#ifndef ULRSEG_TOOLS_CLI_COMMANDS_H_
#define ULRSEG_TOOLS_CLI_COMMANDS_H_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "ulrseg/datakit.h"
#include "ulrseg/metrics.h"
#include "ulrseg/navsim.h"
#include "ulrseg/run_config.h"
#include "ulrseg/trainer.h"

namespace ulrseg::cli {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

// Usage problems: bad flags, bad configs, missing prerequisites.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Entry point behind the `ulrseg` binary.
int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct EvalReport {
  std::vector<std::string> files;
  std::vector<metrics::MetricRow> rows;
  metrics::MetricRow aggregate;  // mean of rows
};

EvalReport EvaluateSplit(trainer::Pipeline& pipeline,
                         const std::vector<datakit::Sample>& samples,
                         const std::vector<std::string>& files,
                         const RunConfig& cfg);

// One JSON line per sample, then the aggregate line carrying the config
// echo and format version.
std::string EvalJsonl(const EvalReport& report, const RunConfig& cfg,
                      const std::string& split, const std::string& checkpoint);

// Render -> downsample to the LR size -> generate -> segment.
navsim::Perception ModelPerception(const srgen::Generator& gen, segnet::SegNet& seg,
                                   int64_t lr_size);

// Markdown table with one row per target and one column per start.
std::string NavTable(const navsim::World& world, const navsim::ProtocolSummary& sum);

}  // namespace ulrseg::cli

#endif  // ULRSEG_TOOLS_CLI_COMMANDS_H_
