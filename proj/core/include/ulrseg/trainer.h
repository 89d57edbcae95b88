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
#ifndef ULRSEG_TRAINER_H_
#define ULRSEG_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulrseg/adam.h"
#include "ulrseg/afe.h"
#include "ulrseg/checkpoint.h"
#include "ulrseg/datakit.h"
#include "ulrseg/losses.h"
#include "ulrseg/sad.h"
#include "ulrseg/segnet.h"
#include "ulrseg/srgen.h"

// Two-stage optimisation: generator pretraining against an RGB-only
// discriminator, then joint generator + segmenter training against the
// segmentation-aware discriminator.
namespace ulrseg::trainer {

enum class BnMode { kBatch, kFrozen };
BnMode ParseBnMode(const std::string& s);
std::string BnModeName(BnMode m);

// Weights of the stage-1 objective (pixel L1, feature, adversarial).
struct Stage1Weights {
  double l1 = 1e-2;
  double fea = 1.0;
  double adv = 5e-3;
};

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int64_t batch_size = 16;
  // Samples per forward pass; gradients are accumulated up to batch_size.
  int64_t micro_batch = 1;
  // Stage-2 length in epochs, used when stage2_steps is 0.
  int64_t epochs = 100;
  int64_t stage1_steps = 200;
  int64_t stage2_steps = 0;
  // Validation period in epochs; 0 disables validation.
  int64_t val_every = 1;
  uint64_t seed = 0;
  losses::LossWeights weights;
  Stage1Weights stage1;
  bool use_sad = true;
  bool use_afe = true;
  BnMode bn_mode = BnMode::kBatch;
  // Allows stage 2 without a stage-1 checkpoint.
  bool cold_start = false;
  double sigma_low = 0.5;
  double sigma_high = 2.0;

  void Validate() const;
};

struct ModelConfig {
  srgen::GeneratorConfig gen;
  segnet::SegConfig seg;
  sad::DiscConfig disc;
  std::string afe_kind = "stub";
  int64_t afe_channels = 16;
  int32_t ignore_index = kIgnoreIndex;
};

struct Models {
  srgen::Generator gen;
  segnet::SegNet seg;
  sad::Discriminator sad;  // 3 + C input channels
  sad::Discriminator rgb;  // 3 input channels
  std::unique_ptr<afe::FeatureExtractor> fx;

  static Models Build(const ModelConfig& cfg, uint64_t seed);
};

// Loads network weights and buffers from `ckpt`. Sections that are absent
// are skipped unless listed in `required`.
void RestoreModels(const checkpoint::Checkpoint& ckpt, Models& models,
                   const std::vector<std::string>& required);

// Maps an LR image to segmentation logits; lets validation run on rigged
// models as well as trained ones.
class Pipeline {
 public:
  virtual ~Pipeline() = default;
  // (3, s, s) -> (3, S, S).
  virtual Tensor SuperResolve(const Tensor& lr) = 0;
  // (3, S, S) -> (C, S, S).
  virtual Tensor Segment(const Tensor& sr) = 0;
};

class ModelPipeline final : public Pipeline {
 public:
  ModelPipeline(const srgen::Generator& gen, segnet::SegNet& seg)
      : gen_(gen), seg_(seg) {}
  Tensor SuperResolve(const Tensor& lr) override { return gen_.Generate(lr); }
  Tensor Segment(const Tensor& sr) override { return seg_.Segment(sr); }

 private:
  const srgen::Generator& gen_;
  segnet::SegNet& seg_;
};

// Dataset-level mIoU of PredictLabels(Segment(SuperResolve(lr))) over
// `samples`. Throws InvalidArgument on an empty split.
double ValidateMiou(Pipeline& pipeline,
                    const std::vector<datakit::Sample>& samples,
                    int num_classes, int32_t ignore_index = kIgnoreIndex);

struct Batch {
  Tensor lr;  // (N, 3, s, s)
  Tensor hr;  // (N, 3, S, S)
  std::vector<LabelMap> labels;
  int64_t size() const { return lr.dim(0); }
  Batch Slice(int64_t begin, int64_t end) const;
};

Batch MakeBatch(const std::vector<datakit::Sample>& samples,
                const std::vector<int64_t>& indices);

struct StepRecord {
  int stage = 0;
  int64_t step = 0;
  int64_t epoch = 0;
  double lr = 0.0;
  losses::LossBundle losses;
};

struct ValRecord {
  int64_t epoch = 0;
  int64_t step = 0;
  double miou = 0.0;
};

struct StageResult {
  std::vector<StepRecord> steps;
  std::vector<ValRecord> validations;
  std::vector<std::string> warnings;
  std::optional<double> best_val_miou;
  std::filesystem::path checkpoint;  // last written checkpoint
  std::filesystem::path best_checkpoint;
};

// Non-finite loss. The offending step has already been logged.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int stage, int64_t step, const std::string& what)
      : std::runtime_error(what), stage_(stage), step_(step) {}
  int stage() const { return stage_; }
  int64_t step() const { return step_; }

 private:
  int stage_;
  int64_t step_;
};

class Trainer {
 public:
  // Artifacts (train_log.jsonl, ckpt_*.bin) go to `run_dir`; `config_text`
  // is echoed into each of them.
  Trainer(ModelConfig mcfg, TrainConfig tcfg, std::filesystem::path run_dir,
          std::string config_text);

  // Initialises networks from a checkpoint (stage 1 output or later).
  void InitFrom(const std::filesystem::path& ckpt_path);
  bool initialized() const { return initialized_; }

  StageResult Stage1(const std::vector<datakit::Sample>& train);
  StageResult Stage2(const std::vector<datakit::Sample>& train,
                     const std::vector<datakit::Sample>& val);

  // Single sub-steps, exposed for tests and dry runs. Each returns the
  // losses it computed and applies one optimiser step.
  losses::LossBundle Stage1DiscStep(const Batch& batch);
  losses::LossBundle Stage1GenStep(const Batch& batch);
  losses::LossBundle Stage2DiscStep(const Batch& batch);
  losses::LossBundle Stage2JointStep(const Batch& batch);

  // View of every network, buffer and optimiser state; valid until the next
  // training step.
  checkpoint::CheckpointRefs Snapshot(int stage, int64_t step, int64_t epoch,
                                      std::optional<double> val_miou);

  Models& models() { return models_; }
  const TrainConfig& train_config() const { return tcfg_; }
  const ModelConfig& model_config() const { return mcfg_; }
  const std::filesystem::path& log_path() const { return log_path_; }

 private:
  bool UseBatchStats() const { return tcfg_.bn_mode == BnMode::kBatch; }
  nn::ParamList GenSegParams() const;
  void Log(const std::string& json_line);
  void LogStep(const StepRecord& rec);
  void CheckFinite(const StepRecord& rec);
  void CheckSigmas(int stage, int64_t step, StageResult& result);
  template <typename MicroFn>
  losses::LossBundle Accumulate(const Batch& batch, MicroFn fn);

  ModelConfig mcfg_;
  TrainConfig tcfg_;
  std::filesystem::path run_dir_;
  std::filesystem::path log_path_;
  std::string config_text_;
  Models models_;
  std::unique_ptr<nn::Adam> opt_g1_;   // stage-1 generator
  std::unique_ptr<nn::Adam> opt_rgb_;  // stage-1 discriminator
  std::unique_ptr<nn::Adam> opt_gs_;   // stage-2 generator + segmenter
  std::unique_ptr<nn::Adam> opt_sad_;  // stage-2 discriminator
  std::ofstream log_;
  bool initialized_ = false;
};

// Shuffled sample order that reshuffles after every pass; deterministic in
// the seed.
class BatchSampler {
 public:
  BatchSampler(int64_t num_samples, int64_t batch_size, uint64_t seed);
  std::vector<int64_t> Next();
  int64_t steps_per_epoch() const { return steps_per_epoch_; }

 private:
  void Reshuffle();
  int64_t n_;
  int64_t batch_;
  int64_t steps_per_epoch_;
  std::mt19937_64 rng_;
  std::vector<int64_t> order_;
  size_t pos_ = 0;
};

}  // namespace ulrseg::trainer

#endif  // ULRSEG_TRAINER_H_
