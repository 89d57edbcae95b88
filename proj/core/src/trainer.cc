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
#include "ulrseg/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "ulrseg/metrics.h"
#include "ulrseg/ops.h"

namespace ulrseg::trainer {
namespace {

using Json = nlohmann::ordered_json;
using losses::LossBundle;

uint64_t SubSeed(uint64_t seed, uint64_t k) {
  // splitmix64 finaliser over (seed, k).
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void SetTrainable(const nn::ParamList& params, bool on) {
  for (const auto& p : params) nn::Var(p.var).set_requires_grad(on);
}

nn::ParamList Prefixed(const std::string& prefix, nn::ParamList params) {
  for (auto& p : params) p.name = prefix + p.name;
  return params;
}

nn::BufferList Prefixed(const std::string& prefix, nn::BufferList buffers) {
  for (auto& b : buffers) b.name = prefix + b.name;
  return buffers;
}

// Adds w * src into acc, term by term.
void AddWeighted(LossBundle& acc, const LossBundle& src, double w) {
  auto add = [w](std::optional<double>& a, const std::optional<double>& b) {
    if (b) a = a.value_or(0.0) + w * *b;
  };
  add(acc.l1, src.l1);
  add(acc.l2, src.l2);
  add(acc.fea, src.fea);
  add(acc.adv, src.adv);
  add(acc.ce, src.ce);
  add(acc.d, src.d);
  add(acc.total, src.total);
}

Json LossesJson(const LossBundle& b) {
  Json j = Json::object();
  for (const auto& [k, v] : b.Entries()) {
    if (std::isfinite(v)) {
      j[k] = v;
    } else {
      j[k] = std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    }
  }
  return j;
}

double Scalar(const nn::Var& v) { return v.value()[0]; }

}  // namespace

BnMode ParseBnMode(const std::string& s) {
  if (s == "batch") return BnMode::kBatch;
  if (s == "frozen") return BnMode::kFrozen;
  throw InvalidArgument("unknown bn mode '" + s + "' (batch|frozen)");
}

std::string BnModeName(BnMode m) {
  return m == BnMode::kBatch ? "batch" : "frozen";
}

void TrainConfig::Validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("train.lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("train betas must lie in (0, 1)");
  }
  if (batch_size < 1 || micro_batch < 1) {
    throw InvalidArgument("batch_size and micro_batch must be >= 1");
  }
  if (epochs < 1 && stage2_steps < 1) {
    throw InvalidArgument("stage 2 needs epochs >= 1 or stage2_steps >= 1");
  }
  if (stage1_steps < 0 || stage2_steps < 0 || val_every < 0) {
    throw InvalidArgument("step counts must be non-negative");
  }
  if (!(sigma_low > 0.0 && sigma_low < sigma_high)) {
    throw InvalidArgument("need 0 < sigma_low < sigma_high");
  }
  if (stage1.l1 < 0 || stage1.fea < 0 || stage1.adv < 0) {
    throw InvalidArgument("stage-1 weights must be non-negative");
  }
  weights.Validate();
}

Models Models::Build(const ModelConfig& cfg, uint64_t seed) {
  cfg.gen.Validate();
  cfg.seg.Validate();
  cfg.disc.Validate();
  Models m;
  m.gen = srgen::Generator::Build(cfg.gen, SubSeed(seed, 0));
  m.seg = segnet::SegNet::Build(cfg.seg, SubSeed(seed, 1));
  m.sad = sad::Discriminator::Build(cfg.disc, 3 + cfg.seg.num_classes,
                                    SubSeed(seed, 2));
  m.rgb = sad::Discriminator::Build(cfg.disc, 3, SubSeed(seed, 3));
  m.fx = afe::MakeExtractor(cfg.afe_kind, cfg.afe_channels, SubSeed(seed, 4));
  return m;
}

void RestoreModels(const checkpoint::Checkpoint& ckpt, Models& models,
                   const std::vector<std::string>& required) {
  for (const auto& r : required) {
    if (!ckpt.Has(r)) {
      throw std::runtime_error("checkpoint lacks required section '" + r + "'");
    }
  }
  struct Entry {
    const char* section;
    nn::ParamList params;
    nn::BufferList buffers;
  };
  std::vector<Entry> entries;
  entries.push_back({"generator", models.gen.Params(), {}});
  entries.push_back({"segmenter", models.seg.Params(),
                     Prefixed("segmenter/", models.seg.Buffers())});
  entries.push_back({"discriminator", models.sad.Params(),
                     Prefixed("discriminator/", models.sad.Buffers())});
  entries.push_back({"discriminator_rgb", models.rgb.Params(),
                     Prefixed("discriminator_rgb/", models.rgb.Buffers())});
  for (const Entry& e : entries) {
    if (!ckpt.Has(e.section)) continue;
    checkpoint::Restore(ckpt.Section(e.section), e.params, e.section);
    if (!e.buffers.empty() && ckpt.Has("buffers")) {
      checkpoint::Restore(ckpt.Section("buffers"), e.buffers, e.section);
    }
  }
}

double ValidateMiou(Pipeline& pipeline,
                    const std::vector<datakit::Sample>& samples,
                    int num_classes, int32_t ignore_index) {
  if (samples.empty()) throw InvalidArgument("validation split is empty");
  metrics::ConfusionMatrix cm(num_classes);
  for (const auto& s : samples) {
    const Tensor logits = pipeline.Segment(pipeline.SuperResolve(s.lr));
    cm.Add(segnet::PredictLabels(logits), s.label, ignore_index);
  }
  return cm.MeanIou();
}

Batch Batch::Slice(int64_t begin, int64_t end) const {
  Batch b;
  b.lr = lr.Slice(begin, end);
  b.hr = hr.Slice(begin, end);
  b.labels.assign(labels.begin() + begin, labels.begin() + end);
  return b;
}

Batch MakeBatch(const std::vector<datakit::Sample>& samples,
                const std::vector<int64_t>& indices) {
  if (indices.empty()) throw InvalidArgument("empty batch");
  std::vector<Tensor> lrs, hrs;
  Batch b;
  for (int64_t i : indices) {
    const auto& s = samples.at(static_cast<size_t>(i));
    lrs.push_back(s.lr);
    hrs.push_back(s.hr);
    b.labels.push_back(s.label);
  }
  b.lr = Stack(lrs);
  b.hr = Stack(hrs);
  return b;
}

BatchSampler::BatchSampler(int64_t num_samples, int64_t batch_size,
                           uint64_t seed)
    : n_(num_samples), batch_(std::min(batch_size, num_samples)), rng_(seed) {
  if (num_samples < 1) throw InvalidArgument("no training samples");
  steps_per_epoch_ = (n_ + batch_ - 1) / batch_;
  order_.resize(static_cast<size_t>(n_));
  Reshuffle();
}

void BatchSampler::Reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<int64_t> BatchSampler::Next() {
  if (pos_ >= order_.size()) Reshuffle();
  const size_t end = std::min(order_.size(), pos_ + static_cast<size_t>(batch_));
  std::vector<int64_t> out(order_.begin() + pos_, order_.begin() + end);
  pos_ = end;
  return out;
}

Trainer::Trainer(ModelConfig mcfg, TrainConfig tcfg,
                 std::filesystem::path run_dir, std::string config_text)
    : mcfg_(std::move(mcfg)),
      tcfg_(std::move(tcfg)),
      run_dir_(std::move(run_dir)),
      config_text_(std::move(config_text)) {
  tcfg_.Validate();
  if (mcfg_.gen.hr_size() % mcfg_.seg.output_stride != 0) {
    throw InvalidArgument("HR size must be a multiple of the output stride");
  }
  models_ = Models::Build(mcfg_, tcfg_.seed);
  std::filesystem::create_directories(run_dir_);
  log_path_ = run_dir_ / "train_log.jsonl";
  log_.open(log_path_, std::ios::app);
  if (!log_) throw std::runtime_error("cannot open " + log_path_.string());
  Json j;
  j["event"] = "config";
  j["format_version"] = checkpoint::kFormatVersion;
  j["config"] = config_text_;
  Log(j.dump());
}

void Trainer::InitFrom(const std::filesystem::path& ckpt_path) {
  const checkpoint::Checkpoint ckpt = checkpoint::Load(ckpt_path);
  RestoreModels(ckpt, models_, {"generator"});
  initialized_ = true;
  Json j;
  j["event"] = "init";
  j["checkpoint"] = ckpt_path.string();
  Log(j.dump());
}

void Trainer::Log(const std::string& json_line) {
  log_ << json_line << '\n';
  log_.flush();
}

void Trainer::LogStep(const StepRecord& rec) {
  Json j;
  j["stage"] = rec.stage;
  j["step"] = rec.step;
  j["epoch"] = rec.epoch;
  j["lr"] = rec.lr;
  j["losses"] = LossesJson(rec.losses);
  Log(j.dump());
}

void Trainer::CheckFinite(const StepRecord& rec) {
  if (rec.losses.AllFinite()) return;
  Json j;
  j["event"] = "abort";
  j["reason"] = "non-finite loss";
  j["stage"] = rec.stage;
  j["step"] = rec.step;
  j["losses"] = LossesJson(rec.losses);
  Log(j.dump());
  throw DivergenceError(rec.stage, rec.step,
                        "non-finite loss at stage " + std::to_string(rec.stage) +
                            " step " + std::to_string(rec.step));
}

void Trainer::CheckSigmas(int stage, int64_t step, StageResult& result) {
  const sad::Discriminator& d = stage == 1 ? models_.rgb : models_.sad;
  for (const auto& [name, sigma] : d.NormalizedSigmas()) {
    if (sigma >= tcfg_.sigma_low && sigma <= tcfg_.sigma_high) continue;
    Json j;
    j["event"] = "warning";
    j["kind"] = "spectral_norm_sigma";
    j["stage"] = stage;
    j["step"] = step;
    j["layer"] = name;
    j["sigma"] = sigma;
    const std::string line = j.dump();
    Log(line);
    result.warnings.push_back(line);
  }
}

nn::ParamList Trainer::GenSegParams() const {
  nn::ParamList out = Prefixed("generator/", models_.gen.Params());
  for (auto& p : Prefixed("segmenter/", models_.seg.Params())) out.push_back(p);
  return out;
}

template <typename MicroFn>
LossBundle Trainer::Accumulate(const Batch& batch, MicroFn fn) {
  LossBundle acc;
  const int64_t n = batch.size();
  for (int64_t b = 0; b < n; b += tcfg_.micro_batch) {
    const int64_t e = std::min(n, b + tcfg_.micro_batch);
    const double w = static_cast<double>(e - b) / static_cast<double>(n);
    AddWeighted(acc, fn(batch.Slice(b, e), w), w);
  }
  return acc;
}

LossBundle Trainer::Stage1DiscStep(const Batch& batch) {
  if (!opt_rgb_) {
    opt_rgb_ = std::make_unique<nn::Adam>(
        models_.rgb.Params(),
        nn::AdamOptions{tcfg_.lr, tcfg_.beta1, tcfg_.beta2});
  }
  opt_rgb_->ZeroGrad();
  bool finite = true;
  LossBundle out = Accumulate(batch, [&](const Batch& mb, double w) {
    Tensor sr;
    {
      nn::NoGradGuard guard;
      sr = models_.gen.Forward(nn::Constant(mb.lr)).value();
    }
    const nn::Var real = models_.rgb.Forward(nn::Constant(mb.hr), true);
    const nn::Var fake = models_.rgb.Forward(nn::Constant(std::move(sr)), true);
    const nn::Var d = losses::DiscLoss(real, fake);
    LossBundle b;
    b.d = Scalar(d);
    finite = finite && std::isfinite(*b.d);
    if (finite) nn::Backward(nn::Scale(d, w), /*release_values=*/true);
    return b;
  });
  if (finite) opt_rgb_->Step();
  return out;
}

LossBundle Trainer::Stage1GenStep(const Batch& batch) {
  if (!opt_g1_) {
    opt_g1_ = std::make_unique<nn::Adam>(
        models_.gen.Params(),
        nn::AdamOptions{tcfg_.lr, tcfg_.beta1, tcfg_.beta2});
  }
  opt_g1_->ZeroGrad();
  const nn::ParamList frozen = models_.rgb.Params();
  SetTrainable(frozen, false);
  bool finite = true;
  const Stage1Weights& sw = tcfg_.stage1;
  LossBundle out = Accumulate(batch, [&](const Batch& mb, double w) {
    const nn::Var hr = nn::Constant(mb.hr);
    const nn::Var sr = models_.gen.Forward(nn::Constant(mb.lr));
    std::vector<nn::Var> terms;
    std::vector<double> weights;
    LossBundle b;
    const nn::Var l1 = losses::PixelL1(hr, sr);
    b.l1 = Scalar(l1);
    terms.push_back(l1);
    weights.push_back(sw.l1);
    if (tcfg_.use_afe) {
      const nn::Var fea = afe::FeatureLoss(afe::ExtractChecked(*models_.fx, hr),
                                           afe::ExtractChecked(*models_.fx, sr))
                              .total;
      b.fea = Scalar(fea);
      terms.push_back(fea);
      weights.push_back(sw.fea);
    }
    const nn::Var adv = losses::AdvLoss(models_.rgb.Forward(sr, false));
    b.adv = Scalar(adv);
    terms.push_back(adv);
    weights.push_back(sw.adv);
    const nn::Var total = nn::WeightedSum(terms, weights);
    b.total = Scalar(total);
    finite = finite && b.AllFinite();
    if (finite) nn::Backward(nn::Scale(total, w), /*release_values=*/true);
    return b;
  });
  SetTrainable(frozen, true);
  if (finite) opt_g1_->Step();
  return out;
}

LossBundle Trainer::Stage2DiscStep(const Batch& batch) {
  if (!opt_sad_) {
    opt_sad_ = std::make_unique<nn::Adam>(
        models_.sad.Params(),
        nn::AdamOptions{tcfg_.lr, tcfg_.beta1, tcfg_.beta2});
  }
  opt_sad_->ZeroGrad();
  bool finite = true;
  const int c = mcfg_.seg.num_classes;
  LossBundle out = Accumulate(batch, [&](const Batch& mb, double w) {
    nn::Var fake_pair;
    {
      nn::NoGradGuard guard;
      const nn::Var sr = models_.gen.Forward(nn::Constant(mb.lr));
      const nn::Var logits = models_.seg.Forward(sr, UseBatchStats());
      fake_pair = nn::Constant(sad::MakeFakePair(sr, logits).value());
    }
    const nn::Var real = models_.sad.Forward(
        sad::MakeRealPair(mb.hr, mb.labels, c, mcfg_.ignore_index), true);
    const nn::Var fake = models_.sad.Forward(fake_pair, true);
    const nn::Var d = losses::DiscLoss(real, fake);
    LossBundle b;
    b.d = Scalar(d);
    finite = finite && std::isfinite(*b.d);
    if (finite) nn::Backward(nn::Scale(d, w), /*release_values=*/true);
    return b;
  });
  if (finite) opt_sad_->Step();
  return out;
}

LossBundle Trainer::Stage2JointStep(const Batch& batch) {
  if (!opt_gs_) {
    opt_gs_ = std::make_unique<nn::Adam>(
        GenSegParams(), nn::AdamOptions{tcfg_.lr, tcfg_.beta1, tcfg_.beta2});
  }
  opt_gs_->ZeroGrad();
  const nn::ParamList frozen = models_.sad.Params();
  SetTrainable(frozen, false);
  bool finite = true;
  LossBundle out = Accumulate(batch, [&](const Batch& mb, double w) {
    const nn::Var hr = nn::Constant(mb.hr);
    const nn::Var sr = models_.gen.Forward(nn::Constant(mb.lr));
    const nn::Var logits = models_.seg.Forward(sr, UseBatchStats());
    LossBundle b;
    const nn::Var l2 = losses::PixelL2(hr, sr);
    b.l2 = Scalar(l2);
    nn::Var fea, adv;
    if (tcfg_.use_afe) {
      fea = afe::FeatureLoss(afe::ExtractChecked(*models_.fx, hr),
                             afe::ExtractChecked(*models_.fx, sr))
                .total;
      b.fea = Scalar(fea);
    }
    if (tcfg_.use_sad) {
      adv = losses::AdvLoss(
          models_.sad.Forward(sad::MakeFakePair(sr, logits), false));
      b.adv = Scalar(adv);
    }
    const nn::Var ce =
        losses::CrossEntropy(logits, mb.labels, mcfg_.ignore_index);
    b.ce = Scalar(ce);
    const nn::Var total = losses::TotalLoss(l2, fea, adv, ce, tcfg_.weights);
    b.total = Scalar(total);
    finite = finite && b.AllFinite();
    if (finite) nn::Backward(nn::Scale(total, w), /*release_values=*/true);
    return b;
  });
  SetTrainable(frozen, true);
  if (finite) opt_gs_->Step();
  return out;
}

checkpoint::CheckpointRefs Trainer::Snapshot(int stage, int64_t step,
                                            int64_t epoch,
                                            std::optional<double> val_miou) {
  // Buffer lists hold pointers into the models, so they stay valid.
  checkpoint::CheckpointRefs ck;
  ck.config_text = config_text_;
  ck.sections["generator"] = checkpoint::Refs(models_.gen.Params());
  ck.sections["segmenter"] = checkpoint::Refs(models_.seg.Params());
  ck.sections["discriminator"] = checkpoint::Refs(models_.sad.Params());
  ck.sections["discriminator_rgb"] = checkpoint::Refs(models_.rgb.Params());
  auto& buffers = ck.sections["buffers"];
  for (const nn::BufferList& list :
       {Prefixed("segmenter/", models_.seg.Buffers()),
        Prefixed("discriminator/", models_.sad.Buffers()),
        Prefixed("discriminator_rgb/", models_.rgb.Buffers())}) {
    for (auto& t : checkpoint::Refs(list)) buffers.push_back(t);
  }
  auto& opt = ck.sections["optimizer"];
  const std::pair<const char*, nn::Adam*> opts[] = {{"g1", opt_g1_.get()},
                                                    {"rgb", opt_rgb_.get()},
                                                    {"gs", opt_gs_.get()},
                                                    {"sad", opt_sad_.get()}};
  for (const auto& [name, o] : opts) {
    if (!o) continue;
    for (auto& t : checkpoint::Refs(Prefixed(std::string(name) + "/", o->StateBuffers())))
      opt.push_back(t);
    ck.metadata[std::string("optimizer.") + name + ".steps"] =
        std::to_string(o->step_count());
  }
  ck.metadata["stage"] = std::to_string(stage);
  ck.metadata["step"] = std::to_string(step);
  ck.metadata["epoch"] = std::to_string(epoch);
  ck.metadata["num_classes"] = std::to_string(mcfg_.seg.num_classes);
  ck.metadata["seed"] = std::to_string(tcfg_.seed);
  if (val_miou) {
    std::ostringstream os;
    os.precision(17);
    os << *val_miou;
    ck.metadata["val_miou"] = os.str();
  }
  return ck;
}

StageResult Trainer::Stage1(const std::vector<datakit::Sample>& train) {
  StageResult result;
  BatchSampler sampler(static_cast<int64_t>(train.size()), tcfg_.batch_size,
                       SubSeed(tcfg_.seed, 101));
  for (int64_t step = 1; step <= tcfg_.stage1_steps; ++step) {
    const Batch batch = MakeBatch(train, sampler.Next());
    StepRecord rec;
    rec.stage = 1;
    rec.step = step;
    rec.epoch = (step - 1) / sampler.steps_per_epoch() + 1;
    rec.lr = tcfg_.lr;
    rec.losses = Stage1DiscStep(batch);
    if (rec.losses.AllFinite()) {
      const LossBundle g = Stage1GenStep(batch);
      const auto d = rec.losses.d;
      rec.losses = g;
      rec.losses.d = d;
    }
    LogStep(rec);
    result.steps.push_back(rec);
    CheckFinite(rec);
    CheckSigmas(1, step, result);
  }
  result.checkpoint = run_dir_ / "ckpt_stage1.bin";
  checkpoint::Save(Snapshot(1, tcfg_.stage1_steps, 0, std::nullopt),
                   result.checkpoint);
  initialized_ = true;
  // Stage-1 optimiser state is not reused.
  opt_g1_.reset();
  opt_rgb_.reset();
  return result;
}

StageResult Trainer::Stage2(const std::vector<datakit::Sample>& train,
                            const std::vector<datakit::Sample>& val) {
  if (!initialized_ && !tcfg_.cold_start) {
    throw InvalidArgument(
        "stage 2 needs a stage-1 checkpoint (or cold_start enabled)");
  }
  opt_g1_.reset();
  opt_rgb_.reset();
  StageResult result;
  BatchSampler sampler(static_cast<int64_t>(train.size()), tcfg_.batch_size,
                       SubSeed(tcfg_.seed, 202));
  const int64_t spe = sampler.steps_per_epoch();
  const int64_t steps =
      tcfg_.stage2_steps > 0 ? tcfg_.stage2_steps : tcfg_.epochs * spe;
  const int c = mcfg_.seg.num_classes;
  if (tcfg_.val_every > 0 && val.empty()) {
    throw InvalidArgument("validation split is empty");
  }
  for (int64_t step = 1; step <= steps; ++step) {
    const Batch batch = MakeBatch(train, sampler.Next());
    StepRecord rec;
    rec.stage = 2;
    rec.step = step;
    rec.epoch = (step - 1) / spe + 1;
    rec.lr = tcfg_.lr;
    if (tcfg_.use_sad) rec.losses = Stage2DiscStep(batch);
    if (rec.losses.AllFinite()) {
      const auto d = rec.losses.d;
      rec.losses = Stage2JointStep(batch);
      rec.losses.d = d;
    }
    LogStep(rec);
    result.steps.push_back(rec);
    CheckFinite(rec);
    if (tcfg_.use_sad) CheckSigmas(2, step, result);

    const bool epoch_end = step % spe == 0 || step == steps;
    if (tcfg_.val_every > 0 && epoch_end &&
        (rec.epoch % tcfg_.val_every == 0 || step == steps)) {
      ModelPipeline pipe(models_.gen, models_.seg);
      const double miou = ValidateMiou(pipe, val, c, mcfg_.ignore_index);
      result.validations.push_back({rec.epoch, step, miou});
      Json j;
      j["event"] = "validation";
      j["stage"] = 2;
      j["epoch"] = rec.epoch;
      j["step"] = step;
      j["val_miou"] = miou;
      Log(j.dump());
      if (!result.best_val_miou || miou > *result.best_val_miou) {
        result.best_val_miou = miou;
        result.best_checkpoint = run_dir_ / "ckpt_best.bin";
        checkpoint::Save(Snapshot(2, step, rec.epoch, miou),
                         result.best_checkpoint);
      }
    }
  }
  result.checkpoint = run_dir_ / "ckpt_last.bin";
  checkpoint::Save(Snapshot(2, steps, (steps - 1) / spe + 1,
                            result.validations.empty()
                                ? std::nullopt
                                : std::optional<double>(
                                      result.validations.back().miou)),
                   result.checkpoint);
  return result;
}

}  // namespace ulrseg::trainer
