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
#include "ulrseg/run_config.h"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ulrseg {

namespace {

using Json = nlohmann::ordered_json;

// Walks every config field once; the same walk serves reading and writing
// so the two can never drift apart.
template <typename V>
void Visit(RunConfig& c, V& v) {
  v.Field("", "name", c.name);
  v.Field("", "output_root", c.output_root);

  auto& d = c.data;
  v.Field("data", "dir", c.data_dir);
  v.Field("data", "crop_size", d.crop_size);
  v.Field("data", "lr_size", d.lr_size);
  v.Field("data", "num_classes", d.num_classes);
  v.Field("data", "ignore_index", d.ignore_index);
  v.Field("data", "split_train", d.split_sizes.train);
  v.Field("data", "split_val", d.split_sizes.val);
  v.Field("data", "split_test", d.split_sizes.test);
  v.Field("data", "seed", d.seed);
  v.Field("data", "objects_per_scene", d.objects_per_scene);

  auto& g = c.model.gen;
  v.Field("gen", "num_rrdb", g.num_rrdb);
  v.Field("gen", "dense_blocks_per_rrdb", g.dense_blocks_per_rrdb);
  v.Field("gen", "convs_per_dense_block", g.convs_per_dense_block);
  v.Field("gen", "base_channels", g.base_channels);
  v.Field("gen", "growth_channels", g.growth_channels);
  v.Field("gen", "residual_scale", g.residual_scale);
  v.Field("gen", "upsample_stages", g.upsample_stages);

  auto& s = c.model.seg;
  v.Enum("seg", "backbone", s.backbone, segnet::ParseBackbone, segnet::BackboneName);
  v.Field("seg", "aspp_rates", s.aspp_rates);
  v.Field("seg", "output_stride", s.output_stride);
  v.Field("seg", "width", s.width);
  v.Field("seg", "aspp_channels", s.aspp_channels);
  v.Field("seg", "low_level_channels", s.low_level_channels);
  v.Field("seg", "decoder_channels", s.decoder_channels);

  auto& ds = c.model.disc;
  v.Field("disc", "conv_blocks", ds.conv_blocks);
  v.Field("disc", "widths", ds.widths);
  v.Field("disc", "power_iterations", ds.power_iterations);
  v.Field("disc", "verify_iterations", ds.verify_iterations);

  v.Field("afe", "kind", c.model.afe_kind);
  v.Field("afe", "channels", c.model.afe_channels);

  auto& t = c.train;
  v.Field("train", "lr", t.lr);
  v.Field("train", "beta1", t.beta1);
  v.Field("train", "beta2", t.beta2);
  v.Field("train", "batch_size", t.batch_size);
  v.Field("train", "micro_batch", t.micro_batch);
  v.Field("train", "epochs", t.epochs);
  v.Field("train", "stage1_steps", t.stage1_steps);
  v.Field("train", "stage2_steps", t.stage2_steps);
  v.Field("train", "val_every", t.val_every);
  v.Field("train", "seed", t.seed);
  v.Field("train", "lambda1", t.weights.lambda1);
  v.Field("train", "lambda2", t.weights.lambda2);
  v.Field("train", "lambda3", t.weights.lambda3);
  v.Field("train", "alpha", t.weights.alpha);
  v.Field("train", "stage1_l1", t.stage1.l1);
  v.Field("train", "stage1_fea", t.stage1.fea);
  v.Field("train", "stage1_adv", t.stage1.adv);
  v.Field("train", "use_sad", t.use_sad);
  v.Field("train", "use_afe", t.use_afe);
  v.Enum("train", "bn_mode", t.bn_mode, trainer::ParseBnMode, trainer::BnModeName);
  v.Field("train", "sigma_low", t.sigma_low);
  v.Field("train", "sigma_high", t.sigma_high);

  auto& n = c.nav;
  v.Field("nav", "view_depth", n.nav.view_depth);
  v.Field("nav", "view_width", n.nav.view_width);
  v.Field("nav", "interval", n.nav.interval);
  v.Field("nav", "dev_threshold_cells", n.nav.dev_threshold_cells);
  v.Field("nav", "max_steps", n.nav.max_steps);
  v.Field("nav", "worlds_dir", n.worlds_dir);
  v.Field("nav", "world", n.world);
  v.Field("nav", "repeats", n.repeats);
  v.Field("nav", "noise", n.noise);
  v.Field("nav", "threads", n.threads);

  v.Field("eval", "bf_tolerance", c.eval.bf_tolerance);
}

class Writer {
 public:
  template <typename T>
  void Field(const char* section, const char* key, const T& value) {
    Slot(section, key) = value;
  }
  template <typename E, typename P, typename N>
  void Enum(const char* section, const char* key, const E& value, P, N name) {
    Slot(section, key) = name(value);
  }
  Json json = Json::object();

 private:
  Json& Slot(const char* section, const char* key) {
    return *section ? json[section][key] : json[key];
  }
};

class Reader {
 public:
  explicit Reader(const Json& j) : json_(j) {}

  template <typename T>
  void Field(const char* section, const char* key, T& value) {
    const Json* v = Find(section, key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v->is_number()) throw std::invalid_argument("expected a number");
        if constexpr (std::is_integral_v<T>) {
          if (!v->is_number_integer()) throw std::invalid_argument("expected an integer");
          if (std::is_unsigned_v<T> && !v->is_number_unsigned()) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw std::invalid_argument("expected a string");
      }
      value = v->get<T>();
    } catch (const std::exception& e) {
      throw InvalidArgument(Name(section, key) + ": " + e.what());
    }
  }

  template <typename E, typename P, typename N>
  void Enum(const char* section, const char* key, E& value, P parse, N) {
    const Json* v = Find(section, key);
    if (!v) return;
    if (!v->is_string()) throw InvalidArgument(Name(section, key) + ": expected a string");
    value = parse(v->get<std::string>());
  }

  // Keys present in the input that no field claimed.
  void CheckAllUsed() const {
    for (const auto& [k, v] : json_.items()) {
      if (v.is_object()) {
        for (const auto& [k2, v2] : v.items()) {
          if (!used_.count(k + "." + k2)) throw InvalidArgument("unknown config key " + k + "." + k2);
        }
      } else if (!used_.count(k)) {
        throw InvalidArgument("unknown config key " + k);
      }
    }
  }

 private:
  static std::string Name(const char* section, const char* key) {
    return *section ? std::string(section) + "." + key : std::string(key);
  }
  const Json* Find(const char* section, const char* key) {
    used_.insert(Name(section, key));
    if (*section) {
      const auto s = json_.find(section);
      if (s == json_.end()) return nullptr;
      if (!s->is_object()) throw InvalidArgument(std::string("config section ") + section + " must be an object");
      const auto k = s->find(key);
      return k == s->end() ? nullptr : &*k;
    }
    const auto k = json_.find(key);
    return k == json_.end() ? nullptr : &*k;
  }

  const Json& json_;
  std::set<std::string> used_;
};

void ApplyOverride(Json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("override '" + spec + "' is not key=value");
  }
  const std::string key = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    j[key] = value;
  } else {
    Json& section = j[key.substr(0, dot)];
    if (!section.is_null() && !section.is_object()) {
      throw InvalidArgument("override '" + spec + "': section is not an object");
    }
    section[key.substr(dot + 1)] = value;
  }
}

}  // namespace

void RunConfig::Sync() {
  model.gen.lr_size = data.lr_size;
  model.gen.scale = data.lr_size > 0 ? data.crop_size / data.lr_size : 0;
  model.seg.num_classes = data.num_classes;
  model.ignore_index = data.ignore_index;
  nav.nav.image_size = data.crop_size;
}

void RunConfig::Validate() const {
  if (name.empty() || name.find('/') != std::string::npos) {
    throw InvalidArgument("name must be a non-empty single path component");
  }
  data.Validate();
  model.gen.Validate();
  model.seg.Validate();
  model.disc.Validate();
  train.Validate();
  nav.nav.Validate();
  if (model.gen.lr_size != data.lr_size || model.gen.hr_size() != data.crop_size) {
    throw InvalidArgument("generator sizes disagree with the dataset");
  }
  if (model.seg.num_classes != data.num_classes) {
    throw InvalidArgument("segmenter classes disagree with the dataset");
  }
  if (model.afe_channels < 1) throw InvalidArgument("afe.channels must be positive");
  if (nav.repeats < 1) throw InvalidArgument("nav.repeats must be >= 1");
  if (nav.threads < 1) throw InvalidArgument("nav.threads must be >= 1");
  if (!(nav.noise >= 0.0 && nav.noise <= 1.0)) throw InvalidArgument("nav.noise must be in [0, 1]");
}

std::string RunConfig::ToText() const {
  Writer w;
  Visit(const_cast<RunConfig&>(*this), w);
  return w.json.dump(2) + "\n";
}

RunConfig ParseRunConfig(const std::string& text, const std::vector<std::string>& overrides) {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& o : overrides) ApplyOverride(j, o);
  RunConfig cfg;
  Reader r(j);
  Visit(cfg, r);
  r.CheckAllUsed();
  cfg.Sync();
  cfg.Validate();
  return cfg;
}

RunConfig LoadRunConfig(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str(), overrides);
}

std::filesystem::path OutputRoot(const RunConfig& cfg) {
  const char* env = std::getenv(kOutputRootEnv);
  if (env && *env) return env;
  return cfg.output_root;
}

std::filesystem::path RunDir(const RunConfig& cfg) { return OutputRoot(cfg) / cfg.name; }

std::filesystem::path DataDir(const RunConfig& cfg) {
  const std::filesystem::path p(cfg.data_dir);
  return p.is_absolute() ? p : RunDir(cfg) / p;
}

}  // namespace ulrseg
