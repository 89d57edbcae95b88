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
#include "commands.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ulrseg/checkpoint.h"
#include "ulrseg/hashing.h"
#include "ulrseg/image_io.h"

namespace ulrseg::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void AddCommon(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "run configuration (JSON)")->required();
  app->add_option("--set", c.sets, "override, section.key=value (repeatable)");
}

RunConfig LoadConfig(const Common& c) {
  RunConfig cfg = LoadRunConfig(c.config, c.sets);
  cfg.data.root_path = DataDir(cfg);
  return cfg;
}

Json ConfigJson(const RunConfig& cfg) { return Json::parse(cfg.ToText()); }

void WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

std::string Fixed(double v, int digits = 4) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

Json NumberOrNull(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json RowJson(const metrics::MetricRow& r) {
  Json j;
  j["miou"] = NumberOrNull(r.miou);
  // Identical images have infinite PSNR; JSON has no infinity.
  j["psnr"] = std::isinf(r.psnr) ? Json("inf") : NumberOrNull(r.psnr);
  j["ssim"] = NumberOrNull(r.ssim);
  j["ari"] = NumberOrNull(r.ari);
  j["covering"] = NumberOrNull(r.covering);
  j["bf"] = NumberOrNull(r.bf);
  return j;
}

std::vector<datakit::Sample> LoadSplit(const RunConfig& cfg, const std::string& split,
                                       std::vector<std::string>* files = nullptr) {
  const fs::path root = DataDir(cfg);
  if (!fs::exists(root / "splits.json")) {
    throw UsageError("no dataset at " + root.string() + "; run 'ulrseg prepare' first");
  }
  const datakit::SplitFiles sf = datakit::ReadSplitsJson(root);
  std::vector<datakit::Sample> out;
  for (const auto& f : sf.Get(split)) {
    out.push_back(datakit::ReadSample(root, f, cfg.data.lr_size));
    datakit::ValidateLabels(out.back().label, cfg.data.num_classes, cfg.data.ignore_index);
  }
  if (files) *files = sf.Get(split);
  return out;
}

// ---------------------------------------------------------------- prepare

int CmdPrepare(const Common& c, bool force, std::ostream& out) {
  const RunConfig cfg = LoadConfig(c);
  const fs::path root = DataDir(cfg);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) {
      throw UsageError(root.string() + " is not empty; pass --force to overwrite");
    }
    fs::remove_all(root);
  }
  fs::create_directories(root);
  const auto corpus = datakit::SynthGenerate(cfg.data);
  for (size_t i = 0; i < corpus.size(); ++i) {
    datakit::WriteSample(root, static_cast<int64_t>(i), corpus[i]);
  }
  const datakit::Splits splits =
      datakit::MakeSplits(cfg.data, static_cast<int64_t>(corpus.size()));
  datakit::WriteSplitsJson(root, splits);

  Json files = Json::array();
  auto add = [&](const std::string& rel) {
    files.push_back({{"path", rel}, {"sha256", Sha256File(root / rel)}});
  };
  for (size_t i = 0; i < corpus.size(); ++i) {
    const std::string name = datakit::SampleFileName(static_cast<int64_t>(i));
    add("images/" + name);
    add("labels/" + name);
  }
  add("splits.json");
  Json m;
  m["format_version"] = kArtifactFormatVersion;
  m["kind"] = "manifest";
  m["num_samples"] = corpus.size();
  m["splits"] = {{"train", splits.train.size()},
                 {"val", splits.val.size()},
                 {"test", splits.test.size()}};
  m["files"] = files;
  m["config"] = ConfigJson(cfg);
  WriteText(root / "manifest.json", m.dump(2) + "\n");
  out << "prepared " << corpus.size() << " samples in " << root.string() << " (train "
      << splits.train.size() << ", val " << splits.val.size() << ", test "
      << splits.test.size() << ")\n";
  return kExitOk;
}

// ------------------------------------------------------------------ train

void ApplyAblation(const std::string& list, RunConfig& cfg) {
  if (list.empty()) return;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item == "sad") {
      cfg.train.use_sad = false;
    } else if (item == "afe") {
      cfg.train.use_afe = false;
    } else {
      throw UsageError("unknown --ablate item '" + item + "' (expected sad, afe)");
    }
  }
}

void PrintStage(const trainer::StageResult& r, std::ostream& out) {
  if (!r.steps.empty()) {
    const auto& last = r.steps.back();
    out << "stage " << last.stage << ": " << r.steps.size() << " steps, last total loss "
        << Fixed(last.losses.total.value_or(std::nan("")), 6) << "\n";
  }
  if (r.best_val_miou) out << "best validation mIoU " << Fixed(*r.best_val_miou) << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  if (!r.checkpoint.empty()) out << "checkpoint " << r.checkpoint.string() << "\n";
  if (!r.best_checkpoint.empty()) out << "best checkpoint " << r.best_checkpoint.string() << "\n";
}

int CmdTrain(const Common& c, int stage, const std::string& init, const std::string& ablate,
             bool cold_start, std::ostream& out, std::ostream& err) {
  RunConfig cfg = LoadConfig(c);
  ApplyAblation(ablate, cfg);
  cfg.train.cold_start = cold_start;
  if (stage == 2 && init.empty() && !cold_start) {
    throw UsageError("stage 2 needs --init <stage-1 checkpoint> (or --cold-start)");
  }
  if (!init.empty() && !fs::exists(init)) throw UsageError("no checkpoint at " + init);
  const auto train = LoadSplit(cfg, "train");
  const auto val = stage == 2 && cfg.train.val_every > 0 ? LoadSplit(cfg, "val")
                                                         : std::vector<datakit::Sample>{};
  trainer::Trainer tr(cfg.model, cfg.train, RunDir(cfg), cfg.ToText());
  if (!init.empty()) tr.InitFrom(init);
  try {
    const trainer::StageResult r = stage == 1 ? tr.Stage1(train) : tr.Stage2(train, val);
    PrintStage(r, out);
  } catch (const trainer::DivergenceError& e) {
    err << "training aborted: " << e.what() << " (stage " << e.stage() << ", step "
        << e.step() << "); see " << tr.log_path().string() << "\n";
    return kExitRuntime;
  }
  out << "log " << tr.log_path().string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- evaluate

void CheckClasses(const checkpoint::Checkpoint& ckpt, const RunConfig& cfg) {
  const auto it = ckpt.metadata.find("num_classes");
  if (it == ckpt.metadata.end()) throw UsageError("checkpoint has no num_classes");
  if (std::stoi(it->second) != cfg.data.num_classes) {
    throw UsageError("checkpoint has " + it->second + " classes but the data has " +
                     std::to_string(cfg.data.num_classes));
  }
}

trainer::Models LoadModels(const RunConfig& cfg, const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("no checkpoint at " + path.string());
  const checkpoint::Checkpoint ckpt = checkpoint::Load(path);
  CheckClasses(ckpt, cfg);
  trainer::Models m = trainer::Models::Build(cfg.model, cfg.train.seed);
  trainer::RestoreModels(ckpt, m, {"generator", "segmenter"});
  return m;
}

int CmdEvaluate(const Common& c, std::string ckpt_path, const std::string& split,
                std::ostream& out) {
  const RunConfig cfg = LoadConfig(c);
  if (ckpt_path.empty()) ckpt_path = (RunDir(cfg) / "ckpt_best.bin").string();
  trainer::Models m = LoadModels(cfg, ckpt_path);
  std::vector<std::string> files;
  const auto samples = LoadSplit(cfg, split, &files);
  if (samples.empty()) throw UsageError("split '" + split + "' is empty");
  trainer::ModelPipeline pipe(m.gen, m.seg);
  const EvalReport rep = EvaluateSplit(pipe, samples, files, cfg);
  const fs::path path = RunDir(cfg) / ("eval_" + split + ".jsonl");
  WriteText(path, EvalJsonl(rep, cfg, split, ckpt_path));
  const auto& a = rep.aggregate;
  out << "| split | n | mIoU | PSNR | SSIM | ARI | Covering | BF |\n"
      << "|---|---|---|---|---|---|---|---|\n"
      << "| " << split << " | " << rep.rows.size() << " | " << Fixed(a.miou) << " | "
      << Fixed(a.psnr, 2) << " | " << Fixed(a.ssim) << " | " << Fixed(a.ari) << " | "
      << Fixed(a.covering) << " | " << Fixed(a.bf) << " |\n";
  out << "report " << path.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- navigate

fs::path WorldsDir(const RunConfig& cfg) {
  fs::path p(cfg.nav.worlds_dir);
  if (p.is_absolute() || fs::exists(p)) return p;
  const fs::path bundled = fs::path(ULRSEG_SOURCE_DIR) / p;
  if (fs::exists(bundled)) return bundled;
  throw UsageError("worlds directory " + p.string() + " not found");
}

struct PerceptionSpec {
  std::string kind;  // oracle | noisy | model
  double noise = 0.0;
};

PerceptionSpec ParsePerception(const std::string& s, const RunConfig& cfg) {
  if (s == "oracle") return {"oracle", 0.0};
  if (s == "model") return {"model", 0.0};
  if (s == "noisy") return {"noisy", cfg.nav.noise};
  if (s.rfind("noisy:", 0) == 0) {
    try {
      size_t used = 0;
      const double p = std::stod(s.substr(6), &used);
      if (used == s.size() - 6 && p >= 0.0 && p <= 1.0) return {"noisy", p};
    } catch (const std::exception&) {
    }
    throw UsageError("bad noise level in '" + s + "'");
  }
  throw UsageError("unknown perception '" + s + "' (expected oracle, noisy[:p], model)");
}

Json EpisodeJson(const navsim::Episode& ep, const navsim::World& w) {
  Json j;
  j["world"] = ep.world;
  j["target"] = ep.target;
  j["target_name"] = w.ClassName(ep.target);
  j["start"] = ep.start_index;
  j["repeat"] = ep.repeat;
  j["steps"] = ep.steps.size();
  j["final_mode"] = navsim::ModeName(ep.final_mode);
  j["success"] = ep.success();
  return j;
}

int CmdNavigate(const Common& c, const std::string& perception, int trials,
                const std::string& mode, std::string ckpt_path, std::ostream& out) {
  const RunConfig cfg = LoadConfig(c);
  const PerceptionSpec spec = ParsePerception(perception, cfg);
  if (mode != "protocol" && mode != "worlds") {
    throw UsageError("--mode must be protocol or worlds");
  }
  const fs::path wdir = WorldsDir(cfg);
  std::vector<navsim::World> worlds;
  if (mode == "worlds") {
    worlds = navsim::LoadWorldDir(wdir);
    if (trials >= 0 && static_cast<size_t>(trials) < worlds.size()) worlds.resize(trials);
  } else {
    worlds.push_back(navsim::LoadWorld(wdir / cfg.nav.world));
  }
  if (worlds.empty()) throw UsageError("no worlds in " + wdir.string());

  std::unique_ptr<trainer::Models> models;
  int threads = cfg.nav.threads;
  if (spec.kind == "model") {
    if (ckpt_path.empty()) ckpt_path = (RunDir(cfg) / "ckpt_best.bin").string();
    models = std::make_unique<trainer::Models>(LoadModels(cfg, ckpt_path));
    threads = 1;  // networks keep per-call scratch state
    for (const auto& w : worlds) {
      const int32_t top = *std::max_element(w.cells.begin(), w.cells.end());
      if (top >= cfg.data.num_classes) {
        throw UsageError("world " + w.name + " uses class " + std::to_string(top) +
                         " but the model predicts " + std::to_string(cfg.data.num_classes));
      }
    }
  }
  auto make = [&](int repeat) -> navsim::Perception {
    if (spec.kind == "oracle") return navsim::OraclePerception();
    if (spec.kind == "noisy") {
      return navsim::NoisyPerception(spec.noise, cfg.data.num_classes,
                                     cfg.train.seed * 1000003ULL + static_cast<uint64_t>(repeat));
    }
    return ModelPerception(models->gen, models->seg, cfg.data.lr_size);
  };

  const fs::path dir = RunDir(cfg) / "nav";
  fs::remove_all(dir / "replay");
  std::string trial_lines;
  Json header;
  header["kind"] = "header";
  header["format_version"] = kArtifactFormatVersion;
  header["perception"] = perception;
  header["config"] = ConfigJson(cfg);
  const std::string header_line = header.dump() + "\n";

  Json summary;
  summary["format_version"] = kArtifactFormatVersion;
  summary["perception"] = perception;
  summary["mode"] = mode;
  Json cells = Json::array();
  int total = 0, wins = 0;
  std::ostringstream table;
  auto record = [&](const navsim::Episode& ep, const navsim::World& w) {
    trial_lines += EpisodeJson(ep, w).dump() + "\n";
    std::ostringstream name;
    name << ep.world << "_t" << ep.target << "_s" << ep.start_index << "_r" << ep.repeat
         << ".jsonl";
    WriteText(dir / "replay" / name.str(), header_line + navsim::ReplayJsonl(ep));
  };
  if (mode == "protocol") {
    const navsim::World& w = worlds[0];
    const auto sum = navsim::RunProtocol(w, make, cfg.nav.nav, cfg.nav.repeats, trials, threads);
    for (const auto& ep : sum.episodes) record(ep, w);
    for (const auto& cell : sum.cells) {
      cells.push_back({{"target", cell.target},
                       {"target_name", w.ClassName(cell.target)},
                       {"start", cell.start_index},
                       {"trials", cell.trials},
                       {"successes", cell.successes},
                       {"rate", cell.rate()}});
    }
    total = sum.trials;
    wins = sum.successes;
    summary["world"] = w.name;
    table << NavTable(w, sum);
  } else {
    table << "| world | target | steps | result |\n|---|---|---|---|\n";
    for (const auto& w : worlds) {
      const navsim::Episode ep = navsim::RunEpisode(w, 0, w.targets[0], make(0), cfg.nav.nav);
      record(ep, w);
      cells.push_back({{"world", w.name},
                       {"target", ep.target},
                       {"target_name", w.ClassName(ep.target)},
                       {"start", 0},
                       {"trials", 1},
                       {"successes", ep.success() ? 1 : 0},
                       {"rate", ep.success() ? 1.0 : 0.0}});
      ++total;
      wins += ep.success();
      table << "| " << w.name << " | " << w.ClassName(ep.target) << " | " << ep.steps.size()
            << " | " << navsim::ModeName(ep.final_mode) << " |\n";
    }
  }
  summary["cells"] = cells;
  summary["trials"] = total;
  summary["successes"] = wins;
  summary["rate"] = total ? static_cast<double>(wins) / total : 0.0;
  summary["config"] = ConfigJson(cfg);
  WriteText(dir / "trials.jsonl", header_line + trial_lines);
  WriteText(dir / "summary.json", summary.dump(2) + "\n");
  out << table.str();
  out << "success rate " << wins << "/" << total << " = "
      << Fixed(total ? 100.0 * wins / total : 0.0, 1) << "%\n";
  out << "summary " << (dir / "summary.json").string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- report

std::vector<Json> ReadJsonl(const fs::path& p) {
  std::vector<Json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

int CmdReport(const Common& c, std::ostream& out) {
  const RunConfig cfg = LoadConfig(c);
  const fs::path run = RunDir(cfg);
  std::ostringstream md;
  Json rep;
  rep["format_version"] = kArtifactFormatVersion;
  rep["run"] = cfg.name;
  bool any = false;
  md << "# Run " << cfg.name << "\n";

  const fs::path log = run / "train_log.jsonl";
  if (fs::exists(log)) {
    any = true;
    std::map<int, Json> last;
    std::map<int, int64_t> count;
    std::optional<double> best;
    for (const Json& j : ReadJsonl(log)) {
      if (j.contains("stage") && j.contains("losses")) {
        const int s = j["stage"].get<int>();
        last[s] = j;
        ++count[s];
      } else if (j.value("event", "") == "validation") {
        const double v = j["val_miou"].get<double>();
        if (!best || v > *best) best = v;
      }
    }
    md << "\n## Training\n\n| stage | steps | final losses |\n|---|---|---|\n";
    Json tr = Json::array();
    for (const auto& [s, j] : last) {
      std::ostringstream losses;
      bool first = true;
      for (const auto& [k, v] : j["losses"].items()) {
        losses << (first ? "" : ", ") << k << " " << (v.is_number() ? Fixed(v.get<double>(), 5) : v.dump());
        first = false;
      }
      md << "| " << s << " | " << count[s] << " | " << losses.str() << " |\n";
      tr.push_back({{"stage", s}, {"steps", count[s]}, {"losses", j["losses"]}});
    }
    if (best) md << "\nbest validation mIoU " << Fixed(*best) << "\n";
    rep["training"] = tr;
    rep["best_val_miou"] = best ? Json(*best) : Json(nullptr);
  }

  Json evals = Json::array();
  std::ostringstream ev;
  for (const char* split : {"train", "val", "test"}) {
    const fs::path p = run / (std::string("eval_") + split + ".jsonl");
    if (!fs::exists(p)) continue;
    const auto rows = ReadJsonl(p);
    if (rows.empty() || rows.back().value("kind", "") != "aggregate") continue;
    const Json& a = rows.back();
    auto num = [&](const char* k) {
      const Json& v = a["metrics"][k];
      return v.is_number() ? Fixed(v.get<double>()) : v.is_null() ? "n/a" : v.get<std::string>();
    };
    ev << "| " << split << " | " << a["num_samples"].get<int64_t>() << " | " << num("miou")
       << " | " << num("psnr") << " | " << num("ssim") << " | " << num("ari") << " | "
       << num("covering") << " | " << num("bf") << " |\n";
    evals.push_back({{"split", split}, {"metrics", a["metrics"]}});
  }
  if (!evals.empty()) {
    any = true;
    md << "\n## Evaluation\n\n| split | n | mIoU | PSNR | SSIM | ARI | Covering | BF |\n"
       << "|---|---|---|---|---|---|---|---|\n"
       << ev.str();
    rep["evaluation"] = evals;
  }

  const fs::path nav = run / "nav" / "summary.json";
  if (fs::exists(nav)) {
    any = true;
    std::ifstream in(nav);
    const Json s = Json::parse(in);
    md << "\n## Navigation (" << s["perception"].get<std::string>() << ")\n\n"
       << "| target | start | successes | trials | rate |\n|---|---|---|---|---|\n";
    for (const Json& cell : s["cells"]) {
      md << "| " << cell["target_name"].get<std::string>() << " | " << cell["start"].get<int>()
         << " | " << cell["successes"].get<int>() << " | " << cell["trials"].get<int>() << " | "
         << Fixed(cell["rate"].get<double>(), 3) << " |\n";
    }
    md << "\noverall " << s["successes"].get<int>() << "/" << s["trials"].get<int>() << "\n";
    rep["navigation"] = s;
  }
  if (!any) throw std::runtime_error("nothing to report under " + run.string());
  rep["config"] = ConfigJson(cfg);
  md << "\n<!-- format_version " << kArtifactFormatVersion << " -->\n";
  WriteText(run / "report.md", md.str());
  WriteText(run / "report.json", rep.dump(2) + "\n");
  out << md.str();
  return kExitOk;
}

}  // namespace

EvalReport EvaluateSplit(trainer::Pipeline& pipeline,
                         const std::vector<datakit::Sample>& samples,
                         const std::vector<std::string>& files, const RunConfig& cfg) {
  if (files.size() != samples.size()) throw InvalidArgument("files and samples differ in count");
  EvalReport rep;
  rep.files = files;
  for (const auto& s : samples) {
    const Tensor sr = pipeline.SuperResolve(s.lr);
    const LabelMap pred = segnet::PredictLabels(pipeline.Segment(sr));
    rep.rows.push_back(metrics::EvaluateSample(pred, s.label, sr, s.hr, cfg.data.num_classes,
                                               cfg.data.ignore_index, cfg.eval.bf_tolerance));
  }
  rep.aggregate = metrics::MeanRow(rep.rows);
  return rep;
}

std::string EvalJsonl(const EvalReport& rep, const RunConfig& cfg, const std::string& split,
                      const std::string& checkpoint) {
  std::string out;
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    Json j;
    j["kind"] = "sample";
    j["split"] = split;
    j["file"] = rep.files[i];
    j["metrics"] = RowJson(rep.rows[i]);
    out += j.dump() + "\n";
  }
  Json a;
  a["kind"] = "aggregate";
  a["split"] = split;
  a["num_samples"] = rep.rows.size();
  a["checkpoint"] = checkpoint;
  a["metrics"] = RowJson(rep.aggregate);
  // Image-quality scores that need external networks are reported only
  // when a scorer has been registered.
  a["lpips"] = nullptr;
  a["fid"] = nullptr;
  a["format_version"] = kArtifactFormatVersion;
  a["config"] = ConfigJson(cfg);
  out += a.dump() + "\n";
  return out;
}

navsim::Perception ModelPerception(const srgen::Generator& gen, segnet::SegNet& seg,
                                   int64_t lr_size) {
  return [&gen, &seg, lr_size](const navsim::View& v, int) {
    const Tensor lr = QuantizeImage(datakit::DownsampleBicubic(v.hr, lr_size));
    return segnet::PredictLabels(seg.Segment(gen.Generate(lr)));
  };
}

std::string NavTable(const navsim::World& world, const navsim::ProtocolSummary& sum) {
  std::set<int> starts;
  std::vector<int32_t> targets;
  for (const auto& c : sum.cells) {
    starts.insert(c.start_index);
    if (std::find(targets.begin(), targets.end(), c.target) == targets.end()) {
      targets.push_back(c.target);
    }
  }
  std::ostringstream t;
  t << "| target |";
  for (int s : starts) t << " start " << static_cast<char>('A' + s) << " |";
  t << " total |\n|---|";
  for (size_t i = 0; i < starts.size(); ++i) t << "---|";
  t << "---|\n";
  for (int32_t target : targets) {
    t << "| " << world.ClassName(target) << " |";
    int n = 0, k = 0;
    for (int s : starts) {
      const auto it = std::find_if(sum.cells.begin(), sum.cells.end(), [&](const auto& c) {
        return c.target == target && c.start_index == s;
      });
      if (it == sum.cells.end()) {
        t << " - |";
        continue;
      }
      t << " " << it->successes << "/" << it->trials << " |";
      n += it->trials;
      k += it->successes;
    }
    t << " " << k << "/" << n << " |\n";
  }
  return t.str();
}

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint super-resolution and segmentation of ultra-low-resolution images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ulrseg format " + std::to_string(kArtifactFormatVersion));

  Common prep_c, train_c, eval_c, nav_c, rep_c;
  bool force = false;
  auto* prepare = app.add_subcommand("prepare", "synthesize the dataset and its manifest");
  AddCommon(prepare, prep_c);
  prepare->add_flag("--force", force, "overwrite an existing dataset");

  int stage = 1;
  std::string init, ablate;
  bool cold = false;
  auto* train = app.add_subcommand("train", "run training stage 1 or 2");
  AddCommon(train, train_c);
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--init", init, "checkpoint to start from");
  train->add_option("--ablate", ablate, "comma list of modules to disable: sad, afe");
  train->add_flag("--cold-start", cold, "allow stage 2 without a stage-1 checkpoint");

  std::string eval_ckpt, split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  AddCommon(evaluate, eval_c);
  evaluate->add_option("--checkpoint", eval_ckpt, "defaults to <run>/ckpt_best.bin");
  evaluate->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  std::string perception = "oracle", mode = "protocol", nav_ckpt;
  int trials = -1;
  auto* navigate = app.add_subcommand("navigate", "run object-goal navigation trials");
  AddCommon(navigate, nav_c);
  navigate->add_option("--perception", perception, "oracle, noisy[:p] or model");
  navigate->add_option("--trials", trials, "limit on the number of trials");
  navigate->add_option("--mode", mode, "protocol (one world, targets x starts x repeats) "
                                       "or worlds (one episode per bundled world)");
  navigate->add_option("--checkpoint", nav_ckpt, "model perception checkpoint");

  auto* report = app.add_subcommand("report", "render tables from a run's artifacts");
  AddCommon(report, rep_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (*prepare) return CmdPrepare(prep_c, force, out);
    if (*train) return CmdTrain(train_c, stage, init, ablate, cold, out, err);
    if (*evaluate) return CmdEvaluate(eval_c, eval_ckpt, split, out);
    if (*navigate) return CmdNavigate(nav_c, perception, trials, mode, nav_ckpt, out);
    if (*report) return CmdReport(rep_c, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ulrseg::cli
