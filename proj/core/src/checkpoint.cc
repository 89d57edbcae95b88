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
#include "ulrseg/checkpoint.h"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace ulrseg::checkpoint {
namespace {

constexpr char kMagic[8] = {'U', 'L', 'R', 'S', 'E', 'G', 'C', 'K'};
constexpr uint64_t kMaxString = uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void Pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void String(const std::string& s) {
    Pod<uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void Tensor(const ulrseg::Tensor& t) {
    Pod<uint32_t>(static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) Pod<int64_t>(d);
    out_.write(reinterpret_cast<const char*>(t.raw()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string origin)
      : in_(in), origin_(std::move(origin)) {}
  template <typename T>
  T Pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    Check();
    return v;
  }
  std::string String() {
    const auto n = Pod<uint64_t>();
    if (n > kMaxString) Fail("string length out of range");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    Check();
    return s;
  }
  ulrseg::Tensor Tensor() {
    const auto nd = Pod<uint32_t>();
    if (nd > 8) Fail("tensor rank out of range");
    Shape shape(nd);
    for (auto& d : shape) {
      d = Pod<int64_t>();
      if (d < 0) Fail("negative tensor dimension");
    }
    ulrseg::Tensor t(shape);
    in_.read(reinterpret_cast<char*>(t.raw()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
    Check();
    return t;
  }
  [[noreturn]] void Fail(const std::string& what) {
    throw std::runtime_error("checkpoint " + origin_ + ": " + what);
  }

 private:
  void Check() {
    if (!in_) Fail("truncated file");
  }
  std::ifstream& in_;
  std::string origin_;
};

template <typename List, typename Get>
void RestoreImpl(const NamedTensors& src, const List& dst,
                 const std::string& what, Get get) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : src) by_name[name] = &t;
  for (const auto& entry : dst) {
    auto it = by_name.find(entry.name);
    if (it == by_name.end()) {
      throw std::runtime_error(what + ": missing tensor '" + entry.name + "'");
    }
    Tensor& target = get(entry);
    if (!it->second->SameShape(target)) {
      throw std::runtime_error(what + ": tensor '" + entry.name + "' has shape " +
                               ShapeToString(it->second->shape()) +
                               ", expected " + ShapeToString(target.shape()));
    }
    target = *it->second;
  }
}

}  // namespace

const NamedTensors& Checkpoint::Section(const std::string& name) const {
  auto it = sections.find(name);
  if (it == sections.end()) {
    throw std::runtime_error("checkpoint has no '" + name + "' section");
  }
  return it->second;
}

Checkpoint Checkpoint::InferenceOnly() const {
  Checkpoint out;
  out.format_version = format_version;
  out.config_text = config_text;
  out.metadata = metadata;
  for (const char* keep : {"generator", "segmenter", "buffers"}) {
    auto it = sections.find(keep);
    if (it != sections.end()) out.sections.insert(*it);
  }
  out.metadata["inference_only"] = "true";
  return out;
}

void Save(const CheckpointRefs& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.Pod<uint32_t>(kFormatVersion);
    w.String(ckpt.config_text);
    w.Pod<uint64_t>(ckpt.metadata.size());
    for (const auto& [k, v] : ckpt.metadata) {
      w.String(k);
      w.String(v);
    }
    w.Pod<uint64_t>(ckpt.sections.size());
    for (const auto& [name, tensors] : ckpt.sections) {
      w.String(name);
      w.Pod<uint64_t>(tensors.size());
      for (const auto& [tname, t] : tensors) {
        w.String(tname);
        w.Tensor(*t);
      }
    }
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void Save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  CheckpointRefs refs;
  refs.config_text = ckpt.config_text;
  refs.metadata = ckpt.metadata;
  for (const auto& [name, tensors] : ckpt.sections) {
    auto& out = refs.sections[name];
    for (const auto& [tname, t] : tensors) out.emplace_back(tname, &t);
  }
  Save(refs, path);
}

Checkpoint Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    r.Fail("not a ulrseg checkpoint");
  }
  Checkpoint ckpt;
  ckpt.format_version = r.Pod<uint32_t>();
  if (ckpt.format_version != kFormatVersion) {
    r.Fail("unsupported format version " + std::to_string(ckpt.format_version));
  }
  ckpt.config_text = r.String();
  const auto nmeta = r.Pod<uint64_t>();
  for (uint64_t i = 0; i < nmeta; ++i) {
    std::string k = r.String();
    ckpt.metadata[k] = r.String();
  }
  const auto nsec = r.Pod<uint64_t>();
  for (uint64_t i = 0; i < nsec; ++i) {
    std::string name = r.String();
    const auto count = r.Pod<uint64_t>();
    NamedTensors tensors;
    for (uint64_t j = 0; j < count; ++j) {
      std::string tname = r.String();
      tensors.emplace_back(std::move(tname), r.Tensor());
    }
    ckpt.sections[name] = std::move(tensors);
  }
  return ckpt;
}

TensorRefs Refs(const nn::ParamList& params) {
  TensorRefs out;
  for (const auto& p : params) out.emplace_back(p.name, &p.var.value());
  return out;
}

TensorRefs Refs(const nn::BufferList& buffers) {
  TensorRefs out;
  for (const auto& b : buffers) out.emplace_back(b.name, b.tensor);
  return out;
}

NamedTensors Capture(const nn::ParamList& params) {
  NamedTensors out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.name, p.var.value());
  return out;
}

NamedTensors Capture(const nn::BufferList& buffers) {
  NamedTensors out;
  out.reserve(buffers.size());
  for (const auto& b : buffers) out.emplace_back(b.name, *b.tensor);
  return out;
}

void Restore(const NamedTensors& src, const nn::ParamList& params,
             const std::string& what) {
  RestoreImpl(src, params, what, [](const nn::NamedParam& p) -> Tensor& {
    return nn::Var(p.var).mutable_value();
  });
}

void Restore(const NamedTensors& src, const nn::BufferList& buffers,
             const std::string& what) {
  RestoreImpl(src, buffers, what,
              [](const nn::NamedBuffer& b) -> Tensor& { return *b.tensor; });
}

}  // namespace ulrseg::checkpoint
