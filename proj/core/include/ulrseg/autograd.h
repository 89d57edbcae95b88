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
#ifndef ULRSEG_AUTOGRAD_H_
#define ULRSEG_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ulrseg/tensor.h"

namespace ulrseg::nn {

// One vertex of the dynamic reverse-mode graph. `backward` reads `grad` and
// accumulates into the inputs that require gradients.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& EnsureGrad();
  void AccumulateGrad(const Tensor& g, double scale = 1.0);
};

using NodePtr = std::shared_ptr<Node>;

// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero tensor of the value's shape when no gradient has been accumulated.
  Tensor grad() const;
  void ZeroGrad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Leaf without gradient tracking.
Var Constant(Tensor value);
// Trainable leaf.
Var Parameter(Tensor value);

// Builds an op output. The backward closure is kept only when grad mode is
// enabled and at least one input requires a gradient.
Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward);

// Reverse-mode sweep from a single-element root. Gradients accumulate into
// every reachable node that requires them.
// With `release_values`, interior values are dropped as soon as they
// are no longer needed; reading them afterwards yields empty tensors.
void Backward(const Var& root, bool release_values = false);

Var Detach(const Var& v);

bool GradEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Named trainable tensors of a network, in a stable order.
struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

// Named non-trainable state (running statistics, power-iteration vectors).
struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};
using BufferList = std::vector<NamedBuffer>;

void ZeroGrads(const ParamList& params);
int64_t CountParameters(const ParamList& params);

}  // namespace ulrseg::nn

#endif  // ULRSEG_AUTOGRAD_H_
