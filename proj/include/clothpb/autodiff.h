// Copyright 2026 The clothpb Authors
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

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every primitive applied to its variables together with an
// exact backward rule. Backward() walks the record in reverse topological
// (insertion) order and accumulates gradients into every variable that
// depends on a tracked input.

#ifndef CLOTHPB_AUTODIFF_H_
#define CLOTHPB_AUTODIFF_H_

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "clothpb/tensor.h"

namespace clothpb {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Called during Backward with the gradient of the node's output.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A value that never receives a gradient.
  Var Constant(Tensor value);
  // A tracked leaf (parameter or differentiable input).
  Var Input(Tensor value);

  // Records a primitive result. `backward` is dropped when no input is
  // tracked, which makes constant subgraphs free to differentiate.
  Var Record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& Value(Var v) const;
  bool Tracked(Var v) const;

  // Gradient slot of `v` for accumulation inside backward rules; nullptr if
  // `v` is not tracked. Lazily zero-initialised.
  Tensor* GradSlot(Var v);

  // Reverse pass from a scalar loss. Throws a contract error if `loss` holds
  // more than one element.
  void Backward(Var loss);

  // Gradient of the last Backward() call with respect to `v`; zeros when no
  // path connected `v` to the loss.
  Tensor Grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool tracked = false;
  };

  void CheckOwned(Var v) const;

  // Deque keeps references to recorded values stable while recording.
  std::deque<Node> nodes_;
};

enum class BatchNormMode { kTrain, kInference };

// Per-feature running statistics owned by a model; updated as a side effect
// of a training-mode forward pass. Running variance is the biased batch
// variance so that inference reproduces training output on identical
// statistics.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormStats ForFeatures(int features);
};

namespace ad {

// Matrix product of rank-2 operands.
Var MatMul(Var a, Var b);
// Elementwise sum. `b` may also be a rank-1 bias broadcast along the last
// axis of a rank-2 `a`, or along axis 1 of a rank-4 (NCHW) `a`.
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
Var Tanh(Var a);
Var Relu(Var a);
Var Sigmoid(Var a);

// 3x3 convolution, stride 2, zero padding 1. x: [N,C,H,W], w: [O,C,3,3],
// b: [O]. Output [N,O,(H-1)/2+1,(W-1)/2+1].
Var Conv2d(Var x, Var w, Var b);
// Transposed counterpart of Conv2d that exactly doubles the spatial size.
// x: [N,C,H,W], w: [C,O,3,3], b: [O]. Output [N,O,2H,2W].
Var Deconv2d(Var x, Var w, Var b);

// Normalises over every axis except the feature axis (1). Accepts [N,F] or
// [N,C,H,W].
Var BatchNorm(Var x, Var gamma, Var beta, BatchNormStats& stats,
              BatchNormMode mode);

// Concatenation along the last axis of rank-2 operands.
Var Concat(std::span<const Var> parts);
// Columns [begin, end) of a rank-2 operand.
Var Slice(Var a, int begin, int end);
// Rows of `table` selected by `rows`; gradients scatter-add back.
Var GatherRows(Var table, std::span<const int> rows);
Var Reshape(Var a, Shape shape);

Var Sum(Var a);
Var SumSq(Var a);
// Euclidean norm over all elements; the gradient at exactly zero is taken
// as zero.
Var L2Norm(Var a);
// Mean squared difference over all elements.
Var MeanSquaredError(Var prediction, Var target);
// Mean binary cross-entropy between sigmoid(logits) and binary targets,
// computed in the numerically stable logits form.
Var SigmoidCrossEntropy(Var logits, Var targets);

}  // namespace ad
}  // namespace clothpb

#endif  // CLOTHPB_AUTODIFF_H_
