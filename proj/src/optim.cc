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

#include "clothpb/optim.h"

#include <cmath>

#include "clothpb/error.h"

namespace clothpb {
namespace {

void CheckAligned(std::span<Tensor* const> params,
                  std::span<const Tensor* const> grads,
                  const std::vector<Tensor>& state, const char* name) {
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::kContract,
                std::string(name) + ": parameter and gradient counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    RequireSameShape(*params[i], *grads[i], name);
  }
  if (!state.empty()) {
    if (state.size() != params.size()) {
      throw Error(ErrorKind::kContract,
                  std::string(name) + ": parameter list changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      RequireSameShape(*params[i], state[i], name);
    }
  }
}

}  // namespace

void Adam::Step(std::span<Tensor* const> params,
                std::span<const Tensor* const> grads) {
  CheckAligned(params, grads, m_, "adam");
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.push_back(Tensor::ZerosLike(*p));
      v_.push_back(Tensor::ZerosLike(*p));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void MomentumSgd::Step(std::span<Tensor* const> params,
                       std::span<const Tensor* const> grads) {
  CheckAligned(params, grads, velocity_, "momentum_sgd");
  if (velocity_.empty()) {
    for (Tensor* p : params) velocity_.push_back(Tensor::ZerosLike(*p));
  }
  ++step_;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& v = velocity_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = options_.momentum * v[i] - options_.lr * g[i];
      p[i] += v[i];
    }
  }
}

}  // namespace clothpb
