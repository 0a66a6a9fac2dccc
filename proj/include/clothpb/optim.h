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

#ifndef CLOTHPB_OPTIM_H_
#define CLOTHPB_OPTIM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "clothpb/tensor.h"

namespace clothpb {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are allocated on the first step and bound to
// the parameter order used then.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void Step(std::span<Tensor* const> params,
            std::span<const Tensor* const> grads);

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_ = 0;
};

struct MomentumSgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
};

// Heavy-ball update: v <- momentum * v - lr * g; param <- param + v.
class MomentumSgd {
 public:
  explicit MomentumSgd(MomentumSgdOptions options = {}) : options_(options) {}

  void Step(std::span<Tensor* const> params,
            std::span<const Tensor* const> grads);

  const MomentumSgdOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_; }
  const std::vector<Tensor>& velocities() const { return velocity_; }

 private:
  MomentumSgdOptions options_;
  std::vector<Tensor> velocity_;
  std::int64_t step_ = 0;
};

}  // namespace clothpb

#endif  // CLOTHPB_OPTIM_H_
