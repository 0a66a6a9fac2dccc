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

#ifndef CLOTHPB_GRADCHECK_H_
#define CLOTHPB_GRADCHECK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "clothpb/autodiff.h"

namespace clothpb {

// Builds a scalar loss on `tape` from tracked inputs.
using LossClosure = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradientCheckOptions {
  double epsilon = 1e-5;
  // Number of randomly sampled coordinates (across all inputs) to probe.
  int probes = 10;
  std::uint64_t seed = 0;
  // Differences below this are ignored, as are relative errors whose
  // denominator is dominated by it.
  double absolute_tolerance = 1e-9;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  int probed = 0;
};

// Compares reverse-mode gradients of `loss` against central differences at
// randomly chosen coordinates.
GradientCheckResult GradientCheck(const LossClosure& loss,
                                  std::vector<Tensor> inputs,
                                  const GradientCheckOptions& options = {});

// |a-b| (minus tolerance, floored at 0) over |a|+|b|+tolerance.
double CorrectedRelativeError(double a, double b, double absolute_tolerance);

}  // namespace clothpb

#endif  // CLOTHPB_GRADCHECK_H_
