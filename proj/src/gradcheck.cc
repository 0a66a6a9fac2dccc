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

#include "clothpb/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace clothpb {

double CorrectedRelativeError(double a, double b, double absolute_tolerance) {
  const double numerator = std::max(0.0, std::abs(a - b) - absolute_tolerance);
  return numerator / (std::abs(a) + std::abs(b) + absolute_tolerance);
}

GradientCheckResult GradientCheck(const LossClosure& loss,
                                  std::vector<Tensor> inputs,
                                  const GradientCheckOptions& options) {
  auto evaluate = [&](const std::vector<Tensor>& values) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : values) vars.push_back(tape.Input(t));
    return loss(tape, vars).value().item();
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.Input(t));
    Var l = loss(tape, vars);
    tape.Backward(l);
    for (const Var& v : vars) analytic.push_back(tape.Grad(v));
  }

  std::size_t total = 0;
  for (const Tensor& t : inputs) total += t.size();
  GradientCheckResult result;
  if (total == 0) return result;

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int p = 0; p < options.probes; ++p) {
    std::size_t flat = pick(rng);
    std::size_t which = 0;
    while (flat >= inputs[which].size()) flat -= inputs[which++].size();
    const double original = inputs[which][flat];
    inputs[which][flat] = original + options.epsilon;
    const double plus = evaluate(inputs);
    inputs[which][flat] = original - options.epsilon;
    const double minus = evaluate(inputs);
    inputs[which][flat] = original;
    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    result.max_relative_error =
        std::max(result.max_relative_error,
                 CorrectedRelativeError(analytic[which][flat], numeric,
                                        options.absolute_tolerance));
    ++result.probed;
  }
  return result;
}

}  // namespace clothpb
