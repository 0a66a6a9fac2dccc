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

#include "clothpb/layers.h"

#include <cmath>

#include "clothpb/error.h"

namespace clothpb {

BoundParameters::BoundParameters(Tape& tape, const ParameterSet& params, bool track)
    : tape_(&tape) {
  for (const auto& [name, value] : params) {
    vars_.emplace(name, track ? tape.Input(value) : tape.Constant(value));
  }
}

BoundParameters::BoundParameters(Tape& tape, const ParameterSet& layout,
                                 std::span<const Var> vars)
    : tape_(&tape) {
  if (vars.size() != layout.size()) {
    throw Error(ErrorKind::kContract, "bound var count differs from parameter count");
  }
  std::size_t i = 0;
  for (const auto& [name, value] : layout) vars_.emplace(name, vars[i++]);
}

Var BoundParameters::operator[](std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    throw Error(ErrorKind::kSchema, "missing parameter block '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<Tensor> BoundParameters::Gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (const auto& [name, var] : vars_) out.push_back(tape_->Grad(var));
  return out;
}

void AdamStep(Adam& adam, ParameterSet& params, const std::vector<Tensor>& grads) {
  std::vector<Tensor*> ps;
  std::vector<const Tensor*> gs;
  for (auto& [name, value] : params) ps.push_back(&value);
  for (const Tensor& g : grads) gs.push_back(&g);
  adam.Step(ps, gs);
}

Tensor UniformInit(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Var Linear(const BoundParameters& p, Var x, const std::string& name) {
  return ad::Add(ad::MatMul(x, p[name + ".w"]), p[name + ".b"]);
}

void InitLinear(ParameterSet& params, const std::string& name, int in, int out,
                std::mt19937_64& rng) {
  params.Set(name + ".w", UniformInit({in, out}, std::sqrt(6.0 / (in + out)), rng));
  params.Set(name + ".b", Tensor({out}));
}

}  // namespace clothpb
