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

#ifndef CLOTHPB_LAYERS_H_
#define CLOTHPB_LAYERS_H_

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clothpb/autodiff.h"
#include "clothpb/checkpoint.h"
#include "clothpb/optim.h"

namespace clothpb {

// Parameters of a ParameterSet placed on a tape, by name.
class BoundParameters {
 public:
  // Tracked parameters receive gradients; untracked ones are constants.
  BoundParameters(Tape& tape, const ParameterSet& params, bool track);

  // Binds already-recorded vars, one per block of `layout` in name order.
  BoundParameters(Tape& tape, const ParameterSet& layout, std::span<const Var> vars);

  Var operator[](std::string_view name) const;
  Tape& tape() const { return *tape_; }

  // Gradients after tape.Backward(), in ParameterSet order.
  std::vector<Tensor> Gradients() const;

 private:
  Tape* tape_;
  std::map<std::string, Var, std::less<>> vars_;
};

// Applies one optimizer step to every block of `params` in name order.
void AdamStep(Adam& adam, ParameterSet& params, const std::vector<Tensor>& grads);

Tensor UniformInit(Shape shape, double bound, std::mt19937_64& rng);

// x [N,in] times W [in,out] plus b [out].
Var Linear(const BoundParameters& p, Var x, const std::string& name);

// Adds "<name>.w" [in,out] and "<name>.b" [out] with a fan-in scaled
// uniform draw.
void InitLinear(ParameterSet& params, const std::string& name, int in, int out,
                std::mt19937_64& rng);

}  // namespace clothpb

#endif  // CLOTHPB_LAYERS_H_
