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

#ifndef CLOTHPB_SIM_ELLIPSOID_H_
#define CLOTHPB_SIM_ELLIPSOID_H_

#include <vector>

#include "clothpb/sim/world.h"

namespace clothpb::sim {

struct EllipsoidOptions {
  double force = 1.0;  // N
  double dt = 1e-3;
  int max_steps = 200000;
  // Settled when joint speeds stay below this for a full second.
  double speed_tolerance = 1e-9;
};

// End-effector displacement under a static force probe in each of `n_dirs`
// evenly spaced directions (starting along +x), relative to the unloaded
// equilibrium at theta_ref. The arm is simulated without cloth.
std::vector<Vec2> StiffnessEllipsoid(const ArmModel& arm, const JointVector& theta_ref,
                                     double k_ref, int n_dirs,
                                     const EllipsoidOptions& options = {});

// Linear map A with displacement ~= A * unit_force, least-squares fit over
// evenly spaced probe directions.
Eigen::Matrix2d FitEllipse(const std::vector<Vec2>& displacements);

}  // namespace clothpb::sim

#endif  // CLOTHPB_SIM_ELLIPSOID_H_
