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

#include <Eigen/LU>

#include "clothpb/sim/ellipsoid.h"

#include <cmath>
#include <numbers>

#include "clothpb/error.h"

namespace clothpb::sim {
namespace {


WorldState SettleArm(const WorldConfig& config, WorldState state, const ServoCommand& cmd,
                     const Vec2& force, const EllipsoidOptions& options) {
  const MaterialParams unused;
  const int quiet_needed = static_cast<int>(std::round(1.0 / options.dt));
  int quiet = 0;
  for (int step = 0; step < options.max_steps; ++step) {
    state = Step(config, state, cmd, unused, options.dt, force);
    const bool still = std::abs(state.theta_dot[0]) < options.speed_tolerance &&
                       std::abs(state.theta_dot[1]) < options.speed_tolerance;
    quiet = still ? quiet + 1 : 0;
    if (quiet >= quiet_needed) return state;
  }
  throw Error(ErrorKind::kNotConverged,
              "arm did not settle within " + std::to_string(options.max_steps) + " steps");
}

}  // namespace

std::vector<Vec2> StiffnessEllipsoid(const ArmModel& arm, const JointVector& theta_ref,
                                     double k_ref, int n_dirs,
                                     const EllipsoidOptions& options) {
  if (n_dirs < 8) throw Error(ErrorKind::kContract, "ellipsoid needs at least 8 directions");
  arm.Validate();
  WorldConfig config;
  config.arm = arm;
  config.cloth = ClothModel{};
  ServoCommand cmd;
  cmd.theta_ref = theta_ref;
  cmd.k_ref = k_ref;
  WorldState rest;
  rest.theta = theta_ref;
  rest = SettleArm(config, rest, cmd, Vec2::Zero(), options);
  const Vec2 origin = ForwardKinematics(arm, rest.theta).position;

  std::vector<Vec2> displacements;
  for (int i = 0; i < n_dirs; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / n_dirs;
    const Vec2 force = options.force * Vec2(std::cos(angle), std::sin(angle));
    const WorldState loaded = SettleArm(config, rest, cmd, force, options);
    displacements.push_back(ForwardKinematics(arm, loaded.theta).position - origin);
  }
  return displacements;
}

Eigen::Matrix2d FitEllipse(const std::vector<Vec2>& displacements) {
  const int n = static_cast<int>(displacements.size());
  Eigen::Matrix<double, 2, Eigen::Dynamic> d(2, n), f(2, n);
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / n;
    d.col(i) = displacements[i];
    f.col(i) = Vec2(std::cos(angle), std::sin(angle));
  }
  return d * f.transpose() * (f * f.transpose()).inverse();
}

}  // namespace clothpb::sim
