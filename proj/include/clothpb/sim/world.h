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

// Planar mass-spring cloth held by a two-link servo arm.
//
// The world lives in the sagittal plane: x points forward, y points up and
// the shoulder sits at ArmModel::base. Joint angles are measured
// counter-clockwise from +x; the forearm angle is theta[0] + theta[1].

#ifndef CLOTHPB_SIM_WORLD_H_
#define CLOTHPB_SIM_WORLD_H_

#include <array>
#include <vector>

#include <Eigen/Core>

namespace clothpb::sim {

using Vec2 = Eigen::Vector2d;
using JointVector = std::array<double, 2>;

struct MaterialParams {
  double c_damp = 0.05;  // N*s/m, between connected point masses
  double c_mass = 0.10;  // kg, whole cloth

  void Validate() const;
};

struct ClothEdge {
  int a = 0;
  int b = 0;
  double rest_length = 0.0;
};

struct ClothModel {
  int node_count = 0;
  std::vector<ClothEdge> edges;
  // Lattice cells as node quadruples in winding order; used for rasterizing.
  std::vector<std::array<int, 4>> cells;
  double k_spring = 0.0;  // N/m
  std::vector<int> attach_nodes;
  // Attachment points expressed in the hand frame (x along the forearm).
  std::vector<Vec2> attach_offsets;
  // Rest layout in the hand frame, used to seed the initial state.
  std::vector<Vec2> rest_layout;

  void Validate() const;
};

struct GridClothOptions {
  int width_nodes = 3;
  int length_nodes = 6;
  double width = 0.24;   // m, along the grasped short edge
  double length = 0.60;  // m
  double k_spring = 40.0;
};

// 3x6 lattice with structural 4-neighbour springs and both diagonal shear
// springs per cell. The first short edge (all width nodes at length index 0)
// is pinned to the hand. Node index = length_index * width_nodes + width_index.
ClothModel MakeGridCloth(const GridClothOptions& options = {});

struct JointLimits {
  double min = 0.0;
  double max = 0.0;
};

struct ArmModel {
  std::array<double, 2> link_lengths = {0.3, 0.3};
  std::array<JointLimits, 2> joint_limits = {JointLimits{-1.5707963267948966, 3.141592653589793},
                                             JointLimits{-2.4, 0.0}};
  Vec2 base = Vec2::Zero();
  std::array<double, 2> inertia = {0.4, 0.15};   // kg*m^2 about each joint
  std::array<double, 2> kp0 = {120.0, 60.0};      // N*m/rad at unit gain
  std::array<double, 2> kd0 = {11.0, 4.0};        // N*m*s/rad at unit gain
  double k_min = 1.0;
  double k_max = 7.0;

  void Validate() const;
};

struct ServoCommand {
  JointVector theta_ref = {0.0, 0.0};
  double k_ref = 1.0;
};

struct WorldState {
  std::vector<Vec2> node_pos;
  std::vector<Vec2> node_vel;
  JointVector theta = {0.0, 0.0};
  JointVector theta_dot = {0.0, 0.0};
  double t = 0.0;
};

struct HandFrame {
  Vec2 elbow;
  Vec2 position;  // end effector
  double angle = 0.0;
  Vec2 PointAt(const Vec2& offset) const;
};

HandFrame ForwardKinematics(const ArmModel& arm, const JointVector& theta);
// 2x2 positional Jacobian of the end effector.
Eigen::Matrix2d EndEffectorJacobian(const ArmModel& arm, const JointVector& theta);

struct WorldConfig {
  ArmModel arm;
  ClothModel cloth;
  Vec2 gravity = Vec2(0.0, -9.81);
  double dt = 1e-3;
  int substeps_per_tick = 200;  // 5 Hz control tick at dt = 1e-3
};

WorldConfig DefaultWorldConfig();

// Theta targets clipped to the joint limits, gain clamped to [k_min, k_max].
ServoCommand ClipCommand(const ArmModel& arm, ServoCommand cmd);

// Cloth laid out in its rest shape in the hand frame, everything at rest.
WorldState MakeInitialState(const WorldConfig& config, const JointVector& theta);

// One semi-implicit Euler step. `hand_force` is an external force applied at
// the end effector. Throws a diverged error naming the first non-finite
// quantity.
WorldState Step(const WorldConfig& config, const WorldState& state,
                const ServoCommand& cmd, const MaterialParams& material,
                double dt, const Vec2& hand_force = Vec2::Zero());

// config.substeps_per_tick steps at config.dt.
WorldState AdvanceTick(const WorldConfig& config, WorldState state,
                       const ServoCommand& cmd, const MaterialParams& material);

// Holds `theta` as servo target until the cloth comes to rest (or `seconds`
// elapse) and resets the clock.
WorldState SettledState(const WorldConfig& config, const MaterialParams& material,
                        const JointVector& theta, double seconds = 3.0);

// Kinetic + gravitational + spring + servo potential energy. Attached nodes
// contribute potential energy only; their motion is prescribed.
double MechanicalEnergy(const WorldConfig& config, const WorldState& state,
                        const ServoCommand& cmd, const MaterialParams& material);
double ClothKineticEnergy(const WorldConfig& config, const WorldState& state,
                          const MaterialParams& material);

}  // namespace clothpb::sim

#endif  // CLOTHPB_SIM_WORLD_H_
