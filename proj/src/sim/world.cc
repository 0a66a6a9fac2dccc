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

#include "clothpb/sim/world.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "clothpb/error.h"

namespace clothpb::sim {
namespace {

double Cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Eigen::Matrix2d Rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

void RequireFinite(double v, const std::string& what) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::kDiverged, "integration diverged: " + what + " is not finite");
  }
}

}  // namespace

void MaterialParams::Validate() const {
  if (!(c_damp >= 0.0) || !std::isfinite(c_damp)) {
    throw Error(ErrorKind::kContract, "c_damp must be >= 0");
  }
  if (!(c_mass > 0.0) || !std::isfinite(c_mass)) {
    throw Error(ErrorKind::kContract, "c_mass must be > 0");
  }
}

void ClothModel::Validate() const {
  for (const ClothEdge& e : edges) {
    if (e.a < 0 || e.b < 0 || e.a >= node_count || e.b >= node_count || e.a == e.b) {
      throw Error(ErrorKind::kContract, "cloth edge references invalid nodes");
    }
    if (!(e.rest_length > 0.0)) throw Error(ErrorKind::kContract, "rest lengths must be > 0");
  }
  if (attach_nodes.size() != attach_offsets.size()) {
    throw Error(ErrorKind::kContract, "attach nodes and offsets differ in count");
  }
  if (static_cast<int>(rest_layout.size()) != node_count) {
    throw Error(ErrorKind::kContract, "rest layout size differs from node count");
  }
}

ClothModel MakeGridCloth(const GridClothOptions& options) {
  const int w = options.width_nodes;
  const int l = options.length_nodes;
  if (w < 2 || l < 2) throw Error(ErrorKind::kContract, "grid needs at least 2x2 nodes");
  ClothModel cloth;
  cloth.node_count = w * l;
  cloth.k_spring = options.k_spring;
  const double dw = options.width / (w - 1);
  const double dl = options.length / (l - 1);
  auto id = [w](int li, int wi) { return li * w + wi; };
  for (int li = 0; li < l; ++li) {
    for (int wi = 0; wi < w; ++wi) {
      cloth.rest_layout.emplace_back(li * dl, (wi - 0.5 * (w - 1)) * dw);
    }
  }
  auto add_edge = [&](int a, int b) {
    cloth.edges.push_back({a, b, (cloth.rest_layout[a] - cloth.rest_layout[b]).norm()});
  };
  for (int li = 0; li < l; ++li) {
    for (int wi = 0; wi < w; ++wi) {
      if (wi + 1 < w) add_edge(id(li, wi), id(li, wi + 1));
      if (li + 1 < l) add_edge(id(li, wi), id(li + 1, wi));
      if (wi + 1 < w && li + 1 < l) {
        add_edge(id(li, wi), id(li + 1, wi + 1));
        add_edge(id(li, wi + 1), id(li + 1, wi));
        cloth.cells.push_back({id(li, wi), id(li, wi + 1), id(li + 1, wi + 1), id(li + 1, wi)});
      }
    }
  }
  for (int wi = 0; wi < w; ++wi) {
    cloth.attach_nodes.push_back(id(0, wi));
    cloth.attach_offsets.push_back(cloth.rest_layout[id(0, wi)]);
  }
  return cloth;
}

void ArmModel::Validate() const {
  for (int j = 0; j < 2; ++j) {
    if (!(link_lengths[j] > 0.0)) throw Error(ErrorKind::kContract, "link lengths must be > 0");
    if (!(joint_limits[j].min < joint_limits[j].max)) {
      throw Error(ErrorKind::kContract, "joint limits must satisfy min < max");
    }
    if (!(inertia[j] > 0.0)) throw Error(ErrorKind::kContract, "joint inertia must be > 0");
  }
  if (!(k_min > 0.0 && k_min <= k_max)) throw Error(ErrorKind::kContract, "bad gain range");
}

Vec2 HandFrame::PointAt(const Vec2& offset) const {
  return position + Rotation(angle) * offset;
}

HandFrame ForwardKinematics(const ArmModel& arm, const JointVector& theta) {
  HandFrame frame;
  const double a1 = theta[0];
  const double a2 = theta[0] + theta[1];
  frame.elbow = arm.base + arm.link_lengths[0] * Vec2(std::cos(a1), std::sin(a1));
  frame.position = frame.elbow + arm.link_lengths[1] * Vec2(std::cos(a2), std::sin(a2));
  frame.angle = a2;
  return frame;
}

Eigen::Matrix2d EndEffectorJacobian(const ArmModel& arm, const JointVector& theta) {
  const double a1 = theta[0];
  const double a2 = theta[0] + theta[1];
  const double l1 = arm.link_lengths[0], l2 = arm.link_lengths[1];
  Eigen::Matrix2d j;
  j << -l1 * std::sin(a1) - l2 * std::sin(a2), -l2 * std::sin(a2),
      l1 * std::cos(a1) + l2 * std::cos(a2), l2 * std::cos(a2);
  return j;
}

WorldConfig DefaultWorldConfig() {
  WorldConfig config;
  config.cloth = MakeGridCloth();
  return config;
}

ServoCommand ClipCommand(const ArmModel& arm, ServoCommand cmd) {
  for (int j = 0; j < 2; ++j) {
    if (!std::isfinite(cmd.theta_ref[j])) {
      throw Error(ErrorKind::kContract, "non-finite joint target");
    }
    cmd.theta_ref[j] =
        std::clamp(cmd.theta_ref[j], arm.joint_limits[j].min, arm.joint_limits[j].max);
  }
  if (!std::isfinite(cmd.k_ref)) throw Error(ErrorKind::kContract, "non-finite gain");
  cmd.k_ref = std::clamp(cmd.k_ref, arm.k_min, arm.k_max);
  return cmd;
}

WorldState MakeInitialState(const WorldConfig& config, const JointVector& theta) {
  config.cloth.Validate();
  WorldState state;
  state.theta = theta;
  const HandFrame hand = ForwardKinematics(config.arm, theta);
  for (const Vec2& p : config.cloth.rest_layout) {
    state.node_pos.push_back(hand.PointAt(p));
    state.node_vel.push_back(Vec2::Zero());
  }
  return state;
}

WorldState Step(const WorldConfig& config, const WorldState& state,
                const ServoCommand& raw_cmd, const MaterialParams& material,
                double dt, const Vec2& hand_force) {
  if (!(dt > 0.0 && dt <= 5e-3)) {
    throw Error(ErrorKind::kContract, "dt must lie in (0, 5e-3]");
  }
  const ServoCommand cmd = ClipCommand(config.arm, raw_cmd);
  const ClothModel& cloth = config.cloth;
  const ArmModel& arm = config.arm;
  const int n = cloth.node_count;
  const double m = n > 0 ? material.c_mass / n : 0.0;

  std::vector<char> pinned(static_cast<std::size_t>(std::max(n, 0)), 0);
  for (int a : cloth.attach_nodes) pinned[a] = 1;

  // Cloth forces at the current configuration.
  std::vector<Vec2> force(n, m * config.gravity);
  for (const ClothEdge& e : cloth.edges) {
    if (pinned[e.a] && pinned[e.b]) continue;
    const Vec2 d = state.node_pos[e.b] - state.node_pos[e.a];
    const double len = d.norm();
    const Vec2 dir = len > 1e-12 ? Vec2(d / len) : Vec2::Zero();
    const Vec2 f = cloth.k_spring * (len - e.rest_length) * dir +
                   material.c_damp * (state.node_vel[e.b] - state.node_vel[e.a]);
    force[e.a] += f;
    force[e.b] -= f;
  }

  // Arm: servo torque plus the load transmitted through the grasp.
  const HandFrame hand = ForwardKinematics(arm, state.theta);
  JointVector tau{};
  for (int j = 0; j < 2; ++j) {
    tau[j] = cmd.k_ref * arm.kp0[j] * (cmd.theta_ref[j] - state.theta[j]) -
             std::sqrt(cmd.k_ref) * arm.kd0[j] * state.theta_dot[j];
  }
  auto apply_point_force = [&](const Vec2& point, const Vec2& f) {
    tau[0] += Cross(point - arm.base, f);
    tau[1] += Cross(point - hand.elbow, f);
  };
  for (int a : cloth.attach_nodes) apply_point_force(state.node_pos[a], force[a]);
  apply_point_force(hand.position, hand_force);

  WorldState next = state;
  for (int j = 0; j < 2; ++j) {
    next.theta_dot[j] += dt * tau[j] / arm.inertia[j];
    next.theta[j] += dt * next.theta_dot[j];
    const JointLimits& lim = arm.joint_limits[j];
    if (next.theta[j] < lim.min) {
      next.theta[j] = lim.min;
      next.theta_dot[j] = std::max(0.0, next.theta_dot[j]);
    } else if (next.theta[j] > lim.max) {
      next.theta[j] = lim.max;
      next.theta_dot[j] = std::min(0.0, next.theta_dot[j]);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (pinned[i]) continue;
    next.node_vel[i] += dt / m * force[i];
    next.node_pos[i] += dt * next.node_vel[i];
  }

  const HandFrame next_hand = ForwardKinematics(arm, next.theta);
  const Vec2 hand_vel = EndEffectorJacobian(arm, next.theta) *
                        Vec2(next.theta_dot[0], next.theta_dot[1]);
  const double omega = next.theta_dot[0] + next.theta_dot[1];
  for (std::size_t k = 0; k < cloth.attach_nodes.size(); ++k) {
    const int a = cloth.attach_nodes[k];
    next.node_pos[a] = next_hand.PointAt(cloth.attach_offsets[k]);
    const Vec2 r = next.node_pos[a] - next_hand.position;
    next.node_vel[a] = hand_vel + omega * Vec2(-r.y(), r.x());
  }
  next.t = state.t + dt;

  for (int j = 0; j < 2; ++j) {
    RequireFinite(next.theta[j], "theta[" + std::to_string(j) + "]");
    RequireFinite(next.theta_dot[j], "theta_dot[" + std::to_string(j) + "]");
  }
  for (int i = 0; i < n; ++i) {
    RequireFinite(next.node_pos[i].x() + next.node_pos[i].y(),
                  "node_pos[" + std::to_string(i) + "]");
    RequireFinite(next.node_vel[i].x() + next.node_vel[i].y(),
                  "node_vel[" + std::to_string(i) + "]");
  }
  return next;
}

WorldState AdvanceTick(const WorldConfig& config, WorldState state,
                       const ServoCommand& cmd, const MaterialParams& material) {
  for (int s = 0; s < config.substeps_per_tick; ++s) {
    state = Step(config, state, cmd, material, config.dt);
  }
  return state;
}

WorldState SettledState(const WorldConfig& config, const MaterialParams& material,
                        const JointVector& theta, double seconds) {
  WorldState state = MakeInitialState(config, theta);
  ServoCommand hold;
  hold.theta_ref = theta;
  hold.k_ref = std::clamp(3.0, config.arm.k_min, config.arm.k_max);
  const int steps = static_cast<int>(std::round(seconds / config.dt));
  for (int s = 0; s < steps; ++s) state = Step(config, state, hold, material, config.dt);
  state.t = 0.0;
  return state;
}

double ClothKineticEnergy(const WorldConfig& config, const WorldState& state,
                          const MaterialParams& material) {
  const ClothModel& cloth = config.cloth;
  const double m = material.c_mass / cloth.node_count;
  std::vector<char> pinned(cloth.node_count, 0);
  for (int a : cloth.attach_nodes) pinned[a] = 1;
  double ke = 0.0;
  for (int i = 0; i < cloth.node_count; ++i) {
    if (!pinned[i]) ke += 0.5 * m * state.node_vel[i].squaredNorm();
  }
  return ke;
}

double MechanicalEnergy(const WorldConfig& config, const WorldState& state,
                        const ServoCommand& raw_cmd, const MaterialParams& material) {
  const ServoCommand cmd = ClipCommand(config.arm, raw_cmd);
  const ClothModel& cloth = config.cloth;
  const double m = material.c_mass / cloth.node_count;
  double energy = ClothKineticEnergy(config, state, material);
  for (int i = 0; i < cloth.node_count; ++i) {
    energy -= m * config.gravity.dot(state.node_pos[i]);
  }
  for (const ClothEdge& e : cloth.edges) {
    const double stretch = (state.node_pos[e.b] - state.node_pos[e.a]).norm() - e.rest_length;
    energy += 0.5 * cloth.k_spring * stretch * stretch;
  }
  for (int j = 0; j < 2; ++j) {
    const double err = cmd.theta_ref[j] - state.theta[j];
    energy += 0.5 * config.arm.inertia[j] * state.theta_dot[j] * state.theta_dot[j];
    energy += 0.5 * cmd.k_ref * config.arm.kp0[j] * err * err;
  }
  return energy;
}

}  // namespace clothpb::sim
