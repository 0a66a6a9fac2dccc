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

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "clothpb/analysis.h"
#include "clothpb/error.h"
#include "clothpb/image.h"
#include "clothpb/sim/ellipsoid.h"
#include "clothpb/sim/policy.h"
#include "clothpb/sim/raster.h"
#include "clothpb/sim/world.h"

namespace clothpb::sim {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(WorldTest, EquilibriumIsFixedPoint) {
  WorldConfig config = DefaultWorldConfig();
  config.gravity = Vec2::Zero();
  const JointVector theta = {0.3, -0.5};
  const WorldState s0 = MakeInitialState(config, theta);
  ServoCommand cmd{theta, 3.0};
  WorldState s = s0;
  for (int i = 0; i < 500; ++i) s = Step(config, s, cmd, MaterialParams{}, 1e-3);
  for (int i = 0; i < config.cloth.node_count; ++i) {
    EXPECT_LT((s.node_pos[i] - s0.node_pos[i]).norm(), 1e-12);
    EXPECT_LT(s.node_vel[i].norm(), 1e-12);
  }
  EXPECT_EQ(s.theta, s0.theta);
}

TEST(WorldTest, TwoBodyOscillatorPeriod) {
  WorldConfig config = DefaultWorldConfig();
  config.gravity = Vec2::Zero();
  ClothModel& c = config.cloth;
  c = ClothModel{};
  c.node_count = 2;
  c.k_spring = 40.0;
  c.edges = {{0, 1, 0.1}};
  c.rest_layout = {Vec2(0, 0), Vec2(0.1, 0)};
  MaterialParams mat{0.0, 0.02};
  const double m_node = mat.c_mass / 2;
  WorldState s;
  s.node_pos = {Vec2(-0.01, 0.0), Vec2(0.11, 0.0)};
  s.node_vel = {Vec2::Zero(), Vec2::Zero()};
  // Period from successive upward zero crossings of the stretch.
  std::vector<double> crossings;
  double prev = (s.node_pos[1] - s.node_pos[0]).norm() - 0.1;
  for (int i = 0; i < 3000; ++i) {
    s = Step(config, s, ServoCommand{}, mat, 1e-3);
    const double x = (s.node_pos[1] - s.node_pos[0]).norm() - 0.1;
    if (prev < 0 && x >= 0) crossings.push_back(s.t + 1e-3 * x / (prev - x));
    prev = x;
  }
  ASSERT_GE(crossings.size(), 3u);
  const double period = (crossings.back() - crossings.front()) / (crossings.size() - 1);
  const double expected = 2 * kPi * std::sqrt(m_node / (2 * c.k_spring));
  EXPECT_NEAR(period, expected, 0.02 * expected);
}

TEST(WorldTest, DampedKineticEnergyDecays) {
  const WorldConfig config = DefaultWorldConfig();
  const MaterialParams mat{0.05, 0.10};
  WorldState s = MakeInitialState(config, {0.0, 0.0});
  const ServoCommand hold{{0.0, 0.0}, 3.0};
  double ke_early = 0.0;
  for (int i = 1; i <= 2000; ++i) {
    s = Step(config, s, hold, mat, 1e-3);
    if (i == 200) ke_early = ClothKineticEnergy(config, s, mat);
  }
  EXPECT_GT(ke_early, 0.0);
  EXPECT_LT(ClothKineticEnergy(config, s, mat), ke_early);
}

TEST(WorldTest, PassiveAfterTransients) {
  const WorldConfig config = DefaultWorldConfig();
  const MaterialParams mat{0.03, 0.10};
  const ServoCommand hold{{0.8, -0.6}, 3.0};
  WorldState s = MakeInitialState(config, {0.0, 0.0});
  for (int i = 0; i < 1000; ++i) s = Step(config, s, hold, mat, 1e-3);
  double prev = MechanicalEnergy(config, s, hold, mat);
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 500; ++i) s = Step(config, s, hold, mat, 1e-3);
    const double e = MechanicalEnergy(config, s, hold, mat);
    EXPECT_LE(e, prev + 1e-9) << "sample " << k;
    prev = e;
  }
}

TEST(WorldTest, PinnedNodesTrackHand) {
  const WorldConfig config = DefaultWorldConfig();
  RandomPolicy policy(11, config.arm.joint_limits, 1);
  WorldState s = MakeInitialState(config, {0.0, 0.0});
  for (int tick = 0; tick < 10; ++tick) {
    const ServoCommand cmd = policy.Next();
    for (int i = 0; i < config.substeps_per_tick; ++i) {
      s = Step(config, s, cmd, MaterialParams{}, config.dt);
      const HandFrame hand = ForwardKinematics(config.arm, s.theta);
      for (std::size_t k = 0; k < config.cloth.attach_nodes.size(); ++k) {
        const Vec2 target = hand.PointAt(config.cloth.attach_offsets[k]);
        ASSERT_LT((s.node_pos[config.cloth.attach_nodes[k]] - target).norm(), 1e-9);
      }
    }
  }
}

TEST(WorldTest, DeterministicTrajectories) {
  const WorldConfig config = DefaultWorldConfig();
  auto run = [&] {
    RandomPolicy policy(5, config.arm.joint_limits, 2);
    WorldState s = MakeInitialState(config, {0.2, -0.2});
    for (int t = 0; t < 15; ++t) s = AdvanceTick(config, s, policy.Next(), MaterialParams{});
    return s;
  };
  const WorldState a = run(), b = run();
  for (int i = 0; i < config.cloth.node_count; ++i) {
    EXPECT_EQ(a.node_pos[i], b.node_pos[i]);
    EXPECT_EQ(a.node_vel[i], b.node_vel[i]);
  }
  EXPECT_EQ(a.theta, b.theta);
}

TEST(WorldTest, DampingChangesSilhouette) {
  const WorldConfig config = DefaultWorldConfig();
  const Viewport view;
  auto run = [&](double c_damp) {
    RandomPolicy policy(9, config.arm.joint_limits, 1);
    const MaterialParams mat{c_damp, 0.10};
    WorldState s = SettledState(config, mat, {0.0, 0.0});
    std::vector<BinaryImage> frames;
    for (int t = 0; t < 10; ++t) {
      s = AdvanceTick(config, s, policy.Next(), mat);
      frames.push_back(Rasterize(config.cloth, s, view));
    }
    return frames;
  };
  const auto lo = run(0.03), hi = run(0.07);
  double max_chamfer = 0.0;
  for (std::size_t t = 0; t < lo.size(); ++t) {
    max_chamfer = std::max(max_chamfer, analysis::Chamfer(lo[t], hi[t]).distance);
  }
  EXPECT_GT(max_chamfer, 0.0);
}

TEST(WorldTest, FreeHangingSagIsVisible) {
  // Forearm horizontal, cloth starts flat along it and droops under gravity.
  const WorldConfig config = DefaultWorldConfig();
  const MaterialParams mat{0.05, 0.10};
  const WorldState s = SettledState(config, mat, {0.0, 0.0}, 5.0);
  const HandFrame hand = ForwardKinematics(config.arm, s.theta);
  double lowest = 0.0;
  for (const Vec2& p : s.node_pos) lowest = std::max(lowest, hand.position.y() - p.y());
  EXPECT_GE(lowest, 0.2 * 0.6);
}

TEST(WorldTest, RejectsBadStep) {
  const WorldConfig config = DefaultWorldConfig();
  const WorldState s = MakeInitialState(config, {0.0, 0.0});
  EXPECT_THROW(Step(config, s, {}, MaterialParams{}, 0.0), Error);
  EXPECT_THROW(Step(config, s, {}, MaterialParams{}, 6e-3), Error);
  WorldState bad = s;
  bad.node_vel[5] = Vec2(std::nan(""), 0.0);
  try {
    Step(config, bad, {}, MaterialParams{}, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDiverged);
    EXPECT_NE(std::string(e.what()).find("is not finite"), std::string::npos);
  }
}

TEST(KinematicsTest, TextbookPoses) {
  ArmModel arm;
  arm.base = Vec2(0.1, -0.2);
  auto at = [&](double a, double b) { return ForwardKinematics(arm, {a, b}).position - arm.base; };
  EXPECT_LT((at(0, 0) - Vec2(0.6, 0)).norm(), 1e-15);
  EXPECT_LT((at(kPi / 2, 0) - Vec2(0, 0.6)).norm(), 1e-15);
  EXPECT_LT((at(kPi / 2, -kPi / 2) - Vec2(0.3, 0.3)).norm(), 1e-15);
}

TEST(KinematicsTest, JacobianMatchesDifferences) {
  ArmModel arm;
  const JointVector q = {0.4, -1.1};
  const Eigen::Matrix2d j = EndEffectorJacobian(arm, q);
  for (int c = 0; c < 2; ++c) {
    JointVector qp = q, qm = q;
    qp[c] += 1e-6;
    qm[c] -= 1e-6;
    const Vec2 fd = (ForwardKinematics(arm, qp).position - ForwardKinematics(arm, qm).position) / 2e-6;
    EXPECT_LT((fd - j.col(c)).norm(), 1e-8);
  }
}

WorldState RectangleState(double x0, double x1, double y0, double y1) {
  // 3x6 lattice laid out as an axis-aligned rectangle.
  WorldState s;
  for (int li = 0; li < 6; ++li) {
    for (int wi = 0; wi < 3; ++wi) {
      s.node_pos.emplace_back(x0 + (x1 - x0) * li / 5.0, y0 + (y1 - y0) * wi / 2.0);
      s.node_vel.emplace_back(Vec2::Zero());
    }
  }
  return s;
}

TEST(RasterTest, OffscreenIsEmpty) {
  const ClothModel cloth = MakeGridCloth();
  const BinaryImage img = Rasterize(cloth, RectangleState(5, 6, 5, 6), Viewport{});
  EXPECT_EQ(img.ForegroundCount(), 0);
}

TEST(RasterTest, HalfWidthRectangle) {
  const ClothModel cloth = MakeGridCloth();
  const Viewport v;
  // Half the width, 30 of 96 rows, edges off pixel centres.
  const double y1 = v.y_max - 10.3 * v.pitch, y0 = y1 - 30 * v.pitch;
  const BinaryImage img =
      Rasterize(cloth, RectangleState(v.x_min + 0.1 * v.pitch, v.x_min + 64.1 * v.pitch, y0, y1), v);
  const double fraction = double(img.ForegroundCount()) / (128 * 96);
  const double expected = 0.5 * 30.0 / 96.0;
  EXPECT_NEAR(fraction, expected, 128.0 / (128 * 96) + 96.0 / (128 * 96));
}

TEST(RasterTest, OnePixelShift) {
  const ClothModel cloth = MakeGridCloth();
  const Viewport v;
  WorldState s = MakeInitialState(DefaultWorldConfig(), {0.7, -1.3});
  const BinaryImage a = Rasterize(cloth, s, v);
  for (Vec2& p : s.node_pos) p.x() += v.pitch;
  const BinaryImage b = Rasterize(cloth, s, v);
  ASSERT_GT(a.ForegroundCount(), 20);
  for (int r = 0; r < v.height; ++r) {
    for (int c = 0; c + 1 < v.width; ++c) EXPECT_EQ(a.at(r, c), b.at(r, c + 1));
  }
}

TEST(RasterTest, PgmRoundTrip) {
  const WorldState s = MakeInitialState(DefaultWorldConfig(), {1.0, -0.5});
  const BinaryImage img = Rasterize(MakeGridCloth(), s, Viewport{});
  EXPECT_EQ(DecodePgm(EncodePgm(img)), img);
}

TEST(EllipsoidTest, DoublingGainHalvesDisplacement) {
  const ArmModel arm;
  const JointVector q = {0.6, -1.2};
  const auto d1 = StiffnessEllipsoid(arm, q, 2.0, 8);
  const auto d2 = StiffnessEllipsoid(arm, q, 4.0, 8);
  for (int i = 0; i < 8; ++i) {
    EXPECT_NEAR(d2[i].norm() / d1[i].norm(), 0.5, 0.025) << i;
    // Opposite probes mirror each other.
    EXPECT_NEAR(d1[i].norm(), d1[(i + 4) % 8].norm(), 0.02 * d1[i].norm());
    EXPECT_LT((d1[i] + d1[(i + 4) % 8]).norm(), 0.02 * d1[i].norm());
  }
}

TEST(EllipsoidTest, GainsGiveNestedEllipses) {
  const ArmModel arm;
  const JointVector q = {0.6, -1.2};
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> prev_norms(16, prev);
  for (double k : {1.0, 3.0, 5.0, 7.0}) {
    const auto d = StiffnessEllipsoid(arm, q, k, 16);
    for (int i = 0; i < 16; ++i) {
      EXPECT_LT(d[i].norm(), prev_norms[i]);
      prev_norms[i] = d[i].norm();
    }
  }
  EXPECT_THROW(StiffnessEllipsoid(arm, q, 1.0, 4), Error);
}

TEST(EllipsoidTest, SettleBudgetEnforced) {
  EllipsoidOptions opt;
  opt.max_steps = 10;
  EXPECT_THROW(StiffnessEllipsoid(ArmModel{}, {0.6, -1.2}, 1.0, 8, opt), Error);
}

TEST(PolicyTest, SameSeedSameStream) {
  const ArmModel arm;
  RandomPolicy a(42, arm.joint_limits, 3, GainRange{}), b(42, arm.joint_limits, 3, GainRange{});
  for (int i = 0; i < 100; ++i) {
    const ServoCommand x = a.Next(), y = b.Next();
    EXPECT_EQ(x.theta_ref, y.theta_ref);
    EXPECT_EQ(x.k_ref, y.k_ref);
  }
}

TEST(PolicyTest, UniformCoverage) {
  const ArmModel arm;
  RandomPolicy p(1, arm.joint_limits, 1);
  JointVector lo = {1e9, 1e9}, hi = {-1e9, -1e9};
  for (int i = 0; i < 10000; ++i) {
    const ServoCommand c = p.Next();
    for (int j = 0; j < 2; ++j) {
      lo[j] = std::min(lo[j], c.theta_ref[j]);
      hi[j] = std::max(hi[j], c.theta_ref[j]);
    }
  }
  for (int j = 0; j < 2; ++j) {
    const double span = arm.joint_limits[j].max - arm.joint_limits[j].min;
    EXPECT_GE(lo[j], arm.joint_limits[j].min);
    EXPECT_LE(hi[j], arm.joint_limits[j].max);
    EXPECT_LT(lo[j] - arm.joint_limits[j].min, 0.02 * span);
    EXPECT_LT(arm.joint_limits[j].max - hi[j], 0.02 * span);
  }
}

TEST(PolicyTest, HoldContract) {
  const ArmModel arm;
  RandomPolicy p(2, arm.joint_limits, 4);
  ServoCommand prev = p.Next();
  for (int tick = 1; tick < 64; ++tick) {
    const ServoCommand c = p.Next();
    if (tick % 4 != 0) {
      EXPECT_EQ(c.theta_ref, prev.theta_ref) << tick;
    } else {
      EXPECT_NE(c.theta_ref, prev.theta_ref) << tick;
    }
    prev = c;
  }
  EXPECT_THROW(RandomPolicy(2, arm.joint_limits, 0), Error);
}

TEST(PolicyTest, FlingStaysInLimits) {
  const ArmModel arm;
  FlingPolicy p(3, arm.joint_limits, GainRange{});
  for (int i = 0; i < 500; ++i) {
    const ServoCommand c = p.Next();
    for (int j = 0; j < 2; ++j) {
      EXPECT_GE(c.theta_ref[j], arm.joint_limits[j].min);
      EXPECT_LE(c.theta_ref[j], arm.joint_limits[j].max);
    }
    EXPECT_GE(c.k_ref, 1.0);
    EXPECT_LE(c.k_ref, 7.0);
  }
}

}  // namespace
}  // namespace clothpb::sim
