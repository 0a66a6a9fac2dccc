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
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "clothpb/controller.h"
#include "clothpb/error.h"
#include "clothpb/gradcheck.h"

namespace clothpb::controller {
namespace {

TEST(MaskTest, ShiftSequenceWithFourSteps) {
  PeriodicMask m = PeriodicMask::AtTick(4, 4, 2);
  EXPECT_EQ(m.bits, (std::vector<int>{0, 1, 0, 0}));
  m = MaskShift(m);
  EXPECT_EQ(m.bits, (std::vector<int>{1, 0, 0, 0}));
  m = MaskShift(m);
  EXPECT_EQ(m.bits, (std::vector<int>{0, 0, 0, 1}));
}

TEST(MaskTest, PeriodOneIsAllOnes) {
  PeriodicMask m = PeriodicMask::AtTick(5, 1, 0);
  for (int t = 0; t < 20; ++t) {
    EXPECT_EQ(m.bits, std::vector<int>(5, 1));
    m = MaskShift(m);
  }
}

TEST(MaskTest, BruteForcePhaseEnumeration) {
  for (int n_seq = 1; n_seq <= 8; ++n_seq) {
    for (int period = 1; period <= 8; ++period) {
      for (int start = 0; start < period; ++start) {
        PeriodicMask m = PeriodicMask::AtTick(n_seq, period, start);
        std::vector<std::vector<int>> history;
        for (int t = 0; t < 3 * period; ++t) {
          // Ones sit exactly at horizon entries whose absolute tick is a
          // multiple of the period.
          for (int i = 0; i < n_seq; ++i) {
            ASSERT_EQ(m.bits[i], (m.tick + 1 + i) % period == 0 ? 1 : 0);
          }
          history.push_back(m.bits);
          // Shifting equals recomputing from scratch.
          ASSERT_EQ(MaskShift(m).bits, PeriodicMask::AtTick(n_seq, period, m.tick + 1).bits);
          m = MaskShift(m);
        }
        for (int i = 0; i < n_seq; ++i) {
          for (std::size_t t0 = 0; t0 + period <= history.size(); ++t0) {
            int sum = 0;
            for (int k = 0; k < period; ++k) sum += history[t0 + k][i];
            ASSERT_EQ(sum, 1);
          }
        }
      }
    }
  }
}

TEST(WarmStartTest, ShiftAndDuplicate) {
  const std::vector<std::vector<double>> u = {{1.0, 1.5}, {2.0, 2.5}, {3.0, 3.5}, {4.0, 4.5}};
  const auto w = WarmStart(u);
  EXPECT_EQ(w, (std::vector<std::vector<double>>{{2.0, 2.5}, {3.0, 3.5}, {4.0, 4.5}, {4.0, 4.5}}));
}

TEST(GammaScheduleTest, GeometricSpacing) {
  const auto g = GammaSchedule(3, 1.0);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_NEAR(g[0], 0.001, 1e-6);
  EXPECT_NEAR(g[1], 0.0316, 0.0316 * 1e-3);
  EXPECT_EQ(g[2], 1.0);
  EXPECT_EQ(GammaSchedule(1, 0.7), std::vector<double>{0.7});
  const auto many = GammaSchedule(30, 2.0);
  for (std::size_t i = 2; i < many.size(); ++i) {
    EXPECT_NEAR(many[i] / many[i - 1], many[1] / many[0], 1e-12);
  }
}

TEST(ControlLossTest, HandComputedCases) {
  const std::vector<std::vector<double>> ref = {{0, 0, 0}, {0, 0, 0}};
  const std::vector<std::vector<double>> unit = {{1, 0, 0}, {0, 1, 0}};
  const std::vector<std::vector<double>> still = {{0, 0}, {0, 0}};
  const std::vector<int> none = {0, 0}, both = {1, 1}, one = {0, 1};
  EXPECT_EQ(ControlLossValue(ref, unit, still, none, 0.0), 0.0);
  EXPECT_EQ(ControlLossValue(ref, ref, still, both, 0.001), 0.0);
  EXPECT_NEAR(ControlLossValue(ref, unit, still, both, 0.0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(ControlLossValue(ref, unit, still, one, 0.0), 1.0, 1e-15);
  const std::vector<std::vector<double>> moving = {{3, 0}, {0, 4}};
  EXPECT_NEAR(ControlLossValue(ref, ref, moving, both, 0.001), 0.005, 1e-15);
  EXPECT_THROW(ControlLossValue(ref, unit, still, std::vector<int>{1}, 0.0), Error);

  // Graph form agrees.
  Tape tape;
  std::vector<Var> z = {tape.Input(Tensor({1, 3}, {1, 0, 0})), tape.Input(Tensor({1, 3}, {0, 1, 0}))};
  std::vector<Var> r = {tape.Input(Tensor({1, 2}, {3, 0})), tape.Input(Tensor({1, 2}, {0, 4}))};
  const std::vector<double> zr = {0, 0, 0};
  EXPECT_NEAR(ControlLoss(zr, z, r, both, 0.001).value().item(), std::sqrt(2.0) + 0.005, 1e-15);
}

// L(u) = sum_i m_i ||u_i - target||^2 + 0.01 ||u||^2 with exact gradient.
class QuadraticSurrogate : public Surrogate {
 public:
  explicit QuadraticSurrogate(std::vector<double> target) : target_(std::move(target)) {}
  int command_dim() const override { return static_cast<int>(target_.size()); }
  double Loss(const std::vector<std::vector<double>>& u, std::span<const int> mask) const {
    double l = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      for (std::size_t j = 0; j < u[i].size(); ++j) {
        const double d = u[i][j] - target_[j];
        l += (mask[i] ? d * d : 0.0) + 0.01 * u[i][j] * u[i][j];
      }
    }
    return l;
  }
  std::vector<double> Losses(const std::vector<std::vector<std::vector<double>>>& c,
                             std::span<const int> mask) const override {
    std::vector<double> out;
    for (const auto& u : c) out.push_back(Loss(u, mask));
    ++evaluations;
    return out;
  }
  double LossAndGradient(const std::vector<std::vector<double>>& u, std::span<const int> mask,
                         std::vector<std::vector<double>>& grad) const override {
    grad = u;
    for (std::size_t i = 0; i < u.size(); ++i) {
      for (std::size_t j = 0; j < u[i].size(); ++j) {
        grad[i][j] = (mask[i] ? 2.0 * (u[i][j] - target_[j]) : 0.0) + 0.02 * u[i][j];
      }
    }
    return Loss(u, mask);
  }
  mutable int evaluations = 0;

 private:
  std::vector<double> target_;
};

TEST(OptimizeTest, QuadraticSurrogateImproves) {
  QuadraticSurrogate q({1.0, -2.0});
  ControlConfig cfg;
  const PeriodicMask mask = PeriodicMask::AtTick(cfg.n_seq, cfg.n_periodic, 3);
  const std::vector<std::vector<double>> u0(cfg.n_seq, std::vector<double>{0.0, 0.0});
  const Bounds b{{-5, -5}, {5, 5}};
  const OptimizeResult r = Optimize(q, u0, mask, cfg, b);
  EXPECT_LE(r.loss, 0.9 * r.initial_loss);
  EXPECT_NEAR(r.loss, q.Loss(r.u, mask.bits), 1e-12);
  double prev = r.initial_loss;
  for (double l : r.iteration_loss) {
    EXPECT_LE(l, prev);
    prev = l;
  }
  EXPECT_EQ(q.evaluations, cfg.n_iter);
}

TEST(OptimizeTest, BoundsAndStationaryPoint) {
  QuadraticSurrogate q({10.0, 10.0});
  ControlConfig cfg;
  cfg.n_periodic = 1;
  cfg.gamma_max = 100.0;
  const PeriodicMask mask = PeriodicMask::AtTick(cfg.n_seq, 1, 0);
  const Bounds b{{-1, -1}, {1, 1}};
  const std::vector<std::vector<double>> u0(cfg.n_seq, std::vector<double>{0.0, 0.0});
  const OptimizeResult r = Optimize(q, u0, mask, cfg, b);
  for (const auto& row : r.u) {
    for (double v : row) {
      EXPECT_LE(v, 1.0);
      EXPECT_GE(v, -1.0);
    }
  }
  // Zero gradient: nothing moves.
  QuadraticSurrogate flat({0.0, 0.0});
  const OptimizeResult s = Optimize(flat, u0, mask, cfg, b);
  EXPECT_EQ(s.u, u0);
  EXPECT_EQ(s.chosen_gamma, std::vector<double>(cfg.n_iter, 0.0));
}

TEST(OptimizeTest, ModelRolloutLossGradientIsExact) {
  dpmpb::DpmpbModel model(dpmpb::ModelConfig{}, 12);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  model.state_norm().mean = {0.1, -0.2, 0.3, 0.5, -0.5, 0.0, 0.1};
  model.state_norm().stddev = {1.5, 0.7, 1.1, 1.0, 0.8, 2.0, 1.2};
  std::vector<double> s(7), z_ref = {0.4, -0.3, 1.2};
  for (double& v : s) v = g(rng);
  dpmpb::Hidden h = model.ZeroHidden(1);
  for (Tensor& t : h.h) {
    for (double& v : t.values()) v = 0.3 * g(rng);
  }
  ModelSurrogate sur(model, {0.2, -0.1}, h, s, z_ref, 0.001);
  const std::vector<int> mask = {1, 0, 1};
  std::vector<Tensor> inputs;
  for (int i = 0; i < 3; ++i) inputs.push_back(Tensor({1, 2}, {g(rng), g(rng)}));
  auto loss = [&](Tape& tape, std::span<const Var> v) { return sur.LossGraph(tape, v, mask); };
  GradientCheckOptions opt;
  opt.probes = 6;
  EXPECT_LT(GradientCheck(loss, inputs, opt).max_relative_error, 1e-5);

  // Batched candidate losses agree with the single-sequence graph.
  std::vector<std::vector<double>> u;
  for (const Tensor& t : inputs) u.emplace_back(t.values().begin(), t.values().end());
  std::vector<std::vector<double>> grad;
  const double single = sur.LossAndGradient(u, mask, grad);
  auto u2 = u;
  u2[0][0] += 0.5;
  const auto batch = sur.Losses({u, u2}, mask);
  EXPECT_NEAR(batch[0], single, 1e-12);
  std::vector<std::vector<double>> grad2;
  EXPECT_NEAR(batch[1], sur.LossAndGradient(u2, mask, grad2), 1e-12);
}

TEST(OptimizeTest, ModelOptimizeNeverWorsens) {
  dpmpb::DpmpbModel model(dpmpb::ModelConfig{}, 13);
  const std::vector<double> s(7, 0.1), z_ref = {1.0, -1.0, 0.5};
  ModelSurrogate sur(model, {0.0, 0.0}, model.ZeroHidden(1), s, z_ref, 0.001);
  ControlConfig cfg;
  const PeriodicMask mask = PeriodicMask::AtTick(cfg.n_seq, cfg.n_periodic, 5);
  const std::vector<std::vector<double>> u0(cfg.n_seq, std::vector<double>{0.0, 0.0});
  const OptimizeResult a = Optimize(sur, u0, mask, cfg, Bounds{{-2, -2}, {2, 2}});
  const OptimizeResult b = Optimize(sur, u0, mask, cfg, Bounds{{-2, -2}, {2, 2}});
  double prev = a.initial_loss;
  for (double l : a.iteration_loss) {
    EXPECT_LE(l, prev);
    prev = l;
  }
  EXPECT_EQ(a.u, b.u);
}

}  // namespace
}  // namespace clothpb::controller
