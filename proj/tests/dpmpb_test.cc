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

#include "clothpb/dpmpb.h"
#include "clothpb/error.h"
#include "clothpb/gradcheck.h"

namespace clothpb::dpmpb {
namespace {

double Distance(const std::vector<double>& a, const std::vector<double>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

ModelConfig SmallConfig(int ns, int nu) {
  ModelConfig c;
  c.state_dim = ns;
  c.command_dim = nu;
  c.encoder_units = {24, 12};
  c.lstm_units = 8;
  c.decoder_units = {12};
  return c;
}

// s' = a s + 0.1 u with uniform commands.
Episode Regime(double a, int trial, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Episode e;
  e.trial = trial;
  double s = u(rng);
  for (int t = 0; t < steps; ++t) {
    const double cmd = 3.0 * u(rng);
    e.states.push_back({s});
    e.commands.push_back({cmd});
    s = a * s + 0.1 * cmd;
  }
  return e;
}

class TwoRegimeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    episodes_ = new std::vector<Episode>{Regime(0.5, 0, 120, 1), Regime(0.9, 1, 120, 2)};
    model_ = new DpmpbModel(SmallConfig(1, 1), 7);
    TrainingConfig cfg;
    cfg.n_expand = 8;
    cfg.batch = 32;
    cfg.epochs = 150;
    cfg.lr = 3e-3;
    report_ = new TrainingReport(Train(*model_, *episodes_, cfg));
  }
  static void TearDownTestSuite() {
    delete episodes_;
    delete model_;
    delete report_;
  }

  static std::vector<Episode>* episodes_;
  static DpmpbModel* model_;
  static TrainingReport* report_;
};

std::vector<Episode>* TwoRegimeTest::episodes_ = nullptr;
DpmpbModel* TwoRegimeTest::model_ = nullptr;
TrainingReport* TwoRegimeTest::report_ = nullptr;

TEST_F(TwoRegimeTest, BiasesSeparateRegimes) {
  EXPECT_GT(Distance(model_->Bias(0), model_->Bias(1)), 0.1);
  EXPECT_LT(report_->epoch_mse.back(), 0.5 * report_->epoch_mse.front());
}

TEST_F(TwoRegimeTest, BiasChangesPrediction) {
  Hidden h0 = model_->ZeroHidden(1), h1 = model_->ZeroHidden(1);
  const std::vector<double> s = {0.3}, u = {0.5};
  const auto a = model_->ForwardStep(s, u, model_->Bias(0), h0);
  const auto b = model_->ForwardStep(s, u, model_->Bias(1), h1);
  EXPECT_GT(std::abs(a[0] - b[0]), 0.0);
}

TEST_F(TwoRegimeTest, OnlineEstimationLeavesWeightsAlone) {
  const std::uint64_t before = model_->WeightFingerprint();
  EstimateOptions opt;
  opt.n_expand = 8;
  const std::vector<double> zero = {0.0, 0.0};
  const Episode fresh = Regime(0.9, 1, 60, 99);
  const auto traj = EstimatePbOnline(*model_, zero, std::span<const Episode>(&fresh, 1), opt);
  EXPECT_EQ(traj.size(), 31u);
  EXPECT_EQ(model_->WeightFingerprint(), before);
  // Fresh data of regime B lands nearer B's bias than A's.
  EXPECT_LT(Distance(traj.back(), model_->Bias(1)), Distance(traj.back(), model_->Bias(0)));
}

// Data produced by the model itself at p*, one window per episode so the
// teacher-forced inputs coincide with the model's own predictions.
std::vector<Episode> ModelGenerated(const DpmpbModel& model, const std::vector<double>& p,
                                    int count, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<Episode> out;
  for (int k = 0; k < count; ++k) {
    std::vector<std::vector<double>> cmds;
    for (int t = 0; t < steps; ++t) cmds.push_back({u(rng)});
    std::vector<double> s0 = {u(rng)};
    Hidden h = model.ZeroHidden(1);
    const auto pred = model.Rollout(s0, cmds, p, h);
    Episode e;
    e.states.push_back(model.state_norm().Denormalize(s0));
    for (int t = 0; t < steps; ++t) {
      e.commands.push_back(model.command_norm().Denormalize(cmds[t]));
      if (t + 1 < steps) e.states.push_back(model.state_norm().Denormalize(pred[t]));
    }
    out.push_back(std::move(e));
  }
  return out;
}

TEST_F(TwoRegimeTest, SelfConsistencyHalvesBiasError) {
  const std::vector<double> p_star = model_->Bias(1);
  const std::vector<Episode> data = ModelGenerated(*model_, p_star, 8, 9, 5);
  EstimateOptions opt;
  opt.n_expand = 8;
  const std::vector<double> zero = {0.0, 0.0};
  const auto traj = EstimatePbOnline(*model_, zero, data, opt);
  EXPECT_LT(Distance(traj.back(), p_star), 0.5 * Distance(zero, p_star));
}

TEST_F(TwoRegimeTest, PerfectFitIsStationary) {
  const std::vector<double> p_star = model_->Bias(0);
  const std::vector<Episode> data = ModelGenerated(*model_, p_star, 3, 9, 6);
  EstimateOptions opt;
  opt.n_expand = 8;
  const auto traj = EstimatePbOnline(*model_, p_star, data, opt);
  EXPECT_LT(Distance(traj.back(), p_star), 1e-9);
}

TEST_F(TwoRegimeTest, CheckpointRoundTrip) {
  const DpmpbModel copy = DpmpbModel::FromParameters(model_->ToParameters());
  EXPECT_EQ(Fingerprint(copy.ToParameters()), Fingerprint(model_->ToParameters()));
  Hidden h0 = model_->ZeroHidden(1), h1 = copy.ZeroHidden(1);
  const std::vector<double> s = {0.1}, u = {-0.2}, p = {0.3, 0.4};
  EXPECT_EQ(model_->ForwardStep(s, u, p, h0), copy.ForwardStep(s, u, p, h1));
}

TEST(NormalizerTest, ZScoreDefinition) {
  const std::vector<std::vector<double>> rows = {{1, 5, 2}, {3, 5, 4}, {5, 5, 9}};
  const Normalizer n = Normalizer::Fit(rows);
  EXPECT_TRUE(n.guarded[1]);
  EXPECT_FALSE(n.guarded[0]);
  EXPECT_EQ(n.Normalize(std::vector<double>{3, 5, 5})[1], 0.0);
  const auto at_mean = n.Normalize(n.mean);
  for (double v : at_mean) EXPECT_EQ(v, 0.0);
  const std::vector<double> plus = {n.mean[0] + n.stddev[0], 5.0, n.mean[2] + n.stddev[2]};
  EXPECT_NEAR(n.Normalize(plus)[0], 1.0, 1e-15);
  EXPECT_NEAR(n.Normalize(plus)[2], 1.0, 1e-15);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 10);
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> x = {g(rng), g(rng), g(rng)};
    const auto back = n.Denormalize(n.Normalize(x));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], x[i], 1e-12 * (1 + std::abs(x[i])));
  }
  EXPECT_THROW(n.Normalize(std::vector<double>{1.0}), Error);
}

TEST(ModelTest, LayerSizes) {
  const DpmpbModel m(ModelConfig{}, 0);
  EXPECT_EQ(m.input_dim(), 11);
  EXPECT_EQ(m.weights().Get("enc0.w").shape(), (Shape{11, 300}));
  EXPECT_EQ(m.weights().Get("enc1.w").shape(), (Shape{300, 100}));
  EXPECT_EQ(m.weights().Get("enc2.w").shape(), (Shape{100, 30}));
  EXPECT_EQ(m.weights().Get("lstm0.w").shape(), (Shape{60, 120}));
  EXPECT_EQ(m.weights().Get("lstm1.w").shape(), (Shape{60, 120}));
  EXPECT_EQ(m.weights().Get("dec0.w").shape(), (Shape{30, 100}));
  EXPECT_EQ(m.weights().Get("dec1.w").shape(), (Shape{100, 300}));
  EXPECT_EQ(m.weights().Get("out.w").shape(), (Shape{300, 7}));
}

TEST(ModelTest, DeterministicStepAndRolloutShape) {
  const DpmpbModel m(ModelConfig{}, 3);
  const std::vector<double> s(7, 0.2), u = {0.1, -0.3}, p = {0.0, 0.5};
  Hidden h0 = m.ZeroHidden(1), h1 = m.ZeroHidden(1);
  EXPECT_EQ(m.ForwardStep(s, u, p, h0), m.ForwardStep(s, u, p, h1));
  Hidden h = m.ZeroHidden(1);
  const std::vector<std::vector<double>> cmds(5, u);
  const auto out = m.Rollout(s, cmds, p, h);
  EXPECT_EQ(out.size(), 5u);
  EXPECT_EQ(out[4].size(), 7u);
  EXPECT_THROW(m.ForwardStep(std::vector<double>(6, 0.0), u, p, h), Error);
}

TEST(ModelTest, ThreeStepUnrollGradientsAreExact) {
  const DpmpbModel m(ModelConfig{}, 4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<NormalizedEpisode> eps(2);
  for (int e = 0; e < 2; ++e) {
    eps[e].trial = e;
    for (int t = 0; t < 4; ++t) {
      std::vector<double> s(7), u(2);
      for (double& v : s) v = g(rng);
      for (double& v : u) v = g(rng);
      eps[e].states.push_back(s);
      eps[e].commands.push_back(u);
    }
  }
  const auto refs = EnumerateWindows(eps, 3);
  const WindowBatch batch = GatherWindows(eps, refs, 3);
  const ParameterSet& layout = m.weights();
  std::vector<Tensor> inputs;
  for (const auto& [name, value] : layout) inputs.push_back(value);
  Tensor table({2, kPbDim});
  for (double& v : table.values()) v = g(rng);
  inputs.push_back(table);
  auto loss = [&](Tape& tape, std::span<const Var> v) {
    BoundParameters w(tape, layout, v.first(layout.size()));
    return WindowLoss(m, w, batch, ad::GatherRows(v.back(), batch.trials));
  };
  GradientCheckOptions opt;
  opt.probes = 40;
  opt.seed = 2;
  EXPECT_LT(GradientCheck(loss, inputs, opt).max_relative_error, 1e-5);
  // Bias coordinates specifically.
  auto pb_only = [&](Tape& tape, std::span<const Var> v) {
    BoundParameters w(tape, layout, false);
    return WindowLoss(m, w, batch, ad::GatherRows(v[0], batch.trials));
  };
  EXPECT_LT(GradientCheck(pb_only, {table}, opt).max_relative_error, 1e-5);
}

TEST(ModelTest, BiasGradientsStayWithTheirTrial) {
  const DpmpbModel m(ModelConfig{}, 5);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  auto make = [&](int trial) {
    NormalizedEpisode e;
    e.trial = trial;
    for (int t = 0; t < 6; ++t) {
      std::vector<double> s(7), u(2);
      for (double& v : s) v = g(rng);
      for (double& v : u) v = g(rng);
      e.states.push_back(s);
      e.commands.push_back(u);
    }
    return e;
  };
  std::vector<NormalizedEpisode> eps = {make(0), make(2)};
  auto row_grads = [&](const std::vector<NormalizedEpisode>& data) {
    const auto refs = EnumerateWindows(data, 3);
    const WindowBatch batch = GatherWindows(data, refs, 3);
    Tape tape;
    BoundParameters w(tape, m.weights(), false);
    const Var table = tape.Input(Tensor({3, kPbDim}, 0.1));
    tape.Backward(WindowLoss(m, w, batch, ad::GatherRows(table, batch.trials)));
    return tape.Grad(table);
  };
  const Tensor base = row_grads(eps);
  EXPECT_EQ(base.at(1, 0), 0.0);
  EXPECT_EQ(base.at(1, 1), 0.0);
  EXPECT_NE(base.at(0, 0), 0.0);
  EXPECT_NE(base.at(2, 0), 0.0);
  // Perturbing trial 2's data leaves trial 0's bias gradient untouched.
  for (auto& s : eps[1].states) s[0] += 1.0;
  const Tensor moved = row_grads(eps);
  EXPECT_EQ(moved.at(0, 0), base.at(0, 0));
  EXPECT_EQ(moved.at(0, 1), base.at(0, 1));
  EXPECT_NE(moved.at(2, 0), base.at(2, 0));
}

TEST(ModelTest, EstimationRejectsShortEpisodes) {
  const DpmpbModel m(SmallConfig(1, 1), 1);
  const Episode e = Regime(0.5, 0, 5, 1);
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_THROW(EstimatePbOnline(m, zero, std::span<const Episode>(&e, 1), EstimateOptions{}),
               Error);
}

TEST(ModelTest, SingleEpisodeStillFits) {
  DpmpbModel m(SmallConfig(1, 1), 2);
  const std::vector<Episode> eps = {Regime(0.7, 0, 80, 3), Regime(0.7, 0, 80, 4)};
  TrainingConfig cfg;
  cfg.n_expand = 6;
  cfg.batch = 32;
  cfg.epochs = 40;
  cfg.lr = 3e-3;
  const TrainingReport r = Train(m, eps, cfg);
  EXPECT_LT(r.epoch_mse.back(), 0.5 * r.epoch_mse.front());
  EXPECT_EQ(m.biases().dim(0), 1);
}

}  // namespace
}  // namespace clothpb::dpmpb
