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

#ifndef CLOTHPB_CONTROLLER_H_
#define CLOTHPB_CONTROLLER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clothpb/autodiff.h"
#include "clothpb/dpmpb.h"
#include "clothpb/image.h"
#include "clothpb/perception.h"
#include "clothpb/sim/policy.h"
#include "clothpb/sim/raster.h"
#include "clothpb/sim/world.h"

namespace clothpb::controller {

struct ControlConfig {
  int n_seq = 8;
  int n_batch = 30;
  double gamma_max = 1.0;
  int n_iter = 3;
  double w_loss = 0.001;
  int n_periodic = 8;
  double gamma_floor_ratio = 1e-3;

  void Validate() const;
};

// Entry i covers the prediction for absolute tick `tick + 1 + i`, and is 1
// exactly when that tick is a multiple of n_periodic.
struct PeriodicMask {
  std::vector<int> bits;
  int n_periodic = 1;
  long tick = 0;

  static PeriodicMask AtTick(int n_seq, int n_periodic, long tick);
};

PeriodicMask MaskShift(const PeriodicMask& mask);

// Geometric rates from gamma_max * floor_ratio up to gamma_max.
std::vector<double> GammaSchedule(int n_batch, double gamma_max, double floor_ratio = 1e-3);

// Shift left by one and repeat the last entry.
std::vector<std::vector<double>> WarmStart(const std::vector<std::vector<double>>& u_prev);

// ||mask * (z_ref - z_pred)||_2 + w_loss * ||r_pred||_2 over per-step rows.
Var ControlLoss(std::span<const double> z_ref, std::span<const Var> z_pred,
                std::span<const Var> r_pred, std::span<const int> mask, double w_loss);
double ControlLossValue(std::span<const std::vector<double>> z_ref_seq,
                        std::span<const std::vector<double>> z_pred_seq,
                        std::span<const std::vector<double>> r_pred_seq,
                        std::span<const int> mask, double w_loss);

// What the optimizer needs to know about a predictive model. The state
// layout is latent (3) followed by the regularised block.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual int command_dim() const = 0;
  // Loss of each candidate command sequence (rows of [n_seq, Nu] each).
  virtual std::vector<double> Losses(
      const std::vector<std::vector<std::vector<double>>>& candidates,
      std::span<const int> mask) const = 0;
  // Loss and gradient with respect to the sequence.
  virtual double LossAndGradient(const std::vector<std::vector<double>>& u,
                                 std::span<const int> mask,
                                 std::vector<std::vector<double>>& grad) const = 0;
};

// The trained network as a surrogate: rollouts branch from a copy of the
// live hidden state at s_t; losses are in raw latent and joint-speed units.
class ModelSurrogate : public Surrogate {
 public:
  ModelSurrogate(const dpmpb::DpmpbModel& model, std::vector<double> p,
                 const dpmpb::Hidden& hidden, std::vector<double> s_t,
                 std::vector<double> z_ref, double w_loss);

  int command_dim() const override { return model_.config().command_dim; }
  std::vector<double> Losses(const std::vector<std::vector<std::vector<double>>>& candidates,
                             std::span<const int> mask) const override;
  double LossAndGradient(const std::vector<std::vector<double>>& u, std::span<const int> mask,
                         std::vector<std::vector<double>>& grad) const override;

  // Loss graph for one sequence given as per-step [1, Nu] rows.
  Var LossGraph(Tape& tape, std::span<const Var> u, std::span<const int> mask) const;

 private:
  const dpmpb::DpmpbModel& model_;
  std::vector<double> p_;
  dpmpb::Hidden hidden_;
  std::vector<double> s_t_;
  std::vector<double> z_ref_;
  double w_loss_;
};

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

// Normalized command bounds matching the arm's joint and gain limits. With
// `fixed_gain` the gain channel (if present) is pinned to that value.
Bounds CommandBounds(const dpmpb::DpmpbModel& model, const sim::ArmModel& arm,
                     std::optional<double> fixed_gain = std::nullopt);

struct OptimizeResult {
  std::vector<std::vector<double>> u;
  double loss = 0.0;
  double initial_loss = 0.0;
  std::vector<double> iteration_loss;
  std::vector<double> chosen_gamma;  // 0 when the incumbent was kept
};

OptimizeResult Optimize(const Surrogate& surrogate,
                        const std::vector<std::vector<double>>& u_prev,
                        const PeriodicMask& mask, const ControlConfig& config,
                        const Bounds& bounds);

// A plant observed and commanded at the 5 Hz tick.
struct Observation {
  BinaryImage image;
  sim::JointVector theta{};
  sim::JointVector theta_dot{};
  double t = 0.0;
};

class Plant {
 public:
  virtual ~Plant() = default;
  virtual Observation Observe() = 0;
  // Applies `cmd` for one tick.
  virtual void Apply(const sim::ServoCommand& cmd) = 0;
};

class SimPlant : public Plant {
 public:
  SimPlant(sim::WorldConfig config, sim::MaterialParams material, sim::WorldState state,
           sim::Viewport viewport = {});

  Observation Observe() override;
  void Apply(const sim::ServoCommand& cmd) override;
  const sim::WorldState& state() const { return state_; }

 private:
  sim::WorldConfig config_;
  sim::MaterialParams material_;
  sim::WorldState state_;
  sim::Viewport viewport_;
};

struct TickRecord {
  long tick = 0;
  double t = 0.0;
  double latent_error = 0.0;
  double loss = 0.0;  // optimizer's predicted loss; NaN for open-loop ticks
  double gamma = 0.0;
  std::vector<double> command;  // raw, as sent
  std::vector<double> pb;
};

struct Telemetry {
  std::vector<TickRecord> ticks;
  std::vector<std::vector<double>> pb_trajectory;
  bool aborted = false;
  std::string abort_reason;
};

// Raw state row: latent, joint angles, joint speeds.
std::vector<double> StateRow(const perception::Latent& z, const Observation& obs);

struct LoopOptions {
  ControlConfig control;
  int ticks = 250;
  // Gain used when the model has no gain channel, or when frozen.
  double gain = 3.0;
  bool freeze_gain = false;
  // Integrated mode: re-estimate the bias every this many ticks (0 = never).
  int estimate_every = 0;
  dpmpb::EstimateOptions estimate;
};

// Receding-horizon control from the current plant state. Plant faults end
// the loop with the telemetry collected so far.
Telemetry ControlLoop(Plant& plant, const perception::Autoencoder& ae,
                      const dpmpb::DpmpbModel& model, std::vector<double> p,
                      const perception::Latent& z_ref, const sim::ArmModel& arm,
                      const LoopOptions& options,
                      const std::function<void(const TickRecord&)>& on_tick = {});

// Control with periodic online bias estimation on the growing episode
// buffer (every options.estimate_every ticks, default 25).
Telemetry IntegratedLoop(Plant& plant, const perception::Autoencoder& ae,
                         const dpmpb::DpmpbModel& model, std::vector<double> p_init,
                         const perception::Latent& z_ref, const sim::ArmModel& arm,
                         LoopOptions options,
                         const std::function<void(const TickRecord&)>& on_tick = {});

// Same cadence and telemetry with commands from an open-loop policy.
Telemetry OpenLoop(Plant& plant, const perception::Autoencoder& ae, sim::CommandPolicy& policy,
                   const perception::Latent& z_ref, int ticks);

double LatentDistance(const perception::Latent& a, const perception::Latent& b);

}  // namespace clothpb::controller

#endif  // CLOTHPB_CONTROLLER_H_
