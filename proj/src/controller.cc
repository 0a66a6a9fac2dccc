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

#include "clothpb/controller.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clothpb/error.h"
#include "clothpb/layers.h"
#include "clothpb/sim/raster.h"

namespace clothpb::controller {
namespace {

constexpr int kLatentCols = perception::kLatentDim;
// Joint speeds follow latent and joint angles in the state row.
constexpr int kSpeedCol = 5;
constexpr int kStateDim = 7;

Tensor Row(std::span<const double> v) {
  return Tensor({1, static_cast<int>(v.size())}, std::vector<double>(v.begin(), v.end()));
}

Tensor Tile(std::span<const double> v, int rows) {
  const int d = static_cast<int>(v.size());
  Tensor t({rows, d});
  for (int r = 0; r < rows; ++r) std::copy(v.begin(), v.end(), t.data() + r * d);
  return t;
}

dpmpb::Hidden TileHidden(const dpmpb::Hidden& h, int rows) {
  dpmpb::Hidden out;
  for (const Tensor& t : h.h) out.h.push_back(Tile(t.values(), rows));
  for (const Tensor& t : h.c) out.c.push_back(Tile(t.values(), rows));
  return out;
}

double Norm(const std::vector<std::vector<double>>& v) {
  double s = 0.0;
  for (const auto& row : v) {
    for (double x : row) s += x * x;
  }
  return std::sqrt(s);
}

void Clip(std::vector<std::vector<double>>& u, const Bounds& b) {
  for (auto& row : u) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::clamp(row[j], b.lo[j], b.hi[j]);
  }
}

}  // namespace

void ControlConfig::Validate() const {
  if (n_seq < 1 || n_periodic < 1 || n_batch < 1 || n_iter < 0 || !(gamma_max > 0) ||
      !(gamma_floor_ratio > 0 && gamma_floor_ratio <= 1) || !(w_loss >= 0)) {
    throw Error(ErrorKind::kConfig, "invalid control config");
  }
}

PeriodicMask PeriodicMask::AtTick(int n_seq, int n_periodic, long tick) {
  if (n_seq < 1 || n_periodic < 1) throw Error(ErrorKind::kConfig, "mask sizes must be >= 1");
  PeriodicMask m;
  m.n_periodic = n_periodic;
  m.tick = tick;
  for (int i = 0; i < n_seq; ++i) m.bits.push_back((tick + 1 + i) % n_periodic == 0 ? 1 : 0);
  return m;
}

PeriodicMask MaskShift(const PeriodicMask& mask) {
  PeriodicMask out = mask;
  out.tick = mask.tick + 1;
  if (out.bits.empty()) return out;
  std::rotate(out.bits.begin(), out.bits.begin() + 1, out.bits.end());
  const long incoming = out.tick + static_cast<long>(out.bits.size());
  out.bits.back() = incoming % out.n_periodic == 0 ? 1 : 0;
  return out;
}

std::vector<double> GammaSchedule(int n_batch, double gamma_max, double floor_ratio) {
  if (n_batch < 1) throw Error(ErrorKind::kConfig, "n_batch must be >= 1");
  if (n_batch == 1) return {gamma_max};
  std::vector<double> out;
  const double lo = std::log(gamma_max * floor_ratio), hi = std::log(gamma_max);
  for (int i = 0; i < n_batch; ++i) out.push_back(std::exp(lo + (hi - lo) * i / (n_batch - 1)));
  out.back() = gamma_max;
  return out;
}

std::vector<std::vector<double>> WarmStart(const std::vector<std::vector<double>>& u_prev) {
  if (u_prev.empty()) return {};
  std::vector<std::vector<double>> out(u_prev.begin() + 1, u_prev.end());
  out.push_back(u_prev.back());
  return out;
}

Var ControlLoss(std::span<const double> z_ref, std::span<const Var> z_pred,
                std::span<const Var> r_pred, std::span<const int> mask, double w_loss) {
  if (z_pred.size() != mask.size() || r_pred.size() != mask.size() || z_pred.empty()) {
    throw Error(ErrorKind::kContract, "control loss sequences differ in length: " +
                                          std::to_string(z_pred.size()) + ", " +
                                          std::to_string(r_pred.size()) + ", mask " +
                                          std::to_string(mask.size()));
  }
  Tape& tape = *z_pred.front().tape();
  const Var ref = tape.Constant(Row(z_ref));
  std::vector<Var> errors;
  for (std::size_t i = 0; i < z_pred.size(); ++i) {
    errors.push_back(ad::Scale(ad::Sub(ref, z_pred[i]), mask[i] ? 1.0 : 0.0));
  }
  const Var target = ad::L2Norm(ad::Concat(errors));
  const std::vector<Var> rs(r_pred.begin(), r_pred.end());
  return ad::Add(target, ad::Scale(ad::L2Norm(ad::Concat(rs)), w_loss));
}

double ControlLossValue(std::span<const std::vector<double>> z_ref_seq,
                        std::span<const std::vector<double>> z_pred_seq,
                        std::span<const std::vector<double>> r_pred_seq,
                        std::span<const int> mask, double w_loss) {
  if (z_ref_seq.size() != mask.size() || z_pred_seq.size() != mask.size() ||
      r_pred_seq.size() != mask.size()) {
    throw Error(ErrorKind::kContract, "control loss sequences differ in length");
  }
  double target = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (z_ref_seq[i].size() != z_pred_seq[i].size()) {
      throw Error(ErrorKind::kContract, "latent rows differ in length");
    }
    if (mask[i]) {
      for (std::size_t j = 0; j < z_ref_seq[i].size(); ++j) {
        const double d = z_ref_seq[i][j] - z_pred_seq[i][j];
        target += d * d;
      }
    }
    for (double r : r_pred_seq[i]) reg += r * r;
  }
  return std::sqrt(target) + w_loss * std::sqrt(reg);
}

ModelSurrogate::ModelSurrogate(const dpmpb::DpmpbModel& model, std::vector<double> p,
                               const dpmpb::Hidden& hidden, std::vector<double> s_t,
                               std::vector<double> z_ref, double w_loss)
    : model_(model),
      p_(std::move(p)),
      hidden_(hidden),
      s_t_(std::move(s_t)),
      z_ref_(std::move(z_ref)),
      w_loss_(w_loss) {
  if (model.config().state_dim != kStateDim || z_ref_.size() != kLatentCols ||
      static_cast<int>(s_t_.size()) != kStateDim || p_.size() != dpmpb::kPbDim) {
    throw Error(ErrorKind::kContract, "surrogate expects a 7-dim state and 3-dim latent target");
  }
}

Var ModelSurrogate::LossGraph(Tape& tape, std::span<const Var> u,
                              std::span<const int> mask) const {
  BoundParameters w(tape, model_.weights(), false);
  dpmpb::HiddenVars hidden = model_.Constant(tape, hidden_);
  const auto& mean = model_.state_norm().mean;
  const auto& sd = model_.state_norm().stddev;
  const Var z_scale = tape.Constant(Row(std::span(sd).first(kLatentCols)));
  const Var z_shift = tape.Constant(Row(std::span(mean).first(kLatentCols)));
  const Var r_scale = tape.Constant(Row(std::span(sd).subspan(kSpeedCol, 2)));
  const Var r_shift = tape.Constant(Row(std::span(mean).subspan(kSpeedCol, 2)));
  const Var p = tape.Constant(Row(p_));
  Var s = tape.Constant(Row(s_t_));
  std::vector<Var> z_pred, r_pred;
  for (const Var& ui : u) {
    s = model_.StepGraph(w, s, ui, p, hidden);
    z_pred.push_back(ad::Add(ad::Mul(ad::Slice(s, 0, kLatentCols), z_scale), z_shift));
    r_pred.push_back(ad::Add(ad::Mul(ad::Slice(s, kSpeedCol, kSpeedCol + 2), r_scale), r_shift));
  }
  return ControlLoss(z_ref_, z_pred, r_pred, mask, w_loss_);
}

double ModelSurrogate::LossAndGradient(const std::vector<std::vector<double>>& u,
                                       std::span<const int> mask,
                                       std::vector<std::vector<double>>& grad) const {
  Tape tape;
  std::vector<Var> rows;
  for (const auto& ui : u) rows.push_back(tape.Input(Row(ui)));
  const Var loss = LossGraph(tape, rows, mask);
  tape.Backward(loss);
  grad.clear();
  for (const Var& r : rows) {
    const Tensor g = tape.Grad(r);
    grad.emplace_back(g.values().begin(), g.values().end());
  }
  return loss.value().item();
}

std::vector<double> ModelSurrogate::Losses(
    const std::vector<std::vector<std::vector<double>>>& candidates,
    std::span<const int> mask) const {
  const int b = static_cast<int>(candidates.size());
  const int n = static_cast<int>(mask.size());
  const int nu = command_dim();
  Tape tape;
  BoundParameters w(tape, model_.weights(), false);
  dpmpb::HiddenVars hidden = model_.Constant(tape, TileHidden(hidden_, b));
  const Var p = tape.Constant(Tile(p_, b));
  Var s = tape.Constant(Tile(s_t_, b));
  std::vector<std::vector<std::vector<double>>> z(b), r(b);
  const auto& mean = model_.state_norm().mean;
  const auto& sd = model_.state_norm().stddev;
  for (int i = 0; i < n; ++i) {
    Tensor u({b, nu});
    for (int k = 0; k < b; ++k) {
      if (static_cast<int>(candidates[k].size()) != n) {
        throw Error(ErrorKind::kContract, "candidate length differs from mask length");
      }
      std::copy(candidates[k][i].begin(), candidates[k][i].end(), u.data() + k * nu);
    }
    try {
      s = model_.StepGraph(w, s, tape.Constant(u), p, hidden);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kOverflow) throw;
      return std::vector<double>(b, std::numeric_limits<double>::quiet_NaN());
    }
    const Tensor& v = s.value();
    for (int k = 0; k < b; ++k) {
      std::vector<double> zk(kLatentCols), rk(2);
      for (int j = 0; j < kLatentCols; ++j) zk[j] = v.at(k, j) * sd[j] + mean[j];
      for (int j = 0; j < 2; ++j) rk[j] = v.at(k, kSpeedCol + j) * sd[kSpeedCol + j] + mean[kSpeedCol + j];
      z[k].push_back(std::move(zk));
      r[k].push_back(std::move(rk));
    }
  }
  std::vector<double> losses;
  const std::vector<std::vector<double>> ref(n, z_ref_);
  for (int k = 0; k < b; ++k) losses.push_back(ControlLossValue(ref, z[k], r[k], mask, w_loss_));
  return losses;
}

Bounds CommandBounds(const dpmpb::DpmpbModel& model, const sim::ArmModel& arm,
                     std::optional<double> fixed_gain) {
  const dpmpb::Normalizer& n = model.command_norm();
  const int nu = model.config().command_dim;
  Bounds b;
  for (int j = 0; j < nu; ++j) {
    double lo, hi;
    if (j < 2) {
      lo = arm.joint_limits[j].min;
      hi = arm.joint_limits[j].max;
    } else {
      lo = fixed_gain ? *fixed_gain : arm.k_min;
      hi = fixed_gain ? *fixed_gain : arm.k_max;
    }
    b.lo.push_back((lo - n.mean[j]) / n.stddev[j]);
    b.hi.push_back((hi - n.mean[j]) / n.stddev[j]);
  }
  return b;
}

OptimizeResult Optimize(const Surrogate& surrogate,
                        const std::vector<std::vector<double>>& u_prev,
                        const PeriodicMask& mask, const ControlConfig& config,
                        const Bounds& bounds) {
  config.Validate();
  if (static_cast<int>(u_prev.size()) != config.n_seq ||
      static_cast<int>(mask.bits.size()) != config.n_seq) {
    throw Error(ErrorKind::kContract, "command sequence and mask must have n_seq entries");
  }
  const std::vector<double> gammas =
      GammaSchedule(config.n_batch, config.gamma_max, config.gamma_floor_ratio);
  OptimizeResult result;
  result.u = WarmStart(u_prev);
  Clip(result.u, bounds);
  std::vector<std::vector<double>> grad;
  result.loss = surrogate.LossAndGradient(result.u, mask.bits, grad);
  result.initial_loss = result.loss;
  for (int iter = 0; iter < config.n_iter; ++iter) {
    if (iter > 0) surrogate.LossAndGradient(result.u, mask.bits, grad);
    const double gnorm = Norm(grad);
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) {
      result.iteration_loss.push_back(result.loss);
      result.chosen_gamma.push_back(0.0);
      continue;
    }
    // Incumbent first so that ties keep the smallest step.
    std::vector<std::vector<std::vector<double>>> candidates = {result.u};
    for (double g : gammas) {
      auto c = result.u;
      for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = 0; j < c[i].size(); ++j) c[i][j] -= g * grad[i][j] / gnorm;
      }
      Clip(c, bounds);
      candidates.push_back(std::move(c));
    }
    const std::vector<double> losses = surrogate.Losses(candidates, mask.bits);
    int best = -1;
    for (std::size_t k = 0; k < losses.size(); ++k) {
      if (!std::isfinite(losses[k])) continue;
      if (best < 0 || losses[k] < losses[best]) best = static_cast<int>(k);
    }
    if (best < 0) throw Error(ErrorKind::kDiverged, "every control candidate diverged");
    result.u = candidates[best];
    result.loss = losses[best];
    result.iteration_loss.push_back(result.loss);
    result.chosen_gamma.push_back(best == 0 ? 0.0 : gammas[best - 1]);
  }
  return result;
}

SimPlant::SimPlant(sim::WorldConfig config, sim::MaterialParams material, sim::WorldState state,
                   sim::Viewport viewport)
    : config_(std::move(config)),
      material_(material),
      state_(std::move(state)),
      viewport_(viewport) {}

Observation SimPlant::Observe() {
  Observation obs;
  obs.image = sim::Rasterize(config_.cloth, state_, viewport_);
  obs.theta = state_.theta;
  obs.theta_dot = state_.theta_dot;
  obs.t = state_.t;
  return obs;
}

void SimPlant::Apply(const sim::ServoCommand& cmd) {
  state_ = sim::AdvanceTick(config_, state_, cmd, material_);
}

std::vector<double> StateRow(const perception::Latent& z, const Observation& obs) {
  return {z[0], z[1], z[2], obs.theta[0], obs.theta[1], obs.theta_dot[0], obs.theta_dot[1]};
}

double LatentDistance(const perception::Latent& a, const perception::Latent& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

namespace {

sim::ServoCommand ToServo(const std::vector<double>& raw, double gain) {
  sim::ServoCommand cmd;
  cmd.theta_ref = {raw[0], raw[1]};
  cmd.k_ref = raw.size() > 2 ? raw[2] : gain;
  return cmd;
}

Telemetry RunLoop(Plant& plant, const perception::Autoencoder& ae,
                  const dpmpb::DpmpbModel& model, std::vector<double> p,
                  const perception::Latent& z_ref, const sim::ArmModel& arm,
                  const LoopOptions& options,
                  const std::function<void(const TickRecord&)>& on_tick) {
  const ControlConfig& cfg = options.control;
  cfg.Validate();
  const dpmpb::Normalizer& sn = model.state_norm();
  const dpmpb::Normalizer& un = model.command_norm();
  const int nu = model.config().command_dim;
  const Bounds bounds = CommandBounds(
      model, arm, options.freeze_gain ? std::optional<double>(options.gain) : std::nullopt);
  const std::vector<double> z_ref_v(z_ref.begin(), z_ref.end());

  Telemetry tel;
  tel.pb_trajectory.push_back(p);
  dpmpb::Hidden live = model.ZeroHidden(1);
  std::vector<std::vector<double>> u_seq;
  std::vector<double> prev_s, prev_u;
  PeriodicMask mask = PeriodicMask::AtTick(cfg.n_seq, cfg.n_periodic, 0);
  dpmpb::Episode buffer;
  for (long tick = 0; tick < options.ticks; ++tick) {
    TickRecord rec;
    try {
      const Observation obs = plant.Observe();
      const perception::Latent z = ae.Encode(obs.image);
      const std::vector<double> raw_s = StateRow(z, obs);
      const std::vector<double> s = sn.Normalize(raw_s);
      if (!prev_s.empty()) model.ForwardStep(prev_s, prev_u, p, live);
      if (options.estimate_every > 0 && tick > 0 && tick % options.estimate_every == 0 &&
          buffer.steps() > options.estimate.n_expand) {
        dpmpb::Episode window = buffer;
        // The last command's successor is the current observation.
        window.states.push_back(raw_s);
        window.commands.push_back(window.commands.back());
        const auto traj = dpmpb::EstimatePbOnline(model, p, std::span(&window, 1), options.estimate);
        p = traj.back();
        tel.pb_trajectory.push_back(p);
      }
      if (u_seq.empty()) {
        std::vector<double> hold = {obs.theta[0], obs.theta[1]};
        if (nu > 2) hold.push_back(options.freeze_gain ? options.gain : 0.5 * (arm.k_min + arm.k_max));
        u_seq.assign(cfg.n_seq, un.Normalize(hold));
        // WarmStart will drop one copy; the sequence is constant anyway.
      }
      ModelSurrogate surrogate(model, p, live, s, z_ref_v, cfg.w_loss);
      const OptimizeResult opt = Optimize(surrogate, u_seq, mask, cfg, bounds);
      u_seq = opt.u;
      const std::vector<double> raw_u = un.Denormalize(u_seq.front());
      rec.tick = tick;
      rec.t = obs.t;
      rec.latent_error = LatentDistance(z_ref, z);
      rec.loss = opt.loss;
      rec.gamma = opt.chosen_gamma.empty() ? 0.0 : opt.chosen_gamma.back();
      rec.command = raw_u;
      rec.pb = p;
      tel.ticks.push_back(rec);
      if (on_tick) on_tick(rec);
      plant.Apply(ToServo(raw_u, options.gain));
      buffer.states.push_back(raw_s);
      buffer.commands.push_back(raw_u);
      prev_s = s;
      prev_u = u_seq.front();
      mask = MaskShift(mask);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kPlantFault && e.kind() != ErrorKind::kDiverged) throw;
      tel.aborted = true;
      tel.abort_reason = e.what();
      break;
    }
  }
  return tel;
}

}  // namespace

Telemetry ControlLoop(Plant& plant, const perception::Autoencoder& ae,
                      const dpmpb::DpmpbModel& model, std::vector<double> p,
                      const perception::Latent& z_ref, const sim::ArmModel& arm,
                      const LoopOptions& options,
                      const std::function<void(const TickRecord&)>& on_tick) {
  LoopOptions plain = options;
  plain.estimate_every = 0;
  return RunLoop(plant, ae, model, std::move(p), z_ref, arm, plain, on_tick);
}

Telemetry IntegratedLoop(Plant& plant, const perception::Autoencoder& ae,
                         const dpmpb::DpmpbModel& model, std::vector<double> p_init,
                         const perception::Latent& z_ref, const sim::ArmModel& arm,
                         LoopOptions options,
                         const std::function<void(const TickRecord&)>& on_tick) {
  if (options.estimate_every <= 0) options.estimate_every = 25;
  return RunLoop(plant, ae, model, std::move(p_init), z_ref, arm, options, on_tick);
}

Telemetry OpenLoop(Plant& plant, const perception::Autoencoder& ae, sim::CommandPolicy& policy,
                   const perception::Latent& z_ref, int ticks) {
  Telemetry tel;
  for (long tick = 0; tick < ticks; ++tick) {
    try {
      const Observation obs = plant.Observe();
      const sim::ServoCommand cmd = policy.Next();
      TickRecord rec;
      rec.tick = tick;
      rec.t = obs.t;
      rec.latent_error = LatentDistance(z_ref, ae.Encode(obs.image));
      rec.loss = std::numeric_limits<double>::quiet_NaN();
      rec.command = {cmd.theta_ref[0], cmd.theta_ref[1], cmd.k_ref};
      tel.ticks.push_back(rec);
      plant.Apply(cmd);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kPlantFault && e.kind() != ErrorKind::kDiverged) throw;
      tel.aborted = true;
      tel.abort_reason = e.what();
      break;
    }
  }
  return tel;
}

}  // namespace clothpb::controller
