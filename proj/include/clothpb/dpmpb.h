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

#ifndef CLOTHPB_DPMPB_H_
#define CLOTHPB_DPMPB_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clothpb/autodiff.h"
#include "clothpb/checkpoint.h"
#include "clothpb/layers.h"
#include "clothpb/tensor.h"

namespace clothpb::dpmpb {

inline constexpr int kPbDim = 2;
inline constexpr double kVarianceGuard = 1e-8;

// Per-dimension z-score.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  // Dimensions whose variance fell under the guard.
  std::vector<bool> guarded;

  static Normalizer Fit(std::span<const std::vector<double>> rows);
  int dim() const { return static_cast<int>(mean.size()); }
  std::vector<double> Normalize(std::span<const double> raw) const;
  std::vector<double> Denormalize(std::span<const double> normalized) const;
};

// One trial: raw state rows s_t (latent, joint angles, joint speeds) and the
// command u_t executed after observing s_t.
struct Episode {
  int trial = 0;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> commands;

  int steps() const { return static_cast<int>(states.size()); }
};

struct ModelConfig {
  int state_dim = 7;
  int command_dim = 2;
  std::vector<int> encoder_units = {300, 100, 30};
  int lstm_units = 30;
  int lstm_layers = 2;
  std::vector<int> decoder_units = {100, 300};
};

// Graph-side LSTM state, one [B, units] pair per layer.
struct HiddenVars {
  std::vector<Var> h;
  std::vector<Var> c;
};

// Value-side LSTM state.
struct Hidden {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

class DpmpbModel {
 public:
  DpmpbModel(const ModelConfig& config, std::uint64_t seed);

  static DpmpbModel FromParameters(const ParameterSet& params);
  ParameterSet ToParameters() const;

  const ModelConfig& config() const { return config_; }
  int input_dim() const { return config_.state_dim + config_.command_dim + kPbDim; }

  ParameterSet& weights() { return weights_; }
  const ParameterSet& weights() const { return weights_; }
  // Fingerprint of W alone.
  std::uint64_t WeightFingerprint() const { return Fingerprint(weights_); }

  Normalizer& state_norm() { return state_norm_; }
  const Normalizer& state_norm() const { return state_norm_; }
  Normalizer& command_norm() { return command_norm_; }
  const Normalizer& command_norm() const { return command_norm_; }

  // Trained per-trial biases, [K, 2].
  Tensor& biases() { return biases_; }
  const Tensor& biases() const { return biases_; }
  std::vector<double> Bias(int trial) const;

  Hidden ZeroHidden(int batch) const;
  HiddenVars Constant(Tape& tape, const Hidden& hidden) const;
  static Hidden Values(const HiddenVars& hidden);

  // One model step on normalized rows: s [B,Ns], u [B,Nu], p [B,2].
  // Advances `hidden` in place and returns the predicted next state.
  Var StepGraph(const BoundParameters& w, Var s, Var u, Var p, HiddenVars& hidden) const;

  // Value-side conveniences on normalized vectors, batch of one.
  std::vector<double> ForwardStep(std::span<const double> s, std::span<const double> u,
                                  std::span<const double> p, Hidden& hidden) const;
  // Free-running rollout consuming `commands`, feeding predictions back.
  std::vector<std::vector<double>> Rollout(std::span<const double> s0,
                                           std::span<const std::vector<double>> commands,
                                           std::span<const double> p, Hidden& hidden) const;

 private:
  DpmpbModel() = default;
  void CheckDims(std::span<const double> s, std::span<const double> u,
                 std::span<const double> p) const;

  ModelConfig config_;
  ParameterSet weights_;
  Normalizer state_norm_;
  Normalizer command_norm_;
  Tensor biases_;
};

struct TrainingConfig {
  int n_expand = 30;
  int batch = 300;
  int epochs = 300;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainingReport {
  std::vector<double> epoch_mse;
  int windows = 0;
  std::vector<int> skipped_trials;
};

// Contiguous windows of normalized episodes with teacher forcing.
struct WindowBatch {
  std::vector<Tensor> states;    // n_expand + 1 tensors of [B, Ns]
  std::vector<Tensor> commands;  // n_expand tensors of [B, Nu]
  std::vector<int> trials;       // row -> trial index
};

struct NormalizedEpisode {
  int trial = 0;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> commands;
};

std::vector<NormalizedEpisode> NormalizeEpisodes(const DpmpbModel& model,
                                                 std::span<const Episode> episodes);

struct WindowRef {
  int episode = 0;
  int offset = 0;
};

std::vector<WindowRef> EnumerateWindows(std::span<const NormalizedEpisode> episodes,
                                        int n_expand);
WindowBatch GatherWindows(std::span<const NormalizedEpisode> episodes,
                          std::span<const WindowRef> refs, int n_expand);

// Teacher-forced mean squared error of a window batch. `pb_rows` is [B,2].
Var WindowLoss(const DpmpbModel& model, const BoundParameters& w, const WindowBatch& batch,
               Var pb_rows);

// Fits the normalizers on the corpus, then trains W and one bias per trial
// id (trial ids index rows of the bias table) with Adam.
TrainingReport Train(DpmpbModel& model, std::span<const Episode> episodes,
                     const TrainingConfig& config,
                     const std::function<void(int, double)>& on_epoch = {});

struct EstimateOptions {
  int n_expand = 30;
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 30;
};

// Bias after each epoch (first entry is p_init). W is not modified.
std::vector<std::vector<double>> EstimatePbOnline(const DpmpbModel& model,
                                                  std::span<const double> p_init,
                                                  std::span<const Episode> episodes,
                                                  const EstimateOptions& options);

void SaveModel(const std::filesystem::path& path, const DpmpbModel& model);
DpmpbModel LoadModel(const std::filesystem::path& path);

}  // namespace clothpb::dpmpb

#endif  // CLOTHPB_DPMPB_H_
