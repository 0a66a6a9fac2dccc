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

#include "clothpb/dpmpb.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "clothpb/error.h"
#include "clothpb/optim.h"

namespace clothpb::dpmpb {
namespace {

std::string Name(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

Tensor Row(std::span<const double> v) {
  return Tensor({1, static_cast<int>(v.size())}, std::vector<double>(v.begin(), v.end()));
}

std::vector<double> ToVector(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

Tensor IntVector(const std::vector<int>& v) {
  return Tensor({static_cast<int>(v.size())}, std::vector<double>(v.begin(), v.end()));
}

std::vector<int> ToInts(const Tensor& t) {
  std::vector<int> out;
  for (double v : t.values()) out.push_back(static_cast<int>(v));
  return out;
}

void PutNormalizer(ParameterSet& out, const std::string& prefix, const Normalizer& n) {
  const int d = n.dim();
  out.Set(prefix + ".mean", Tensor({d}, n.mean));
  out.Set(prefix + ".std", Tensor({d}, n.stddev));
  std::vector<double> g(n.guarded.begin(), n.guarded.end());
  out.Set(prefix + ".guarded", Tensor({d}, g));
}

Normalizer GetNormalizer(const ParameterSet& in, const std::string& prefix) {
  Normalizer n;
  n.mean = ToVector(in.Get(prefix + ".mean"));
  n.stddev = ToVector(in.Get(prefix + ".std"));
  for (double g : in.Get(prefix + ".guarded").values()) n.guarded.push_back(g != 0.0);
  return n;
}

Normalizer Identity(int dim) {
  Normalizer n;
  n.mean.assign(dim, 0.0);
  n.stddev.assign(dim, 1.0);
  n.guarded.assign(dim, false);
  return n;
}

}  // namespace

Normalizer Normalizer::Fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error(ErrorKind::kContract, "normalizer needs data");
  const std::size_t d = rows.front().size();
  Normalizer n;
  n.mean.assign(d, 0.0);
  n.stddev.assign(d, 0.0);
  n.guarded.assign(d, false);
  for (const auto& r : rows) {
    if (r.size() != d) throw Error(ErrorKind::kShape, "ragged normalizer rows");
    for (std::size_t i = 0; i < d; ++i) n.mean[i] += r[i];
  }
  for (double& m : n.mean) m /= double(rows.size());
  std::vector<double> var(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) var[i] += (r[i] - n.mean[i]) * (r[i] - n.mean[i]);
  }
  for (std::size_t i = 0; i < d; ++i) {
    var[i] /= double(rows.size());
    if (var[i] < kVarianceGuard) {
      n.guarded[i] = true;
      var[i] = kVarianceGuard;
    }
    n.stddev[i] = std::sqrt(var[i]);
  }
  return n;
}

std::vector<double> Normalizer::Normalize(std::span<const double> raw) const {
  if (static_cast<int>(raw.size()) != dim()) {
    throw Error(ErrorKind::kContract, "normalize expects " + std::to_string(dim()) +
                                          " values, got " + std::to_string(raw.size()));
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean[i]) / stddev[i];
  return out;
}

std::vector<double> Normalizer::Denormalize(std::span<const double> v) const {
  if (static_cast<int>(v.size()) != dim()) {
    throw Error(ErrorKind::kContract, "denormalize expects " + std::to_string(dim()) +
                                          " values, got " + std::to_string(v.size()));
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * stddev[i] + mean[i];
  return out;
}

DpmpbModel::DpmpbModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.state_dim < 1 || config.command_dim < 1 || config.lstm_layers < 1 ||
      config.lstm_units < 1) {
    throw Error(ErrorKind::kConfig, "bad model dimensions");
  }
  std::mt19937_64 rng(seed);
  int width = input_dim();
  for (std::size_t i = 0; i < config.encoder_units.size(); ++i) {
    InitLinear(weights_, Name("enc", i), width, config.encoder_units[i], rng);
    width = config.encoder_units[i];
  }
  const int u = config.lstm_units;
  for (int l = 0; l < config.lstm_layers; ++l) {
    const std::string name = Name("lstm", l);
    weights_.Set(name + ".w", UniformInit({width + u, 4 * u}, 1.0 / std::sqrt(u), rng));
    Tensor b({4 * u});
    for (int k = u; k < 2 * u; ++k) b.data()[k] = 1.0;  // forget gate
    weights_.Set(name + ".b", b);
    width = u;
  }
  for (std::size_t i = 0; i < config.decoder_units.size(); ++i) {
    InitLinear(weights_, Name("dec", i), width, config.decoder_units[i], rng);
    width = config.decoder_units[i];
  }
  InitLinear(weights_, "out", width, config.state_dim, rng);
  state_norm_ = Identity(config.state_dim);
  command_norm_ = Identity(config.command_dim);
  biases_ = Tensor({1, kPbDim});
}

DpmpbModel DpmpbModel::FromParameters(const ParameterSet& params) {
  DpmpbModel m;
  m.config_.state_dim = static_cast<int>(params.Get("arch.state_dim").item());
  m.config_.command_dim = static_cast<int>(params.Get("arch.command_dim").item());
  m.config_.encoder_units = ToInts(params.Get("arch.encoder_units"));
  m.config_.lstm_units = static_cast<int>(params.Get("arch.lstm_units").item());
  m.config_.lstm_layers = static_cast<int>(params.Get("arch.lstm_layers").item());
  m.config_.decoder_units = ToInts(params.Get("arch.decoder_units"));
  m.weights_ = params.Extract("w.");
  m.state_norm_ = GetNormalizer(params, "norm.state");
  m.command_norm_ = GetNormalizer(params, "norm.command");
  m.biases_ = params.Get("pb");
  const DpmpbModel reference(m.config_, 0);
  for (const auto& [name, value] : reference.weights_) {
    if (!m.weights_.Contains(name) || m.weights_.Get(name).shape() != value.shape()) {
      throw Error(ErrorKind::kSchema, "model checkpoint block '" + name +
                                          "' missing or misshapen");
    }
  }
  if (m.state_norm_.dim() != m.config_.state_dim ||
      m.command_norm_.dim() != m.config_.command_dim) {
    throw Error(ErrorKind::kSchema, "normalizer dimensions disagree with the model");
  }
  return m;
}

ParameterSet DpmpbModel::ToParameters() const {
  ParameterSet out;
  out.Set("arch.state_dim", Tensor::Scalar(config_.state_dim));
  out.Set("arch.command_dim", Tensor::Scalar(config_.command_dim));
  out.Set("arch.encoder_units", IntVector(config_.encoder_units));
  out.Set("arch.lstm_units", Tensor::Scalar(config_.lstm_units));
  out.Set("arch.lstm_layers", Tensor::Scalar(config_.lstm_layers));
  out.Set("arch.decoder_units", IntVector(config_.decoder_units));
  out.Merge(weights_, "w.");
  PutNormalizer(out, "norm.state", state_norm_);
  PutNormalizer(out, "norm.command", command_norm_);
  out.Set("pb", biases_);
  return out;
}

std::vector<double> DpmpbModel::Bias(int trial) const {
  if (trial < 0 || trial >= biases_.dim(0)) {
    throw Error(ErrorKind::kContract, "no trained bias for trial " + std::to_string(trial));
  }
  return {biases_.at(trial, 0), biases_.at(trial, 1)};
}

Hidden DpmpbModel::ZeroHidden(int batch) const {
  Hidden h;
  for (int l = 0; l < config_.lstm_layers; ++l) {
    h.h.emplace_back(Shape{batch, config_.lstm_units});
    h.c.emplace_back(Shape{batch, config_.lstm_units});
  }
  return h;
}

HiddenVars DpmpbModel::Constant(Tape& tape, const Hidden& hidden) const {
  HiddenVars v;
  for (const Tensor& t : hidden.h) v.h.push_back(tape.Constant(t));
  for (const Tensor& t : hidden.c) v.c.push_back(tape.Constant(t));
  return v;
}

Hidden DpmpbModel::Values(const HiddenVars& hidden) {
  Hidden out;
  for (Var v : hidden.h) out.h.push_back(v.value());
  for (Var v : hidden.c) out.c.push_back(v.value());
  return out;
}

Var DpmpbModel::StepGraph(const BoundParameters& w, Var s, Var u, Var p,
                          HiddenVars& hidden) const {
  if (s.shape().size() != 2 || s.shape()[1] != config_.state_dim ||
      u.shape().size() != 2 || u.shape()[1] != config_.command_dim ||
      p.shape().size() != 2 || p.shape()[1] != kPbDim) {
    throw Error(ErrorKind::kContract, "model step expects s [B," +
                                          std::to_string(config_.state_dim) + "], u [B," +
                                          std::to_string(config_.command_dim) +
                                          "], p [B,2]; got " + ShapeString(s.shape()) + ", " +
                                          ShapeString(u.shape()) + ", " +
                                          ShapeString(p.shape()));
  }
  const Var parts[] = {s, u, p};
  Var x = ad::Concat(parts);
  for (std::size_t i = 0; i < config_.encoder_units.size(); ++i) {
    x = ad::Tanh(Linear(w, x, Name("enc", i)));
  }
  const int n = config_.lstm_units;
  for (int l = 0; l < config_.lstm_layers; ++l) {
    const std::string name = Name("lstm", l);
    const Var in[] = {x, hidden.h[l]};
    const Var gates = Linear(w, ad::Concat(in), name);
    const Var i = ad::Sigmoid(ad::Slice(gates, 0, n));
    const Var f = ad::Sigmoid(ad::Slice(gates, n, 2 * n));
    const Var g = ad::Tanh(ad::Slice(gates, 2 * n, 3 * n));
    const Var o = ad::Sigmoid(ad::Slice(gates, 3 * n, 4 * n));
    hidden.c[l] = ad::Add(ad::Mul(f, hidden.c[l]), ad::Mul(i, g));
    hidden.h[l] = ad::Mul(o, ad::Tanh(hidden.c[l]));
    x = hidden.h[l];
  }
  for (std::size_t i = 0; i < config_.decoder_units.size(); ++i) {
    x = ad::Tanh(Linear(w, x, Name("dec", i)));
  }
  return Linear(w, x, "out");
}

void DpmpbModel::CheckDims(std::span<const double> s, std::span<const double> u,
                           std::span<const double> p) const {
  if (static_cast<int>(s.size()) != config_.state_dim ||
      static_cast<int>(u.size()) != config_.command_dim || p.size() != kPbDim) {
    throw Error(ErrorKind::kContract,
                "model step dims (" + std::to_string(s.size()) + "," +
                    std::to_string(u.size()) + "," + std::to_string(p.size()) +
                    ") differ from (" + std::to_string(config_.state_dim) + "," +
                    std::to_string(config_.command_dim) + ",2)");
  }
}

std::vector<double> DpmpbModel::ForwardStep(std::span<const double> s, std::span<const double> u,
                                            std::span<const double> p, Hidden& hidden) const {
  CheckDims(s, u, p);
  Tape tape;
  BoundParameters w(tape, weights_, false);
  HiddenVars hv = Constant(tape, hidden);
  const Var next = StepGraph(w, tape.Constant(Row(s)), tape.Constant(Row(u)),
                             tape.Constant(Row(p)), hv);
  hidden = Values(hv);
  return ToVector(next.value());
}

std::vector<std::vector<double>> DpmpbModel::Rollout(
    std::span<const double> s0, std::span<const std::vector<double>> commands,
    std::span<const double> p, Hidden& hidden) const {
  std::vector<std::vector<double>> out;
  std::vector<double> s(s0.begin(), s0.end());
  for (const auto& u : commands) {
    s = ForwardStep(s, u, p, hidden);
    out.push_back(s);
  }
  return out;
}

std::vector<NormalizedEpisode> NormalizeEpisodes(const DpmpbModel& model,
                                                 std::span<const Episode> episodes) {
  std::vector<NormalizedEpisode> out;
  for (const Episode& e : episodes) {
    if (e.states.size() != e.commands.size()) {
      throw Error(ErrorKind::kSchema, "episode of trial " + std::to_string(e.trial) +
                                          " has mismatched state/command counts");
    }
    NormalizedEpisode n;
    n.trial = e.trial;
    for (const auto& s : e.states) n.states.push_back(model.state_norm().Normalize(s));
    for (const auto& u : e.commands) n.commands.push_back(model.command_norm().Normalize(u));
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<WindowRef> EnumerateWindows(std::span<const NormalizedEpisode> episodes,
                                        int n_expand) {
  std::vector<WindowRef> refs;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const int steps = static_cast<int>(episodes[e].states.size());
    for (int o = 0; o + n_expand < steps; ++o) refs.push_back({static_cast<int>(e), o});
  }
  return refs;
}

WindowBatch GatherWindows(std::span<const NormalizedEpisode> episodes,
                          std::span<const WindowRef> refs, int n_expand) {
  const int b = static_cast<int>(refs.size());
  const int ns = static_cast<int>(episodes.front().states.front().size());
  const int nu = static_cast<int>(episodes.front().commands.front().size());
  WindowBatch batch;
  for (int t = 0; t <= n_expand; ++t) {
    Tensor s({b, ns});
    for (int r = 0; r < b; ++r) {
      const auto& src = episodes[refs[r].episode].states[refs[r].offset + t];
      std::copy(src.begin(), src.end(), s.data() + static_cast<std::size_t>(r) * ns);
    }
    batch.states.push_back(std::move(s));
    if (t == n_expand) break;
    Tensor u({b, nu});
    for (int r = 0; r < b; ++r) {
      const auto& src = episodes[refs[r].episode].commands[refs[r].offset + t];
      std::copy(src.begin(), src.end(), u.data() + static_cast<std::size_t>(r) * nu);
    }
    batch.commands.push_back(std::move(u));
  }
  for (const WindowRef& r : refs) batch.trials.push_back(episodes[r.episode].trial);
  return batch;
}

Var WindowLoss(const DpmpbModel& model, const BoundParameters& w, const WindowBatch& batch,
               Var pb_rows) {
  Tape& tape = w.tape();
  const int b = static_cast<int>(batch.trials.size());
  HiddenVars hidden = model.Constant(tape, model.ZeroHidden(b));
  const int n = static_cast<int>(batch.commands.size());
  Var total;
  for (int t = 0; t < n; ++t) {
    const Var pred = model.StepGraph(w, tape.Constant(batch.states[t]),
                                     tape.Constant(batch.commands[t]), pb_rows, hidden);
    const Var err = ad::MeanSquaredError(pred, tape.Constant(batch.states[t + 1]));
    total = total.valid() ? ad::Add(total, err) : err;
  }
  return ad::Scale(total, 1.0 / n);
}

TrainingReport Train(DpmpbModel& model, std::span<const Episode> episodes,
                     const TrainingConfig& config,
                     const std::function<void(int, double)>& on_epoch) {
  if (config.n_expand < 1 || config.batch < 1 || config.epochs < 1 || !(config.lr > 0)) {
    throw Error(ErrorKind::kConfig, "training config values must be positive");
  }
  if (episodes.size() < 2) throw Error(ErrorKind::kContract, "training needs >= 2 episodes");
  std::vector<std::vector<double>> all_s, all_u;
  int trials = 0;
  for (const Episode& e : episodes) {
    all_s.insert(all_s.end(), e.states.begin(), e.states.end());
    all_u.insert(all_u.end(), e.commands.begin(), e.commands.end());
    if (e.trial < 0) throw Error(ErrorKind::kContract, "trial ids must be >= 0");
    trials = std::max(trials, e.trial + 1);
  }
  model.state_norm() = Normalizer::Fit(all_s);
  model.command_norm() = Normalizer::Fit(all_u);
  model.biases() = Tensor({trials, kPbDim});

  TrainingReport report;
  std::vector<NormalizedEpisode> usable;
  const std::vector<NormalizedEpisode> normalized = NormalizeEpisodes(model, episodes);
  for (const NormalizedEpisode& e : normalized) {
    if (static_cast<int>(e.states.size()) <= config.n_expand) {
      std::cerr << "warning: episode of trial " << e.trial << " has " << e.states.size()
                << " steps, too short for a window of " << config.n_expand << "; skipped\n";
      report.skipped_trials.push_back(e.trial);
      continue;
    }
    usable.push_back(e);
  }
  std::vector<WindowRef> windows = EnumerateWindows(usable, config.n_expand);
  if (windows.empty()) throw Error(ErrorKind::kContract, "no training windows");
  report.windows = static_cast<int>(windows.size());

  std::mt19937_64 rng(config.seed);
  Adam adam_w(AdamOptions{.lr = config.lr});
  Adam adam_p(AdamOptions{.lr = config.lr});
  const int steps_per_epoch =
      std::max(1, static_cast<int>((windows.size() + config.batch - 1) / config.batch));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(windows.begin(), windows.end(), rng);
    double total = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const std::size_t begin = static_cast<std::size_t>(step) * config.batch;
      const std::size_t count = std::min<std::size_t>(config.batch, windows.size() - begin);
      const WindowBatch batch = GatherWindows(
          usable, std::span<const WindowRef>(windows).subspan(begin, count), config.n_expand);
      Tape tape;
      BoundParameters w(tape, model.weights(), true);
      const Var table = tape.Input(model.biases());
      Var loss;
      try {
        loss = WindowLoss(model, w, batch, ad::GatherRows(table, batch.trials));
      } catch (const Error& e) {
        throw Error(ErrorKind::kDiverged, "model training diverged at epoch " +
                                              std::to_string(epoch + 1) + ": " + e.what());
      }
      tape.Backward(loss);
      AdamStep(adam_w, model.weights(), w.Gradients());
      Tensor g = tape.Grad(table);
      Tensor* pp[] = {&model.biases()};
      const Tensor* gp[] = {&g};
      adam_p.Step(pp, gp);
      total += loss.value().item() * double(count);
    }
    report.epoch_mse.push_back(total / double(windows.size()));
    if (on_epoch) on_epoch(epoch + 1, report.epoch_mse.back());
  }
  return report;
}

std::vector<std::vector<double>> EstimatePbOnline(const DpmpbModel& model,
                                                  std::span<const double> p_init,
                                                  std::span<const Episode> episodes,
                                                  const EstimateOptions& options) {
  if (p_init.size() != kPbDim) throw Error(ErrorKind::kContract, "bias must have 2 entries");
  const std::vector<NormalizedEpisode> normalized = NormalizeEpisodes(model, episodes);
  const std::vector<WindowRef> windows = EnumerateWindows(normalized, options.n_expand);
  if (windows.empty()) {
    throw Error(ErrorKind::kContract, "estimation needs an episode longer than " +
                                          std::to_string(options.n_expand) + " steps");
  }
  const WindowBatch batch = GatherWindows(normalized, windows, options.n_expand);
  const int b = static_cast<int>(windows.size());
  Tensor p = Row(p_init);
  MomentumSgd sgd(MomentumSgdOptions{.lr = options.lr, .momentum = options.momentum});
  std::vector<std::vector<double>> trajectory = {ToVector(p)};
  const std::vector<int> rows(b, 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Tape tape;
    BoundParameters w(tape, model.weights(), false);
    const Var pv = tape.Input(p);
    tape.Backward(WindowLoss(model, w, batch, ad::GatherRows(pv, rows)));
    Tensor g = tape.Grad(pv);
    Tensor* pp[] = {&p};
    const Tensor* gp[] = {&g};
    sgd.Step(pp, gp);
    trajectory.push_back(ToVector(p));
  }
  return trajectory;
}

void SaveModel(const std::filesystem::path& path, const DpmpbModel& model) {
  SaveCheckpoint(path, model.ToParameters());
}

DpmpbModel LoadModel(const std::filesystem::path& path) {
  return DpmpbModel::FromParameters(LoadCheckpoint(path));
}

}  // namespace clothpb::dpmpb
