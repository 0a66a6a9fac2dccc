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

#include "clothpb/perception.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "clothpb/error.h"
#include "clothpb/layers.h"
#include "clothpb/optim.h"

namespace clothpb::perception {
namespace {

constexpr int kEncodeChunk = 64;
constexpr double kOutputBiasInit = -4.0;

int BottomHeight(const AutoencoderConfig& c) { return kImageHeight >> c.channels.size(); }
int BottomWidth(const AutoencoderConfig& c) { return kImageWidth >> c.channels.size(); }
int BottomSize(const AutoencoderConfig& c) {
  return c.channels.back() * BottomHeight(c) * BottomWidth(c);
}

std::string Layer(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

void AddNorm(ParameterSet& w, std::map<std::string, BatchNormStats>& bn,
             const std::string& name, int features) {
  w.Set(name + ".gamma", Tensor({features}, 1.0));
  w.Set(name + ".beta", Tensor({features}));
  bn.emplace(name, BatchNormStats::ForFeatures(features));
}

void CheckImage(const BinaryImage& image) {
  if (image.width != kImageWidth || image.height != kImageHeight ||
      image.pixels.size() != static_cast<std::size_t>(kImageWidth) * kImageHeight) {
    throw Error(ErrorKind::kContract,
                "autoencoder expects a " + std::to_string(kImageWidth) + "x" +
                    std::to_string(kImageHeight) + " image, got " +
                    std::to_string(image.width) + "x" + std::to_string(image.height));
  }
}

}  // namespace

Autoencoder::Autoencoder(const AutoencoderConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config.channels.empty() || (kImageHeight >> config.channels.size()) == 0) {
    throw Error(ErrorKind::kConfig, "bad autoencoder channel list");
  }
  std::mt19937_64 rng(seed);
  const auto& ch = config.channels;
  const int n = static_cast<int>(ch.size());
  for (int i = 0; i < n; ++i) {
    const int in = i == 0 ? 1 : ch[i - 1];
    const std::string name = Layer("enc.conv", i);
    weights_.Set(name + ".w", UniformInit({ch[i], in, 3, 3}, std::sqrt(6.0 / (in * 9)), rng));
    weights_.Set(name + ".b", Tensor({ch[i]}));
    AddNorm(weights_, bn_, name + ".bn", ch[i]);
  }
  InitLinear(weights_, "enc.fc0", BottomSize(config), config.hidden, rng);
  AddNorm(weights_, bn_, "enc.fc0.bn", config.hidden);
  InitLinear(weights_, "enc.fc1", config.hidden, kLatentDim, rng);
  AddNorm(weights_, bn_, "enc.fc1.bn", kLatentDim);

  InitLinear(weights_, "dec.fc0", kLatentDim, config.hidden, rng);
  AddNorm(weights_, bn_, "dec.fc0.bn", config.hidden);
  InitLinear(weights_, "dec.fc1", config.hidden, BottomSize(config), rng);
  AddNorm(weights_, bn_, "dec.fc1.bn", BottomSize(config));
  for (int i = n - 1; i >= 0; --i) {
    const int out = i == 0 ? 1 : ch[i - 1];
    const std::string name = Layer("dec.deconv", i);
    weights_.Set(name + ".w", UniformInit({ch[i], out, 3, 3}, std::sqrt(6.0 / (ch[i] * 9)), rng));
    // Output bias starts near the sparse foreground prior.
    weights_.Set(name + ".b", Tensor({out}, i == 0 ? kOutputBiasInit : 0.0));
    if (i > 0) AddNorm(weights_, bn_, name + ".bn", out);
  }
}

Autoencoder Autoencoder::FromParameters(const ParameterSet& params) {
  Autoencoder model;
  const Tensor& arch = params.Get("arch.channels");
  model.config_.channels.clear();
  for (double c : arch.values()) model.config_.channels.push_back(static_cast<int>(c));
  model.config_.hidden = static_cast<int>(params.Get("arch.hidden").item());
  model.weights_ = params.Extract("w.");
  const ParameterSet stats = params.Extract("bn.");
  for (const auto& [name, value] : model.weights_) {
    const std::string suffix = ".gamma";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      const std::string layer = name.substr(0, name.size() - suffix.size());
      BatchNormStats s = BatchNormStats::ForFeatures(value.size());
      s.running_mean = stats.Get(layer + ".mean");
      s.running_var = stats.Get(layer + ".var");
      model.bn_.emplace(layer, std::move(s));
    }
  }
  // Fails early on a truncated container.
  Autoencoder reference(model.config_, 0);
  for (const auto& [name, value] : reference.weights_) {
    if (!model.weights_.Contains(name) || model.weights_.Get(name).shape() != value.shape()) {
      throw Error(ErrorKind::kSchema, "autoencoder checkpoint block '" + name +
                                          "' missing or misshapen");
    }
  }
  return model;
}

ParameterSet Autoencoder::ToParameters() const {
  ParameterSet out;
  std::vector<double> ch(config_.channels.begin(), config_.channels.end());
  out.Set("arch.channels", Tensor({static_cast<int>(ch.size())}, ch));
  out.Set("arch.hidden", Tensor::Scalar(config_.hidden));
  out.Merge(weights_, "w.");
  for (const auto& [name, s] : bn_) {
    out.Set("bn." + name + ".mean", s.running_mean);
    out.Set("bn." + name + ".var", s.running_var);
  }
  return out;
}

Var Autoencoder::Norm(const BoundParameters& p, Var x, const std::string& name,
                      BatchNormMode mode) {
  return ad::BatchNorm(x, p[name + ".gamma"], p[name + ".beta"], bn_.at(name), mode);
}

Var Autoencoder::EncodeGraph(const BoundParameters& p, Var x, BatchNormMode mode) {
  const int n = static_cast<int>(config_.channels.size());
  for (int i = 0; i < n; ++i) {
    const std::string name = Layer("enc.conv", i);
    x = ad::Relu(Norm(p, ad::Conv2d(x, p[name + ".w"], p[name + ".b"]), name + ".bn", mode));
  }
  x = ad::Reshape(x, {x.shape()[0], BottomSize(config_)});
  x = ad::Relu(Norm(p, Linear(p, x, "enc.fc0"), "enc.fc0.bn", mode));
  return Norm(p, Linear(p, x, "enc.fc1"), "enc.fc1.bn", mode);
}

Var Autoencoder::DecodeGraph(const BoundParameters& p, Var z, BatchNormMode mode) {
  const int n = static_cast<int>(config_.channels.size());
  Var x = ad::Relu(Norm(p, Linear(p, z, "dec.fc0"), "dec.fc0.bn", mode));
  x = ad::Relu(Norm(p, Linear(p, x, "dec.fc1"), "dec.fc1.bn", mode));
  x = ad::Reshape(x, {x.shape()[0], config_.channels.back(), BottomHeight(config_),
                      BottomWidth(config_)});
  for (int i = n - 1; i >= 0; --i) {
    const std::string name = Layer("dec.deconv", i);
    x = ad::Deconv2d(x, p[name + ".w"], p[name + ".b"]);
    if (i > 0) x = ad::Relu(Norm(p, x, name + ".bn", mode));
  }
  return x;
}

Tensor ImageTensor(std::span<const BinaryImage> images) {
  const int n = static_cast<int>(images.size());
  Tensor t({n, 1, kImageHeight, kImageWidth});
  double* dst = t.data();
  for (const BinaryImage& img : images) {
    CheckImage(img);
    for (std::uint8_t px : img.pixels) *dst++ = px ? 1.0 : 0.0;
  }
  return t;
}

Tensor Autoencoder::EncodeBatch(std::span<const BinaryImage> images) const {
  const int n = static_cast<int>(images.size());
  Tensor out({n, kLatentDim});
  auto* self = const_cast<Autoencoder*>(this);
  for (int start = 0; start < n; start += kEncodeChunk) {
    const int count = std::min(kEncodeChunk, n - start);
    Tape tape;
    BoundParameters p(tape, weights_, false);
    const Var z = self->EncodeGraph(p, tape.Constant(ImageTensor(images.subspan(start, count))),
                                    BatchNormMode::kInference);
    std::copy(z.value().data(), z.value().data() + count * kLatentDim,
              out.data() + static_cast<std::size_t>(start) * kLatentDim);
  }
  return out;
}

Latent Autoencoder::Encode(const BinaryImage& image) const {
  const Tensor z = EncodeBatch(std::span<const BinaryImage>(&image, 1));
  return {z.data()[0], z.data()[1], z.data()[2]};
}

Tensor Autoencoder::Decode(const Latent& z) const {
  Tape tape;
  BoundParameters p(tape, weights_, false);
  auto* self = const_cast<Autoencoder*>(this);
  const Var logits = self->DecodeGraph(
      p, tape.Constant(Tensor({1, kLatentDim}, std::vector<double>(z.begin(), z.end()))),
      BatchNormMode::kInference);
  Tensor prob = ad::Sigmoid(logits).value();
  return prob.Reshaped({kImageHeight, kImageWidth});
}

BinaryImage Autoencoder::DecodeBinary(const Latent& z) const {
  const Tensor prob = Decode(z);
  BinaryImage img;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = prob.data()[i] > 0.5;
  return img;
}

TrainAeReport TrainAutoencoder(Autoencoder& model, std::span<const BinaryImage> images,
                               const TrainAeOptions& options,
                               const std::function<void(int, double)>& on_epoch) {
  if (images.size() < 2) throw Error(ErrorKind::kContract, "need at least 2 training images");
  if (options.batch_size < 2) throw Error(ErrorKind::kConfig, "batch_size must be >= 2");
  std::mt19937_64 rng(options.seed);
  Adam adam(AdamOptions{.lr = options.lr});
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  TrainAeReport report;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t count = std::min<std::size_t>(options.batch_size, order.size() - start);
      // A batch of one has no batch statistics to normalise with.
      if (count < 2) continue;
      std::vector<BinaryImage> batch;
      for (std::size_t i = 0; i < count; ++i) batch.push_back(images[order[start + i]]);
      Tape tape;
      BoundParameters p(tape, model.weights(), true);
      const Var x = tape.Constant(ImageTensor(batch));
      const Var z = model.EncodeGraph(p, x, BatchNormMode::kTrain);
      const Var logits = model.DecodeGraph(p, z, BatchNormMode::kTrain);
      Var loss;
      try {
        loss = ad::SigmoidCrossEntropy(logits, x);
      } catch (const Error&) {
        throw Error(ErrorKind::kDiverged, "autoencoder loss diverged at epoch " +
                                              std::to_string(epoch + 1));
      }
      if (!std::isfinite(loss.value().item())) {
        throw Error(ErrorKind::kDiverged, "autoencoder loss diverged at epoch " +
                                              std::to_string(epoch + 1));
      }
      tape.Backward(loss);
      AdamStep(adam, model.weights(), p.Gradients());
      total += loss.value().item() * count;
      seen += count;
    }
    report.epoch_loss.push_back(total / std::max<std::size_t>(seen, 1));
    if (on_epoch) on_epoch(epoch + 1, report.epoch_loss.back());
  }
  return report;
}

double Iou(const BinaryImage& a, const BinaryImage& b) {
  if (a.pixels.size() != b.pixels.size()) throw Error(ErrorKind::kShape, "iou size mismatch");
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    inter += a.pixels[i] && b.pixels[i];
    uni += a.pixels[i] || b.pixels[i];
  }
  return uni == 0 ? 1.0 : double(inter) / uni;
}

void SaveAutoencoder(const std::filesystem::path& path, const Autoencoder& model) {
  SaveCheckpoint(path, model.ToParameters());
}

Autoencoder LoadAutoencoder(const std::filesystem::path& path) {
  return Autoencoder::FromParameters(LoadCheckpoint(path));
}

}  // namespace clothpb::perception
