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

#ifndef CLOTHPB_PERCEPTION_H_
#define CLOTHPB_PERCEPTION_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clothpb/autodiff.h"
#include "clothpb/checkpoint.h"
#include "clothpb/image.h"
#include "clothpb/layers.h"
#include "clothpb/tensor.h"

namespace clothpb::perception {

inline constexpr int kLatentDim = 3;
using Latent = std::array<double, kLatentDim>;

struct AutoencoderConfig {
  std::vector<int> channels = {8, 16, 32, 64, 128};
  int hidden = 256;
};

// Five stride-2 convolutions, FC to `hidden` then to the latent; the decoder
// mirrors it with deconvolutions. Every layer except the decoder output is
// batch-normalised; the latent layer has no nonlinearity.
class Autoencoder {
 public:
  Autoencoder(const AutoencoderConfig& config, std::uint64_t seed);

  static Autoencoder FromParameters(const ParameterSet& params);
  // Weights, running statistics and architecture in one container.
  ParameterSet ToParameters() const;

  Latent Encode(const BinaryImage& image) const;
  // [N, 3] latents, inference mode.
  Tensor EncodeBatch(std::span<const BinaryImage> images) const;
  // Per-pixel foreground probability, [96, 128].
  Tensor Decode(const Latent& z) const;
  BinaryImage DecodeBinary(const Latent& z) const;

  // Graph pieces for training. `x` is [N,1,96,128]; returns [N,3] and
  // [N,1,96,128] logits respectively.
  Var EncodeGraph(const BoundParameters& p, Var x, BatchNormMode mode);
  Var DecodeGraph(const BoundParameters& p, Var z, BatchNormMode mode);

  ParameterSet& weights() { return weights_; }
  const ParameterSet& weights() const { return weights_; }
  const AutoencoderConfig& config() const { return config_; }

 private:
  Autoencoder() = default;
  Var Norm(const BoundParameters& p, Var x, const std::string& name, BatchNormMode mode);

  AutoencoderConfig config_;
  ParameterSet weights_;
  // Running statistics; inference-mode forward passes leave them untouched.
  mutable std::map<std::string, BatchNormStats> bn_;
};

// Image as a [1,1,96,128] tensor of 0/1 values.
Tensor ImageTensor(std::span<const BinaryImage> images);

struct TrainAeOptions {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainAeReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Per-pixel binary cross-entropy with Adam. Running statistics are frozen
// when this returns. `on_epoch` may be empty.
TrainAeReport TrainAutoencoder(Autoencoder& model, std::span<const BinaryImage> images,
                               const TrainAeOptions& options,
                               const std::function<void(int, double)>& on_epoch = {});

// Intersection over union of two silhouettes; 1 when both are empty.
double Iou(const BinaryImage& a, const BinaryImage& b);

void SaveAutoencoder(const std::filesystem::path& path, const Autoencoder& model);
Autoencoder LoadAutoencoder(const std::filesystem::path& path);

}  // namespace clothpb::perception

#endif  // CLOTHPB_PERCEPTION_H_
