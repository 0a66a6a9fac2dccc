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
#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "clothpb/autodiff.h"
#include "clothpb/checkpoint.h"
#include "clothpb/error.h"
#include "clothpb/gradcheck.h"
#include "clothpb/optim.h"
#include "support/gradient_cases.h"

namespace clothpb {
namespace {

using testing_support::OffKink;
using testing_support::PrimitiveCase;
using testing_support::Primitives;
using testing_support::RandomTensor;

// Direct evaluation of the 3x3 / stride 2 / pad 1 convolution definition.
Tensor NaiveConv(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0);
  const int ho = (h - 1) / 2 + 1, wo = (wd - 1) / 2 + 1;
  Tensor out(Shape{n, o, ho, wo});
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < o; ++k)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b[k];
          for (int ch = 0; ch < c; ++ch)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = 2 * oy - 1 + ky, ix = 2 * ox - 1 + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += w[((k * c + ch) * 3 + ky) * 3 + kx] *
                       x[((s * c + ch) * h + iy) * wd + ix];
              }
          out[((s * o + k) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

double Dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

TEST(TensorTest, MatMulByIdentityIsIdentity) {
  Tape tape;
  Var eye = tape.Constant(Tensor(Shape{2, 2}, {1, 0, 0, 1}));
  Var a = tape.Constant(Tensor(Shape{2, 2}, {3.5, -1, 2, 0.25}));
  EXPECT_EQ(ad::MatMul(eye, a).value(), a.value());
}

TEST(TensorTest, TextbookDerivatives) {
  Tape tape;
  Var x = tape.Input(Tensor::Vector({0.0}));
  Var y = ad::Sum(ad::Tanh(x));
  tape.Backward(y);
  EXPECT_DOUBLE_EQ(tape.Grad(x)[0], 1.0);

  Tape tape2;
  Var r = tape2.Input(Tensor::Vector({-1.0}));
  tape2.Backward(ad::Sum(ad::Relu(r)));
  EXPECT_DOUBLE_EQ(tape2.Grad(r)[0], 0.0);
}

TEST(TensorTest, SumSqGradient) {
  Tape tape;
  Var x = tape.Input(Tensor::Vector({1.0, 2.0}));
  tape.Backward(ad::SumSq(x));
  EXPECT_EQ(tape.Grad(x), Tensor::Vector({2.0, 4.0}));
}

TEST(TensorTest, L2NormGradientIsUnitVector) {
  Tape tape;
  Var x = tape.Input(Tensor::Vector({3.0, -4.0}));
  Var n = ad::L2Norm(x);
  EXPECT_DOUBLE_EQ(n.value().item(), 5.0);
  tape.Backward(n);
  EXPECT_DOUBLE_EQ(tape.Grad(x)[0], 0.6);
  EXPECT_DOUBLE_EQ(tape.Grad(x)[1], -0.8);
}

TEST(TensorTest, ConvOnFiveByFiveGivesThreeByThree) {
  // Input 1..25, all-ones kernel, zero bias. Each output sums the in-bounds
  // part of a 3x3 window centred at (2*oy, 2*ox).
  std::vector<double> values(25);
  for (int i = 0; i < 25; ++i) values[i] = i + 1;
  Tape tape;
  Var x = tape.Constant(Tensor(Shape{1, 1, 5, 5}, values));
  Var w = tape.Constant(Tensor(Shape{1, 1, 3, 3}, 1.0));
  Var b = tape.Constant(Tensor(Shape{1}, 0.0));
  const Tensor& y = ad::Conv2d(x, w, b).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_DOUBLE_EQ(y[0], 1 + 2 + 6 + 7);
  EXPECT_DOUBLE_EQ(y[4], 7 + 8 + 9 + 12 + 13 + 14 + 17 + 18 + 19);
  EXPECT_DOUBLE_EQ(y[8], 19 + 20 + 24 + 25);
  EXPECT_DOUBLE_EQ(y[1], 2 + 3 + 4 + 7 + 8 + 9);
}

TEST(TensorTest, ConvMatchesDirectDefinition) {
  std::mt19937_64 rng(7);
  Tensor x = RandomTensor({2, 3, 8, 6}, rng);
  Tensor w = RandomTensor({4, 3, 3, 3}, rng);
  Tensor b = RandomTensor({4}, rng);
  Tape tape;
  const Tensor& y =
      ad::Conv2d(tape.Constant(x), tape.Constant(w), tape.Constant(b)).value();
  const Tensor expected = NaiveConv(x, w, b);
  ASSERT_EQ(y.shape(), expected.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
}

TEST(TensorTest, DeconvIsAdjointOfConv) {
  std::mt19937_64 rng(11);
  Tensor x = RandomTensor({2, 3, 8, 6}, rng);
  Tensor y = RandomTensor({2, 4, 4, 3}, rng);
  Tensor w = RandomTensor({4, 3, 3, 3}, rng);
  Tape tape;
  Var wv = tape.Constant(w);
  const Tensor& cx = ad::Conv2d(tape.Constant(x), wv, tape.Constant(Tensor({4}))).value();
  const Tensor& dy = ad::Deconv2d(tape.Constant(y), wv, tape.Constant(Tensor({3}))).value();
  ASSERT_EQ(dy.shape(), x.shape());
  EXPECT_NEAR(Dot(cx, y), Dot(x, dy), 1e-10);
}

TEST(TensorTest, SpatialSizesHalveThroughFiveLayers) {
  Shape s{1, 1, 96, 128};
  Tape tape;
  Var x = tape.Constant(Tensor(s));
  for (int i = 0; i < 5; ++i) {
    x = ad::Conv2d(x, tape.Constant(Tensor({1, 1, 3, 3})), tape.Constant(Tensor({1})));
  }
  EXPECT_EQ(x.shape(), (Shape{1, 1, 3, 4}));
}

TEST(TensorTest, EveryPrimitiveMatchesCentralDifferences) {
  for (const PrimitiveCase& c : Primitives()) {
    std::mt19937_64 rng(1234);
    std::vector<Tensor> inputs;
    for (const Shape& s : c.shapes) {
      inputs.push_back(c.off_kink ? OffKink(s, rng) : RandomTensor(s, rng));
    }
    GradientCheckOptions options;
    options.probes = 10;
    options.seed = 5;
    const GradientCheckResult r = GradientCheck(c.loss, inputs, options);
    EXPECT_LT(r.max_relative_error, 1e-6) << c.name;
    EXPECT_EQ(r.probed, 10);
  }
}

TEST(TensorTest, ComposedGraphMatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> inputs = {RandomTensor({4, 3}, rng), RandomTensor({3, 5}, rng),
                                  RandomTensor({5}, rng)};
    auto loss = [](Tape&, std::span<const Var> v) {
      Var h = ad::Tanh(ad::Add(ad::MatMul(v[0], v[1]), v[2]));
      Var g = ad::Sigmoid(ad::Scale(h, 1.7));
      return ad::Add(ad::L2Norm(ad::Mul(h, g)), ad::SumSq(ad::Slice(g, 1, 3)));
    };
    GradientCheckOptions options;
    options.seed = trial;
    EXPECT_LT(GradientCheck(loss, inputs, options).max_relative_error, 1e-6);
  }
}

TEST(TensorTest, UntouchedInputsReceiveZeroGradient) {
  Tape tape;
  Var used = tape.Input(Tensor::Vector({1.0, 2.0}));
  Var unused = tape.Input(Tensor::Vector({5.0, 6.0, 7.0}));
  tape.Backward(ad::SumSq(used));
  EXPECT_EQ(tape.Grad(unused), Tensor(Shape{3}, 0.0));
}

TEST(TensorTest, NonScalarLossIsContractError) {
  Tape tape;
  Var x = tape.Input(Tensor::Vector({1.0, 2.0}));
  try {
    tape.Backward(ad::Tanh(x));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(TensorTest, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.Constant(Tensor({2, 3}));
  Var b = tape.Constant(Tensor({4, 2}));
  try {
    ad::MatMul(a, b);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4,2]"), std::string::npos);
  }
}

TEST(TensorTest, NonFiniteOutputIsOverflowError) {
  Tape tape;
  Var a = tape.Constant(Tensor::Vector({1e308}));
  try {
    ad::Scale(a, 10.0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOverflow);
  }
}

TEST(TensorTest, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(42);
    Tape tape;
    Var x = tape.Input(RandomTensor({3, 4}, rng));
    Var w = tape.Input(RandomTensor({4, 4}, rng));
    Var y = ad::SumSq(ad::Tanh(ad::MatMul(x, w)));
    tape.Backward(y);
    return std::make_pair(y.value(), tape.Grad(w));
  };
  EXPECT_EQ(run(), run());
}

TEST(TensorTest, BatchNormModesAgreeOnMatchingStatistics) {
  std::mt19937_64 rng(8);
  Tensor x = RandomTensor({6, 2, 3, 3}, rng);
  Tensor gamma = RandomTensor({2}, rng);
  Tensor beta = RandomTensor({2}, rng);
  BatchNormStats stats = BatchNormStats::ForFeatures(2);
  stats.momentum = 1.0;  // running stats become exactly the batch stats
  Tape tape;
  Var xv = tape.Constant(x), gv = tape.Constant(gamma), bv = tape.Constant(beta);
  const Tensor train = ad::BatchNorm(xv, gv, bv, stats, BatchNormMode::kTrain).value();
  const Tensor infer = ad::BatchNorm(xv, gv, bv, stats, BatchNormMode::kInference).value();
  for (std::size_t i = 0; i < train.size(); ++i) EXPECT_NEAR(train[i], infer[i], 1e-12);
}

TEST(OptimizerTest, AdamFirstStepMovesByLearningRate) {
  Tensor p = Tensor::Vector({1.0, -2.0, 0.5});
  const Tensor g = Tensor::Vector({0.3, -7.0, 1e-3});
  Adam adam({.lr = 0.01});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  adam.Step(params, grads);
  // m_hat = g and v_hat = g^2, so the step is lr * |g| / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 7.0 / (7.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-15);
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(OptimizerTest, AdamZeroGradientLeavesParameters) {
  Tensor p = Tensor::Vector({1.0, 2.0});
  const Tensor g(Shape{2}, 0.0);
  Adam adam;
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  for (int i = 0; i < 5; ++i) adam.Step(params, grads);
  EXPECT_EQ(p, Tensor::Vector({1.0, 2.0}));
}

TEST(OptimizerTest, AdamEqualGradientsGiveEqualUpdates) {
  Tensor a = Tensor::Vector({0.0}), b = Tensor::Vector({0.0});
  const Tensor g = Tensor::Vector({0.4});
  Adam adam;
  Tensor* params[] = {&a, &b};
  const Tensor* grads[] = {&g, &g};
  for (int i = 0; i < 3; ++i) adam.Step(params, grads);
  EXPECT_EQ(a, b);
}

TEST(OptimizerTest, MomentumZeroGradientIsFixedPoint) {
  Tensor p = Tensor::Vector({3.0});
  const Tensor g = Tensor::Vector({0.0});
  MomentumSgd sgd({.lr = 0.1, .momentum = 0.9});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  for (int i = 0; i < 4; ++i) sgd.Step(params, grads);
  EXPECT_EQ(p[0], 3.0);
}

TEST(OptimizerTest, MomentumConstantGradientFollowsGeometricSeries) {
  Tensor p = Tensor::Vector({0.0});
  const Tensor g = Tensor::Vector({2.0});
  const double lr = 0.05, mu = 0.9;
  MomentumSgd sgd({.lr = lr, .momentum = mu});
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  double expected_position = 0.0;
  for (int n = 1; n <= 20; ++n) {
    sgd.Step(params, grads);
    const double velocity = -lr * 2.0 * (1.0 - std::pow(mu, n)) / (1.0 - mu);
    expected_position += velocity;
    EXPECT_NEAR(sgd.velocities()[0][0], velocity, 1e-12);
    EXPECT_NEAR(p[0], expected_position, 1e-12);
  }
}

TEST(OptimizerTest, MomentumEqualGradientsGiveEqualUpdates) {
  Tensor a = Tensor::Vector({1.0}), b = Tensor::Vector({1.0});
  const Tensor g = Tensor::Vector({-0.7});
  MomentumSgd sgd;
  Tensor* params[] = {&a, &b};
  const Tensor* grads[] = {&g, &g};
  for (int i = 0; i < 3; ++i) sgd.Step(params, grads);
  EXPECT_EQ(a, b);
}

TEST(CheckpointTest, RoundTripsAndFingerprints) {
  ParameterSet params;
  params.Set("layer.w", Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, -6.25}));
  params.Set("bias", Tensor::Vector({0.1}));
  params.Set("scalar", Tensor::Scalar(std::nextafter(1.0, 2.0)));
  const auto path = std::filesystem::temp_directory_path() / "clothpb_ckpt_test.bin";
  SaveCheckpoint(path, params);
  const ParameterSet loaded = LoadCheckpoint(path);
  EXPECT_EQ(SerializeParameters(loaded), SerializeParameters(params));
  EXPECT_EQ(Fingerprint(loaded), Fingerprint(params));
  params.Get("bias")[0] += 1e-16;
  EXPECT_NE(Fingerprint(loaded), Fingerprint(params));
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsForeignBytes) {
  EXPECT_THROW(DeserializeParameters("not a checkpoint at all"), Error);
  std::string bytes = SerializeParameters(ParameterSet{});
  bytes.push_back('x');
  EXPECT_THROW(DeserializeParameters(bytes), Error);
}

}  // namespace
}  // namespace clothpb
