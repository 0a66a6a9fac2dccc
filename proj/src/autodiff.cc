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

#include "clothpb/autodiff.h"

#include <cmath>
#include <string>

#include "clothpb/error.h"

namespace clothpb {

const Tensor& Var::value() const { return tape_->Value(*this); }

Var Tape::Constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Input(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  bool tracked = false;
  for (const Var& in : inputs) {
    CheckOwned(in);
    tracked = tracked || nodes_[in.id()].tracked;
  }
  nodes_.push_back(Node{std::move(value), Tensor(),
                        tracked ? std::move(backward) : nullptr, tracked});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Tape::Value(Var v) const {
  CheckOwned(v);
  return nodes_[v.id()].value;
}

bool Tape::Tracked(Var v) const {
  CheckOwned(v);
  return nodes_[v.id()].tracked;
}

Tensor* Tape::GradSlot(Var v) {
  Node& node = nodes_[v.id()];
  if (!node.tracked) return nullptr;
  if (node.grad.empty() && !node.value.empty()) {
    node.grad = Tensor::ZerosLike(node.value);
  }
  return &node.grad;
}

void Tape::Backward(Var loss) {
  CheckOwned(loss);
  if (Value(loss).size() != 1) {
    throw Error(ErrorKind::kContract,
                "backward requires a scalar loss, got shape " +
                    ShapeString(Value(loss).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  Tensor* seed = GradSlot(loss);
  if (seed == nullptr) return;
  seed->Fill(1.0);
  for (int i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    // Rules only touch gradients of earlier nodes, so `node` stays put.
    node.backward(*this, node.grad);
  }
}

Tensor Tape::Grad(Var v) const {
  CheckOwned(v);
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor::ZerosLike(node.value);
  return node.grad;
}

void Tape::CheckOwned(Var v) const {
  if (v.tape() != this || v.id() < 0 ||
      v.id() >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorKind::kContract, "variable does not belong to this tape");
  }
}

BatchNormStats BatchNormStats::ForFeatures(int features) {
  BatchNormStats stats;
  stats.running_mean = Tensor(Shape{features}, 0.0);
  stats.running_var = Tensor(Shape{features}, 1.0);
  return stats;
}

namespace ad {
namespace {

Tape& TapeOf(Var v) {
  if (!v.valid()) throw Error(ErrorKind::kContract, "invalid variable");
  return *v.tape();
}

Tensor Checked(Tensor t, const char* op) {
  if (!t.AllFinite()) {
    throw Error(ErrorKind::kOverflow,
                std::string(op) + " produced a non-finite value");
  }
  return t;
}

void RequireRank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw Error(ErrorKind::kShape, std::string(op) + ": expected rank " +
                                       std::to_string(rank) + ", got " +
                                       ShapeString(t.shape()));
  }
}

template <typename F, typename G>
Var Unary(Var a, const char* op, F forward, G derivative_from_output) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  Var vars[] = {a};
  return TapeOf(a).Record(
      Checked(std::move(y), op), vars,
      [a, derivative_from_output](Tape& tape, const Tensor& g) {
        Tensor* ga = tape.GradSlot(a);
        if (!ga) return;
        const Tensor& x = tape.Value(a);
        for (std::size_t i = 0; i < x.size(); ++i) {
          (*ga)[i] += g[i] * derivative_from_output(x[i]);
        }
      });
}

// Column matrix for a 3x3 stride-2 pad-1 window: rows c*9+ky*3+kx, columns
// oy*wo+ox.
void Im2Col(const double* image, int channels, int h, int w, int ho, int wo,
            double* cols) {
  const int plane = ho * wo;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * 9 + ky * 3 + kx)) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * 2 - 1 + ky;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * 2 - 1 + kx;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? image[(static_cast<std::size_t>(c) * h + iy) * w + ix]
                                    : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: scatter-adds columns back into the image.
void Col2Im(const double* cols, int channels, int h, int w, int ho, int wo,
            double* image) {
  const int plane = ho * wo;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row =
            cols + static_cast<std::size_t>((c * 9 + ky * 3 + kx)) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * 2 - 1 + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * 2 - 1 + kx;
            if (ix < 0 || ix >= w) continue;
            image[(static_cast<std::size_t>(c) * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

int ConvOut(int n) { return (n - 1) / 2 + 1; }

}  // namespace

Var MatMul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  RequireRank(x, 2, "matmul");
  RequireRank(y, 2, "matmul");
  if (x.dim(1) != y.dim(0)) {
    throw Error(ErrorKind::kShape, "matmul: shapes " + ShapeString(x.shape()) +
                                       " and " + ShapeString(y.shape()) +
                                       " are incompatible");
  }
  Tensor out(Shape{x.dim(0), y.dim(1)});
  out.AsMatrix().noalias() = x.AsMatrix() * y.AsMatrix();
  Var vars[] = {a, b};
  return TapeOf(a).Record(Checked(std::move(out), "matmul"), vars,
                          [a, b](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) {
                              ga->AsMatrix().noalias() +=
                                  g.AsMatrix() * tape.Value(b).AsMatrix().transpose();
                            }
                            if (Tensor* gb = tape.GradSlot(b)) {
                              gb->AsMatrix().noalias() +=
                                  tape.Value(a).AsMatrix().transpose() * g.AsMatrix();
                            }
                          });
}

Var Add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Var vars[] = {a, b};
  if (x.shape() == y.shape()) {
    Tensor out = x;
    out += y;
    return TapeOf(a).Record(Checked(std::move(out), "add"), vars,
                            [a, b](Tape& tape, const Tensor& g) {
                              if (Tensor* ga = tape.GradSlot(a)) *ga += g;
                              if (Tensor* gb = tape.GradSlot(b)) *gb += g;
                            });
  }
  // Bias broadcast: `inner` consecutive elements share one bias entry and the
  // bias index cycles with period `features`.
  int features = 0;
  int inner = 1;
  if (y.rank() == 1 && x.rank() == 2 && x.dim(1) == y.dim(0)) {
    features = y.dim(0);
  } else if (y.rank() == 1 && x.rank() == 4 && x.dim(1) == y.dim(0)) {
    features = y.dim(0);
    inner = x.dim(2) * x.dim(3);
  } else {
    throw Error(ErrorKind::kShape, "add: shapes " + ShapeString(x.shape()) +
                                       " and " + ShapeString(y.shape()) +
                                       " are incompatible");
  }
  Tensor out = x;
  const std::size_t block = static_cast<std::size_t>(features) * inner;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += y[(i % block) / inner];
  }
  return TapeOf(a).Record(
      Checked(std::move(out), "add"), vars,
      [a, b, block, inner](Tape& tape, const Tensor& g) {
        if (Tensor* ga = tape.GradSlot(a)) *ga += g;
        if (Tensor* gb = tape.GradSlot(b)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*gb)[(i % block) / inner] += g[i];
          }
        }
      });
}

Var Sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  RequireSameShape(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  Var vars[] = {a, b};
  return TapeOf(a).Record(Checked(std::move(out), "sub"), vars,
                          [a, b](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) *ga += g;
                            if (Tensor* gb = tape.GradSlot(b)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                            }
                          });
}

Var Mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  RequireSameShape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  Var vars[] = {a, b};
  return TapeOf(a).Record(Checked(std::move(out), "mul"), vars,
                          [a, b](Tape& tape, const Tensor& g) {
                            const Tensor& x = tape.Value(a);
                            const Tensor& y = tape.Value(b);
                            if (Tensor* ga = tape.GradSlot(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
                            }
                            if (Tensor* gb = tape.GradSlot(b)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
                            }
                          });
}

Var Scale(Var a, double s) {
  Tensor out = a.value();
  out *= s;
  Var vars[] = {a};
  return TapeOf(a).Record(Checked(std::move(out), "scale"), vars,
                          [a, s](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
                            }
                          });
}

Var Tanh(Var a) {
  return Unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Var Relu(Var a) {
  return Unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Sigmoid(Var a) {
  auto sigmoid = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return Unary(a, "sigmoid", sigmoid, [sigmoid](double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
  });
}

Var Conv2d(Var x, Var w, Var b) {
  const Tensor& in = x.value();
  const Tensor& kernel = w.value();
  const Tensor& bias = b.value();
  RequireRank(in, 4, "conv2d");
  RequireRank(kernel, 4, "conv2d");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int o = kernel.dim(0);
  if (kernel.dim(1) != c || kernel.dim(2) != 3 || kernel.dim(3) != 3 ||
      bias.rank() != 1 || bias.dim(0) != o) {
    throw Error(ErrorKind::kShape, "conv2d: input " + ShapeString(in.shape()) +
                                       " and kernel " + ShapeString(kernel.shape()) +
                                       " are incompatible");
  }
  const int ho = ConvOut(h), wo = ConvOut(wd);
  const int plane = ho * wo;
  Tensor out(Shape{n, o, ho, wo});
  Matrix cols(c * 9, plane);
  ConstMatrixMap wm(kernel.data(), o, c * 9);
  for (int s = 0; s < n; ++s) {
    Im2Col(in.data() + static_cast<std::size_t>(s) * c * h * wd, c, h, wd, ho, wo,
           cols.data());
    MatrixMap dst(out.data() + static_cast<std::size_t>(s) * o * plane, o, plane);
    dst.noalias() = wm * cols;
    for (int k = 0; k < o; ++k) dst.row(k).array() += bias[k];
  }
  Var vars[] = {x, w, b};
  return TapeOf(x).Record(
      Checked(std::move(out), "conv2d"), vars,
      [x, w, b, n, c, h, wd, o, ho, wo](Tape& tape, const Tensor& g) {
        const int plane = ho * wo;
        const Tensor& in = tape.Value(x);
        const Tensor& kernel = tape.Value(w);
        Tensor* gx = tape.GradSlot(x);
        Tensor* gw = tape.GradSlot(w);
        Tensor* gb = tape.GradSlot(b);
        ConstMatrixMap wm(kernel.data(), o, c * 9);
        Matrix cols(c * 9, plane);
        Matrix dcols(c * 9, plane);
        for (int s = 0; s < n; ++s) {
          ConstMatrixMap gs(g.data() + static_cast<std::size_t>(s) * o * plane, o, plane);
          if (gw) {
            Im2Col(in.data() + static_cast<std::size_t>(s) * c * h * wd, c, h, wd, ho,
                   wo, cols.data());
            MatrixMap(gw->data(), o, c * 9).noalias() += gs * cols.transpose();
          }
          if (gb) {
            for (int k = 0; k < o; ++k) (*gb)[k] += gs.row(k).sum();
          }
          if (gx) {
            dcols.noalias() = wm.transpose() * gs;
            Col2Im(dcols.data(), c, h, wd, ho, wo,
                   gx->data() + static_cast<std::size_t>(s) * c * h * wd);
          }
        }
      });
}

Var Deconv2d(Var x, Var w, Var b) {
  const Tensor& in = x.value();
  const Tensor& kernel = w.value();
  const Tensor& bias = b.value();
  RequireRank(in, 4, "deconv2d");
  RequireRank(kernel, 4, "deconv2d");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int o = kernel.dim(1);
  if (kernel.dim(0) != c || kernel.dim(2) != 3 || kernel.dim(3) != 3 ||
      bias.rank() != 1 || bias.dim(0) != o) {
    throw Error(ErrorKind::kShape, "deconv2d: input " + ShapeString(in.shape()) +
                                       " and kernel " + ShapeString(kernel.shape()) +
                                       " are incompatible");
  }
  const int oh = 2 * h, ow = 2 * wd;
  const int plane = h * wd;
  Tensor out(Shape{n, o, oh, ow});
  ConstMatrixMap wm(kernel.data(), c, o * 9);
  Matrix cols(o * 9, plane);
  for (int s = 0; s < n; ++s) {
    ConstMatrixMap xs(in.data() + static_cast<std::size_t>(s) * c * plane, c, plane);
    cols.noalias() = wm.transpose() * xs;
    double* dst = out.data() + static_cast<std::size_t>(s) * o * oh * ow;
    Col2Im(cols.data(), o, oh, ow, h, wd, dst);
    for (int k = 0; k < o; ++k) {
      for (int i = 0; i < oh * ow; ++i) dst[static_cast<std::size_t>(k) * oh * ow + i] += bias[k];
    }
  }
  Var vars[] = {x, w, b};
  return TapeOf(x).Record(
      Checked(std::move(out), "deconv2d"), vars,
      [x, w, b, n, c, h, wd, o](Tape& tape, const Tensor& g) {
        const int oh = 2 * h, ow = 2 * wd;
        const int plane = h * wd;
        const Tensor& in = tape.Value(x);
        const Tensor& kernel = tape.Value(w);
        Tensor* gx = tape.GradSlot(x);
        Tensor* gw = tape.GradSlot(w);
        Tensor* gb = tape.GradSlot(b);
        ConstMatrixMap wm(kernel.data(), c, o * 9);
        Matrix dcols(o * 9, plane);
        for (int s = 0; s < n; ++s) {
          const double* gs = g.data() + static_cast<std::size_t>(s) * o * oh * ow;
          Im2Col(gs, o, oh, ow, h, wd, dcols.data());
          if (gx) {
            MatrixMap(gx->data() + static_cast<std::size_t>(s) * c * plane, c, plane)
                .noalias() += wm * dcols;
          }
          if (gw) {
            ConstMatrixMap xs(in.data() + static_cast<std::size_t>(s) * c * plane, c, plane);
            MatrixMap(gw->data(), c, o * 9).noalias() += xs * dcols.transpose();
          }
          if (gb) {
            for (int k = 0; k < o; ++k) {
              double acc = 0.0;
              for (int i = 0; i < oh * ow; ++i) acc += gs[static_cast<std::size_t>(k) * oh * ow + i];
              (*gb)[k] += acc;
            }
          }
        }
      });
}

Var BatchNorm(Var x, Var gamma, Var beta, BatchNormStats& stats,
              BatchNormMode mode) {
  const Tensor& in = x.value();
  if (in.rank() != 2 && in.rank() != 4) {
    throw Error(ErrorKind::kShape,
                "batchnorm: expected [N,F] or [N,C,H,W], got " + ShapeString(in.shape()));
  }
  const int n = in.dim(0);
  const int f = in.dim(1);
  const int inner = in.rank() == 4 ? in.dim(2) * in.dim(3) : 1;
  const Tensor& g = gamma.value();
  const Tensor& bt = beta.value();
  if (g.rank() != 1 || g.dim(0) != f || bt.shape() != g.shape() ||
      stats.running_mean.size() != static_cast<std::size_t>(f) ||
      stats.running_var.size() != static_cast<std::size_t>(f)) {
    throw Error(ErrorKind::kShape, "batchnorm: input " + ShapeString(in.shape()) +
                                       " and scale " + ShapeString(g.shape()) +
                                       " are incompatible");
  }
  auto index = [f, inner](int s, int k, int i) {
    return (static_cast<std::size_t>(s) * f + k) * inner + i;
  };
  const double count = static_cast<double>(n) * inner;
  Tensor mean(Shape{f});
  Tensor var(Shape{f});
  if (mode == BatchNormMode::kTrain) {
    for (int k = 0; k < f; ++k) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < inner; ++i) acc += in[index(s, k, i)];
      mean[k] = acc / count;
      double sq = 0.0;
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < inner; ++i) {
          const double d = in[index(s, k, i)] - mean[k];
          sq += d * d;
        }
      var[k] = sq / count;
      stats.running_mean[k] =
          (1.0 - stats.momentum) * stats.running_mean[k] + stats.momentum * mean[k];
      stats.running_var[k] =
          (1.0 - stats.momentum) * stats.running_var[k] + stats.momentum * var[k];
    }
  } else {
    mean = stats.running_mean;
    var = stats.running_var;
  }
  Tensor inv_std(Shape{f});
  for (int k = 0; k < f; ++k) inv_std[k] = 1.0 / std::sqrt(var[k] + stats.eps);
  Tensor xhat(in.shape());
  Tensor out(in.shape());
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < f; ++k)
      for (int i = 0; i < inner; ++i) {
        const std::size_t j = index(s, k, i);
        xhat[j] = (in[j] - mean[k]) * inv_std[k];
        out[j] = g[k] * xhat[j] + bt[k];
      }
  Var vars[] = {x, gamma, beta};
  const bool train = mode == BatchNormMode::kTrain;
  return TapeOf(x).Record(
      Checked(std::move(out), "batchnorm"), vars,
      [x, gamma, beta, n, f, inner, count, train, xhat = std::move(xhat),
       inv_std = std::move(inv_std), index](Tape& tape, const Tensor& dy) {
        const Tensor& g = tape.Value(gamma);
        Tensor* gx = tape.GradSlot(x);
        Tensor* gg = tape.GradSlot(gamma);
        Tensor* gbeta = tape.GradSlot(beta);
        for (int k = 0; k < f; ++k) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int s = 0; s < n; ++s)
            for (int i = 0; i < inner; ++i) {
              const std::size_t j = index(s, k, i);
              sum_dy += dy[j];
              sum_dy_xhat += dy[j] * xhat[j];
            }
          if (gg) (*gg)[k] += sum_dy_xhat;
          if (gbeta) (*gbeta)[k] += sum_dy;
          if (!gx) continue;
          const double scale = g[k] * inv_std[k];
          for (int s = 0; s < n; ++s)
            for (int i = 0; i < inner; ++i) {
              const std::size_t j = index(s, k, i);
              (*gx)[j] += train ? scale * (dy[j] - sum_dy / count -
                                           xhat[j] * sum_dy_xhat / count)
                                : scale * dy[j];
            }
        }
      });
}

Var Concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::kContract, "concat of nothing");
  const int rows = parts[0].value().rank() == 2 ? parts[0].value().dim(0) : -1;
  int cols = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    if (t.rank() != 2 || t.dim(0) != rows) {
      throw Error(ErrorKind::kShape, "concat: shapes " +
                                         ShapeString(parts[0].value().shape()) +
                                         " and " + ShapeString(t.shape()) +
                                         " are incompatible");
    }
    cols += t.dim(1);
  }
  Tensor out(Shape{rows, cols});
  std::vector<int> offsets;
  int offset = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    out.AsMatrix().middleCols(offset, t.dim(1)) = t.AsMatrix();
    offsets.push_back(offset);
    offset += t.dim(1);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return TapeOf(parts[0]).Record(
      std::move(out), inputs,
      [inputs, offsets](Tape& tape, const Tensor& g) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          if (Tensor* gi = tape.GradSlot(inputs[i])) {
            gi->AsMatrix() += g.AsMatrix().middleCols(offsets[i], gi->dim(1));
          }
        }
      });
}

Var Slice(Var a, int begin, int end) {
  const Tensor& t = a.value();
  RequireRank(t, 2, "slice");
  if (begin < 0 || end > t.dim(1) || begin >= end) {
    throw Error(ErrorKind::kShape, "slice [" + std::to_string(begin) + "," +
                                       std::to_string(end) + ") out of range for " +
                                       ShapeString(t.shape()));
  }
  Tensor out(Shape{t.dim(0), end - begin});
  out.AsMatrix() = t.AsMatrix().middleCols(begin, end - begin);
  Var vars[] = {a};
  return TapeOf(a).Record(std::move(out), vars,
                          [a, begin, end](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) {
                              ga->AsMatrix().middleCols(begin, end - begin) += g.AsMatrix();
                            }
                          });
}

Var GatherRows(Var table, std::span<const int> rows) {
  const Tensor& t = table.value();
  RequireRank(t, 2, "gather_rows");
  const int width = t.dim(1);
  Tensor out(Shape{static_cast<int>(rows.size()), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= t.dim(0)) {
      throw Error(ErrorKind::kShape, "gather_rows: row " + std::to_string(rows[r]) +
                                         " out of range for " + ShapeString(t.shape()));
    }
    out.AsMatrix().row(r) = t.AsMatrix().row(rows[r]);
  }
  Var vars[] = {table};
  return TapeOf(table).Record(
      std::move(out), vars,
      [table, rows = std::vector<int>(rows.begin(), rows.end())](
          Tape& tape, const Tensor& g) {
        if (Tensor* gt = tape.GradSlot(table)) {
          for (std::size_t r = 0; r < rows.size(); ++r) {
            gt->AsMatrix().row(rows[r]) += g.AsMatrix().row(r);
          }
        }
      });
}

Var Reshape(Var a, Shape shape) {
  Tensor out = a.value().Reshaped(std::move(shape));
  Var vars[] = {a};
  return TapeOf(a).Record(std::move(out), vars,
                          [a](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                            }
                          });
}

Var Sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  Var vars[] = {a};
  return TapeOf(a).Record(Checked(Tensor::Scalar(acc), "sum"), vars,
                          [a](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) {
                              for (double& v : ga->values()) v += g[0];
                            }
                          });
}

Var SumSq(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v * v;
  Var vars[] = {a};
  return TapeOf(a).Record(Checked(Tensor::Scalar(acc), "sum_sq"), vars,
                          [a](Tape& tape, const Tensor& g) {
                            if (Tensor* ga = tape.GradSlot(a)) {
                              const Tensor& x = tape.Value(a);
                              for (std::size_t i = 0; i < x.size(); ++i) {
                                (*ga)[i] += 2.0 * x[i] * g[0];
                              }
                            }
                          });
}

Var L2Norm(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v * v;
  const double norm = std::sqrt(acc);
  Var vars[] = {a};
  return TapeOf(a).Record(Checked(Tensor::Scalar(norm), "l2_norm"), vars,
                          [a, norm](Tape& tape, const Tensor& g) {
                            Tensor* ga = tape.GradSlot(a);
                            if (!ga || norm == 0.0) return;
                            const Tensor& x = tape.Value(a);
                            for (std::size_t i = 0; i < x.size(); ++i) {
                              (*ga)[i] += x[i] / norm * g[0];
                            }
                          });
}

Var MeanSquaredError(Var prediction, Var target) {
  const double n = static_cast<double>(prediction.value().size());
  return Scale(SumSq(Sub(prediction, target)), 1.0 / n);
}

Var SigmoidCrossEntropy(Var logits, Var targets) {
  const Tensor& x = logits.value();
  const Tensor& t = targets.value();
  RequireSameShape(x, t, "sigmoid_cross_entropy");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const double n = static_cast<double>(x.size());
  Var vars[] = {logits, targets};
  return TapeOf(logits).Record(
      Checked(Tensor::Scalar(acc / n), "sigmoid_cross_entropy"), vars,
      [logits, targets, n](Tape& tape, const Tensor& g) {
        const Tensor& x = tape.Value(logits);
        const Tensor& t = tape.Value(targets);
        if (Tensor* gl = tape.GradSlot(logits)) {
          for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                       : std::exp(x[i]) / (1.0 + std::exp(x[i]));
            (*gl)[i] += (s - t[i]) / n * g[0];
          }
        }
        if (Tensor* gt = tape.GradSlot(targets)) {
          for (std::size_t i = 0; i < x.size(); ++i) (*gt)[i] -= x[i] / n * g[0];
        }
      });
}

}  // namespace ad
}  // namespace clothpb
