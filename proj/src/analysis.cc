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

#include "clothpb/analysis.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "clothpb/error.h"

namespace clothpb::analysis {
namespace {

void RequireSameSize(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::kShape, "correlation inputs differ in length: " +
                                       std::to_string(x.size()) + " vs " +
                                       std::to_string(y.size()));
  }
  if (x.size() < 3) throw Error(ErrorKind::kContract, "correlation needs at least 3 points");
}

// Felzenszwalb-Huttenlocher lower envelope over one line of squared
// distances. `f` is read, `out` written; both have length n.
void Envelope1d(const double* f, int n, int stride, double* out) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((fq + double(q) * q) - (f[p * stride] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;  // z[0] is -inf, so this stops at k = 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * stride] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q * stride] = d * d + f[v[j] * stride];
  }
}

double MeanDistance(const BinaryImage& from, const std::vector<double>& to_dt) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < from.pixels.size(); ++i) {
    if (from.pixels[i]) {
      sum += std::sqrt(to_dt[i]);
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

PcaResult Pca(const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (n < 2) throw Error(ErrorKind::kContract, "pca needs at least 2 points");
  PcaResult out;
  out.mean = points.colwise().mean().transpose();
  const Eigen::MatrixXd centered = points.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::kNotConverged, "pca eigen-decomposition failed");
  }
  // Eigen returns ascending order.
  out.eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
  out.components = solver.eigenvectors().rowwise().reverse();
  for (int c = 0; c < d; ++c) {
    Eigen::Index idx;
    out.components.col(c).cwiseAbs().maxCoeff(&idx);
    if (out.components(idx, c) < 0) out.components.col(c) *= -1.0;
  }
  const double total = out.eigenvalues.sum();
  out.explained_variance_ratios.assign(d, 0.0);
  if (total <= 0.0) {
    out.degenerate = true;
    out.explained_variance_ratios[0] = 1.0;
  } else {
    for (int c = 0; c < d; ++c) out.explained_variance_ratios[c] = out.eigenvalues[c] / total;
  }
  out.projected = centered * out.components;
  return out;
}

std::vector<double> SquaredDistanceTransform(const BinaryImage& image) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int w = image.width, h = image.height;
  std::vector<double> f(image.pixels.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = image.pixels[i] ? 0.0 : kInf;
  std::vector<double> tmp(f.size());
  for (int c = 0; c < w; ++c) Envelope1d(&f[c], h, w, &tmp[c]);
  for (int r = 0; r < h; ++r) Envelope1d(&tmp[r * w], w, 1, &f[r * w]);
  return f;
}

ChamferResult Chamfer(const BinaryImage& a, const BinaryImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorKind::kShape, "chamfer images differ in shape");
  }
  if (a.ForegroundCount() == 0 || b.ForegroundCount() == 0) {
    return {std::hypot(double(a.width), double(a.height)), true};
  }
  const double ab = MeanDistance(a, SquaredDistanceTransform(b));
  const double ba = MeanDistance(b, SquaredDistanceTransform(a));
  return {ab + ba, false};
}

double Pearson(std::span<const double> x, std::span<const double> y) {
  RequireSameSize(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw Error(ErrorKind::kUndefined, "correlation undefined for zero variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> Ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double Spearman(std::span<const double> x, std::span<const double> y) {
  RequireSameSize(x, y);
  const std::vector<double> rx = Ranks(x), ry = Ranks(y);
  return Pearson(rx, ry);
}

RateCurve MakeRateCurve(std::span<const double> errors, std::vector<double> thresholds) {
  if (errors.empty()) throw Error(ErrorKind::kContract, "rate curve needs errors");
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  RateCurve curve;
  curve.thresholds = thresholds;
  for (double t : thresholds) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    curve.rates.push_back(double(below) / double(sorted.size()));
  }
  return curve;
}

std::vector<double> Linspace(double lo, double hi, int n) {
  std::vector<double> out;
  if (n == 1) return {lo};
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

}  // namespace clothpb::analysis
