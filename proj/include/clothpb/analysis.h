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

#ifndef CLOTHPB_ANALYSIS_H_
#define CLOTHPB_ANALYSIS_H_

#include <span>
#include <vector>

#include <Eigen/Core>

#include "clothpb/image.h"

namespace clothpb::analysis {

struct PcaResult {
  Eigen::VectorXd mean;
  // Columns are principal directions, ordered by descending variance.
  Eigen::MatrixXd components;
  Eigen::VectorXd eigenvalues;
  std::vector<double> explained_variance_ratios;
  // One row per input point, in component coordinates.
  Eigen::MatrixXd projected;
  bool degenerate = false;
};

// Rows of `points` are observations. Each component is signed so its
// largest-magnitude loading is positive.
PcaResult Pca(const Eigen::MatrixXd& points);

struct ChamferResult {
  double distance = 0.0;  // pixels
  bool empty = false;     // sentinel used because an image had no foreground
};

// Mean nearest-foreground distance from each image to the other, summed.
ChamferResult Chamfer(const BinaryImage& a, const BinaryImage& b);

// Squared Euclidean distance to the nearest foreground pixel, row-major.
// Pixels of an empty image get +infinity.
std::vector<double> SquaredDistanceTransform(const BinaryImage& image);

double Pearson(std::span<const double> x, std::span<const double> y);
double Spearman(std::span<const double> x, std::span<const double> y);

// Average ranks (ties share the mean rank), 1-based.
std::vector<double> Ranks(std::span<const double> x);

struct RateCurve {
  std::vector<double> thresholds;
  std::vector<double> rates;
};

// Fraction of `errors` strictly below each threshold; thresholds are sorted.
RateCurve MakeRateCurve(std::span<const double> errors, std::vector<double> thresholds);

std::vector<double> Linspace(double lo, double hi, int n);

}  // namespace clothpb::analysis

#endif  // CLOTHPB_ANALYSIS_H_
