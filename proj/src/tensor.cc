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

#include "clothpb/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "clothpb/error.h"

namespace clothpb {

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorKind::kShape, "negative dimension in " + ShapeString(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(ShapeSize(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != ShapeSize(shape_)) {
    throw Error(ErrorKind::kShape,
                "value count " + std::to_string(values_.size()) +
                    " does not match shape " + ShapeString(shape_));
  }
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::FromMatrix(const Matrix& m) {
  Tensor t(Shape{static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  t.AsMatrix() = m;
  return t;
}

Tensor Tensor::ZerosLike(const Tensor& other) { return Tensor(other.shape()); }

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw Error(ErrorKind::kShape, "axis " + std::to_string(axis) +
                                       " out of range for " + ShapeString(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(int row, int col) {
  return values_[static_cast<std::size_t>(row) * shape_[1] + col];
}

double Tensor::at(int row, int col) const {
  return values_[static_cast<std::size_t>(row) * shape_[1] + col];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw Error(ErrorKind::kContract,
                "item() on tensor of shape " + ShapeString(shape_));
  }
  return values_[0];
}

MatrixMap Tensor::AsMatrix() {
  const Eigen::Index rows = rank() >= 2 ? shape_[0] : 1;
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(size()) / rows : 0;
  return MatrixMap(values_.data(), rows, cols);
}

ConstMatrixMap Tensor::AsMatrix() const {
  const Eigen::Index rows = rank() >= 2 ? shape_[0] : 1;
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(size()) / rows : 0;
  return ConstMatrixMap(values_.data(), rows, cols);
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (ShapeSize(shape) != size()) {
    throw Error(ErrorKind::kShape, "cannot reshape " + ShapeString(shape_) +
                                       " to " + ShapeString(shape));
  }
  return Tensor(std::move(shape), values_);
}

void Tensor::Fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::AllFinite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  RequireSameShape(*this, other, "+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kShape, std::string(op) + ": shapes " +
                                       ShapeString(a.shape()) + " and " +
                                       ShapeString(b.shape()) + " differ");
  }
}

}  // namespace clothpb
