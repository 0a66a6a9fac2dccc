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

#ifndef CLOTHPB_TENSOR_H_
#define CLOTHPB_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace clothpb {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

using Shape = std::vector<int>;

std::string ShapeString(const Shape& shape);
std::size_t ShapeSize(const Shape& shape);

// Dense row-major float64 array. Plain value type; copying copies the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor FromMatrix(const Matrix& m);
  static Tensor ZerosLike(const Tensor& other);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(int row, int col);
  double at(int row, int col) const;

  // Value of a single-element tensor.
  double item() const;

  // Views the tensor as dim(0) x (size / dim(0)). Rank-0/1 tensors are viewed
  // as a single row.
  MatrixMap AsMatrix();
  ConstMatrixMap AsMatrix() const;

  Tensor Reshaped(Shape shape) const;
  void Fill(double value);
  bool AllFinite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Throws a shape error naming both shapes unless they are equal.
void RequireSameShape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace clothpb

#endif  // CLOTHPB_TENSOR_H_
