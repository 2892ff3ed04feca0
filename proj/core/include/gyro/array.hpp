#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace gyro {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of 64-bit floats. Rank 1 and 2 are the common cases
// (vectors, [batch, features] matrices); scalars use shape {1}.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape);
  Array(Shape shape, std::vector<double> values);

  static Array scalar(double value);
  static Array full(Shape shape, double value);
  static Array vector(std::initializer_list<double> values);
  static Array vector(std::vector<double> values);
  static Array matrix(int rows, int cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

  // Rank-2 accessors.
  double& at(int row, int col);
  double at(int row, int col) const;
  int rows() const;
  int cols() const;

  bool same_shape(const Array& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double scalar_value() const;  // requires size() == 1

  void fill(double value);
  Array reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Plain array helpers used outside autodiff graphs (targets, oracles, envs).
Array operator+(const Array& a, const Array& b);
Array operator-(const Array& a, const Array& b);
Array operator*(const Array& a, const Array& b);
Array operator*(double s, const Array& a);

}  // namespace gyro
