#include "gyro/array.hpp"

#include <cmath>
#include <utility>

#include "gyro/error.hpp"

namespace gyro {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  out += "]";
  return out;
}

Array::Array(Shape shape) : shape_(std::move(shape)) {
  for (int d : shape_) GYRO_CHECK(d >= 0, "negative dimension in shape {}", shape_str(shape_));
  values_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  GYRO_CHECK(static_cast<std::int64_t>(values_.size()) == shape_size(shape_),
             "value count {} does not match shape {}", values_.size(), shape_str(shape_));
}

Array Array::scalar(double value) { return Array({1}, {value}); }

Array Array::full(Shape shape, double value) {
  Array out(std::move(shape));
  out.fill(value);
  return out;
}

Array Array::vector(std::initializer_list<double> values) {
  return Array({static_cast<int>(values.size())}, std::vector<double>(values));
}

Array Array::vector(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Array({n}, std::move(values));
}

Array Array::matrix(int rows, int cols, std::vector<double> values) {
  return Array({rows, cols}, std::move(values));
}

double& Array::at(int row, int col) {
  return values_[static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_[1]) +
                 static_cast<std::size_t>(col)];
}

double Array::at(int row, int col) const {
  return values_[static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_[1]) +
                 static_cast<std::size_t>(col)];
}

int Array::rows() const {
  GYRO_CHECK(rank() == 2, "rows() on array of shape {}", shape_str(shape_));
  return shape_[0];
}

int Array::cols() const {
  GYRO_CHECK(rank() == 2, "cols() on array of shape {}", shape_str(shape_));
  return shape_[1];
}

bool Array::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Array::scalar_value() const {
  GYRO_CHECK(size() == 1, "scalar_value() on array of shape {}", shape_str(shape_));
  return values_[0];
}

void Array::fill(double value) {
  for (double& v : values_) v = value;
}

Array Array::reshaped(Shape shape) const {
  GYRO_CHECK(shape_size(shape) == size(), "cannot reshape {} to {}", shape_str(shape_),
             shape_str(shape));
  return Array(std::move(shape), values_);
}

namespace {

Array zip(const Array& a, const Array& b, double (*f)(double, double), const char* name) {
  GYRO_CHECK(a.same_shape(b), "shape mismatch in {}: {} vs {}", name, shape_str(a.shape()),
             shape_str(b.shape()));
  Array out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Array operator+(const Array& a, const Array& b) {
  return zip(a, b, [](double x, double y) { return x + y; }, "operator+");
}

Array operator-(const Array& a, const Array& b) {
  return zip(a, b, [](double x, double y) { return x - y; }, "operator-");
}

Array operator*(const Array& a, const Array& b) {
  return zip(a, b, [](double x, double y) { return x * y; }, "operator*");
}

Array operator*(double s, const Array& a) {
  Array out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

}  // namespace gyro
