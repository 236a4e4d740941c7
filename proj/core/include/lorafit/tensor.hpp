#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lorafit {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Every dimension is positive and the
/// value count always equals the product of the dimensions.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);
  /// Builds a rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  /// Rank-2 tensor with a single row.
  static Tensor row(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  /// Row/column counts of a rank-2 tensor. Throws ShapeError otherwise.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }

  /// The single value of a one-element tensor.
  double item() const;

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Shapes equal and every value has an identical bit pattern.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

/// Largest absolute element-wise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

double frobenius_norm(const Tensor& t) noexcept;

}  // namespace lorafit
