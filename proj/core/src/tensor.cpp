#include "lorafit/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "lorafit/error.hpp"

namespace lorafit {

namespace {

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty()) {
    throw ShapeError("tensor shape must have at least one dimension");
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    }
    n *= d;
  }
  return n;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(checked_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (checked_numel(shape_) != values_.size()) {
    throw ShapeError("tensor of shape " + to_string(shape_) + " cannot hold " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.values_.begin(), t.values_.end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(values));
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw ShapeError("expected a matrix, got shape " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw ShapeError("expected a matrix, got shape " + to_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() on a tensor of shape " + to_string(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape() != b.shape()) return false;
  if (a.numel() == 0) return true;
  return std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Tensor& t) noexcept {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace lorafit
