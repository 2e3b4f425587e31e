#include "gma3d/numkern/dense_array.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "gma3d/errors.hpp"

namespace gma3d::numkern {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
  check_finite("DenseArray");
}

DenseArray DenseArray::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

DenseArray DenseArray::filled(Shape shape, double value) {
  const std::size_t n = shape_product(shape);
  return DenseArray(std::move(shape), std::vector<double>(n, value));
}

DenseArray DenseArray::scalar(double value) { return DenseArray({1, 1}, {value}); }

DenseArray DenseArray::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) return zeros({0, 0});
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return DenseArray({rows.size(), cols}, std::move(data));
}

DenseArray DenseArray::identity(std::size_t n) {
  DenseArray out = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

std::size_t DenseArray::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  throw ShapeError("matrix view of rank-" + std::to_string(shape_.size()) + " array");
}

std::size_t DenseArray::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  throw ShapeError("matrix view of rank-" + std::to_string(shape_.size()) + " array");
}

std::span<const double> DenseArray::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> DenseArray::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

double DenseArray::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on array of shape " + shape_string(shape_));
  }
  return data_[0];
}

DenseArray DenseArray::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  DenseArray out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void DenseArray::check_finite(const char* context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericalError(std::string(context) + ": non-finite value at index " +
                               std::to_string(i),
                           i);
    }
  }
}

bool DenseArray::bit_equal(const DenseArray& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

}  // namespace gma3d::numkern
