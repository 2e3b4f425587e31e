#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gma3d::numkern {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Row-major array of finite doubles. Construction rejects NaN/Inf and any
// data length that does not match the shape.
class DenseArray {
 public:
  DenseArray() = default;
  DenseArray(Shape shape, std::vector<double> data);

  static DenseArray zeros(Shape shape);
  static DenseArray filled(Shape shape, double value);
  static DenseArray scalar(double value);
  // Rows of equal length; an empty list yields a 0x0 array.
  static DenseArray from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseArray identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  // Matrix views; rank must be 2 (a rank-1 array is treated as one row).
  std::size_t rows() const;
  std::size_t cols() const;

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // Scalar value of a one-element array.
  double item() const;

  DenseArray reshaped(Shape shape) const;

  // Throws NumericalError naming the first non-finite index.
  void check_finite(const char* context) const;

  bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }

  // Bitwise equality of shape and payload.
  bool bit_equal(const DenseArray& other) const noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape);

}  // namespace gma3d::numkern
