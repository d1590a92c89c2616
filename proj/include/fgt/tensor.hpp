#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fgt/error.hpp"

namespace fgt {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <class Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using RowMatrixMap = Eigen::Map<RowMatrix<Scalar>>;
template <class Scalar>
using ConstRowMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline Index shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major array of rank 1..4 backed by an Eigen vector.
///
/// Activations use [batch, channels, height, width], conv kernels
/// [out, in, kh, kw], dense weights [out, in].
template <class Scalar>
class BasicTensor {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_ = Storage::Constant(shape_product(shape_), fill);
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values) : BasicTensor(std::move(shape)) {
    if (static_cast<Index>(values.size()) != size())
      throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                           shape_string(shape_));
    std::copy(values.begin(), values.end(), data_.data());
  }

  BasicTensor(Shape shape, Storage values) : shape_(std::move(shape)), data_(std::move(values)) {
    validate_shape(shape_);
    if (data_.size() != shape_product(shape_))
      throw DimensionError("tensor: " + std::to_string(data_.size()) + " values for shape " +
                           shape_string(shape_));
  }

  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return {data_.data(), static_cast<std::size_t>(size())}; }
  std::span<const Scalar> values() const noexcept {
    return {data_.data(), static_cast<std::size_t>(size())};
  }

  Storage& storage() noexcept { return data_; }
  const Storage& storage() const noexcept { return data_; }
  auto array() noexcept { return data_.array(); }
  auto array() const noexcept { return data_.array(); }

  Scalar& operator[](Index i) { return data_[i]; }
  const Scalar& operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index i, Index j) {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  const Scalar& operator()(Index i, Index j) const {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  const Scalar& operator()(Index n, Index c, Index h, Index w) const {
    return data_[offset(n, c, h, w)];
  }

  /// Row-major matrix view of the flat storage.
  RowMatrixMap<Scalar> matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return RowMatrixMap<Scalar>(data_.data(), rows, cols);
  }
  ConstRowMatrixMap<Scalar> matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstRowMatrixMap<Scalar>(data_.data(), rows, cols);
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_product(shape) != size())
      throw DimensionError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    BasicTensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <class Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  bool all_finite() const { return data_.allFinite(); }

  void set_zero() { data_.setZero(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && std::equal(a.data_.data(), a.data_.data() + a.size(),
                                              b.data_.data(), b.data_.data() + b.size());
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4)
      throw DimensionError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (shape[i] <= 0)
        throw DimensionError("tensor axis " + std::to_string(i) + " has non-positive extent " +
                             std::to_string(shape[i]));
  }

  Index offset(Index n, Index c, Index h, Index w) const {
    assert(rank() == 4);
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  void check_view(Index rows, Index cols) const {
    if (rows * cols != size())
      throw DimensionError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                           " over shape " + shape_string(shape_));
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;

/// Throws DimensionError naming `what` and `axis` unless `expected == actual`.
inline void expect_extent(const char* what, const char* axis, Index expected, Index actual) {
  if (expected != actual)
    throw DimensionError(std::string(what) + ": axis '" + axis + "' expected " +
                         std::to_string(expected) + ", got " + std::to_string(actual));
}

inline void expect_rank(const char* what, const char* name, int expected, int actual) {
  if (expected != actual)
    throw DimensionError(std::string(what) + ": " + name + " must have rank " +
                         std::to_string(expected) + ", got " + std::to_string(actual));
}

template <class Scalar>
void ensure_finite(const BasicTensor<Scalar>& t, const std::string& where) {
  if (!t.all_finite()) throw NonFiniteError("non-finite values in " + where);
}

}  // namespace fgt
