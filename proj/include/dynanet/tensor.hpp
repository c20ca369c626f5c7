#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dynanet/error.hpp"

namespace dynanet {

#ifdef DYNANET_USE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using RowMatMap = Eigen::Map<RowMat<Scalar>>;

template <class Scalar>
using ConstRowMatMap = Eigen::Map<const RowMat<Scalar>>;

// Dense row-major N-d array. Rank-0 tensors are not used; scalars have shape {1}.
template <class Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_dims();
    data_ = Vec<Scalar>::Zero(shape_numel(shape_));
  }

  Tensor(Shape shape, Vec<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    check_dims();
    if (shape_numel(shape_) != static_cast<Index>(values.size())) {
      throw ShapeError("initializer length does not match shape " + shape_string(shape_));
    }
    data_.resize(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), data_.data());
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  Vec<Scalar>& data() { return data_; }
  const Vec<Scalar>& data() const { return data_; }
  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // Element access for C×H×W tensors.
  Scalar& at(Index c, Index h, Index w) { return data_[(c * shape_[1] + h) * shape_[2] + w]; }
  Scalar at(Index c, Index h, Index w) const { return data_[(c * shape_[1] + h) * shape_[2] + w]; }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape_));
    return data_[0];
  }

  // Row-major matrix view: first dimension as rows, everything else as columns.
  RowMatMap<Scalar> matrix() { return RowMatMap<Scalar>(data_.data(), shape_[0], size() / shape_[0]); }
  ConstRowMatMap<Scalar> matrix() const {
    return ConstRowMatMap<Scalar>(data_.data(), shape_[0], size() / shape_[0]);
  }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  template <class Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  // Bitwise equality of shape and payload (distinguishes -0 from +0 and compares NaN payloads).
  bool bit_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), sizeof(Scalar) * static_cast<std::size_t>(size())) == 0;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  Vec<Scalar> data_;
};

// Raises NumericError if any element is NaN or infinite.
template <class Scalar>
void validate_finite(const Tensor<Scalar>& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError("non-finite value in " + what);
}

template <class Scalar>
void require_shape(const Tensor<Scalar>& t, const Shape& expected, const std::string& what) {
  if (t.shape() != expected) {
    throw ShapeError(what + ": expected shape " + shape_string(expected) + ", got " + shape_string(t.shape()));
  }
}

}  // namespace dynanet
