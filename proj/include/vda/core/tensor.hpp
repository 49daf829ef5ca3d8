#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "vda/core/errors.hpp"
#include "vda/core/rng.hpp"

namespace vda {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

/// Dense row-major tensor with shared storage. Copies are shallow; use
/// clone() for an independent buffer. Values are treated as immutable once
/// they enter an autodiff graph.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(size_t(shape_numel(shape_)), T(0))) {}

  Tensor(Shape shape, T fill)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(size_t(shape_numel(shape_)), fill)) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }

  static Tensor scalar(T v) { return Tensor({1}, v); }

  static Tensor from_vector(Shape shape, std::vector<T> values) {
    if (int64_t(values.size()) != shape_numel(shape))
      throw ShapeError("from_vector: element count does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, T scale = T(1)) {
    Tensor t(std::move(shape));
    T* p = t.data();
    for (int64_t i = 0, n = t.numel(); i < n; ++i) p[i] = T(rng.normal()) * scale;
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int ndim() const { return int(shape_.size()); }
  int64_t size(int d) const { return shape_[size_t(d)]; }
  int64_t numel() const { return data_ ? int64_t(data_->size()) : 0; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }

  T& operator[](int64_t i) { return (*data_)[size_t(i)]; }
  const T& operator[](int64_t i) const { return (*data_)[size_t(i)]; }

  T& at(int64_t i, int64_t j) { return (*data_)[size_t(i * shape_[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return (*data_)[size_t(i * shape_[1] + j)]; }

  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return (*data_)[size_t(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return (*data_)[size_t(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  /// Deep copy.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  /// New shape over the same storage; element count must match.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_->begin(), data_->end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t{shape_};
    U* dst = t.data();
    const T* src = data();
    for (int64_t i = 0, n = numel(); i < n; ++i) dst[i] = U(src[i]);
    return t;
  }

  bool all_finite() const {
    const T* p = data();
    for (int64_t i = 0, n = numel(); i < n; ++i)
      if (!std::isfinite(double(p[i]))) return false;
    return true;
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;

  template <typename U>
  friend class Tensor;
};

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(T)) == 0;
}

}  // namespace vda
