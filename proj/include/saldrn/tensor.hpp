#pragma once

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "saldrn/errors.hpp"

namespace saldrn {

/// Dense NCHW extents. Vectors are carried as N x C x 1 x 1, scalars as 1 x 1 x 1 x 1.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }

  bool operator==(const Shape&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << '[' << s.n << 'x' << s.c << 'x' << s.h << 'x' << s.w << ']';
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ContractViolation("tensor data size does not match shape");
    }
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  T* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Copy of sample `n` as a 1 x C x H x W tensor.
  Tensor sample(int n) const {
    Tensor out({1, shape_.c, shape_.h, shape_.w});
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(n * shape_.sample()),
                shape_.sample(), out.data_.begin());
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

/// Stack 1 x C x H x W tensors along the batch axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ContractViolation("stack of zero tensors");
  Shape s = items.front().shape();
  s.n = 0;
  for (const auto& t : items) s.n += t.n();
  Tensor<T> out(s);
  std::size_t at = 0;
  for (const auto& t : items) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w) {
      throw ContractViolation("stack of tensors with mismatched shapes");
    }
    std::copy(t.vec().begin(), t.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(at));
    at += t.numel();
  }
  return out;
}

/// Spatial crop [y0, y0+h) x [x0, x0+w) of every sample and channel.
template <typename T>
Tensor<T> crop(const Tensor<T>& t, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > t.h() || x0 + w > t.w()) {
    throw ContractViolation("crop window outside tensor");
  }
  Tensor<T> out({t.n(), t.c(), h, w});
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < h; ++y) {
        const T* src = t.plane(n, c) + static_cast<std::size_t>(y0 + y) * t.w() + x0;
        std::copy_n(src, w, out.plane(n, c) + static_cast<std::size_t>(y) * w);
      }
  return out;
}

}  // namespace saldrn
