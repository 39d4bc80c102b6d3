#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uda/error.hpp"

namespace uda {

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense single-image CHW tensor. Batches are plain vectors of these.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  BasicTensor(int c, int h, int w, T fill = T(0)) : BasicTensor(Shape{c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.c; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  std::span<T> channel(int c) { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
  std::span<const T> channel(int c) const { return {data_.data() + c * shape_.plane(), shape_.plane()}; }

  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x]; }
  T at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape_like(Shape s) {
    shape_ = s;
    data_.assign(s.size(), T(0));
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (!(got == want)) {
    throw Error(ErrorKind::invalid_argument, std::string(what) + ": expected shape " + want.str() + ", got " + got.str());
  }
}

}  // namespace uda
