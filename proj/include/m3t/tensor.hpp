#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "m3t/errors.hpp"

namespace m3t {

// Dense row-major float tensor. The last axis is contiguous; leading axes
// can be folded into rows for matrix views.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0f) {}
  Tensor(std::vector<int> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_numel(shape_))
      throw ShapeMismatch("tensor data size does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(float value) { return Tensor({1}, {value}); }

  // U(-bound, bound), the default layer init.
  static Tensor uniform(std::vector<int> shape, float bound, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& v : t.data_) v = dist(rng);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int size(int axis) const {
    if (axis < 0) axis += ndim();
    return shape_.at(static_cast<size_t>(axis));
  }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Number of rows when folding every axis but the last.
  int64_t rows_folded() const {
    if (shape_.empty()) return 0;
    return numel() / size(-1);
  }

  Tensor reshaped(std::vector<int> shape) const {
    if (checked_numel(shape) != numel())
      throw ShapeMismatch("reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  static int64_t checked_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeMismatch("negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<float> data_;
};

inline void check_shape(const Tensor& t, const std::vector<int>& expect,
                        const char* what) {
  if (t.shape() != expect) {
    Tensor e(expect);
    throw ShapeMismatch(std::string(what) + ": got " + t.shape_str() +
                        ", expected " + e.shape_str());
  }
}

}  // namespace m3t
