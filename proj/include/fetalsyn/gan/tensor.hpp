#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "fetalsyn/errors.hpp"

namespace fetalsyn::gan {

/// Dense row-major tensor of doubles. Images are (channels, height, width).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    std::size_t n = 1;
    for (int e : shape) {
      if (e <= 0) throw ArgumentError("tensor extents must be positive");
      n *= static_cast<std::size_t>(e);
    }
    values.assign(n, fill);
  }
  static Tensor image(int c, int h, int w, double fill = 0.0) { return Tensor({c, h, w}, fill); }

  std::size_t size() const { return values.size(); }
  int channels() const { return shape.at(0); }
  int height() const { return shape.at(1); }
  int width() const { return shape.at(2); }
  std::size_t plane() const { return static_cast<std::size_t>(height()) * width(); }

  double& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }
  double at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }
  double* channel(int c) { return values.data() + static_cast<std::size_t>(c) * plane(); }
  const double* channel(int c) const { return values.data() + static_cast<std::size_t>(c) * plane(); }

  void zero() { std::fill(values.begin(), values.end(), 0.0); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_string(const std::vector<int>& shape);

inline void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what) {
  if (t.shape != shape) {
    throw ArgumentError(std::string(what) + ": expected shape " + shape_string(shape) + ", got " +
                        shape_string(t.shape));
  }
}

/// A trainable tensor with its gradient accumulator (zeroed at step start).
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.zero(); }
};

}  // namespace fetalsyn::gan
