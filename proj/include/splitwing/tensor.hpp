#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "splitwing/error.hpp"

namespace splitwing {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);

// Product of the dimensions. Throws ValidationError on negative entries.
// A zero dimension is legal: an empty batch is a normal value here (a client
// may contribute nothing to a round).
int64_t shape_numel(const Shape& s);

// Dense row-major tensor of f32 (production) or f64 (test mode).
// `grad`, when non-empty, mirrors `data` elementwise.
template <typename S>
struct Tensor {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    int64_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<S>(static_cast<size_t>(n), S(0)));
  }

  static Tensor full(Shape s, S value) {
    int64_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<S>(static_cast<size_t>(n), value));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  bool has_grad() const { return !grad.empty(); }
  void alloc_grad() { grad.assign(data.size(), S(0)); }

  // Reinterpret with a new shape of equal element count (row-major view).
  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw DimensionError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
  for (S v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename S>
void require_finite(const Tensor<S>& t, const char* what) {
  if (!all_finite(t)) throw NumericError(std::string(what) + ": non-finite value");
}

template <typename S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape == b.shape;
}

// Exact bit-pattern equality of shape and data (grad ignored).
template <typename S>
bool bitwise_equal(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape) return false;
  if (a.data.empty()) return b.data.empty();
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(S)) == 0;
}

}  // namespace splitwing
