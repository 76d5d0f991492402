#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "statekit/errors.hpp"

namespace statekit {

// Dense row-major n-d double array with an optional gradient buffer of the
// same shape. The gradient buffer is empty until ensure_grad() allocates it.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;

  explicit Tensor(std::vector<size_t> shape_in, double fill = 0.0)
      : shape(std::move(shape_in)), data(numel_of(shape), fill) {}

  static size_t numel_of(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  size_t numel() const { return data.size(); }
  size_t ndim() const { return shape.size(); }
  size_t dim(size_t i) const { return shape.at(i); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  double& at2(size_t i, size_t j) { return data[i * shape[1] + j]; }
  double at2(size_t i, size_t j) const { return data[i * shape[1] + j]; }

  double& at4(size_t n, size_t c, size_t h, size_t w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double at4(size_t n, size_t c, size_t h, size_t w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }

  void zero_grad() { grad.assign(data.size(), 0.0); }

  Tensor reshaped(std::vector<size_t> new_shape) const {
    if (numel_of(new_shape) != numel()) {
      throw DimensionError("reshape from " + shape_string(shape) + " to " +
                           shape_string(new_shape) + " changes element count");
    }
    Tensor out;
    out.shape = std::move(new_shape);
    out.data = data;
    return out;
  }

  static std::string shape_string(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
  }
};

inline void require_ndim(const Tensor& t, size_t n, const char* who) {
  if (t.ndim() != n) {
    throw DimensionError(std::string(who) + " expects a " + std::to_string(n) +
                         "-d tensor, got shape " + Tensor::shape_string(t.shape));
  }
}

}  // namespace statekit
