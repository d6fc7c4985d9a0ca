#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tversky/error.hpp"

namespace tversky {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array of doubles, rank 1..5.
///
/// Volumes use depth x height x width x channels; label and probability planes
/// drop the channel axis (depth x height x width). A default-constructed tensor
/// is empty and has rank 0.
class Tensor {
 public:
  static constexpr std::size_t max_rank = 5;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_size(shape_)) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor for (d, h, w, c) volumes.
  double& operator()(std::size_t d, std::size_t h, std::size_t w, std::size_t c) {
    return data_[((d * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }
  double operator()(std::size_t d, std::size_t h, std::size_t w, std::size_t c) const {
    return data_[((d * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }

  // 3-D accessor for (d, h, w) planes.
  double& operator()(std::size_t d, std::size_t h, std::size_t w) {
    return data_[(d * shape_[1] + h) * shape_[2] + w];
  }
  double operator()(std::size_t d, std::size_t h, std::size_t w) const {
    return data_[(d * shape_[1] + h) * shape_[2] + w];
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  Tensor reshaped(Shape shape) const {
    Tensor out(std::move(shape));
    if (out.size() != size()) {
      throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(out.shape()));
    }
    out.data_ = data_;
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    if (shape_.empty() || shape_.size() > max_rank) {
      throw ConfigError("tensor rank must be in [1, 5], got shape " + shape_str(shape_));
    }
    for (std::size_t e : shape_) {
      if (e == 0) throw ConfigError("tensor extents must be >= 1, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Sum of elementwise products; shapes must match in size.
inline double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ConfigError("dot: size mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(rank) +
                      " tensor, got shape " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

}  // namespace tversky
