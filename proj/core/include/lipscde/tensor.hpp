#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "lipscde/errors.hpp"

namespace lipscde {

/// Dense real tensor of rank 1..3, row-major. Values are plain doubles; the
/// autodiff tape stores one Tensor per graph node. Rank 3 is only used for
/// convolution kernels laid out as [out_ch][in_ch][tap].
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::size_t n) : rank_(1), dims_{int32_t(n), 1, 1}, data_(n, 0.0) {}
  Tensor(std::size_t r, std::size_t c)
      : rank_(2), dims_{int32_t(r), int32_t(c), 1}, data_(r * c, 0.0) {}
  Tensor(std::size_t a, std::size_t b, std::size_t c)
      : rank_(3), dims_{int32_t(a), int32_t(b), int32_t(c)}, data_(a * b * c, 0.0) {}

  static Tensor vec(std::initializer_list<double> vals) {
    Tensor t(vals.size());
    std::size_t i = 0;
    for (double v : vals) t.data_[i++] = v;
    return t;
  }

  static Tensor from(std::vector<double> vals) {
    Tensor t;
    t.rank_ = 1;
    t.dims_ = {int32_t(vals.size()), 1, 1};
    t.data_ = std::move(vals);
    return t;
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::initializer_list<double> vals) {
    Tensor t(r, c);
    std::size_t i = 0;
    for (double v : vals) t.data_[i++] = v;
    if (i != r * c) throw ContractViolation("Tensor::matrix: value count mismatch");
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t(std::size_t(1));
    t.data_[0] = v;
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  int rank() const { return rank_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t dim(int i) const { return std::size_t(dims_[std::size_t(i)]); }
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s(static_cast<std::size_t>(rank_));
    for (int i = 0; i < rank_; ++i) s[std::size_t(i)] = dim(i);
    return s;
  }

  bool same_shape(const Tensor& o) const {
    return rank_ == o.rank_ && dims_ == o.dims_;
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * dim(1) + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dim(1) + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dim(1) + j) * dim(2) + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dim(1) + j) * dim(2) + k];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return {data_.data(), data_.size()}; }
  std::span<double> values() { return {data_.data(), data_.size()}; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  // In-place reshapes that reuse the existing buffer capacity; contents of
  // resize_* are unspecified (callers overwrite), zero_like_inplace zeroes.
  void resize_vec(std::size_t n) {
    rank_ = 1;
    dims_ = {int32_t(n), 1, 1};
    data_.resize(n);
  }
  void resize_mat(std::size_t r, std::size_t c) {
    rank_ = 2;
    dims_ = {int32_t(r), int32_t(c), 1};
    data_.resize(r * c);
  }
  void resize_like(const Tensor& o) {
    rank_ = o.rank_;
    dims_ = o.dims_;
    data_.resize(o.size());
  }
  void zero_like_inplace(const Tensor& o) {
    rank_ = o.rank_;
    dims_ = o.dims_;
    data_.assign(o.size(), 0.0);
  }

  Tensor zeros_like() const {
    Tensor t = *this;
    t.fill(0.0);
    return t;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double scalar_value() const {
    if (data_.size() != 1) throw ContractViolation("Tensor: not a scalar");
    return data_[0];
  }

  bool operator==(const Tensor& o) const {
    return rank_ == o.rank_ && dims_ == o.dims_ && data_ == o.data_;
  }

 private:
  int rank_ = 0;
  std::array<int32_t, 3> dims_{0, 0, 0};
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace lipscde
