#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prnu/error.hpp"

namespace prnu {

/// Dense row-major 2-D array. `rows` is the image height, `cols` the width.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw data_error("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  template <typename U>
  bool same_shape(const Matrix<U>& o) const noexcept {
    return rows_ == o.rows() && cols_ == o.cols();
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using RealMatrix = Matrix<double>;

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw data_error(std::string(what) + ": dimension mismatch (" + std::to_string(a.cols()) + "x" +
                     std::to_string(a.rows()) + " vs " + std::to_string(b.cols()) + "x" +
                     std::to_string(b.rows()) + ")");
}

inline double frobenius_norm(const RealMatrix& m) {
  double s = 0.0;
  for (double v : m) s += v * v;
  return std::sqrt(s);
}

inline double mean(const RealMatrix& m) {
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (double v : m) s += v;
  return s / static_cast<double>(m.size());
}

inline double max_abs_diff(const RealMatrix& a, const RealMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Pearson correlation of two equally sized matrices; 0 when either is constant.
inline double correlation(const RealMatrix& a, const RealMatrix& b) {
  require_same_shape(a, b, "correlation");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// One luma or colour plane, 0-255 scale stored as doubles. At least 8x8.
class ImagePlane {
 public:
  static constexpr std::size_t kMinDim = 8;

  ImagePlane() = default;
  ImagePlane(std::size_t width, std::size_t height, double fill = 0.0)
      : pixels_(height, width, fill) {
    validate();
  }
  explicit ImagePlane(RealMatrix pixels) : pixels_(std::move(pixels)) { validate(); }

  std::size_t width() const noexcept { return pixels_.cols(); }
  std::size_t height() const noexcept { return pixels_.rows(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return pixels_(r, c); }
  double operator()(std::size_t r, std::size_t c) const noexcept { return pixels_(r, c); }

  RealMatrix& pixels() noexcept { return pixels_; }
  const RealMatrix& pixels() const noexcept { return pixels_; }

  friend bool operator==(const ImagePlane& a, const ImagePlane& b) { return a.pixels_ == b.pixels_; }

 private:
  void validate() const {
    if (pixels_.cols() < kMinDim || pixels_.rows() < kMinDim)
      throw data_error("image plane " + std::to_string(pixels_.cols()) + "x" +
                       std::to_string(pixels_.rows()) + " is smaller than 8x8");
  }

  RealMatrix pixels_;
};

}  // namespace prnu
