#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "prnu/matrix.hpp"

namespace prnu {

// Daubechies orthogonal filter bank with 8 taps (4 vanishing moments).
inline constexpr std::array<double, 8> kDb8Lowpass = {
    0.2303778133088964,  0.7148465705529154, 0.6308807679298587,  -0.0279837694168599,
    -0.1870348117190931, 0.0308413818355607, 0.0328830116668852, -0.0105974017850690};

inline constexpr std::array<double, 8> db8_highpass() {
  std::array<double, 8> g{};
  for (std::size_t k = 0; k < 8; ++k) g[k] = ((k % 2) ? -1.0 : 1.0) * kDb8Lowpass[7 - k];
  return g;
}
inline constexpr std::array<double, 8> kDb8Highpass = db8_highpass();

namespace detail {

// One periodic analysis step: in[0..n) -> out[0..n/2) approximation,
// out[n/2..n) detail. n must be even.
inline void dwt1(const double* in, double* out, std::size_t n) {
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (std::size_t t = 0; t < 8; ++t) {
      const double x = in[(2 * k + t) % n];
      a += kDb8Lowpass[t] * x;
      d += kDb8Highpass[t] * x;
    }
    out[k] = a;
    out[half + k] = d;
  }
}

// Adjoint (= inverse, the periodized bank is orthogonal) of dwt1.
inline void idwt1(const double* in, double* out, std::size_t n) {
  const std::size_t half = n / 2;
  for (std::size_t m = 0; m < n; ++m) out[m] = 0.0;
  for (std::size_t k = 0; k < half; ++k) {
    const double a = in[k], d = in[half + k];
    for (std::size_t t = 0; t < 8; ++t) out[(2 * k + t) % n] += kDb8Lowpass[t] * a + kDb8Highpass[t] * d;
  }
}

// Transform the top-left rows x cols block of m along both axes.
inline void dwt2_step(RealMatrix& m, std::size_t rows, std::size_t cols, bool inverse) {
  std::vector<double> in(std::max(rows, cols)), out(in.size());
  auto step = inverse ? idwt1 : dwt1;
  auto do_rows = [&] {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) in[c] = m(r, c);
      step(in.data(), out.data(), cols);
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = out[c];
    }
  };
  auto do_cols = [&] {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) in[r] = m(r, c);
      step(in.data(), out.data(), rows);
      for (std::size_t r = 0; r < rows; ++r) m(r, c) = out[r];
    }
  };
  if (!inverse) {
    do_rows();
    do_cols();
  } else {
    do_cols();
    do_rows();
  }
}

}  // namespace detail

/// Multi-level 2-D periodic DWT in Mallat layout. Both dimensions must be
/// divisible by 2^levels.
inline RealMatrix dwt2(RealMatrix m, int levels) {
  std::size_t r = m.rows(), c = m.cols();
  for (int l = 0; l < levels; ++l, r /= 2, c /= 2) detail::dwt2_step(m, r, c, false);
  return m;
}

inline RealMatrix idwt2(RealMatrix m, int levels) {
  for (int l = levels - 1; l >= 0; --l)
    detail::dwt2_step(m, m.rows() >> l, m.cols() >> l, true);
  return m;
}

/// Half-sample symmetric extension of m to (rows, cols). Only extends to the
/// bottom/right.
inline RealMatrix mirror_pad(const RealMatrix& m, std::size_t rows, std::size_t cols) {
  if (rows - m.rows() > m.rows() || cols - m.cols() > m.cols())
    throw data_error("plane " + std::to_string(m.cols()) + "x" + std::to_string(m.rows()) +
                     " too small to mirror-pad to " + std::to_string(cols) + "x" + std::to_string(rows));
  RealMatrix out(rows, cols);
  auto src = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * n - 1 - i; };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = m(src(r, m.rows()), src(c, m.cols()));
  return out;
}

inline RealMatrix crop(const RealMatrix& m, std::size_t rows, std::size_t cols) {
  RealMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = m(r, c);
  return out;
}

}  // namespace prnu
