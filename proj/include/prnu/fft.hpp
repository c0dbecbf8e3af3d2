#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

#include "prnu/matrix.hpp"

namespace prnu {

using ComplexMatrix = Matrix<std::complex<double>>;

namespace detail {
// FFTW's planner is not re-entrant; execution of a private plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline void fft2_inplace(ComplexMatrix& a, int sign) {
  if (a.empty()) return;
  auto* p = reinterpret_cast<fftw_complex*>(a.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(a.rows()), static_cast<int>(a.cols()), p, p, sign,
                            FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}
}  // namespace detail

/// Unnormalized forward 2-D DFT.
inline ComplexMatrix fft2(const RealMatrix& x) {
  ComplexMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  detail::fft2_inplace(out, FFTW_FORWARD);
  return out;
}

inline ComplexMatrix fft2(ComplexMatrix x) {
  detail::fft2_inplace(x, FFTW_FORWARD);
  return x;
}

/// Inverse 2-D DFT including the 1/(mn) factor.
inline ComplexMatrix ifft2(ComplexMatrix x) {
  detail::fft2_inplace(x, FFTW_BACKWARD);
  const double s = 1.0 / static_cast<double>(x.size());
  for (auto& v : x) v *= s;
  return x;
}

}  // namespace prnu
