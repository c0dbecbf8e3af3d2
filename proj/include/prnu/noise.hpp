#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "prnu/fft.hpp"
#include "prnu/matrix.hpp"
#include "prnu/wavelet.hpp"

namespace prnu {

struct DenoiseParams {
  int wavelet_levels = 4;
  double sigma0_sq = 9.0;
  std::vector<int> window_sizes = {3, 5, 7, 9};

  void validate() const {
    if (wavelet_levels < 1 || wavelet_levels > 16) throw usage_error("wavelet_levels must be in [1,16]");
    if (!(sigma0_sq > 0.0) || !std::isfinite(sigma0_sq)) throw usage_error("sigma0_sq must be > 0");
    if (window_sizes.empty()) throw usage_error("window_sizes must be nonempty");
    for (int w : window_sizes)
      if (w < 3 || w % 2 == 0) throw usage_error("window size " + std::to_string(w) + " is not odd and >= 3");
  }
};

/// W = I - Denoise(I). Shape matches the source plane.
struct NoiseResidual {
  RealMatrix plane;

  std::size_t width() const noexcept { return plane.cols(); }
  std::size_t height() const noexcept { return plane.rows(); }
};

namespace detail {

// Local signal-variance estimate in one detail band: for every coefficient the
// minimum over the windows of max(0, mean(c^2) - sigma0^2). Windows are
// truncated at the band borders.
inline RealMatrix local_signal_variance(const RealMatrix& band, const DenoiseParams& p) {
  const std::size_t rows = band.rows(), cols = band.cols();
  RealMatrix sq(rows, cols);
  for (std::size_t i = 0; i < band.size(); ++i) sq[i] = band[i] * band[i];

  RealMatrix best(rows, cols, std::numeric_limits<double>::infinity());
  RealMatrix rowbox(rows, cols);
  for (int w : p.window_sizes) {
    const std::ptrdiff_t h = w / 2;
    const auto R = static_cast<std::ptrdiff_t>(rows), C = static_cast<std::ptrdiff_t>(cols);
    for (std::ptrdiff_t r = 0; r < R; ++r)
      for (std::ptrdiff_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, c - h); k <= std::min(C - 1, c + h); ++k)
          s += sq(r, k);
        rowbox(r, c) = s;
      }
    for (std::ptrdiff_t r = 0; r < R; ++r) {
      const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, r - h), r1 = std::min(R - 1, r + h);
      for (std::ptrdiff_t c = 0; c < C; ++c) {
        const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, c - h), c1 = std::min(C - 1, c + h);
        double s = 0.0;
        for (std::ptrdiff_t k = r0; k <= r1; ++k) s += rowbox(k, c);
        const double n = static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1));
        const double est = std::max(0.0, s / n - p.sigma0_sq);
        best(r, c) = std::min(best(r, c), est);
      }
    }
  }
  return best;
}

inline void shrink_band(RealMatrix& coeffs, std::size_t r0, std::size_t c0, std::size_t rows,
                        std::size_t cols, const DenoiseParams& p) {
  RealMatrix band(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) band(r, c) = coeffs(r0 + r, c0 + c);
  const RealMatrix est = local_signal_variance(band, p);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      coeffs(r0 + r, c0 + c) = band(r, c) * est(r, c) / (est(r, c) + p.sigma0_sq);
}

}  // namespace detail

/// Wavelet-domain locally adaptive Wiener denoiser. Output has the input's shape.
inline ImagePlane denoise_wavelet(const ImagePlane& plane, const DenoiseParams& p = {}) {
  p.validate();
  const std::size_t unit = std::size_t{1} << p.wavelet_levels;
  const std::size_t rows = (plane.height() + unit - 1) / unit * unit;
  const std::size_t cols = (plane.width() + unit - 1) / unit * unit;
  RealMatrix coeffs = dwt2(mirror_pad(plane.pixels(), rows, cols), p.wavelet_levels);
  std::size_t r = rows, c = cols;
  for (int l = 0; l < p.wavelet_levels; ++l) {
    const std::size_t hr = r / 2, hc = c / 2;
    detail::shrink_band(coeffs, 0, hc, hr, hc, p);
    detail::shrink_band(coeffs, hr, 0, hr, hc, p);
    detail::shrink_band(coeffs, hr, hc, hr, hc, p);
    r = hr;
    c = hc;
  }
  return ImagePlane(crop(idwt2(std::move(coeffs), p.wavelet_levels), plane.height(), plane.width()));
}

inline NoiseResidual extract_noise(const ImagePlane& plane, const DenoiseParams& p = {}) {
  const ImagePlane d = denoise_wavelet(plane, p);
  NoiseResidual w{plane.pixels()};
  for (std::size_t i = 0; i < w.plane.size(); ++i) w.plane[i] -= d.pixels()[i];
  return w;
}

/// Largest absolute row or column mean.
inline double max_row_col_mean(const RealMatrix& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v;
    worst = std::max(worst, std::abs(s / static_cast<double>(m.cols())));
  }
  std::vector<double> cs(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) cs[c] += m(r, c);
  for (double s : cs) worst = std::max(worst, std::abs(s / static_cast<double>(m.rows())));
  return worst;
}

inline RealMatrix zero_mean(RealMatrix m) {
  if (m.empty()) return m;
  // One pass is exact in exact arithmetic; the loop mops up rounding.
  for (int iter = 0; iter < 8; ++iter) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double s = 0.0;
      for (double v : m.row(r)) s += v;
      const double mu = s / static_cast<double>(m.cols());
      for (double& v : m.row(r)) v -= mu;
    }
    std::vector<double> cs(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) cs[c] += m(r, c);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= cs[c] / static_cast<double>(m.rows());
    if (max_row_col_mean(m) <= 1e-9) break;
  }
  return m;
}

inline NoiseResidual zero_mean(NoiseResidual w) { return {zero_mean(std::move(w.plane))}; }

/// Per-bin Wiener gain used by wiener_dft: min(1, sigma^2 / local), where local is
/// the 3x3 circular mean of |X|^2/(mn) and sigma^2 the spatial variance.
inline RealMatrix wiener_gain(const ComplexMatrix& spectrum, double sigma_sq) {
  const std::size_t R = spectrum.rows(), C = spectrum.cols();
  const double scale = 1.0 / static_cast<double>(spectrum.size());
  RealMatrix power(R, C);
  for (std::size_t i = 0; i < spectrum.size(); ++i) power[i] = std::norm(spectrum[i]) * scale;
  RealMatrix gain(R, C, 1.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t dr = 0; dr < 3; ++dr)
        for (std::size_t dc = 0; dc < 3; ++dc) s += power((r + R + dr - 1) % R, (c + C + dc - 1) % C);
      const double local = s / 9.0;
      if (local > 0.0) gain(r, c) = std::min(1.0, sigma_sq / local);
    }
  return gain;
}

namespace detail {
// Filtered spectrum brought back to the spatial domain, imaginary part kept.
inline ComplexMatrix wiener_dft_complex(const RealMatrix& m) {
  const double mu = mean(m);
  double var = 0.0;
  for (double v : m) var += (v - mu) * (v - mu);
  var /= static_cast<double>(m.size());
  ComplexMatrix spec = fft2(m);
  if (var == 0.0) return ifft2(std::move(spec));
  const RealMatrix gain = wiener_gain(spec, var);
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= gain[i];
  return ifft2(std::move(spec));
}
}  // namespace detail

inline RealMatrix wiener_dft(const RealMatrix& m) {
  if (m.empty()) return m;
  const ComplexMatrix spec = detail::wiener_dft_complex(m);
  RealMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = spec[i].real();
  return out;
}

inline NoiseResidual wiener_dft(const NoiseResidual& w) { return {wiener_dft(w.plane)}; }

/// ||imag|| / ||real|| of the inverse transform inside wiener_dft.
inline double wiener_dft_imag_residue(const RealMatrix& m) {
  if (m.empty()) return 0.0;
  double im = 0.0, re = 0.0;
  for (const auto& v : detail::wiener_dft_complex(m)) {
    im += v.imag() * v.imag();
    re += v.real() * v.real();
  }
  return re > 0.0 ? std::sqrt(im / re) : 0.0;
}

inline ImagePlane rgb_combine(const ImagePlane& r, const ImagePlane& g, const ImagePlane& b) {
  require_same_shape(r.pixels(), g.pixels(), "rgb_combine");
  require_same_shape(r.pixels(), b.pixels(), "rgb_combine");
  RealMatrix out(r.height(), r.width());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.299 * r.pixels()[i] + 0.587 * g.pixels()[i] + 0.114 * b.pixels()[i];
  return ImagePlane(std::move(out));
}

/// The post-processing pair applied to fingerprints and per-video estimates.
inline RealMatrix postprocess(RealMatrix m) { return wiener_dft(zero_mean(std::move(m))); }

}  // namespace prnu
