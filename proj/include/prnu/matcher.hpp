#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "prnu/fft.hpp"
#include "prnu/fingerprint.hpp"
#include "prnu/matrix.hpp"

namespace prnu {

/// Circular normalized cross-correlation surface. values(r,c) holds rho at the
/// 1-based shift (r+1, c+1).
struct NccSurface {
  RealMatrix values;
  std::size_t peak_row = 1;  // 1-based
  std::size_t peak_col = 1;  // 1-based
  double peak_value = 0.0;
};

struct PceParams {
  int exclusion_half_width = 5;
  bool aligned_mode = false;
  bool signed_mode = false;
};

enum class Decision { H0, H1 };

inline const char* to_string(Decision d) { return d == Decision::H1 ? "H1" : "H0"; }

struct PceResult {
  double pce = 0.0;
  std::size_t peak_row = 1;
  std::size_t peak_col = 1;
  double peak_value = 0.0;
  double threshold = 50.0;
  Decision decision = Decision::H0;
};

inline constexpr double kDefaultTau = 50.0;

inline NccSurface ncc(const RealMatrix& f, const RealMatrix& w) {
  require_same_shape(f, w, "ncc");
  if (f.empty()) throw data_error("ncc: empty input");
  const double mf = mean(f), mw = mean(w);
  RealMatrix fc(f.rows(), f.cols()), wc(w.rows(), w.cols());
  double nf = 0.0, nw = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fc[i] = f[i] - mf;
    wc[i] = w[i] - mw;
    nf += fc[i] * fc[i];
    nw += wc[i] * wc[i];
  }
  if (nf == 0.0 || nw == 0.0) throw data_error("ncc: degenerate input, zero norm after mean removal");
  ComplexMatrix F = fft2(fc), Wf = fft2(wc);
  for (std::size_t i = 0; i < F.size(); ++i) F[i] = std::conj(F[i]) * Wf[i];
  F = ifft2(std::move(F));
  const double norm = std::sqrt(nf) * std::sqrt(nw);
  NccSurface s;
  s.values = RealMatrix(f.rows(), f.cols());
  std::size_t best = 0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    s.values[i] = F[i].real() / norm;
    if (s.values[i] > s.values[best]) best = i;
  }
  s.peak_row = best / f.cols() + 1;
  s.peak_col = best % f.cols() + 1;
  s.peak_value = s.values[best];
  return s;
}

/// PCE with the exclusion square wrapped circularly around the peak.
inline PceResult pce_detail(const NccSurface& s, const PceParams& p = {}) {
  const std::size_t R = s.values.rows(), C = s.values.cols();
  if (p.exclusion_half_width < 0) throw usage_error("exclusion half-width must be >= 0");
  const std::size_t side = 2 * static_cast<std::size_t>(p.exclusion_half_width) + 1;
  if (side * side >= R * C)
    throw usage_error("exclusion region " + std::to_string(side) + "x" + std::to_string(side) +
                      " does not fit a " + std::to_string(C) + "x" + std::to_string(R) + " surface");
  PceResult out;
  const std::size_t pr = p.aligned_mode ? 0 : s.peak_row - 1;
  const std::size_t pc = p.aligned_mode ? 0 : s.peak_col - 1;
  out.peak_row = pr + 1;
  out.peak_col = pc + 1;
  out.peak_value = s.values(pr, pc);

  // Circular distance along one axis, used to test membership in S. When the
  // side exceeds an axis length every index on that axis is inside.
  auto inside = [](std::size_t i, std::size_t centre, std::size_t n, std::size_t h) {
    const std::size_t d = (i + n - centre) % n;
    return std::min(d, n - d) <= h || 2 * h + 1 >= n;
  };
  const auto h = static_cast<std::size_t>(p.exclusion_half_width);
  double energy = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < R; ++r) {
    const bool rin = inside(r, pr, R, h);
    for (std::size_t c = 0; c < C; ++c) {
      if (rin && inside(c, pc, C, h)) continue;
      energy += s.values(r, c) * s.values(r, c);
      ++count;
    }
  }
  const double peak_sq = out.peak_value * out.peak_value;
  if (energy == 0.0 || count == 0) {
    out.pce = peak_sq == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    out.pce = peak_sq / (energy / static_cast<double>(count));
  }
  if (p.signed_mode && out.peak_value < 0.0) out.pce = -out.pce;
  return out;
}

inline double pce(const NccSurface& s, const PceParams& p = {}) { return pce_detail(s, p).pce; }

inline PceResult decide(double pce_value, double tau = kDefaultTau) {
  if (std::isnan(pce_value)) throw data_error("decide: PCE is NaN");
  if (std::isnan(tau)) throw usage_error("decide: threshold is NaN");
  PceResult r;
  r.pce = pce_value;
  r.threshold = tau;
  r.decision = pce_value > tau ? Decision::H1 : Decision::H0;
  return r;
}

inline PceResult match_planes(const RealMatrix& a, const RealMatrix& b, const PceParams& p, double tau) {
  PceResult r = pce_detail(ncc(a, b), p);
  const PceResult d = decide(r.pce, tau);
  r.threshold = d.threshold;
  r.decision = d.decision;
  return r;
}

/// Device linking between two per-video estimates. Aligned mode by default.
inline PceResult link_videos(const Fingerprint& a, const Fingerprint& b,
                             PceParams p = {5, true, false}, double tau = kDefaultTau) {
  return match_planes(a.plane, b.plane, p, tau);
}

}  // namespace prnu
