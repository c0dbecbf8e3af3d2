#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "prnu/error.hpp"
#include "prnu/fingerprint.hpp"
#include "prnu/frame_mask.hpp"
#include "prnu/h264/block_map.hpp"
#include "prnu/matrix.hpp"
#include "prnu/noise.hpp"

namespace prnu::sim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL)); }

/// Standard normal draws via Box-Muller over mt19937_64, so sequences do not
/// depend on the standard library's distribution implementation.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

struct SensorModel {
  std::size_t width = 0;
  std::size_t height = 0;
  RealMatrix K;             // multiplicative PRNU
  double psi_sigma = 1.0;   // temporal noise std
  std::uint64_t seed = 0;
};

inline SensorModel make_sensor(std::size_t width, std::size_t height, std::uint64_t seed, double k_std = 0.02,
                               double psi_sigma = 1.0) {
  if (width < ImagePlane::kMinDim || height < ImagePlane::kMinDim) throw usage_error("sensor smaller than 8x8");
  if (!(k_std >= 0.0) || !(psi_sigma >= 0.0)) throw usage_error("sensor noise parameters must be non-negative");
  SensorModel m{width, height, RealMatrix(height, width), psi_sigma, seed};
  Gaussian g(mix_seed(seed, 0x4b));
  for (double& v : m.K) v = k_std * g();
  return m;
}

/// I = scene + scene*K + N(0, psi^2), clipped to [0, 255].
inline ImagePlane synth_frame(const SensorModel& model, const ImagePlane& scene, std::uint64_t frame_index) {
  if (scene.width() != model.width || scene.height() != model.height)
    throw data_error("scene is " + std::to_string(scene.width()) + "x" + std::to_string(scene.height()) +
                     ", sensor is " + std::to_string(model.width) + "x" + std::to_string(model.height));
  Gaussian g(mix_seed(model.seed, frame_index + 1));
  RealMatrix out(model.height, model.width);
  const auto& s = scene.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = s[i] + s[i] * model.K[i];
    if (model.psi_sigma > 0.0) v += model.psi_sigma * g();
    out[i] = std::clamp(v, 0.0, 255.0);
  }
  return ImagePlane(std::move(out));
}

// ---- scenes ----------------------------------------------------------------

enum class Content { flat, natural };
enum class Motion { still, move, pan };

struct SceneParams {
  Content content = Content::natural;
  Motion motion = Motion::pan;
  std::uint64_t seed = 1;
};

/// Analytic scene: gratings and soft-edged blobs under an envelope that leaves
/// part of the frame nearly uniform. Frame t samples the same field shifted
/// (pan), shifted and slowly morphing (move), or unshifted (still).
class SceneGenerator {
 public:
  SceneGenerator(std::size_t width, std::size_t height, SceneParams p) : w_(width), h_(height), p_(p) {
    Gaussian g(mix_seed(p.seed, 0x5c));
    base_ = 90.0 + 80.0 * g.uniform();
    tilt_r_ = 30.0 * (g.uniform() - 0.5);
    tilt_c_ = 30.0 * (g.uniform() - 0.5);
    for (int i = 0; i < 8; ++i) {
      Wave wv;
      const double f = 0.03 + 0.25 * g.uniform();
      const double a = 2.0 * std::numbers::pi * g.uniform();
      wv.fr = f * std::sin(a);
      wv.fc = f * std::cos(a);
      wv.phase = 2.0 * std::numbers::pi * g.uniform();
      wv.amp = 6.0 + 18.0 * g.uniform();
      wv.drift = 0.05 * (g.uniform() - 0.5);
      waves_.push_back(wv);
    }
    for (int i = 0; i < 5; ++i) {
      Blob b;
      b.r = static_cast<double>(h_) * g.uniform();
      b.c = static_cast<double>(w_) * g.uniform();
      b.radius = 6.0 + 0.2 * static_cast<double>(std::min(w_, h_)) * g.uniform();
      b.amp = 50.0 * (g.uniform() - 0.5);
      blobs_.push_back(b);
    }
    env_r_ = 0.5 * static_cast<double>(h_) * g.uniform();
    env_c_ = 0.5 * static_cast<double>(w_) * g.uniform();
    env_fr_ = 1.0 / static_cast<double>(h_);
    env_fc_ = 1.0 / static_cast<double>(w_);
    const double a = 2.0 * std::numbers::pi * g.uniform();
    vr_ = 0.8 * std::sin(a) + 0.2;
    vc_ = 0.8 * std::cos(a) + 0.2;
  }

  ImagePlane frame(std::size_t t) const {
    const double td = static_cast<double>(t);
    double dr = 0.0, dc = 0.0;
    if (p_.motion != Motion::still) {
      dr = vr_ * td;
      dc = vc_ * td;
    }
    const double morph = p_.motion == Motion::move ? td : 0.0;
    RealMatrix out(h_, w_);
    for (std::size_t r = 0; r < h_; ++r) {
      for (std::size_t c = 0; c < w_; ++c) {
        const double y = static_cast<double>(r) + dr, x = static_cast<double>(c) + dc;
        double v = base_ + tilt_r_ * y / static_cast<double>(h_) + tilt_c_ * x / static_cast<double>(w_);
        if (p_.content == Content::natural) {
          const double env = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (env_fr_ * (y - env_r_) + env_fc_ * (x - env_c_)));
          double tex = 0.0;
          for (const auto& wv : waves_) tex += wv.amp * std::sin(wv.fr * y + wv.fc * x + wv.phase + wv.drift * morph);
          v += env * env * tex;
          for (const auto& b : blobs_) {
            const double d = std::hypot(y - b.r, x - b.c) - b.radius;
            v += b.amp / (1.0 + std::exp(d));
          }
        }
        out(r, c) = std::clamp(v, 16.0, 235.0);
      }
    }
    return ImagePlane(std::move(out));
  }

 private:
  struct Wave {
    double fr, fc, phase, amp, drift;
  };
  struct Blob {
    double r, c, radius, amp;
  };
  std::size_t w_, h_;
  SceneParams p_;
  double base_, tilt_r_, tilt_c_;
  double env_r_, env_c_, env_fr_, env_fc_;
  double vr_, vc_;
  std::vector<Wave> waves_;
  std::vector<Blob> blobs_;
};

// ---- codec -----------------------------------------------------------------

struct SimCodecParams {
  double qp = 8.0;  // quantizer step
  int block_size = 4;
  std::string gop = "IPPPPPPP";
  bool intra_copy_prediction = true;  // I blocks predicted from decoded neighbours; otherwise from 128
  std::uint64_t seed = 0;

  void validate() const {
    if (!(qp > 0.0) || !std::isfinite(qp)) throw usage_error("qp must be positive");
    if (block_size != 4 && block_size != 8) throw usage_error("block_size must be 4 or 8");
    if (gop.empty() || gop[0] != 'I') throw usage_error("gop must be nonempty and start with I");
    for (char c : gop)
      if (c != 'I' && c != 'P') throw usage_error(std::string("gop may only contain I and P, found '") + c + "'");
  }
  FrameType type_of(std::size_t frame) const { return gop[frame % gop.size()] == 'I' ? FrameType::I : FrameType::P; }
};

struct SimStream {
  std::vector<ImagePlane> decoded_frames;
  std::vector<ImagePlane> predictions;  // per-block predictor planes
  std::vector<FrameMask> ground_truth_masks;
  std::vector<h264::BlockResidualMap> residual_maps;
  RealMatrix true_K;
};

/// Orthonormal DCT-II basis, row k = frequency k.
inline RealMatrix dct_matrix(int n) {
  RealMatrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      m(k, i) = s * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
    }
  return m;
}

inline RealMatrix dct2(const RealMatrix& x, const RealMatrix& C) {
  const std::size_t n = C.rows();
  RealMatrix t(n, n), y(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += C(i, k) * x(k, j);
      t(i, j) = s;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += t(i, k) * C(j, k);
      y(i, j) = s;
    }
  return y;
}

inline RealMatrix idct2(const RealMatrix& y, const RealMatrix& C) {
  const std::size_t n = C.rows();
  RealMatrix t(n, n), x(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += C(k, i) * y(k, j);
      t(i, j) = s;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += t(i, k) * C(k, j);
      x(i, j) = s;
    }
  return x;
}

inline double quantize(double coeff, double step) {
  const double q = std::floor(std::abs(coeff) / step + 0.5);
  return coeff < 0 ? -q : q;
}

namespace detail {
inline RealMatrix pad_edge(const RealMatrix& m, std::size_t rows, std::size_t cols) {
  RealMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = m(std::min(r, m.rows() - 1), std::min(c, m.cols() - 1));
  return out;
}
inline RealMatrix crop_to(const RealMatrix& m, std::size_t rows, std::size_t cols) {
  RealMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = m(r, c);
  return out;
}
}  // namespace detail

/// Block-wise predict, transform, quantize and reconstruct. No deblocking and
/// no clipping of the reconstruction.
inline SimStream encode_decode(const std::vector<ImagePlane>& frames, const SimCodecParams& params) {
  params.validate();
  SimStream out;
  if (frames.empty()) return out;
  const std::size_t W = frames[0].width(), H = frames[0].height();
  const std::size_t n = static_cast<std::size_t>(params.block_size);
  const std::size_t PW = (W + n - 1) / n * n, PH = (H + n - 1) / n * n;
  const RealMatrix C = dct_matrix(params.block_size);
  RealMatrix prev;
  RealMatrix cur_blk(n, n);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const ImagePlane& frame = frames[f];
    if (frame.width() != W || frame.height() != H) throw data_error("frame " + std::to_string(f) + " changes dimensions");
    const FrameType type = params.type_of(f);
    const RealMatrix src = PW == W && PH == H ? frame.pixels() : detail::pad_edge(frame.pixels(), PH, PW);
    RealMatrix dec(PH, PW), pred(PH, PW);
    h264::BlockResidualMap map(f, type, static_cast<std::uint32_t>(W), static_cast<std::uint32_t>(H));
    FrameMask mask{type, Matrix<std::uint8_t>(H, W, 0)};
    for (std::size_t by = 0; by < PH; by += n) {
      for (std::size_t bx = 0; bx < PW; bx += n) {
        if (type == FrameType::P) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) pred(by + i, bx + j) = prev(by + i, bx + j);
        } else {
          double dc = 128.0;
          if (params.intra_copy_prediction) {
            double s = 0.0;
            std::size_t cnt = 0;
            if (by > 0)
              for (std::size_t j = 0; j < n; ++j, ++cnt) s += dec(by - 1, bx + j);
            if (bx > 0)
              for (std::size_t i = 0; i < n; ++i, ++cnt) s += dec(by + i, bx - 1);
            if (cnt) dc = s / static_cast<double>(cnt);
          }
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) pred(by + i, bx + j) = dc;
        }
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) cur_blk(i, j) = src(by + i, bx + j) - pred(by + i, bx + j);
        RealMatrix coef = dct2(cur_blk, C);
        std::uint16_t ac = 0;
        bool any = false;
        for (std::size_t k = 0; k < coef.size(); ++k) {
          const double q = quantize(coef[k], params.qp);
          if (q != 0.0) {
            any = true;
            if (k != 0) ++ac;
          }
          coef[k] = q * params.qp;
        }
        const RealMatrix rec = idct2(coef, C);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) dec(by + i, bx + j) = pred(by + i, bx + j) + rec(i, j);

        h264::BlockCell cell;
        cell.nonzero_ac_count = ac;
        cell.transform_size = n == 8 ? h264::TransformSize::T8x8 : h264::TransformSize::T4x4;
        cell.mb_type = type == FrameType::I ? h264::MbKind::Intra : any ? h264::MbKind::Inter : h264::MbKind::Skip;
        for (std::size_t gr = by / 4; gr < (by + n) / 4 && gr < map.grid_rows(); ++gr)
          for (std::size_t gc = bx / 4; gc < (bx + n) / 4 && gc < map.grid_cols(); ++gc) map.grid(gr, gc) = cell;
        if (ac)
          for (std::size_t i = by; i < std::min(by + n, H); ++i)
            for (std::size_t j = bx; j < std::min(bx + n, W); ++j) mask.bits(i, j) = 1;
      }
    }
    prev = dec;
    const bool padded = PW != W || PH != H;
    out.decoded_frames.emplace_back(padded ? detail::crop_to(dec, H, W) : std::move(dec));
    out.predictions.emplace_back(padded ? detail::crop_to(pred, H, W) : std::move(pred));
    out.ground_truth_masks.push_back(std::move(mask));
    out.residual_maps.push_back(std::move(map));
  }
  return out;
}

/// Scenes through the sensor, then through the codec.
inline SimStream simulate(const SensorModel& model, const SceneParams& scene, const SimCodecParams& params,
                          std::size_t n_frames, std::uint64_t frame_offset = 0) {
  const SceneGenerator gen(model.width, model.height, scene);
  std::vector<ImagePlane> frames;
  frames.reserve(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t)
    frames.push_back(synth_frame(model, gen.frame(t), mix_seed(scene.seed, frame_offset + t)));
  SimStream s = encode_decode(frames, params);
  s.true_K = model.K;
  return s;
}

// ---- survival experiment ---------------------------------------------------

struct SurvivalReport {
  double corr_masked = 0.0;    // (a) blocks with surviving AC
  double corr_unmasked = 0.0;  // (b) zero-AC blocks only
  double corr_all = 0.0;       // (c) every block, unmasked estimator
  double coverage = 0.0;
  std::size_t n_frames = 0;
};

inline SurvivalReport survival_experiment(const SensorModel& model, const SimCodecParams& params, std::size_t n_frames,
                                          const SceneParams& scene = {}, const DenoiseParams& denoise = {}) {
  if (n_frames < 20) throw usage_error("survival experiment needs at least 20 frames");
  const SimStream s = simulate(model, scene, params, n_frames);
  FingerprintAccumulator masked(model.width, model.height, true);
  FingerprintAccumulator zero(model.width, model.height, true);
  FingerprintAccumulator all(model.width, model.height, false);
  std::size_t ones = 0, total = 0;
  for (std::size_t k = 0; k < n_frames; ++k) {
    const ImagePlane& I = s.decoded_frames[k];
    const NoiseResidual w = extract_noise(I, denoise);
    const FrameMask& m = s.ground_truth_masks[k];
    FrameMask inv = m;
    for (auto& b : inv.bits) b = b ? 0 : 1;
    masked.accumulate(I, w, &m);
    zero.accumulate(I, w, &inv);
    all.accumulate(I, w);
    ones += m.ones();
    total += m.bits.size();
  }
  SurvivalReport r;
  r.n_frames = n_frames;
  r.coverage = static_cast<double>(ones) / static_cast<double>(total);
  r.corr_masked = correlation(finalize(masked).plane, model.K);
  r.corr_unmasked = correlation(finalize(zero).plane, model.K);
  r.corr_all = correlation(finalize(all).plane, model.K);
  return r;
}

}  // namespace prnu::sim
