#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>

#include "prnu/binary_io.hpp"
#include "prnu/checksum.hpp"
#include "prnu/frame_mask.hpp"
#include "prnu/matrix.hpp"
#include "prnu/noise.hpp"

namespace prnu {

/// Per-cell Neumaier-compensated running sum.
class CompensatedMatrix {
 public:
  CompensatedMatrix() = default;
  CompensatedMatrix(std::size_t rows, std::size_t cols) : sum_(rows, cols), comp_(rows, cols) {}

  void add(std::size_t i, double x) noexcept {
    double& s = sum_[i];
    const double t = s + x;
    if (std::abs(s) >= std::abs(x))
      comp_[i] += (s - t) + x;
    else
      comp_[i] += (x - t) + s;
    s = t;
  }

  void merge(const CompensatedMatrix& o) noexcept {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      add(i, o.sum_[i]);
      comp_[i] += o.comp_[i];
    }
  }

  double value(std::size_t i) const noexcept { return sum_[i] + comp_[i]; }
  RealMatrix values() const {
    RealMatrix out(sum_.rows(), sum_.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(i);
    return out;
  }
  std::size_t rows() const noexcept { return sum_.rows(); }
  std::size_t cols() const noexcept { return sum_.cols(); }
  std::size_t size() const noexcept { return sum_.size(); }

 private:
  RealMatrix sum_;
  RealMatrix comp_;
};

/// Running numerator sum W*I*M and denominator sum (I*M)^2. M is 1 everywhere
/// in unmasked mode.
class FingerprintAccumulator {
 public:
  FingerprintAccumulator(std::size_t width, std::size_t height, bool masked)
      : num_(height, width), den_(height, width), masked_(masked) {}

  std::size_t width() const noexcept { return num_.cols(); }
  std::size_t height() const noexcept { return num_.rows(); }
  bool masked() const noexcept { return masked_; }
  std::size_t frames_seen() const noexcept { return frames_; }

  void accumulate(const ImagePlane& frame, const NoiseResidual& residual,
                  const FrameMask* mask = nullptr) {
    if (masked_ != (mask != nullptr))
      throw usage_error(masked_ ? "masked accumulator requires a frame mask"
                                : "unmasked accumulator does not take a frame mask");
    check_dims(frame.width(), frame.height(), "frame");
    check_dims(residual.width(), residual.height(), "residual");
    if (mask) check_dims(mask->width(), mask->height(), "mask");
    const auto& I = frame.pixels();
    const auto& W = residual.plane;
    for (std::size_t i = 0; i < I.size(); ++i) {
      if (mask && !mask->bits[i]) continue;
      num_.add(i, W[i] * I[i]);
      den_.add(i, I[i] * I[i]);
    }
    ++frames_;
  }

  void merge(const FingerprintAccumulator& o) {
    if (o.masked_ != masked_) throw usage_error("cannot merge masked and unmasked accumulators");
    check_dims(o.width(), o.height(), "merged accumulator");
    num_.merge(o.num_);
    den_.merge(o.den_);
    frames_ += o.frames_;
  }

  RealMatrix numerator() const { return num_.values(); }
  RealMatrix denominator() const { return den_.values(); }

 private:
  void check_dims(std::size_t w, std::size_t h, const char* what) const {
    if (w != width() || h != height())
      throw data_error(std::string(what) + " is " + std::to_string(w) + "x" + std::to_string(h) +
                       ", accumulator is " + std::to_string(width()) + "x" + std::to_string(height()));
  }

  CompensatedMatrix num_;
  CompensatedMatrix den_;
  bool masked_;
  std::size_t frames_ = 0;
};

inline FingerprintAccumulator merge(FingerprintAccumulator a, const FingerprintAccumulator& b) {
  a.merge(b);
  return a;
}

struct Fingerprint {
  RealMatrix plane;
  bool masked = false;
  std::uint32_t frames_used = 0;
  std::string source_label;
  std::size_t guarded_pixels = 0;  // unmasked mode: cells clamped by the epsilon guard

  std::size_t width() const noexcept { return plane.cols(); }
  std::size_t height() const noexcept { return plane.rows(); }
};

inline constexpr double kDenominatorEpsilon = 1e-12;

/// Numerator over denominator (guarded) without post-processing.
inline Fingerprint finalize_raw(const FingerprintAccumulator& acc) {
  if (acc.frames_seen() == 0) throw data_error("cannot finalize an empty accumulator");
  Fingerprint f;
  f.masked = acc.masked();
  f.frames_used = static_cast<std::uint32_t>(acc.frames_seen());
  const RealMatrix num = acc.numerator();
  const RealMatrix den = acc.denominator();
  f.plane = RealMatrix(num.rows(), num.cols());
  for (std::size_t i = 0; i < num.size(); ++i) {
    if (f.masked) {
      f.plane[i] = num[i] / (den[i] + 1.0);
    } else {
      double d = den[i];
      if (d < kDenominatorEpsilon) {
        d = kDenominatorEpsilon;
        ++f.guarded_pixels;
      }
      f.plane[i] = num[i] / d;
    }
  }
  return f;
}

inline Fingerprint finalize(const FingerprintAccumulator& acc, bool post_process = true) {
  Fingerprint f = finalize_raw(acc);
  if (post_process) f.plane = postprocess(std::move(f.plane));
  return f;
}

// ---- PRNUFP1 -------------------------------------------------------------

inline constexpr char kFingerprintMagic[8] = {'P', 'R', 'N', 'U', 'F', 'P', '1', '\0'};

inline Bytes encode_fingerprint(const Fingerprint& f) {
  ByteWriter w;
  w.raw(kFingerprintMagic, 8);
  w.u32(static_cast<std::uint32_t>(f.width()));
  w.u32(static_cast<std::uint32_t>(f.height()));
  w.u8(f.masked ? 1 : 0);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(f.frames_used);
  for (double v : f.plane) w.f32(static_cast<float>(v));
  w.u64(xxh64(w.bytes()));
  return std::move(w.bytes());
}

inline Fingerprint decode_fingerprint(std::span<const std::uint8_t> bytes, const std::string& label = "fingerprint") {
  ByteReader r(bytes, label);
  auto magic = r.take(8, "magic");
  if (std::memcmp(magic.data(), kFingerprintMagic, 8) != 0) throw FormatError(label + ": bad magic, not a PRNUFP1 file");
  const std::uint32_t width = r.u32("width");
  const std::uint32_t height = r.u32("height");
  const std::uint8_t masked = r.u8("masked flag");
  r.take(3, "reserved bytes");
  const std::uint32_t frames = r.u32("frames_used");
  if (masked > 1) throw FormatError(label + ": masked flag must be 0 or 1");
  if (width < ImagePlane::kMinDim || height < ImagePlane::kMinDim)
    throw FormatError(label + ": dimensions " + std::to_string(width) + "x" + std::to_string(height) + " below 8x8");
  const std::uint64_t cells = std::uint64_t{width} * height;
  if (cells > r.remaining() / 4) {
    const std::uint64_t end = cells > (std::uint64_t{1} << 60) ? std::numeric_limits<std::uint64_t>::max()
                                                               : r.offset() + cells * 4 + 8;
    throw FormatError(label + ": truncated sample data, missing bytes [" + std::to_string(bytes.size()) + ", " +
                          std::to_string(end) + ")",
                      bytes.size(), end);
  }
  std::vector<double> data(cells);
  for (auto& v : data) v = r.f32("sample data");
  const std::size_t payload_end = r.offset();
  const std::uint64_t stored = r.u64("checksum");
  if (r.remaining() != 0) throw FormatError(label + ": " + std::to_string(r.remaining()) + " trailing bytes");
  if (stored != xxh64(bytes.first(payload_end))) throw FormatError(label + ": checksum mismatch");
  Fingerprint f;
  f.plane = RealMatrix(height, width, std::move(data));
  f.masked = masked == 1;
  f.frames_used = frames;
  return f;
}

inline void save_fingerprint(const Fingerprint& f, const std::filesystem::path& path) {
  write_file_atomic(path, encode_fingerprint(f));
}

inline Fingerprint load_fingerprint(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  Fingerprint f = decode_fingerprint(bytes, path.string());
  f.source_label = path.filename().string();
  return f;
}

}  // namespace prnu
