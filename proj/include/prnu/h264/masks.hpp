#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "prnu/binary_io.hpp"
#include "prnu/checksum.hpp"
#include "prnu/frame_mask.hpp"
#include "prnu/h264/block_map.hpp"

namespace prnu::h264 {

/// M_k(r, c) = 1 iff the 4x4 cell covering (r, c) has a nonzero AC count.
inline FrameMask build_mask(const BlockResidualMap& m) {
  FrameMask f;
  f.frame_type = m.frame_type;
  f.bits = Matrix<std::uint8_t>(m.height, m.width, 0);
  for (std::size_t r = 0; r < m.height; ++r)
    for (std::size_t c = 0; c < m.width; ++c) f.bits(r, c) = m.count(r / 4, c / 4) > 0 ? 1 : 0;
  return f;
}

inline std::vector<FrameMask> build_masks(const std::vector<BlockResidualMap>& maps) {
  std::vector<FrameMask> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.push_back(build_mask(m));
  return out;
}

struct MaskStats {
  std::vector<double> per_frame;  // fraction of ones per frame
  double stream = 0.0;            // fraction of ones over all frames
  double by_type[3] = {0, 0, 0};  // I, P, B mean coverage (0 when the type is absent)
  std::size_t count_by_type[3] = {0, 0, 0};
};

inline int type_slot(FrameType t) { return t == FrameType::I ? 0 : t == FrameType::P ? 1 : 2; }

inline MaskStats mask_stats(const std::vector<FrameMask>& masks) {
  MaskStats s;
  std::size_t ones = 0, total = 0;
  for (const auto& m : masks) {
    const std::size_t n = m.ones();
    ones += n;
    total += m.bits.size();
    s.per_frame.push_back(m.coverage());
    const int k = type_slot(m.frame_type);
    s.by_type[k] += m.coverage();
    ++s.count_by_type[k];
  }
  for (int k = 0; k < 3; ++k)
    if (s.count_by_type[k]) s.by_type[k] /= static_cast<double>(s.count_by_type[k]);
  s.stream = total ? static_cast<double>(ones) / static_cast<double>(total) : 0.0;
  return s;
}

inline constexpr char kMaskMagic[8] = {'P', 'R', 'N', 'U', 'M', 'K', '1', '\0'};

/// PRNUMK1: rows are packed MSB-first, each row padded to a whole byte.
inline Bytes encode_masks(const std::vector<FrameMask>& masks) {
  if (masks.empty()) throw usage_error("cannot write a mask file with no frames");
  const std::size_t w = masks[0].width(), h = masks[0].height();
  ByteWriter out;
  out.raw(kMaskMagic, 8);
  out.u32(static_cast<std::uint32_t>(w));
  out.u32(static_cast<std::uint32_t>(h));
  out.u32(static_cast<std::uint32_t>(masks.size()));
  const std::size_t row_bytes = (w + 7) / 8;
  std::vector<std::uint8_t> row(row_bytes);
  for (const auto& m : masks) {
    if (m.width() != w || m.height() != h) throw data_error("masks differ in dimensions");
    out.u8(static_cast<std::uint8_t>(to_char(m.frame_type)));
    for (std::size_t r = 0; r < h; ++r) {
      std::fill(row.begin(), row.end(), 0);
      for (std::size_t c = 0; c < w; ++c)
        if (m.bits(r, c)) row[c / 8] |= static_cast<std::uint8_t>(0x80u >> (c % 8));
      out.raw(reinterpret_cast<const char*>(row.data()), row.size());
    }
  }
  out.u64(xxh64(out.bytes()));
  return std::move(out.bytes());
}

inline std::vector<FrameMask> decode_masks(std::span<const std::uint8_t> bytes, const std::string& label = "mask file") {
  ByteReader r(bytes, label);
  auto magic = r.take(8, "magic");
  if (std::memcmp(magic.data(), kMaskMagic, 8) != 0) throw FormatError(label + ": bad magic, not a PRNUMK1 file");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t h = r.u32("height");
  const std::uint32_t n = r.u32("frame_count");
  if (w == 0 || h == 0) throw FormatError(label + ": zero mask dimensions");
  const std::uint64_t row_bytes = (std::uint64_t{w} + 7) / 8;
  const std::uint64_t frame_bytes = 1 + row_bytes * h;
  const bool short_payload =
      r.remaining() < 8 || (n != 0 && frame_bytes > (r.remaining() - 8) / n);
  if (short_payload) {
    const long double want = static_cast<long double>(frame_bytes) * n + 8 + r.offset();
    const std::uint64_t end = want > 1e18L ? std::numeric_limits<std::uint64_t>::max()
                                           : static_cast<std::uint64_t>(want);
    throw FormatError(label + ": truncated mask data, missing bytes [" + std::to_string(bytes.size()) + ", " +
                          std::to_string(end) + ")",
                      bytes.size(), end);
  }
  std::vector<FrameMask> out;
  out.reserve(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    FrameMask m;
    const auto t = static_cast<char>(r.u8("frame type"));
    if (t != 'I' && t != 'P' && t != 'B')
      throw FormatError(label + ": frame " + std::to_string(k) + " has invalid type byte");
    m.frame_type = frame_type_from_char(t);
    m.bits = Matrix<std::uint8_t>(h, w, 0);
    for (std::uint32_t row = 0; row < h; ++row) {
      const auto packed = r.take(static_cast<std::size_t>(row_bytes), "mask row");
      for (std::uint32_t c = 0; c < w; ++c) m.bits(row, c) = (packed[c / 8] >> (7 - c % 8)) & 1;
      for (std::uint32_t c = w; c < row_bytes * 8; ++c)
        if ((packed[c / 8] >> (7 - c % 8)) & 1) throw FormatError(label + ": nonzero row padding bits");
    }
    out.push_back(std::move(m));
  }
  const std::size_t payload_end = r.offset();
  const std::uint64_t stored = r.u64("checksum");
  if (r.remaining() != 0) throw FormatError(label + ": " + std::to_string(r.remaining()) + " trailing bytes");
  if (stored != xxh64(bytes.first(payload_end))) throw FormatError(label + ": checksum mismatch");
  return out;
}

inline void save_masks(const std::vector<FrameMask>& masks, const std::filesystem::path& path) {
  write_file_atomic(path, encode_masks(masks));
}

inline std::vector<FrameMask> load_masks(const std::filesystem::path& path) {
  return decode_masks(read_file(path), path.string());
}

}  // namespace prnu::h264
