#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prnu/error.hpp"

namespace prnu::h264 {

/// Structured stream failure. `code` is a stable machine-readable tag
/// (e.g. "syntax", "unsupported_entropy", "missing_box").
class StreamError : public Error {
 public:
  static constexpr std::uint64_t kNoOffset = ~std::uint64_t{0};

  StreamError(ErrorKind kind, std::string code, const std::string& what, std::uint64_t bit_offset = kNoOffset,
              long mb_addr = -1)
      : Error(kind, decorate(code, what, bit_offset, mb_addr)),
        code_(std::move(code)),
        bit_offset_(bit_offset),
        mb_addr_(mb_addr) {}

  const std::string& code() const noexcept { return code_; }
  std::uint64_t bit_offset() const noexcept { return bit_offset_; }
  long mb_addr() const noexcept { return mb_addr_; }

 private:
  static std::string decorate(const std::string& code, const std::string& what, std::uint64_t bit, long mb) {
    std::string s = code + ": " + what;
    if (bit != kNoOffset) s += " (bit offset " + std::to_string(bit) + ")";
    if (mb >= 0) s += " (macroblock " + std::to_string(mb) + ")";
    return s;
  }

  std::string code_;
  std::uint64_t bit_offset_;
  long mb_addr_;
};

inline StreamError syntax_error(const std::string& what, std::uint64_t bit = StreamError::kNoOffset, long mb = -1) {
  return StreamError(ErrorKind::data, "syntax", what, bit, mb);
}

inline StreamError unsupported(const std::string& what) {
  return StreamError(ErrorKind::unsupported, "unsupported_feature", what);
}

/// MSB-first reader over an RBSP (emulation prevention already removed).
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> rbsp, std::uint64_t base_bit = 0)
      : data_(rbsp), base_(base_bit) {
    // Position just past the rbsp_stop_one_bit marks the end of payload.
    std::size_t i = data_.size();
    while (i > 0 && data_[i - 1] == 0) --i;
    if (i == 0) {
      stop_bit_ = 0;
    } else {
      int tz = 0;
      while (((data_[i - 1] >> tz) & 1) == 0) ++tz;
      stop_bit_ = (i - 1) * 8 + (7 - tz);
    }
  }

  std::uint64_t position() const noexcept { return pos_; }
  std::uint64_t absolute_position() const noexcept { return base_ + pos_; }
  std::uint64_t size_bits() const noexcept { return data_.size() * 8; }
  bool byte_aligned() const noexcept { return pos_ % 8 == 0; }

  std::uint32_t bit() {
    if (pos_ >= size_bits()) throw syntax_error("read past end of NAL unit", absolute_position());
    const std::uint32_t b = (data_[pos_ / 8] >> (7 - pos_ % 8)) & 1;
    ++pos_;
    return b;
  }

  std::uint32_t u(int n) {
    if (n == 0) return 0;
    if (pos_ + static_cast<std::uint64_t>(n) > size_bits())
      throw syntax_error("read past end of NAL unit", absolute_position());
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) {
      v = (v << 1) | ((data_[pos_ / 8] >> (7 - pos_ % 8)) & 1);
      ++pos_;
    }
    return v;
  }

  bool flag() { return bit() != 0; }

  std::uint32_t ue() {
    const std::uint64_t start = absolute_position();
    int lz = 0;
    while (bit() == 0) {
      if (++lz > 31) throw syntax_error("exp-Golomb code longer than 32 bits", start);
    }
    const std::uint64_t v = (std::uint64_t{1} << lz) - 1 + u(lz);
    if (v > 0xfffffffeULL) throw syntax_error("exp-Golomb value out of range", start);
    return static_cast<std::uint32_t>(v);
  }

  std::int32_t se() {
    const std::uint32_t k = ue();
    const auto mag = static_cast<std::int64_t>((static_cast<std::uint64_t>(k) + 1) / 2);
    return static_cast<std::int32_t>((k & 1) ? mag : -mag);
  }

  /// te(v) with range > 0.
  std::uint32_t te(std::uint32_t range) {
    if (range == 1) return bit() ? 0 : 1;
    return ue();
  }

  bool more_rbsp_data() const noexcept { return pos_ < stop_bit_; }

  void skip(std::uint64_t n) {
    if (pos_ + n > size_bits()) throw syntax_error("read past end of NAL unit", absolute_position());
    pos_ += n;
  }

  /// ue() bounded to [0, max]; larger values are a syntax error.
  std::uint32_t ue_max(std::uint32_t max, const char* what) {
    const std::uint64_t at = absolute_position();
    const std::uint32_t v = ue();
    if (v > max) throw syntax_error(std::string(what) + " = " + std::to_string(v) + " exceeds " + std::to_string(max), at);
    return v;
  }

  std::int32_t se_range(std::int32_t lo, std::int32_t hi, const char* what) {
    const std::uint64_t at = absolute_position();
    const std::int32_t v = se();
    if (v < lo || v > hi) throw syntax_error(std::string(what) + " = " + std::to_string(v) + " out of range", at);
    return v;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::uint64_t base_;
  std::uint64_t pos_ = 0;
  std::uint64_t stop_bit_ = 0;
};

struct NalUnit {
  int type = 0;
  int ref_idc = 0;
  std::vector<std::uint8_t> rbsp;  // payload after the 1-byte header, EPB removed
  std::uint64_t stream_offset = 0; // byte offset of the NAL header in the source
};

/// Removes emulation_prevention_three_byte from a NAL payload.
inline std::vector<std::uint8_t> unescape_rbsp(std::span<const std::uint8_t> nal) {
  std::vector<std::uint8_t> out;
  out.reserve(nal.size());
  int zeros = 0;
  for (std::uint8_t b : nal) {
    if (zeros >= 2 && b == 3) {
      zeros = 0;
      continue;
    }
    out.push_back(b);
    zeros = b == 0 ? zeros + 1 : 0;
  }
  return out;
}

inline NalUnit make_nal(std::span<const std::uint8_t> nal, std::uint64_t offset) {
  if (nal.empty()) throw syntax_error("empty NAL unit", offset * 8);
  if (nal[0] & 0x80) throw syntax_error("forbidden_zero_bit set", offset * 8);
  NalUnit u;
  u.type = nal[0] & 0x1f;
  u.ref_idc = (nal[0] >> 5) & 3;
  u.rbsp = unescape_rbsp(nal.subspan(1));
  u.stream_offset = offset;
  return u;
}

inline bool starts_with_start_code(std::span<const std::uint8_t> b) {
  if (b.size() >= 3 && b[0] == 0 && b[1] == 0 && b[2] == 1) return true;
  return b.size() >= 4 && b[0] == 0 && b[1] == 0 && b[2] == 0 && b[3] == 1;
}

/// Splits an Annex-B byte stream at start codes.
inline std::vector<NalUnit> split_annexb(std::span<const std::uint8_t> b) {
  std::vector<NalUnit> out;
  const std::size_t n = b.size();
  std::size_t i = 0;
  // Locate the first start code; leading zero bytes are allowed.
  while (i + 2 < n && !(b[i] == 0 && b[i + 1] == 0 && b[i + 2] == 1)) {
    if (b[i] != 0) throw StreamError(ErrorKind::data, "syntax", "no Annex-B start code at stream head", i * 8);
    ++i;
  }
  if (i + 2 >= n) throw StreamError(ErrorKind::data, "eof", "no NAL units in stream");
  i += 3;
  while (i < n) {
    std::size_t j = i;
    std::size_t end = n;
    while (j + 2 < n) {
      if (b[j] == 0 && b[j + 1] == 0 && b[j + 2] <= 1) {
        end = j;
        break;
      }
      ++j;
    }
    std::size_t stop = end;
    while (stop > i && b[stop - 1] == 0) --stop;  // trailing_zero_8bits
    if (stop > i) out.push_back(make_nal(b.subspan(i, stop - i), i));
    if (end == n) break;
    // Skip zeros up to the next start code prefix 00 00 01.
    std::size_t k = end;
    while (k + 2 < n && !(b[k] == 0 && b[k + 1] == 0 && b[k + 2] == 1)) {
      if (b[k] != 0) throw syntax_error("zero run inside NAL unit without start code", k * 8);
      ++k;
    }
    if (k + 2 >= n) {
      for (; k < n; ++k)
        if (b[k] != 0) throw syntax_error("truncated start code at stream end", k * 8);
      break;
    }
    i = k + 3;
  }
  return out;
}

}  // namespace prnu::h264
