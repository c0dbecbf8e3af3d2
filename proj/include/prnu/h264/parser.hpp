#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prnu/h264/bitstream.hpp"
#include "prnu/h264/block_map.hpp"
#include "prnu/h264/cavlc.hpp"
#include "prnu/h264/params.hpp"

namespace prnu::h264 {

enum class Profile { Baseline, ConstrainedBaseline, Main, High };
enum class EntropyMode { CAVLC, CABAC };
enum class Container { AnnexB, MP4 };

inline const char* to_string(Profile p) {
  switch (p) {
    case Profile::Baseline: return "Baseline";
    case Profile::ConstrainedBaseline: return "ConstrainedBaseline";
    case Profile::Main: return "Main";
    case Profile::High: return "High";
  }
  return "?";
}
inline const char* to_string(EntropyMode e) { return e == EntropyMode::CAVLC ? "CAVLC" : "CABAC"; }
inline const char* to_string(Container c) { return c == Container::AnnexB ? "AnnexB" : "MP4"; }

struct StreamInfo {
  Profile profile = Profile::Baseline;
  EntropyMode entropy_mode = EntropyMode::CAVLC;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::size_t frame_count = 0;
  Container container = Container::AnnexB;
};

inline Profile profile_from_sps(const Sps& s) {
  if (s.profile_idc == 66) return (s.constraint_flags & 0x40) ? Profile::ConstrainedBaseline : Profile::Baseline;
  if (s.profile_idc == 77 || s.profile_idc == 88) return Profile::Main;
  return Profile::High;
}

namespace detail {

// luma4x4BlkIdx -> raster index (y * 4 + x) inside a macroblock; self-inverse.
inline constexpr int kBlkToRaster[16] = {0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15};

enum PredFlags : int { kL0 = 1, kL1 = 2, kBi = 3, kDirect = 4 };

struct MbTypeInfo {
  enum Kind { INxN, I16x16, IPCM, Inter } kind = Inter;
  int num_parts = 1;
  int pred[2] = {0, 0};
  bool eight_by_eight = false;  // P_8x8, P_8x8ref0, B_8x8
  bool ref0 = false;            // P_8x8ref0
  bool direct16 = false;        // B_Direct_16x16
  int cbp_luma = 0;
  int cbp_chroma = 0;
};

inline MbTypeInfo intra_mb_type(std::uint32_t t) {
  MbTypeInfo m;
  if (t == 0) {
    m.kind = MbTypeInfo::INxN;
  } else if (t == 25) {
    m.kind = MbTypeInfo::IPCM;
  } else {
    m.kind = MbTypeInfo::I16x16;
    m.cbp_chroma = static_cast<int>(((t - 1) / 4) % 3);
    m.cbp_luma = t >= 13 ? 15 : 0;
  }
  return m;
}

inline MbTypeInfo p_mb_type(std::uint32_t t) {
  if (t >= 5) return intra_mb_type(t - 5);
  MbTypeInfo m;
  m.pred[0] = m.pred[1] = kL0;
  switch (t) {
    case 0: m.num_parts = 1; break;
    case 1: case 2: m.num_parts = 2; break;
    default: m.num_parts = 4; m.eight_by_eight = true; m.ref0 = t == 4; break;
  }
  return m;
}

inline MbTypeInfo b_mb_type(std::uint32_t t) {
  if (t >= 23) return intra_mb_type(t - 23);
  MbTypeInfo m;
  if (t == 0) {
    m.direct16 = true;
    m.pred[0] = kDirect;
  } else if (t <= 3) {
    m.pred[0] = static_cast<int>(t);  // 1 L0, 2 L1, 3 Bi
  } else if (t <= 21) {
    static constexpr int kPairs[9][2] = {{kL0, kL0}, {kL1, kL1}, {kL0, kL1}, {kL1, kL0}, {kL0, kBi},
                                         {kL1, kBi}, {kBi, kL0}, {kBi, kL1}, {kBi, kBi}};
    m.num_parts = 2;
    m.pred[0] = kPairs[(t - 4) / 2][0];
    m.pred[1] = kPairs[(t - 4) / 2][1];
  } else {
    m.num_parts = 4;
    m.eight_by_eight = true;
  }
  return m;
}

struct SubMbInfo {
  int num_parts;
  int pred;  // kL0/kL1/kBi, or kDirect
};

inline SubMbInfo p_sub_mb_type(std::uint32_t t) {
  static constexpr int kParts[4] = {1, 2, 2, 4};
  return {kParts[t], kL0};
}

inline SubMbInfo b_sub_mb_type(std::uint32_t t) {
  if (t == 0) return {4, kDirect};
  if (t <= 3) return {1, static_cast<int>(t)};
  if (t <= 9) {
    static constexpr int kPred[6] = {kL0, kL0, kL1, kL1, kBi, kBi};
    return {2, kPred[t - 4]};
  }
  return {4, static_cast<int>(t - 9)};
}

/// Residual-syntax state for one picture.
struct PictureState {
  Sps sps;
  std::uint32_t mb_w = 0, mb_h = 0;
  std::vector<int> mb_slice;           // slice number owning each MB, -1 = not decoded
  std::vector<MbKind> mb_kind;
  std::vector<std::uint8_t> mb_t8;
  std::vector<std::uint8_t> luma_tc;   // TotalCoeff per 4x4 luma block, coded grid
  std::vector<std::uint8_t> chroma_tc[2];
  std::vector<std::uint16_t> ac;       // nonzero AC per 4x4 luma block, coded grid
  std::uint32_t decoded = 0;
  int slice_count = 0;
  bool has_p = false, has_b = false;

  explicit PictureState(const Sps& s)
      : sps(s),
        mb_w(s.width_in_mbs),
        mb_h(s.height_in_mbs()),
        mb_slice(s.pic_size_in_mbs(), -1),
        mb_kind(s.pic_size_in_mbs(), MbKind::Skip),
        mb_t8(s.pic_size_in_mbs(), 0),
        luma_tc(static_cast<std::size_t>(s.pic_size_in_mbs()) * 16, 0),
        ac(static_cast<std::size_t>(s.pic_size_in_mbs()) * 16, 0) {
    chroma_tc[0].assign(static_cast<std::size_t>(s.pic_size_in_mbs()) * 4, 0);
    chroma_tc[1].assign(static_cast<std::size_t>(s.pic_size_in_mbs()) * 4, 0);
  }

  std::size_t luma_index(std::uint32_t mb, int x, int y) const {
    return (static_cast<std::size_t>(mb / mb_w) * 4 + y) * (mb_w * 4) + (mb % mb_w) * 4 + x;
  }
  std::size_t chroma_index(std::uint32_t mb, int x, int y) const {
    return (static_cast<std::size_t>(mb / mb_w) * 2 + y) * (mb_w * 2) + (mb % mb_w) * 2 + x;
  }

  // nC from the left and upper neighbours of block (x, y) in macroblock mb.
  // `width` is blocks per MB row: 4 for luma, 2 for 4:2:0 chroma.
  int predict_nc(const std::vector<std::uint8_t>& tc, std::uint32_t mb, int x, int y, int width, int slice) const {
    const std::uint32_t mbx = mb % mb_w;
    const std::size_t stride = static_cast<std::size_t>(mb_w) * width;
    const std::size_t row = static_cast<std::size_t>(mb / mb_w) * width + y;
    const std::size_t col = static_cast<std::size_t>(mbx) * width + x;
    int n = 0, avail = 0;
    if (x > 0 || (mbx > 0 && mb_slice[mb - 1] == slice)) {
      n += tc[row * stride + col - 1];
      ++avail;
    }
    if (y > 0 || (mb >= mb_w && mb_slice[mb - mb_w] == slice)) {
      n += tc[(row - 1) * stride + col];
      ++avail;
    }
    return avail == 2 ? (n + 1) >> 1 : n;
  }
};

class SliceDataParser {
 public:
  SliceDataParser(PictureState& pic, const Pps& pps, const SliceHeader& h, BitReader& br, int slice_num)
      : pic_(pic), pps_(pps), h_(h), br_(br), slice_(slice_num) {}

  void run() {
    const std::uint32_t size = pic_.sps.pic_size_in_mbs();
    std::uint32_t addr = h_.first_mb;
    bool more = true;
    do {
      if (h_.type != SliceType::I) {
        const std::uint64_t at = br_.absolute_position();
        const std::uint32_t run = br_.ue();
        if (run > size - addr) throw syntax_error("mb_skip_run runs past end of picture", at, addr);
        for (std::uint32_t i = 0; i < run; ++i) mark_skip(addr++);
        if (run > 0) more = br_.more_rbsp_data();
      }
      if (more) {
        if (addr >= size) throw syntax_error("macroblock address beyond picture", br_.absolute_position(), addr);
        macroblock(addr);
        ++addr;
      }
      more = br_.more_rbsp_data();
    } while (more);
  }

 private:
  void claim(std::uint32_t addr) {
    if (pic_.mb_slice[addr] != -1) throw syntax_error("macroblock decoded twice", br_.absolute_position(), addr);
    pic_.mb_slice[addr] = slice_;
    ++pic_.decoded;
  }

  void mark_skip(std::uint32_t addr) {
    claim(addr);
    pic_.mb_kind[addr] = MbKind::Skip;
  }

  std::uint32_t read_ue_max(std::uint32_t max, const char* what, std::uint32_t mb) {
    const std::uint64_t at = br_.absolute_position();
    const std::uint32_t v = br_.ue();
    if (v > max) throw syntax_error(std::string(what) + " = " + std::to_string(v) + " out of range", at, mb);
    return v;
  }

  void read_ref_idx(std::uint32_t num_active, std::uint32_t mb) {
    if (num_active <= 1) return;
    const std::uint64_t at = br_.absolute_position();
    const std::uint32_t v = br_.te(num_active - 1);
    if (v >= num_active) throw syntax_error("ref_idx out of range", at, mb);
  }

  void read_mvd() {
    br_.se();
    br_.se();
  }

  void macroblock(std::uint32_t addr) {
    claim(addr);
    const std::uint32_t max_type = h_.type == SliceType::I ? 25 : h_.type == SliceType::P ? 30 : 48;
    const std::uint32_t t = read_ue_max(max_type, "mb_type", addr);
    const MbTypeInfo m = h_.type == SliceType::I ? intra_mb_type(t) : h_.type == SliceType::P ? p_mb_type(t)
                                                                                              : b_mb_type(t);
    const std::uint32_t cat = pic_.sps.chroma_array_type();

    if (m.kind == MbTypeInfo::IPCM) {
      while (!br_.byte_aligned())
        if (br_.bit() != 0) throw syntax_error("pcm_alignment_zero_bit is not zero", br_.absolute_position(), addr);
      std::uint64_t bits = 256ull * pic_.sps.bit_depth_luma;
      if (cat != 0) bits += 2ull * 64 * pic_.sps.bit_depth_chroma;
      br_.skip(bits);
      pic_.mb_kind[addr] = MbKind::PCM;
      for (int b = 0; b < 16; ++b) {
        const std::size_t i = pic_.luma_index(addr, b % 4, b / 4);
        pic_.luma_tc[i] = 16;
        pic_.ac[i] = kPcmAcCount;
      }
      for (int c = 0; c < 2; ++c)
        for (int b = 0; b < 4; ++b) pic_.chroma_tc[c][pic_.chroma_index(addr, b % 2, b / 2)] = 16;
      return;
    }

    const bool intra = m.kind != MbTypeInfo::Inter;
    pic_.mb_kind[addr] = intra ? MbKind::Intra : MbKind::Inter;
    bool t8 = false;
    bool no_sub_lt_8x8 = true;
    int cbp_luma = m.cbp_luma, cbp_chroma = m.cbp_chroma;

    if (m.eight_by_eight) {
      SubMbInfo sub[4];
      const bool is_b = h_.type == SliceType::B;
      for (auto& s : sub) {
        const std::uint32_t st = read_ue_max(is_b ? 12 : 3, "sub_mb_type", addr);
        s = is_b ? b_sub_mb_type(st) : p_sub_mb_type(st);
      }
      for (const auto& s : sub) {
        if (s.pred == kDirect) {
          if (!pic_.sps.direct_8x8_inference) no_sub_lt_8x8 = false;
        } else if (s.num_parts > 1) {
          no_sub_lt_8x8 = false;
        }
      }
      for (const auto& s : sub)
        if (!m.ref0 && s.pred != kDirect && (s.pred & kL0)) read_ref_idx(h_.num_ref_idx_l0, addr);
      for (const auto& s : sub)
        if (s.pred != kDirect && (s.pred & kL1)) read_ref_idx(h_.num_ref_idx_l1, addr);
      for (const auto& s : sub)
        if (s.pred != kDirect && (s.pred & kL0))
          for (int p = 0; p < s.num_parts; ++p) read_mvd();
      for (const auto& s : sub)
        if (s.pred != kDirect && (s.pred & kL1))
          for (int p = 0; p < s.num_parts; ++p) read_mvd();
    } else {
      if (pps_.transform_8x8_mode && m.kind == MbTypeInfo::INxN) t8 = br_.flag();
      if (intra) {
        if (m.kind == MbTypeInfo::INxN) {
          const int n = t8 ? 4 : 16;
          for (int i = 0; i < n; ++i)
            if (!br_.flag()) br_.u(3);
        }
        if (cat == 1 || cat == 2) read_ue_max(3, "intra_chroma_pred_mode", addr);
      } else if (!m.direct16) {
        for (int p = 0; p < m.num_parts; ++p)
          if (m.pred[p] & kL0) read_ref_idx(h_.num_ref_idx_l0, addr);
        for (int p = 0; p < m.num_parts; ++p)
          if (m.pred[p] & kL1) read_ref_idx(h_.num_ref_idx_l1, addr);
        for (int p = 0; p < m.num_parts; ++p)
          if (m.pred[p] & kL0) read_mvd();
        for (int p = 0; p < m.num_parts; ++p)
          if (m.pred[p] & kL1) read_mvd();
      }
    }

    if (m.kind != MbTypeInfo::I16x16) {
      const bool gray = cat == 0 || cat == 3;
      const std::uint32_t code = read_ue_max(gray ? 15 : 47, "coded_block_pattern", addr);
      const int cbp = intra ? (gray ? kGolombToIntraCbpGray[code] : kGolombToIntraCbp[code])
                            : (gray ? kGolombToInterCbpGray[code] : kGolombToInterCbp[code]);
      cbp_luma = cbp % 16;
      cbp_chroma = cbp / 16;
      if (cbp_luma > 0 && pps_.transform_8x8_mode && m.kind != MbTypeInfo::INxN && no_sub_lt_8x8 &&
          (!m.direct16 || pic_.sps.direct_8x8_inference))
        t8 = br_.flag();
    }
    pic_.mb_t8[addr] = t8 ? 1 : 0;

    if (cbp_luma > 0 || cbp_chroma > 0 || m.kind == MbTypeInfo::I16x16) {
      const int range = 26 + 3 * static_cast<int>(pic_.sps.bit_depth_luma - 8);
      const std::uint64_t at = br_.absolute_position();
      const int dq = br_.se();
      if (dq < -range || dq > range - 1) throw syntax_error("mb_qp_delta out of range", at, addr);
      residual(addr, m.kind == MbTypeInfo::I16x16, t8, cbp_luma, cbp_chroma);
    }
  }

  ResidualBlock block(const std::vector<std::uint8_t>& tc, std::uint32_t addr, int x, int y, int width, int start,
                      int end, int max) {
    const int nc = pic_.predict_nc(tc, addr, x, y, width, slice_);
    try {
      return read_residual_block(br_, nc, start, end, max);
    } catch (const StreamError& e) {
      throw StreamError(e.kind(), e.code(), "residual block: " + strip(e), e.bit_offset(), addr);
    }
  }

  ResidualBlock chroma_dc_block(std::uint32_t addr) {
    try {
      return read_residual_block(br_, -1, 0, 3, 4);
    } catch (const StreamError& e) {
      throw StreamError(e.kind(), e.code(), "chroma DC block: " + strip(e), e.bit_offset(), addr);
    }
  }

  static std::string strip(const StreamError& e) {
    std::string s = e.what();
    const auto p = s.find(": ");
    if (p != std::string::npos) s = s.substr(p + 2);
    const auto q = s.find(" (bit offset");
    if (q != std::string::npos) s = s.substr(0, q);
    return s;
  }

  void residual(std::uint32_t addr, bool i16, bool t8, int cbp_luma, int cbp_chroma) {
    auto& tc = pic_.luma_tc;
    if (i16) block(tc, addr, 0, 0, 4, 0, 15, 16);  // DC; its TotalCoeff is not kept for nC
    for (int i8 = 0; i8 < 4; ++i8) {
      int total8 = 0;
      bool dc8 = false;
      for (int i4 = 0; i4 < 4; ++i4) {
        const int blk = i8 * 4 + i4;
        const int r = kBlkToRaster[blk];
        const int x = r % 4, y = r / 4;
        const std::size_t gi = pic_.luma_index(addr, x, y);
        if (!(cbp_luma & (1 << i8))) {
          tc[gi] = 0;
          pic_.ac[gi] = 0;
          continue;
        }
        if (i16) {
          const ResidualBlock rb = block(tc, addr, x, y, 4, 0, 14, 15);
          tc[gi] = static_cast<std::uint8_t>(rb.total_coeff);
          pic_.ac[gi] = static_cast<std::uint16_t>(rb.total_coeff);
        } else {
          const ResidualBlock rb = block(tc, addr, x, y, 4, 0, 15, 16);
          tc[gi] = static_cast<std::uint8_t>(rb.total_coeff);
          int n = 0;
          for (int k = 0; k < 16; ++k) n += rb.levels[k] != 0;
          if (t8) {
            total8 += n;
            if (i4 == 0 && rb.levels[0] != 0) dc8 = true;
          } else {
            pic_.ac[gi] = static_cast<std::uint16_t>(n - (rb.levels[0] != 0 ? 1 : 0));
          }
        }
      }
      if (t8) {
        const auto v = static_cast<std::uint16_t>(total8 - (dc8 ? 1 : 0));
        for (int i4 = 0; i4 < 4; ++i4) {
          const int r = kBlkToRaster[i8 * 4 + i4];
          pic_.ac[pic_.luma_index(addr, r % 4, r / 4)] = (cbp_luma & (1 << i8)) ? v : 0;
        }
      }
    }

    if (pic_.sps.chroma_array_type() != 1) return;
    if (cbp_chroma & 3)
      for (int c = 0; c < 2; ++c) chroma_dc_block(addr);
    for (int c = 0; c < 2; ++c) {
      for (int b = 0; b < 4; ++b) {
        const std::size_t gi = pic_.chroma_index(addr, b % 2, b / 2);
        if (cbp_chroma & 2) {
          const ResidualBlock rb = block(pic_.chroma_tc[c], addr, b % 2, b / 2, 2, 0, 14, 15);
          pic_.chroma_tc[c][gi] = static_cast<std::uint8_t>(rb.total_coeff);
        } else {
          pic_.chroma_tc[c][gi] = 0;
        }
      }
    }
  }

  PictureState& pic_;
  const Pps& pps_;
  const SliceHeader& h_;
  BitReader& br_;
  int slice_;
};

inline bool first_slice_of_new_picture(const SliceHeader& prev, const SliceHeader& cur, const Sps& sps) {
  if (cur.frame_num != prev.frame_num || cur.pps_id != prev.pps_id) return true;
  if (cur.nal_ref_idc != prev.nal_ref_idc && (cur.nal_ref_idc == 0 || prev.nal_ref_idc == 0)) return true;
  if (sps.poc_type == 0 && (cur.poc_lsb != prev.poc_lsb || cur.delta_poc_bottom != prev.delta_poc_bottom))
    return true;
  if (sps.poc_type == 1 && (cur.delta_poc[0] != prev.delta_poc[0] || cur.delta_poc[1] != prev.delta_poc[1]))
    return true;
  if (cur.idr != prev.idr) return true;
  return cur.idr && prev.idr && cur.idr_pic_id != prev.idr_pic_id;
}

/// Picture order count state across pictures (frame coding only).
class PocState {
 public:
  std::int64_t compute(const Sps& sps, const SliceHeader& h) {
    std::int64_t top = 0, bottom = 0;
    const std::int64_t max_frame_num = std::int64_t{1} << sps.log2_max_frame_num;
    if (sps.poc_type == 0) {
      if (h.idr) prev_msb_ = prev_lsb_ = 0;
      const std::int64_t max_lsb = std::int64_t{1} << sps.log2_max_poc_lsb;
      const std::int64_t lsb = h.poc_lsb;
      std::int64_t msb = prev_msb_;
      if (lsb < prev_lsb_ && prev_lsb_ - lsb >= max_lsb / 2) msb = prev_msb_ + max_lsb;
      else if (lsb > prev_lsb_ && lsb - prev_lsb_ > max_lsb / 2) msb = prev_msb_ - max_lsb;
      top = msb + lsb;
      bottom = top + h.delta_poc_bottom;
      if (h.nal_ref_idc != 0) {
        if (h.mmco5) {
          prev_msb_ = 0;
          prev_lsb_ = top - std::min(top, bottom);
        } else {
          prev_msb_ = msb;
          prev_lsb_ = lsb;
        }
      }
    } else {
      std::int64_t offset = 0;
      if (!h.idr) offset = prev_frame_num_ > h.frame_num ? prev_offset_ + max_frame_num : prev_offset_;
      if (sps.poc_type == 1) {
        const auto n = static_cast<std::int64_t>(sps.offset_for_ref_frame.size());
        std::int64_t abs = n != 0 ? offset + h.frame_num : 0;
        if (h.nal_ref_idc == 0 && abs > 0) --abs;
        std::int64_t expected = 0;
        if (abs > 0) {
          std::int64_t per_cycle = 0;
          for (auto d : sps.offset_for_ref_frame) per_cycle += d;
          const std::int64_t cycle = (abs - 1) / n, in_cycle = (abs - 1) % n;
          expected = cycle * per_cycle;
          for (std::int64_t i = 0; i <= in_cycle; ++i) expected += sps.offset_for_ref_frame[i];
        }
        if (h.nal_ref_idc == 0) expected += sps.offset_for_non_ref_pic;
        top = expected + h.delta_poc[0];
        bottom = top + sps.offset_for_top_to_bottom_field + h.delta_poc[1];
      } else {
        const std::int64_t temp = h.idr ? 0 : (h.nal_ref_idc == 0 ? 2 * (offset + h.frame_num) - 1
                                                                   : 2 * (offset + h.frame_num));
        top = bottom = temp;
      }
      prev_offset_ = h.mmco5 ? 0 : offset;
      prev_frame_num_ = h.mmco5 ? 0 : h.frame_num;
    }
    return std::min(top, bottom);
  }

 private:
  std::int64_t prev_msb_ = 0, prev_lsb_ = 0;
  std::int64_t prev_offset_ = 0;
  std::uint32_t prev_frame_num_ = 0;
};

}  // namespace detail

/// Incremental CAVLC residual parser. Feed NAL units in decode order, then
/// call finish() for maps in presentation order.
class StreamParser {
 public:
  StreamParser() {
    sps_ptr_.fill(nullptr);
    pps_ptr_.fill(nullptr);
  }

  void feed(const NalUnit& nal) {
    switch (nal.type) {
      case 7: {
        Sps s = parse_sps(nal);
        const auto id = s.id;
        sps_[id] = std::make_unique<Sps>(std::move(s));
        sps_ptr_[id] = sps_[id].get();
        if (!info_sps_) info_sps_ = *sps_[id];
        break;
      }
      case 8: {
        Pps p = parse_pps(nal, sps_ptr_.data());
        if (p.entropy_coding_mode) saw_cabac_ = true;
        const auto id = p.id;
        pps_[id] = std::make_unique<Pps>(std::move(p));
        pps_ptr_[id] = pps_[id].get();
        break;
      }
      case 1: case 5: slice(nal); break;
      case 2: case 3: case 4:
        throw unsupported("slice data partitioning (NAL type " + std::to_string(nal.type) + ") is not supported");
      default: break;  // SEI, AUD, end of sequence, filler, extensions
    }
  }

  std::vector<BlockResidualMap> finish() {
    close_picture();
    std::stable_sort(done_.begin(), done_.end(), [](const Done& a, const Done& b) {
      return a.period != b.period ? a.period < b.period : a.poc < b.poc;
    });
    std::vector<BlockResidualMap> out;
    out.reserve(done_.size());
    for (auto& d : done_) {
      d.map.frame_index = out.size();
      out.push_back(std::move(d.map));
    }
    done_.clear();
    return out;
  }

  /// Profile and dimensions of the first SPS; CABAC if any PPS selects it.
  StreamInfo info() const {
    StreamInfo i;
    if (info_sps_) {
      i.profile = profile_from_sps(*info_sps_);
      i.width = info_sps_->width();
      i.height = info_sps_->height();
    }
    i.entropy_mode = saw_cabac_ ? EntropyMode::CABAC : EntropyMode::CAVLC;
    i.frame_count = done_.size() + (pic_ ? 1 : 0);
    return i;
  }

 private:
  struct Done {
    std::int64_t period;
    std::int64_t poc;
    BlockResidualMap map;
  };

  void slice(const NalUnit& nal) {
    BitReader br(nal.rbsp, (nal.stream_offset + 1) * 8);
    const Sps* sps = nullptr;
    const Pps* pps = nullptr;
    const SliceHeader h = parse_slice_header(br, nal, sps_ptr_.data(), pps_ptr_.data(), &sps, &pps);
    if (h.redundant_pic_cnt > 0) return;

    bool fresh = !pic_ || detail::first_slice_of_new_picture(last_, h, pic_->sps);
    if (!fresh && (pic_->sps.width_in_mbs != sps->width_in_mbs || pic_->sps.height_in_mbs() != sps->height_in_mbs()))
      fresh = true;
    if (!fresh && pic_->mb_slice[h.first_mb] != -1) fresh = true;
    if (fresh) {
      close_picture();
      pic_ = std::make_unique<detail::PictureState>(*sps);
      if (h.idr) ++period_;
      poc_ = poc_state_.compute(*sps, h);
      if (h.mmco5) {
        // A picture with memory_management_control_operation 5 starts a new
        // output period after being output itself with POC 0.
        poc_ = 0;
        ++period_;
      }
    } else if (h.first_mb < last_.first_mb) {
      throw unsupported("arbitrary slice order is not supported");
    }
    last_ = h;
    if (h.type == SliceType::P) pic_->has_p = true;
    if (h.type == SliceType::B) pic_->has_b = true;
    const int num = pic_->slice_count++;
    detail::SliceDataParser(*pic_, *pps, h, br, num).run();
  }

  void close_picture() {
    if (!pic_) return;
    auto pic = std::move(pic_);
    const Sps& s = pic->sps;
    if (pic->decoded != s.pic_size_in_mbs())
      throw syntax_error("picture " + std::to_string(done_.size()) + " is missing " +
                         std::to_string(s.pic_size_in_mbs() - pic->decoded) + " macroblocks");
    const FrameType ft = pic->has_b ? FrameType::B : pic->has_p ? FrameType::P : FrameType::I;
    BlockResidualMap m(0, ft, s.width(), s.height());
    const std::size_t r0 = s.crop_top / 4, c0 = s.crop_left / 4;
    const std::size_t stride = static_cast<std::size_t>(pic->mb_w) * 4;
    for (std::size_t r = 0; r < m.grid_rows(); ++r) {
      for (std::size_t c = 0; c < m.grid_cols(); ++c) {
        const std::size_t gr = r + r0, gc = c + c0;
        const std::size_t mb = (gr / 4) * pic->mb_w + gc / 4;
        BlockCell& cell = m.grid(r, c);
        cell.nonzero_ac_count = pic->ac[gr * stride + gc];
        cell.mb_type = pic->mb_kind[mb];
        cell.transform_size = pic->mb_t8[mb] ? TransformSize::T8x8 : TransformSize::T4x4;
      }
    }
    done_.push_back({period_, poc_, std::move(m)});
  }

  std::array<std::unique_ptr<Sps>, 32> sps_;
  std::array<std::unique_ptr<Pps>, 256> pps_;
  std::array<const Sps*, 32> sps_ptr_{};
  std::array<const Pps*, 256> pps_ptr_{};
  std::optional<Sps> info_sps_;
  bool saw_cabac_ = false;

  std::unique_ptr<detail::PictureState> pic_;
  SliceHeader last_;
  detail::PocState poc_state_;
  std::int64_t period_ = 0;
  std::int64_t poc_ = 0;
  std::vector<Done> done_;
};

/// Parses a CAVLC stream into per-frame residual maps in presentation order.
inline std::vector<BlockResidualMap> parse_stream(const std::vector<NalUnit>& nals, StreamInfo* info = nullptr) {
  StreamParser p;
  for (const auto& n : nals) p.feed(n);
  StreamInfo i = p.info();
  auto maps = p.finish();
  i.frame_count = maps.size();
  if (info) {
    const Container c = info->container;
    *info = i;
    info->container = c;
  }
  return maps;
}

}  // namespace prnu::h264
