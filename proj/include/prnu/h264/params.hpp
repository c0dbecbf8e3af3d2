#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prnu/h264/bitstream.hpp"

namespace prnu::h264 {

// Largest picture accepted, in macroblocks (level 6.2 MaxFS).
inline constexpr std::uint32_t kMaxPicSizeInMbs = 139264;

struct Sps {
  int profile_idc = 0;
  int constraint_flags = 0;
  int level_idc = 0;
  std::uint32_t id = 0;
  std::uint32_t chroma_format_idc = 1;
  bool separate_colour_plane = false;
  std::uint32_t bit_depth_luma = 8;
  std::uint32_t bit_depth_chroma = 8;
  std::uint32_t log2_max_frame_num = 4;
  std::uint32_t poc_type = 0;
  std::uint32_t log2_max_poc_lsb = 4;
  bool delta_pic_order_always_zero = false;
  std::int32_t offset_for_non_ref_pic = 0;
  std::int32_t offset_for_top_to_bottom_field = 0;
  std::vector<std::int32_t> offset_for_ref_frame;
  std::uint32_t max_num_ref_frames = 0;
  std::uint32_t width_in_mbs = 0;
  std::uint32_t height_in_map_units = 0;
  bool frame_mbs_only = true;
  bool mb_adaptive_frame_field = false;
  bool direct_8x8_inference = false;
  std::uint32_t crop_left = 0, crop_right = 0, crop_top = 0, crop_bottom = 0;  // in luma samples

  std::uint32_t chroma_array_type() const noexcept { return separate_colour_plane ? 0 : chroma_format_idc; }
  std::uint32_t height_in_mbs() const noexcept { return height_in_map_units * (frame_mbs_only ? 1 : 2); }
  std::uint32_t pic_size_in_mbs() const noexcept { return width_in_mbs * height_in_mbs(); }
  std::uint32_t coded_width() const noexcept { return width_in_mbs * 16; }
  std::uint32_t coded_height() const noexcept { return height_in_mbs() * 16; }
  std::uint32_t width() const noexcept { return coded_width() - crop_left - crop_right; }
  std::uint32_t height() const noexcept { return coded_height() - crop_top - crop_bottom; }
};

struct Pps {
  std::uint32_t id = 0;
  std::uint32_t sps_id = 0;
  bool entropy_coding_mode = false;
  bool bottom_field_pic_order_in_frame_present = false;
  std::uint32_t num_slice_groups = 1;
  std::uint32_t num_ref_idx_l0_default = 1;
  std::uint32_t num_ref_idx_l1_default = 1;
  bool weighted_pred = false;
  std::uint32_t weighted_bipred_idc = 0;
  std::int32_t pic_init_qp = 26;
  bool deblocking_filter_control_present = false;
  bool constrained_intra_pred = false;
  bool redundant_pic_cnt_present = false;
  bool transform_8x8_mode = false;
  std::int32_t chroma_qp_index_offset = 0;
  std::int32_t second_chroma_qp_index_offset = 0;
};

namespace detail {
inline void skip_scaling_list(BitReader& br, int size) {
  int last = 8, next = 8;
  for (int j = 0; j < size; ++j) {
    if (next != 0) {
      const int delta = br.se_range(-128, 127, "delta_scale");
      next = (last + delta + 256) % 256;
    }
    last = next == 0 ? last : next;
  }
}

inline bool is_high_profile(int p) {
  switch (p) {
    case 100: case 110: case 122: case 244: case 44: case 83: case 86: case 118: case 128: case 138:
    case 139: case 134: case 135:
      return true;
  }
  return false;
}
}  // namespace detail

inline Sps parse_sps(const NalUnit& nal) {
  BitReader br(nal.rbsp, (nal.stream_offset + 1) * 8);
  Sps s;
  s.profile_idc = static_cast<int>(br.u(8));
  s.constraint_flags = static_cast<int>(br.u(8));
  s.level_idc = static_cast<int>(br.u(8));
  s.id = br.ue_max(31, "seq_parameter_set_id");
  if (detail::is_high_profile(s.profile_idc)) {
    s.chroma_format_idc = br.ue_max(3, "chroma_format_idc");
    if (s.chroma_format_idc == 3) s.separate_colour_plane = br.flag();
    s.bit_depth_luma = 8 + br.ue_max(6, "bit_depth_luma_minus8");
    s.bit_depth_chroma = 8 + br.ue_max(6, "bit_depth_chroma_minus8");
    br.flag();  // qpprime_y_zero_transform_bypass_flag
    if (br.flag()) {
      const int lists = s.chroma_format_idc != 3 ? 8 : 12;
      for (int i = 0; i < lists; ++i)
        if (br.flag()) detail::skip_scaling_list(br, i < 6 ? 16 : 64);
    }
  }
  s.log2_max_frame_num = 4 + br.ue_max(12, "log2_max_frame_num_minus4");
  s.poc_type = br.ue_max(2, "pic_order_cnt_type");
  if (s.poc_type == 0) {
    s.log2_max_poc_lsb = 4 + br.ue_max(12, "log2_max_pic_order_cnt_lsb_minus4");
  } else if (s.poc_type == 1) {
    s.delta_pic_order_always_zero = br.flag();
    s.offset_for_non_ref_pic = br.se();
    s.offset_for_top_to_bottom_field = br.se();
    const std::uint32_t n = br.ue_max(255, "num_ref_frames_in_pic_order_cnt_cycle");
    for (std::uint32_t i = 0; i < n; ++i) s.offset_for_ref_frame.push_back(br.se());
  }
  s.max_num_ref_frames = br.ue_max(16, "max_num_ref_frames");
  br.flag();  // gaps_in_frame_num_value_allowed_flag
  s.width_in_mbs = br.ue_max(kMaxPicSizeInMbs, "pic_width_in_mbs_minus1") + 1;
  s.height_in_map_units = br.ue_max(kMaxPicSizeInMbs, "pic_height_in_map_units_minus1") + 1;
  s.frame_mbs_only = br.flag();
  if (!s.frame_mbs_only) s.mb_adaptive_frame_field = br.flag();
  s.direct_8x8_inference = br.flag();
  if (static_cast<std::uint64_t>(s.width_in_mbs) * s.height_in_mbs() > kMaxPicSizeInMbs)
    throw syntax_error("picture size exceeds the largest supported level", br.absolute_position());
  if (br.flag()) {
    const std::uint32_t cat = s.chroma_array_type();
    const std::uint32_t unit_x = cat == 0 ? 1 : (cat == 3 ? 1 : 2);
    const std::uint32_t unit_y = (cat == 0 || cat == 3 ? 1 : (cat == 2 ? 1 : 2)) * (s.frame_mbs_only ? 1 : 2);
    const std::uint32_t l = br.ue(), r = br.ue(), t = br.ue(), b = br.ue();
    const std::uint64_t cw = static_cast<std::uint64_t>(l) + r, ch = static_cast<std::uint64_t>(t) + b;
    if (cw * unit_x >= s.coded_width() || ch * unit_y >= s.coded_height())
      throw syntax_error("frame cropping removes the whole picture", br.absolute_position());
    s.crop_left = l * unit_x;
    s.crop_right = r * unit_x;
    s.crop_top = t * unit_y;
    s.crop_bottom = b * unit_y;
  }
  // VUI is not needed for residual analysis.
  return s;
}

/// Rejects SPS features the residual parser does not handle.
inline void check_supported(const Sps& s) {
  if (!s.frame_mbs_only)
    throw unsupported("field/MBAFF coding (frame_mbs_only_flag = 0) is not supported");
  if (s.chroma_format_idc == 2 || s.chroma_format_idc == 3)
    throw unsupported("chroma_format_idc " + std::to_string(s.chroma_format_idc) +
                      " is not supported (4:2:0 and monochrome only)");
  if (s.crop_left % 4 != 0 || s.crop_top % 4 != 0)
    throw unsupported("left/top frame cropping not aligned to 4x4 blocks");
}

inline Pps parse_pps(const NalUnit& nal, const Sps* const* sps_table) {
  BitReader br(nal.rbsp, (nal.stream_offset + 1) * 8);
  Pps p;
  p.id = br.ue_max(255, "pic_parameter_set_id");
  p.sps_id = br.ue_max(31, "seq_parameter_set_id");
  const Sps* sps = sps_table[p.sps_id];
  if (!sps) throw syntax_error("PPS " + std::to_string(p.id) + " references missing SPS " + std::to_string(p.sps_id));
  p.entropy_coding_mode = br.flag();
  p.bottom_field_pic_order_in_frame_present = br.flag();
  p.num_slice_groups = br.ue_max(7, "num_slice_groups_minus1") + 1;
  if (p.num_slice_groups > 1) throw unsupported("flexible macroblock ordering (num_slice_groups > 1) is not supported");
  p.num_ref_idx_l0_default = br.ue_max(31, "num_ref_idx_l0_default_active_minus1") + 1;
  p.num_ref_idx_l1_default = br.ue_max(31, "num_ref_idx_l1_default_active_minus1") + 1;
  p.weighted_pred = br.flag();
  p.weighted_bipred_idc = br.u(2);
  if (p.weighted_bipred_idc > 2) throw syntax_error("weighted_bipred_idc = 3", br.absolute_position());
  p.pic_init_qp = 26 + br.se_range(-26 - 6 * static_cast<int>(sps->bit_depth_luma - 8), 25, "pic_init_qp_minus26");
  br.se();  // pic_init_qs_minus26
  p.chroma_qp_index_offset = br.se_range(-12, 12, "chroma_qp_index_offset");
  p.second_chroma_qp_index_offset = p.chroma_qp_index_offset;
  p.deblocking_filter_control_present = br.flag();
  p.constrained_intra_pred = br.flag();
  p.redundant_pic_cnt_present = br.flag();
  if (br.more_rbsp_data()) {
    p.transform_8x8_mode = br.flag();
    if (br.flag()) {
      const int lists = 6 + ((sps->chroma_format_idc != 3) ? 2 : 6) * (p.transform_8x8_mode ? 1 : 0);
      for (int i = 0; i < lists; ++i)
        if (br.flag()) detail::skip_scaling_list(br, i < 6 ? 16 : 64);
    }
    p.second_chroma_qp_index_offset = br.se_range(-12, 12, "second_chroma_qp_index_offset");
  }
  return p;
}

enum class SliceType { P = 0, B = 1, I = 2, SP = 3, SI = 4 };

struct SliceHeader {
  std::uint32_t first_mb = 0;
  SliceType type = SliceType::I;
  std::uint32_t pps_id = 0;
  std::uint32_t frame_num = 0;
  bool idr = false;
  std::uint32_t idr_pic_id = 0;
  std::uint32_t poc_lsb = 0;
  std::int32_t delta_poc_bottom = 0;
  std::int32_t delta_poc[2] = {0, 0};
  std::uint32_t redundant_pic_cnt = 0;
  bool direct_spatial = false;
  std::uint32_t num_ref_idx_l0 = 1;
  std::uint32_t num_ref_idx_l1 = 1;
  bool mmco5 = false;
  int nal_ref_idc = 0;
  int nal_type = 0;
  std::int32_t slice_qp_delta = 0;
  std::uint64_t data_bit = 0;  // bit position of slice_data() in the RBSP
};

namespace detail {
inline void skip_ref_pic_list_modification(BitReader& br) {
  if (!br.flag()) return;
  for (int guard = 0;; ++guard) {
    if (guard > 64) throw syntax_error("ref_pic_list_modification loop too long", br.absolute_position());
    const std::uint32_t idc = br.ue_max(5, "modification_of_pic_nums_idc");
    if (idc == 3) break;
    if (idc > 5 || idc == 4 || idc == 5)
      throw unsupported("MVC reference list modification is not supported");
    br.ue();
  }
}

inline void skip_pred_weight_table(BitReader& br, const Sps& sps, const SliceHeader& h) {
  br.ue_max(7, "luma_log2_weight_denom");
  const bool chroma = sps.chroma_array_type() != 0;
  if (chroma) br.ue_max(7, "chroma_log2_weight_denom");
  const int lists = h.type == SliceType::B ? 2 : 1;
  for (int l = 0; l < lists; ++l) {
    const std::uint32_t n = l == 0 ? h.num_ref_idx_l0 : h.num_ref_idx_l1;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (br.flag()) {
        br.se_range(-128, 127, "luma_weight");
        br.se_range(-128, 127, "luma_offset");
      }
      if (chroma && br.flag())
        for (int j = 0; j < 2; ++j) {
          br.se_range(-128, 127, "chroma_weight");
          br.se_range(-128, 127, "chroma_offset");
        }
    }
  }
}

inline bool parse_dec_ref_pic_marking(BitReader& br, bool idr) {
  bool mmco5 = false;
  if (idr) {
    br.flag();  // no_output_of_prior_pics_flag
    br.flag();  // long_term_reference_flag
    return false;
  }
  if (!br.flag()) return false;
  for (int guard = 0;; ++guard) {
    if (guard > 128) throw syntax_error("memory_management_control_operation loop too long", br.absolute_position());
    const std::uint32_t op = br.ue_max(6, "memory_management_control_operation");
    if (op == 0) break;
    if (op == 1 || op == 3) br.ue();
    if (op == 2) br.ue();
    if (op == 3 || op == 6) br.ue();
    if (op == 4) br.ue();
    if (op == 5) mmco5 = true;
  }
  return mmco5;
}
}  // namespace detail

inline SliceHeader parse_slice_header(BitReader& br, const NalUnit& nal, const Sps* const* sps_table,
                                      const Pps* const* pps_table, const Sps** sps_out, const Pps** pps_out) {
  SliceHeader h;
  h.nal_ref_idc = nal.ref_idc;
  h.nal_type = nal.type;
  h.idr = nal.type == 5;
  h.first_mb = br.ue_max(kMaxPicSizeInMbs, "first_mb_in_slice");
  const std::uint32_t st = br.ue_max(9, "slice_type");
  h.type = static_cast<SliceType>(st % 5);
  if (h.type == SliceType::SP || h.type == SliceType::SI) throw unsupported("SP/SI slices are not supported");
  h.pps_id = br.ue_max(255, "pic_parameter_set_id");
  const Pps* pps = pps_table[h.pps_id];
  if (!pps) throw syntax_error("slice references missing PPS " + std::to_string(h.pps_id), br.absolute_position());
  const Sps* sps = sps_table[pps->sps_id];
  if (!sps) throw syntax_error("PPS references missing SPS " + std::to_string(pps->sps_id), br.absolute_position());
  *sps_out = sps;
  *pps_out = pps;
  check_supported(*sps);
  if (pps->entropy_coding_mode)
    throw StreamError(ErrorKind::unsupported, "unsupported_entropy",
                      "CABAC entropy coding is not decoded natively; supply a residual trace from an instrumented "
                      "decoder and use ingest_trace (CLI: prnu mask --trace <file>)");
  if (h.idr && h.type != SliceType::I) throw syntax_error("IDR picture with non-intra slice", br.absolute_position());
  h.frame_num = br.u(static_cast<int>(sps->log2_max_frame_num));
  if (h.idr) h.idr_pic_id = br.ue_max(65535, "idr_pic_id");
  if (sps->poc_type == 0) {
    h.poc_lsb = br.u(static_cast<int>(sps->log2_max_poc_lsb));
    if (pps->bottom_field_pic_order_in_frame_present) h.delta_poc_bottom = br.se();
  }
  if (sps->poc_type == 1 && !sps->delta_pic_order_always_zero) {
    h.delta_poc[0] = br.se();
    if (pps->bottom_field_pic_order_in_frame_present) h.delta_poc[1] = br.se();
  }
  if (pps->redundant_pic_cnt_present) h.redundant_pic_cnt = br.ue_max(127, "redundant_pic_cnt");
  if (h.type == SliceType::B) h.direct_spatial = br.flag();
  h.num_ref_idx_l0 = pps->num_ref_idx_l0_default;
  h.num_ref_idx_l1 = pps->num_ref_idx_l1_default;
  if (h.type == SliceType::P || h.type == SliceType::B) {
    if (br.flag()) {
      h.num_ref_idx_l0 = br.ue_max(31, "num_ref_idx_l0_active_minus1") + 1;
      if (h.type == SliceType::B) h.num_ref_idx_l1 = br.ue_max(31, "num_ref_idx_l1_active_minus1") + 1;
    }
    if (h.num_ref_idx_l0 > 16 || h.num_ref_idx_l1 > 16)
      throw syntax_error("more than 16 active references in a frame slice", br.absolute_position());
  }
  if (h.type != SliceType::I) detail::skip_ref_pic_list_modification(br);
  if (h.type == SliceType::B) detail::skip_ref_pic_list_modification(br);
  if ((pps->weighted_pred && h.type == SliceType::P) || (pps->weighted_bipred_idc == 1 && h.type == SliceType::B))
    detail::skip_pred_weight_table(br, *sps, h);
  if (nal.ref_idc != 0) h.mmco5 = detail::parse_dec_ref_pic_marking(br, h.idr);
  h.slice_qp_delta = br.se_range(-87, 87, "slice_qp_delta");
  if (pps->deblocking_filter_control_present) {
    const std::uint32_t idc = br.ue_max(2, "disable_deblocking_filter_idc");
    if (idc != 1) {
      br.se_range(-6, 6, "slice_alpha_c0_offset_div2");
      br.se_range(-6, 6, "slice_beta_offset_div2");
    }
  }
  if (h.first_mb >= sps->pic_size_in_mbs())
    throw syntax_error("first_mb_in_slice beyond picture", br.absolute_position());
  h.data_bit = br.position();
  return h;
}

}  // namespace prnu::h264
