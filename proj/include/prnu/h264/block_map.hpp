#pragma once

#include <cstddef>
#include <cstdint>

#include "prnu/frame_mask.hpp"
#include "prnu/matrix.hpp"

namespace prnu::h264 {

enum class TransformSize : std::uint8_t { T4x4, T8x8 };
enum class MbKind : std::uint8_t { Intra, Inter, Skip, PCM };

/// Per 4x4 luma block record. 8x8 transform blocks store their AC count in
/// all four covered cells; PCM blocks store 16.
struct BlockCell {
  std::uint16_t nonzero_ac_count = 0;
  TransformSize transform_size = TransformSize::T4x4;
  MbKind mb_type = MbKind::Skip;

  friend bool operator==(const BlockCell&, const BlockCell&) = default;
};

inline constexpr std::uint16_t kPcmAcCount = 16;

struct BlockResidualMap {
  std::size_t frame_index = 0;
  FrameType frame_type = FrameType::I;
  std::uint32_t width = 0;   // luma pixels
  std::uint32_t height = 0;
  Matrix<BlockCell> grid;    // ceil(height/4) x ceil(width/4)

  BlockResidualMap() = default;
  BlockResidualMap(std::size_t index, FrameType type, std::uint32_t w, std::uint32_t h)
      : frame_index(index), frame_type(type), width(w), height(h), grid((h + 3) / 4, (w + 3) / 4) {}

  std::size_t grid_rows() const noexcept { return grid.rows(); }
  std::size_t grid_cols() const noexcept { return grid.cols(); }
  std::uint16_t count(std::size_t r, std::size_t c) const noexcept { return grid(r, c).nonzero_ac_count; }

  friend bool operator==(const BlockResidualMap&, const BlockResidualMap&) = default;
};

/// True when two maps agree on dimensions, frame type and every AC count.
inline bool same_counts(const BlockResidualMap& a, const BlockResidualMap& b) {
  if (a.frame_type != b.frame_type || a.width != b.width || a.height != b.height) return false;
  for (std::size_t i = 0; i < a.grid.size(); ++i)
    if (a.grid[i].nonzero_ac_count != b.grid[i].nonzero_ac_count) return false;
  return true;
}

}  // namespace prnu::h264
