#pragma once

#include <cstdint>
#include <string>

#include "prnu/matrix.hpp"

namespace prnu {

enum class FrameType : char { I = 'I', P = 'P', B = 'B' };

inline FrameType frame_type_from_char(char c) {
  switch (c) {
    case 'I': return FrameType::I;
    case 'P': return FrameType::P;
    case 'B': return FrameType::B;
  }
  throw data_error(std::string("invalid frame type '") + c + "'");
}

inline char to_char(FrameType t) { return static_cast<char>(t); }

/// Binary pixel mask M_k: 1 where the covering luma transform block kept at
/// least one nonzero AC coefficient.
struct FrameMask {
  FrameType frame_type = FrameType::I;
  Matrix<std::uint8_t> bits;

  std::size_t width() const noexcept { return bits.cols(); }
  std::size_t height() const noexcept { return bits.rows(); }

  std::size_t ones() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  double coverage() const noexcept {
    return bits.empty() ? 0.0 : static_cast<double>(ones()) / static_cast<double>(bits.size());
  }

  friend bool operator==(const FrameMask&, const FrameMask&) = default;
};

}  // namespace prnu
