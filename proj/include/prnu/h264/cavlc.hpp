#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "prnu/h264/bitstream.hpp"

namespace prnu::h264 {

// coeff_token code lengths and values, indexed [table][total_coeff * 4 + trailing_ones].
// Tables: 0 <= nC < 2, 2 <= nC < 4, 4 <= nC < 8, 8 <= nC.
inline constexpr std::uint8_t kCoeffTokenLen[4][4 * 17] = {
    {1,  0,  0,  0,  6,  2,  0,  0,  8,  6,  3,  0,  9,  8,  7,  5,  10, 9,  8,  6,  11, 10, 9,
     7,  13, 11, 10, 8,  13, 13, 11, 9,  13, 13, 13, 10, 14, 14, 13, 11, 14, 14, 14, 13, 15, 15,
     14, 14, 15, 15, 15, 14, 16, 15, 15, 15, 16, 16, 16, 15, 16, 16, 16, 16, 16, 16, 16, 16},
    {2,  0,  0,  0,  6,  2,  0,  0,  6,  5,  3,  0,  7,  6,  6,  4,  8,  6,  6,  4,  8,  7,  7,
     5,  9,  8,  8,  6,  11, 9,  9,  6,  11, 11, 11, 7,  12, 11, 11, 9,  12, 12, 12, 11, 12, 12,
     12, 11, 13, 13, 13, 12, 13, 13, 13, 13, 13, 14, 13, 13, 14, 14, 14, 13, 14, 14, 14, 14},
    {4,  0,  0,  0,  6,  4,  0,  0,  6,  5,  4,  0,  6,  5,  5,  4,  7,  5,  5,  4,  7,  5,  5,
     4,  7,  6,  6,  4,  7,  6,  6,  4,  8,  7,  7,  5,  8,  8,  7,  6,  9,  8,  8,  7,  9,  9,
     8,  8,  9,  9,  9,  8,  10, 9,  9,  9,  10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10},
    {6, 0, 0, 0, 6, 6, 0, 0, 6, 6, 6, 0, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6,
     6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6},
};

inline constexpr std::uint8_t kCoeffTokenBits[4][4 * 17] = {
    {1,  0,  0,  0, 5,  1,  0, 0,  7,  4,  1,  0,  7,  6,  5,  3,  7,  6,  5,  3,  7,  6,  5,
     4,  15, 6,  5, 4,  11, 14, 5, 4,  8,  10, 13, 4,  15, 14, 9,  4,  11, 10, 13, 12, 15, 14,
     9,  12, 11, 10, 13, 8,  15, 1, 9,  12, 11, 14, 13, 8,  7,  10, 9,  12, 4,  6,  5,  8},
    {3,  0,  0,  0,  11, 2, 0,  0,  7,  7,  3,  0,  7,  10, 9,  5, 7,  6,  5,  4,  4,  6,  5,
     6,  7,  6,  5,  8,  15, 6, 5,  4,  11, 14, 13, 4,  15, 10, 9, 4,  11, 14, 13, 12, 8,  10,
     9,  8,  15, 14, 13, 12, 11, 10, 9, 12, 7,  11, 6,  8,  9,  8, 10, 1,  7,  6,  5,  4},
    {15, 0,  0,  0,  15, 14, 0,  0, 11, 15, 13, 0,  8,  12, 14, 12, 15, 10, 11, 11, 11, 8,  9,
     10, 9,  14, 13, 9,  8,  10, 9, 8,  15, 14, 13, 13, 11, 14, 10, 12, 15, 10, 13, 12, 11, 14,
     9,  12, 8,  10, 13, 8,  13, 7, 9,  12, 9,  12, 11, 10, 5,  8,  7,  6,  1,  4,  3,  2},
    {3,  0,  0,  0,  0,  1,  0,  0,  4,  5,  6,  0,  8,  9,  10, 11, 12, 13, 14, 15, 16, 17, 18,
     19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41,
     42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 63},
};

// Chroma DC coeff_token for 4:2:0 (nC = -1), [total_coeff * 4 + trailing_ones].
inline constexpr std::uint8_t kChromaDcCoeffTokenLen[4 * 5] = {2, 0, 0, 0, 6, 1, 0, 0, 6, 6,
                                                               3, 0, 6, 7, 7, 6, 6, 8, 8, 7};
inline constexpr std::uint8_t kChromaDcCoeffTokenBits[4 * 5] = {1, 0, 0, 0, 7, 1, 0, 0, 4, 6,
                                                                1, 0, 3, 3, 2, 5, 2, 3, 2, 0};

// total_zeros for 4x4 blocks, [total_coeff - 1][total_zeros].
inline constexpr std::uint8_t kTotalZerosLen[15][16] = {
    {1, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 9}, {3, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 6, 6, 6, 6},
    {4, 3, 3, 3, 4, 4, 3, 3, 4, 5, 5, 6, 5, 6},       {5, 3, 4, 4, 3, 3, 3, 4, 3, 4, 5, 5, 5},
    {4, 4, 4, 3, 3, 3, 3, 3, 4, 5, 4, 5},             {6, 5, 3, 3, 3, 3, 3, 3, 4, 3, 6},
    {6, 5, 3, 3, 3, 2, 3, 4, 3, 6},                   {6, 4, 5, 3, 2, 2, 3, 3, 6},
    {6, 6, 4, 2, 2, 3, 2, 5},                         {5, 5, 3, 2, 2, 2, 4},
    {4, 4, 3, 3, 1, 3},                               {4, 4, 2, 1, 3},
    {3, 3, 1, 2},                                     {2, 2, 1},
    {1, 1},
};
inline constexpr std::uint8_t kTotalZerosBits[15][16] = {
    {1, 3, 2, 3, 2, 3, 2, 3, 2, 3, 2, 3, 2, 3, 2, 1}, {7, 6, 5, 4, 3, 5, 4, 3, 2, 3, 2, 3, 2, 1, 0},
    {5, 7, 6, 5, 4, 3, 4, 3, 2, 3, 2, 1, 1, 0},       {3, 7, 5, 4, 6, 5, 4, 3, 3, 2, 2, 1, 0},
    {5, 4, 3, 7, 6, 5, 4, 3, 2, 1, 1, 0},             {1, 1, 7, 6, 5, 4, 3, 2, 1, 1, 0},
    {1, 1, 5, 4, 3, 3, 2, 1, 1, 0},                   {1, 1, 1, 3, 3, 2, 2, 1, 0},
    {1, 0, 1, 3, 2, 1, 1, 1},                         {1, 0, 1, 3, 2, 1, 1},
    {0, 1, 1, 2, 1, 3},                               {0, 1, 1, 1, 1},
    {0, 1, 1, 1},                                     {0, 1, 1},
    {0, 1},
};

// total_zeros for 4:2:0 chroma DC, [total_coeff - 1][total_zeros].
inline constexpr std::uint8_t kChromaDcTotalZerosLen[3][4] = {{1, 2, 3, 3}, {1, 2, 2, 0}, {1, 1, 0, 0}};
inline constexpr std::uint8_t kChromaDcTotalZerosBits[3][4] = {{1, 1, 1, 0}, {1, 1, 0, 0}, {1, 0, 0, 0}};

// run_before, [min(zeros_left, 7) - 1][run_before].
inline constexpr std::uint8_t kRunLen[7][16] = {
    {1, 1}, {1, 2, 2}, {2, 2, 2, 2}, {2, 2, 2, 3, 3}, {2, 2, 3, 3, 3, 3}, {2, 3, 3, 3, 3, 3, 3},
    {3, 3, 3, 3, 3, 3, 3, 4, 5, 6, 7, 8, 9, 10, 11},
};
inline constexpr std::uint8_t kRunBits[7][16] = {
    {1, 0}, {1, 1, 0}, {3, 2, 1, 0}, {3, 2, 1, 1, 0}, {3, 2, 3, 2, 1, 0}, {3, 0, 1, 3, 2, 5, 4},
    {7, 6, 5, 4, 3, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1},
};

// coded_block_pattern me(v) mappings: codeNum -> cbp.
inline constexpr std::uint8_t kGolombToIntraCbp[48] = {
    47, 31, 15, 0,  23, 27, 29, 30, 7,  11, 13, 14, 39, 43, 45, 46, 16, 3,  5,  10, 12, 19, 21, 26,
    28, 35, 37, 42, 44, 1,  2,  4,  8,  17, 18, 20, 24, 6,  9,  22, 25, 32, 33, 34, 36, 40, 38, 41};
inline constexpr std::uint8_t kGolombToInterCbp[48] = {
    0,  16, 1,  2,  4,  8,  32, 3,  5,  10, 12, 15, 47, 7,  11, 13, 14, 6,  9,  31, 35, 37, 42, 44,
    33, 34, 36, 40, 39, 43, 45, 46, 17, 18, 20, 24, 19, 21, 26, 28, 23, 27, 29, 30, 22, 25, 38, 41};
inline constexpr std::uint8_t kGolombToIntraCbpGray[16] = {15, 0, 7, 11, 13, 14, 3, 5, 10, 12, 1, 2, 4, 8, 6, 9};
inline constexpr std::uint8_t kGolombToInterCbpGray[16] = {0, 1, 2, 4, 8, 3, 5, 10, 12, 15, 7, 11, 13, 14, 6, 9};

/// Binary code tree built from (length, code) pairs. Symbols are table indices.
class VlcTree {
 public:
  VlcTree() = default;
  template <std::size_t N>
  VlcTree(const std::uint8_t (&len)[N], const std::uint8_t (&bits)[N]) {
    nodes_.push_back({{-1, -1}, -1});
    for (std::size_t s = 0; s < N; ++s)
      if (len[s]) insert(len[s], bits[s], static_cast<int>(s));
  }

  void insert(int len, unsigned code, int symbol) {
    int n = 0;
    for (int i = len - 1; i >= 0; --i) {
      const int b = (code >> i) & 1;
      if (nodes_[n].child[b] < 0) {
        nodes_[n].child[b] = static_cast<int>(nodes_.size());
        nodes_.push_back({{-1, -1}, -1});
      }
      n = nodes_[n].child[b];
    }
    nodes_[n].symbol = symbol;
  }

  int decode(BitReader& br, const char* what) const {
    const std::uint64_t at = br.absolute_position();
    int n = 0;
    while (nodes_[n].symbol < 0) {
      const int next = nodes_[n].child[br.bit()];
      if (next < 0) throw syntax_error(std::string("invalid ") + what + " code", at);
      n = next;
    }
    return nodes_[n].symbol;
  }

  /// Sum of 2^-len over all leaves; 1 for a complete prefix code.
  double kraft_sum() const { return kraft(0, 0); }
  /// True when no symbol sits on an inner node (prefix-free).
  bool prefix_free() const {
    for (const auto& nd : nodes_)
      if (nd.symbol >= 0 && (nd.child[0] >= 0 || nd.child[1] >= 0)) return false;
    return true;
  }

 private:
  struct Node {
    int child[2];
    int symbol;
  };
  double kraft(int n, int depth) const {
    if (nodes_[n].symbol >= 0) return std::ldexp(1.0, -depth);
    double s = 0.0;
    for (int c : nodes_[n].child)
      if (c >= 0) s += kraft(c, depth + 1);
    return s;
  }
  std::vector<Node> nodes_;
};

struct CavlcTables {
  VlcTree coeff_token[4];
  VlcTree chroma_dc_coeff_token;
  VlcTree total_zeros[15];
  VlcTree chroma_dc_total_zeros[3];
  VlcTree run_before[7];

  CavlcTables() {
    for (int t = 0; t < 4; ++t) coeff_token[t] = VlcTree(kCoeffTokenLen[t], kCoeffTokenBits[t]);
    chroma_dc_coeff_token = VlcTree(kChromaDcCoeffTokenLen, kChromaDcCoeffTokenBits);
    for (int t = 0; t < 15; ++t) total_zeros[t] = VlcTree(kTotalZerosLen[t], kTotalZerosBits[t]);
    for (int t = 0; t < 3; ++t) chroma_dc_total_zeros[t] = VlcTree(kChromaDcTotalZerosLen[t], kChromaDcTotalZerosBits[t]);
    for (int t = 0; t < 7; ++t) run_before[t] = VlcTree(kRunLen[t], kRunBits[t]);
  }

  static const CavlcTables& get() {
    static const CavlcTables tables;
    return tables;
  }
};

/// Decoded residual block: coefficient levels in scan order plus TotalCoeff.
struct ResidualBlock {
  int total_coeff = 0;
  std::array<int, 16> levels{};
};

/// residual_block_cavlc(). nC = -1 selects the 4:2:0 chroma DC tables.
inline ResidualBlock read_residual_block(BitReader& br, int nC, int start_idx, int end_idx, int max_num_coeff) {
  const CavlcTables& t = CavlcTables::get();
  ResidualBlock out;
  int token;
  if (nC == -1) {
    token = t.chroma_dc_coeff_token.decode(br, "chroma DC coeff_token");
  } else {
    const int table = nC < 2 ? 0 : nC < 4 ? 1 : nC < 8 ? 2 : 3;
    token = t.coeff_token[table].decode(br, "coeff_token");
  }
  const int total = token / 4, trailing = token % 4;
  if (total > max_num_coeff || total > end_idx - start_idx + 1)
    throw syntax_error("TotalCoeff " + std::to_string(total) + " exceeds block size", br.absolute_position());
  out.total_coeff = total;
  if (total == 0) return out;

  std::array<int, 16> level{};
  int suffix_length = (total > 10 && trailing < 3) ? 1 : 0;
  for (int i = 0; i < total; ++i) {
    if (i < trailing) {
      level[i] = br.bit() ? -1 : 1;
      continue;
    }
    const std::uint64_t at = br.absolute_position();
    int prefix = 0;
    while (br.bit() == 0) {
      if (++prefix > 31) throw syntax_error("level_prefix too long", at);
    }
    long long code = static_cast<long long>(std::min(15, prefix)) << suffix_length;
    if (suffix_length > 0 || prefix >= 14) {
      int size = suffix_length;
      if (prefix == 14 && suffix_length == 0) size = 4;
      if (prefix >= 15) size = prefix - 3;
      if (size > 0) code += br.u(size);
    }
    if (prefix >= 15 && suffix_length == 0) code += 15;
    if (prefix >= 16) code += (1LL << (prefix - 3)) - 4096;
    if (i == trailing && trailing < 3) code += 2;
    const long long val = (code % 2 == 0) ? (code + 2) >> 1 : (-code - 1) >> 1;
    if (val > (1LL << 28) || val < -(1LL << 28)) throw syntax_error("coefficient level out of range", at);
    level[i] = static_cast<int>(val);
    if (suffix_length == 0) suffix_length = 1;
    if ((val > 0 ? val : -val) > (3LL << (suffix_length - 1)) && suffix_length < 6) ++suffix_length;
  }

  int zeros_left = 0;
  if (total < end_idx - start_idx + 1) {
    if (nC == -1) {
      zeros_left = t.chroma_dc_total_zeros[total - 1].decode(br, "chroma DC total_zeros");
    } else {
      zeros_left = t.total_zeros[total - 1].decode(br, "total_zeros");
    }
    if (zeros_left > end_idx - start_idx + 1 - total)
      throw syntax_error("total_zeros exceeds block size", br.absolute_position());
  }
  std::array<int, 16> run{};
  for (int i = 0; i < total - 1; ++i) {
    if (zeros_left > 0) {
      run[i] = t.run_before[std::min(zeros_left, 7) - 1].decode(br, "run_before");
      if (run[i] > zeros_left) throw syntax_error("run_before exceeds zeros left", br.absolute_position());
    }
    zeros_left -= run[i];
  }
  run[total - 1] = zeros_left;
  int coeff_num = -1;
  for (int i = total - 1; i >= 0; --i) {
    coeff_num += run[i] + 1;
    out.levels[start_idx + coeff_num] = level[i];
  }
  return out;
}

}  // namespace prnu::h264
