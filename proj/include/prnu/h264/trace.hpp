#pragma once

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "prnu/binary_io.hpp"
#include "prnu/checksum.hpp"
#include "prnu/h264/block_map.hpp"
#include "prnu/h264/bitstream.hpp"

namespace prnu::h264 {

/// Residual trace text format:
///   PRNUTRACE 1 <width> <height>
///   <frame_idx> <I|P|B> <block_row> <block_col> <nonzero_ac_count>
/// '#' starts a comment line. Cells not listed are zero. Every frame needs at
/// least one line; emit_trace always writes cell (0, 0).
///
/// emit_trace also writes "# prnu-integrity lines=<n> xxh64=<hex>" under the
/// header, covering the data lines (each with its LF). When that comment is
/// present the parser checks it, so a truncated or edited file is an error;
/// traces without it are accepted as they are.
class TraceError : public StreamError {
 public:
  TraceError(std::size_t line, const std::string& what)
      : StreamError(ErrorKind::data, "trace", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {
inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s, int base = 10) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline constexpr std::string_view kIntegrityPrefix = "# prnu-integrity ";

inline std::uint64_t hash_text(std::string_view s) {
  return xxh64(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline std::string integrity_line(std::size_t lines, std::string_view data) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash_text(data)));
  return std::string(kIntegrityPrefix) + "lines=" + std::to_string(lines) + " xxh64=" + hex + "\n";
}
}  // namespace detail

/// Expected dimensions and frame count of the container the trace describes.
struct TraceExpectation {
  std::optional<std::uint32_t> width, height;
  std::optional<std::size_t> frame_count;
};

inline std::vector<BlockResidualMap> parse_trace(std::string_view text, const TraceExpectation& expect = {}) {
  std::vector<BlockResidualMap> maps;
  std::uint32_t width = 0, height = 0;
  bool header = false;
  std::size_t line_no = 0;
  std::vector<std::vector<std::uint8_t>> seen;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> integrity;  // (lines, xxh64)
  std::size_t integrity_line = 0, data_lines = 0;
  std::string data_text;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') throw TraceError(line_no, "CR line ending (LF required)");
    if (nl == text.size() && !line.empty()) throw TraceError(line_no, "unterminated last line (truncated file?)");
    if (header && line.starts_with(detail::kIntegrityPrefix)) {
      const auto f = detail::split_ws(line.substr(detail::kIntegrityPrefix.size()));
      std::optional<std::uint64_t> n, h;
      if (f.size() == 2 && f[0].starts_with("lines=") && f[1].starts_with("xxh64=") && f[1].size() == 22) {
        n = detail::parse_uint(f[0].substr(6));
        h = detail::parse_uint(f[1].substr(6), 16);
      }
      if (!n || !h || integrity) throw TraceError(line_no, "malformed or repeated prnu-integrity line");
      integrity = std::pair{*n, *h};
      integrity_line = line_no;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      ++data_lines;
      data_text.append(line).push_back('\n');
    }
    const auto f = detail::split_ws(line);
    if (!header) {
      if (f.size() != 4 || f[0] != "PRNUTRACE") throw TraceError(line_no, "expected header 'PRNUTRACE 1 <width> <height>'");
      if (f[1] != "1") throw TraceError(line_no, "unsupported trace version " + std::string(f[1]));
      const auto w = detail::parse_uint(f[2]), h = detail::parse_uint(f[3]);
      if (!w || !h || *w == 0 || *h == 0 || *w > 16384 || *h > 16384)
        throw TraceError(line_no, "invalid trace dimensions");
      width = static_cast<std::uint32_t>(*w);
      height = static_cast<std::uint32_t>(*h);
      if ((expect.width && *expect.width != width) || (expect.height && *expect.height != height))
        throw TraceError(line_no, "trace dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                                      " do not match the stream");
      header = true;
      continue;
    }
    if (f.size() != 5) throw TraceError(line_no, "expected 5 fields, found " + std::to_string(f.size()));
    const auto idx = detail::parse_uint(f[0]);
    const auto br = detail::parse_uint(f[2]);
    const auto bc = detail::parse_uint(f[3]);
    const auto cnt = detail::parse_uint(f[4]);
    if (!idx || !br || !bc || !cnt) throw TraceError(line_no, "non-numeric field");
    if (f[1].size() != 1 || (f[1][0] != 'I' && f[1][0] != 'P' && f[1][0] != 'B'))
      throw TraceError(line_no, "frame type must be I, P or B");
    const FrameType ft = frame_type_from_char(f[1][0]);
    if (*idx > 1000000) throw TraceError(line_no, "frame index too large");
    if (*cnt > 64) throw TraceError(line_no, "nonzero AC count exceeds 64");
    const std::size_t k = *idx;
    if (k >= maps.size()) {
      maps.resize(k + 1);
      seen.resize(k + 1);
    }
    BlockResidualMap& m = maps[k];
    if (m.grid.empty()) {
      m = BlockResidualMap(k, ft, width, height);
      for (auto& c : m.grid) c.mb_type = ft == FrameType::I ? MbKind::Intra : MbKind::Inter;
      seen[k].assign(m.grid.size(), 0);
    } else if (m.frame_type != ft) {
      throw TraceError(line_no, "frame " + std::to_string(k) + " has conflicting frame types");
    }
    if (*br >= m.grid_rows() || *bc >= m.grid_cols()) throw TraceError(line_no, "block coordinates outside the frame");
    const std::size_t cell = *br * m.grid_cols() + *bc;
    if (seen[k][cell]) throw TraceError(line_no, "duplicate block entry");
    seen[k][cell] = 1;
    m.grid[cell].nonzero_ac_count = static_cast<std::uint16_t>(*cnt);
  }
  if (!header) throw TraceError(line_no, "missing PRNUTRACE header");
  if (integrity && (integrity->first != data_lines || integrity->second != detail::hash_text(data_text)))
    throw TraceError(integrity_line, "integrity check failed: expected " + std::to_string(integrity->first) +
                                         " data lines, found " + std::to_string(data_lines) +
                                         (integrity->first == data_lines ? " with different content" : ""));
  for (std::size_t k = 0; k < maps.size(); ++k)
    if (maps[k].grid.empty()) throw TraceError(line_no, "frame " + std::to_string(k) + " has no entries");
  if (expect.frame_count && *expect.frame_count != maps.size())
    throw StreamError(ErrorKind::data, "frame_count_mismatch",
                      "trace has " + std::to_string(maps.size()) + " frames but the container has " +
                          std::to_string(*expect.frame_count));
  return maps;
}

inline std::vector<BlockResidualMap> ingest_trace(const std::filesystem::path& path, const TraceExpectation& expect = {}) {
  const Bytes b = read_file(path);
  return parse_trace(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()), expect);
}

inline std::string emit_trace(const std::vector<BlockResidualMap>& maps, const std::string& comment = {}) {
  if (maps.empty()) throw usage_error("cannot emit a trace with no frames");
  std::ostringstream os;
  std::size_t lines = 0;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto& m = maps[k];
    if (m.width != maps[0].width || m.height != maps[0].height) throw data_error("maps differ in dimensions");
    const char t = to_char(m.frame_type);
    for (std::size_t r = 0; r < m.grid_rows(); ++r)
      for (std::size_t c = 0; c < m.grid_cols(); ++c) {
        const auto n = m.count(r, c);
        if (n || (r == 0 && c == 0)) {
          os << k << ' ' << t << ' ' << r << ' ' << c << ' ' << n << '\n';
          ++lines;
        }
      }
  }
  const std::string data = os.str();
  std::string out = "PRNUTRACE 1 " + std::to_string(maps[0].width) + ' ' + std::to_string(maps[0].height) + '\n';
  out += detail::integrity_line(lines, data);
  if (!comment.empty()) out += "# " + comment + '\n';
  return out + data;
}

}  // namespace prnu::h264
