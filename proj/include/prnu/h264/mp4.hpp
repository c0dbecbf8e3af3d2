#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prnu/binary_io.hpp"
#include "prnu/h264/bitstream.hpp"
#include "prnu/h264/parser.hpp"

namespace prnu::h264 {

inline StreamError mp4_error(const std::string& code, const std::string& what, ErrorKind kind = ErrorKind::data) {
  return StreamError(kind, code, what);
}

namespace detail {

struct Box {
  std::uint32_t type = 0;
  std::uint64_t offset = 0;  // box start in the file
  std::uint64_t header = 0;
  std::uint64_t size = 0;    // including header
  std::uint64_t body() const { return offset + header; }
  std::uint64_t end() const { return offset + size; }
};

constexpr std::uint32_t fourcc(const char (&s)[5]) {
  return (std::uint32_t(std::uint8_t(s[0])) << 24) | (std::uint32_t(std::uint8_t(s[1])) << 16) |
         (std::uint32_t(std::uint8_t(s[2])) << 8) | std::uint32_t(std::uint8_t(s[3]));
}

inline std::string fourcc_str(std::uint32_t t) {
  std::string s(4, '?');
  for (int i = 0; i < 4; ++i) {
    const char c = static_cast<char>((t >> (24 - 8 * i)) & 0xff);
    s[i] = (c >= 32 && c < 127) ? c : '?';
  }
  return s;
}

class Mp4Reader {
 public:
  explicit Mp4Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint64_t be(std::uint64_t at, int n) const {
    if (at + n > b_.size()) throw mp4_error("malformed_box", "read past end of file at byte " + std::to_string(at));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | b_[at + i];
    return v;
  }

  /// Children of the byte range [begin, end).
  std::vector<Box> children(std::uint64_t begin, std::uint64_t end) const {
    std::vector<Box> out;
    std::uint64_t at = begin;
    while (at + 8 <= end) {
      Box box;
      box.offset = at;
      box.size = be(at, 4);
      box.type = static_cast<std::uint32_t>(be(at + 4, 4));
      box.header = 8;
      if (box.size == 1) {
        box.size = be(at + 8, 8);
        box.header = 16;
      } else if (box.size == 0) {
        box.size = end - at;
      }
      if (box.size < box.header)
        throw mp4_error("malformed_box", "box '" + fourcc_str(box.type) + "' has invalid size");
      if (box.size > end - at) {
        if (box.type == fourcc("mdat"))
          throw mp4_error("truncated_mdat", "mdat box extends " + std::to_string(box.size - (end - at)) +
                                                " bytes past end of file");
        throw mp4_error("malformed_box", "box '" + fourcc_str(box.type) + "' extends past its parent");
      }
      out.push_back(box);
      at += box.size;
    }
    return out;
  }

  std::optional<Box> find(std::uint64_t begin, std::uint64_t end, std::uint32_t type) const {
    for (const auto& c : children(begin, end))
      if (c.type == type) return c;
    return std::nullopt;
  }

  Box require(const Box& parent, std::uint32_t type, std::uint64_t skip = 0) const {
    auto b = find(parent.body() + skip, parent.end(), type);
    if (!b) throw mp4_error("missing_box", "no '" + fourcc_str(type) + "' box inside '" + fourcc_str(parent.type) + "'");
    return *b;
  }

  std::span<const std::uint8_t> bytes() const { return b_; }

 private:
  std::span<const std::uint8_t> b_;
};

inline bool looks_like_mp4(std::span<const std::uint8_t> b) {
  if (b.size() < 8) return false;
  const std::uint32_t t = (std::uint32_t(b[4]) << 24) | (std::uint32_t(b[5]) << 16) | (std::uint32_t(b[6]) << 8) | b[7];
  for (auto k : {fourcc("ftyp"), fourcc("moov"), fourcc("mdat"), fourcc("free"), fourcc("skip"), fourcc("wide"),
                 fourcc("pnot")})
    if (t == k) return true;
  return false;
}

}  // namespace detail

struct DemuxResult {
  std::vector<NalUnit> nals;  // parameter sets first, then samples in decode order
  std::size_t sample_count = 0;
  std::uint32_t length_size = 4;
};

/// Extracts the first AVC video track of an ISO-BMFF file as NAL units.
inline DemuxResult demux_mp4(std::span<const std::uint8_t> b) {
  using detail::fourcc;
  if (b.empty()) throw mp4_error("eof", "empty file");
  if (starts_with_start_code(b) || (b.size() >= 4 && b[0] == 0 && b[1] == 0 && b[2] == 0 && b[3] == 1))
    throw mp4_error("container_mismatch", "Annex-B start code found where an ISO-BMFF box was expected");
  if (b.size() < 8) throw mp4_error("eof", "file ends inside the first box header");
  detail::Mp4Reader r(b);
  const auto top = r.children(0, b.size());
  std::optional<detail::Box> moov;
  for (const auto& t : top)
    if (t.type == fourcc("moov")) moov = t;
  if (!moov) throw mp4_error("missing_box", "no 'moov' box");

  std::optional<detail::Box> stbl;
  std::uint32_t other_codec = 0;
  for (const auto& trak : r.children(moov->body(), moov->end())) {
    if (trak.type != fourcc("trak")) continue;
    const auto mdia = r.find(trak.body(), trak.end(), fourcc("mdia"));
    if (!mdia) continue;
    const auto hdlr = r.find(mdia->body(), mdia->end(), fourcc("hdlr"));
    if (!hdlr || r.be(hdlr->body() + 8, 4) != fourcc("vide")) continue;
    const auto minf = r.require(*mdia, fourcc("minf"));
    const auto st = r.require(minf, fourcc("stbl"));
    const auto stsd = r.require(st, fourcc("stsd"));
    const auto entries = r.children(stsd.body() + 8, stsd.end());
    if (entries.empty()) throw mp4_error("missing_box", "empty 'stsd' box");
    if (entries[0].type == fourcc("avc1") || entries[0].type == fourcc("avc3")) {
      stbl = st;
      break;
    }
    other_codec = entries[0].type;
  }
  if (!stbl) {
    if (other_codec)
      throw mp4_error("unsupported_codec", "video sample entry '" + detail::fourcc_str(other_codec) + "' is not AVC",
                      ErrorKind::unsupported);
    throw mp4_error("missing_box", "no video 'trak' with an 'stbl' box");
  }

  DemuxResult out;
  // avcC inside the visual sample entry (78 bytes of fixed fields after the header).
  const auto stsd = r.require(*stbl, fourcc("stsd"));
  const auto entry = r.children(stsd.body() + 8, stsd.end())[0];
  const auto avcc = r.find(entry.body() + 78, entry.end(), fourcc("avcC"));
  if (!avcc) throw mp4_error("missing_box", "no 'avcC' box in the AVC sample entry");
  std::uint64_t at = avcc->body();
  if (avcc->end() - at < 7) throw mp4_error("malformed_box", "avcC too short");
  out.length_size = static_cast<std::uint32_t>(r.be(at + 4, 1) & 3) + 1;
  std::uint64_t nsps = r.be(at + 5, 1) & 0x1f;
  at += 6;
  auto take_ps = [&](std::uint64_t count) {
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t len = r.be(at, 2);
      if (at + 2 + len > avcc->end()) throw mp4_error("malformed_box", "parameter set overruns avcC");
      out.nals.push_back(make_nal(b.subspan(at + 2, len), at + 2));
      at += 2 + len;
    }
  };
  take_ps(nsps);
  const std::uint64_t npps = r.be(at, 1);
  ++at;
  take_ps(npps);

  // Sample table.
  const auto stsz = r.require(*stbl, fourcc("stsz"));
  const std::uint64_t fixed_size = r.be(stsz.body() + 4, 4);
  const std::uint64_t count = r.be(stsz.body() + 8, 4);
  if (fixed_size == 0 && stsz.body() + 12 + count * 4 > stsz.end())
    throw mp4_error("malformed_box", "stsz entry table overruns its box");
  auto sample_size = [&](std::uint64_t i) { return fixed_size ? fixed_size : r.be(stsz.body() + 12 + 4 * i, 4); };

  std::vector<std::uint64_t> chunk_offsets;
  if (auto stco = r.find(stbl->body(), stbl->end(), fourcc("stco"))) {
    const std::uint64_t n = r.be(stco->body() + 4, 4);
    if (stco->body() + 8 + n * 4 > stco->end()) throw mp4_error("malformed_box", "stco overruns its box");
    for (std::uint64_t i = 0; i < n; ++i) chunk_offsets.push_back(r.be(stco->body() + 8 + 4 * i, 4));
  } else if (auto co64 = r.find(stbl->body(), stbl->end(), fourcc("co64"))) {
    const std::uint64_t n = r.be(co64->body() + 4, 4);
    if (co64->body() + 8 + n * 8 > co64->end()) throw mp4_error("malformed_box", "co64 overruns its box");
    for (std::uint64_t i = 0; i < n; ++i) chunk_offsets.push_back(r.be(co64->body() + 8 + 8 * i, 8));
  } else {
    throw mp4_error("missing_box", "no 'stco' or 'co64' box");
  }
  const auto stsc = r.require(*stbl, fourcc("stsc"));
  const std::uint64_t nstsc = r.be(stsc.body() + 4, 4);
  if (stsc.body() + 8 + nstsc * 12 > stsc.end()) throw mp4_error("malformed_box", "stsc overruns its box");

  std::uint64_t sample = 0;
  for (std::uint64_t e = 0; e < nstsc && sample < count; ++e) {
    const std::uint64_t first = r.be(stsc.body() + 8 + 12 * e, 4);
    const std::uint64_t per = r.be(stsc.body() + 12 + 12 * e, 4);
    const std::uint64_t last =
        e + 1 < nstsc ? r.be(stsc.body() + 8 + 12 * (e + 1), 4) : chunk_offsets.size() + 1;
    if (first == 0 || last < first) throw mp4_error("malformed_box", "stsc chunk numbers are not increasing");
    for (std::uint64_t chunk = first; chunk < last && sample < count; ++chunk) {
      if (chunk > chunk_offsets.size()) throw mp4_error("malformed_box", "stsc references a missing chunk");
      std::uint64_t pos = chunk_offsets[chunk - 1];
      for (std::uint64_t s = 0; s < per && sample < count; ++s, ++sample) {
        const std::uint64_t size = sample_size(sample);
        if (pos > b.size() || size > b.size() - pos)
          throw mp4_error("truncated_mdat", "sample " + std::to_string(sample) + " extends past end of file");
        std::uint64_t p = pos;
        while (p < pos + size) {
          if (pos + size - p < out.length_size) throw mp4_error("malformed_box", "truncated NAL length prefix");
          const std::uint64_t len = r.be(p, static_cast<int>(out.length_size));
          p += out.length_size;
          if (len > pos + size - p)
            throw mp4_error("truncated_mdat", "NAL unit overruns sample " + std::to_string(sample));
          if (len > 0) out.nals.push_back(make_nal(b.subspan(p, len), p));
          p += len;
        }
        pos += size;
      }
    }
  }
  if (sample != count) throw mp4_error("malformed_box", "sample table describes fewer samples than stsz");
  out.sample_count = count;
  return out;
}

struct LoadedStream {
  std::vector<NalUnit> nals;
  Container container = Container::AnnexB;
  std::size_t sample_count = 0;  // MP4 only
};

inline LoadedStream split_stream(std::span<const std::uint8_t> b) {
  LoadedStream s;
  if (b.empty()) throw mp4_error("eof", "empty stream file");
  if (detail::looks_like_mp4(b)) {
    auto d = demux_mp4(b);
    s.nals = std::move(d.nals);
    s.container = Container::MP4;
    s.sample_count = d.sample_count;
  } else {
    s.nals = split_annexb(b);
  }
  return s;
}

inline LoadedStream load_stream(const std::filesystem::path& path) { return split_stream(read_file(path)); }

/// Container detection, demux and residual parsing in one call.
inline std::vector<BlockResidualMap> parse_file(const std::filesystem::path& path, StreamInfo* info = nullptr) {
  LoadedStream s = load_stream(path);
  StreamInfo i;
  i.container = s.container;
  auto maps = parse_stream(s.nals, &i);
  if (info) *info = i;
  return maps;
}

/// Stream facts available without decoding slices (for CABAC streams).
inline StreamInfo probe_stream(const LoadedStream& s) {
  StreamParser p;
  std::size_t pictures = 0;
  for (const auto& n : s.nals) {
    if (n.type == 7 || n.type == 8) p.feed(n);
  }
  StreamInfo i = p.info();
  i.container = s.container;
  // Counting primary coded pictures requires slice headers; approximate by
  // first_mb_in_slice == 0 of non-redundant slices.
  for (const auto& n : s.nals) {
    if (n.type != 1 && n.type != 5) continue;
    BitReader br(n.rbsp);
    if (br.ue() == 0) ++pictures;
  }
  i.frame_count = pictures;
  return i;
}

}  // namespace prnu::h264
