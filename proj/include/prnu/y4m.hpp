#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prnu/error.hpp"
#include "prnu/matrix.hpp"

namespace prnu {

/// YUV4MPEG2 stream parameters. Only the luma plane is consumed.
struct Y4mInfo {
  std::size_t width = 0;
  std::size_t height = 0;
  std::string chroma = "420jpeg";
  std::string frame_rate = "25:1";
  int bit_depth = 8;

  std::size_t bytes_per_sample() const { return bit_depth > 8 ? 2 : 1; }
  std::size_t luma_bytes() const { return width * height * bytes_per_sample(); }
  std::size_t chroma_bytes() const {
    const std::size_t cw = (width + 1) / 2, ch = (height + 1) / 2;
    std::size_t n = 0;
    if (chroma.rfind("420", 0) == 0) n = 2 * cw * ch;
    else if (chroma.rfind("422", 0) == 0) n = 2 * cw * height;
    else if (chroma.rfind("444", 0) == 0) n = 2 * width * height;
    else if (chroma.rfind("mono", 0) == 0) n = 0;
    return n * bytes_per_sample();
  }
};

namespace detail {
inline Y4mInfo parse_y4m_header(const std::string& line, const std::string& label) {
  if (line.rfind("YUV4MPEG2", 0) != 0) throw FormatError(label + ": not a YUV4MPEG2 file");
  Y4mInfo info;
  std::size_t pos = 9;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size()) break;
    std::size_t end = line.find(' ', pos);
    if (end == std::string::npos) end = line.size();
    const std::string tok = line.substr(pos, end - pos);
    pos = end;
    const char key = tok[0];
    const std::string val = tok.substr(1);
    try {
      if (key == 'W') info.width = std::stoul(val);
      else if (key == 'H') info.height = std::stoul(val);
      else if (key == 'F') info.frame_rate = val;
      else if (key == 'C') info.chroma = val;
    } catch (const std::exception&) {
      throw FormatError(label + ": bad header field '" + tok + "'");
    }
  }
  if (info.width == 0 || info.height == 0) throw FormatError(label + ": header lacks W/H");
  if (info.width > 16384 || info.height > 16384) throw FormatError(label + ": frame dimensions too large");
  const std::string& c = info.chroma;
  const bool known = c.rfind("420", 0) == 0 || c.rfind("422", 0) == 0 || c.rfind("444", 0) == 0 ||
                     c.rfind("mono", 0) == 0;
  if (!known) throw Error(ErrorKind::unsupported, label + ": unsupported colour space C" + c);
  const auto p = c.find('p');
  if (p != std::string::npos && p + 1 < c.size() && std::isdigit(static_cast<unsigned char>(c[p + 1])))
    info.bit_depth = std::stoi(c.substr(p + 1));
  else if (c == "mono16")
    info.bit_depth = 16;
  if (info.bit_depth < 8 || info.bit_depth > 16) throw FormatError(label + ": unsupported bit depth");
  return info;
}
}  // namespace detail

/// Sequential frame reader; holds one frame in memory at a time.
class Y4mReader {
 public:
  explicit Y4mReader(const std::filesystem::path& path) : label_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw io_error("cannot open " + label_);
    std::string header;
    if (!read_line(header, 4096)) throw FormatError(label_ + ": missing YUV4MPEG2 header line");
    info_ = detail::parse_y4m_header(header, label_);
    buf_.resize(info_.luma_bytes());
  }

  const Y4mInfo& info() const noexcept { return info_; }
  std::size_t frames_read() const noexcept { return frames_; }

  /// Reads the next luma plane; false at a clean end of file.
  bool next(ImagePlane& out) {
    std::string marker;
    if (!read_line(marker, 4096)) {
      if (partial_) throw FormatError(label_ + ": truncated FRAME marker after frame " + std::to_string(frames_));
      return false;
    }
    if (marker.rfind("FRAME", 0) != 0)
      throw FormatError(label_ + ": expected FRAME marker at frame " + std::to_string(frames_));
    in_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (static_cast<std::size_t>(in_.gcount()) != buf_.size())
      throw FormatError(label_ + ": truncated luma plane in frame " + std::to_string(frames_));
    in_.ignore(static_cast<std::streamsize>(info_.chroma_bytes()));
    if (static_cast<std::size_t>(in_.gcount()) != info_.chroma_bytes())
      throw FormatError(label_ + ": truncated chroma planes in frame " + std::to_string(frames_));
    RealMatrix m(info_.height, info_.width);
    if (info_.bytes_per_sample() == 1) {
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = buf_[i];
    } else {
      const double scale = 255.0 / static_cast<double>((1u << info_.bit_depth) - 1);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = (buf_[2 * i] | (buf_[2 * i + 1] << 8)) * scale;
    }
    out = ImagePlane(std::move(m));
    ++frames_;
    return true;
  }

 private:
  bool read_line(std::string& line, std::size_t limit) {
    line.clear();
    partial_ = false;
    char c;
    while (in_.get(c)) {
      if (c == '\n') return true;
      line.push_back(c);
      partial_ = true;
      if (line.size() > limit) throw FormatError(label_ + ": header line too long");
    }
    return false;
  }

  std::string label_;
  std::ifstream in_;
  Y4mInfo info_;
  std::vector<std::uint8_t> buf_;
  std::size_t frames_ = 0;
  bool partial_ = false;
};

inline std::vector<ImagePlane> read_y4m(const std::filesystem::path& path, Y4mInfo* info = nullptr) {
  Y4mReader r(path);
  std::vector<ImagePlane> frames;
  ImagePlane p;
  while (r.next(p)) frames.push_back(std::move(p));
  if (info) *info = r.info();
  return frames;
}

/// 8-bit 4:2:0 writer with neutral chroma. Output appears at `path` only
/// after commit().
class Y4mWriter {
 public:
  Y4mWriter(const std::filesystem::path& path, std::size_t width, std::size_t height,
            const std::string& frame_rate = "25:1")
      : path_(path), tmp_(path), width_(width), height_(height) {
    tmp_ += ".tmp";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw io_error("cannot create " + tmp_.string());
    out_ << "YUV4MPEG2 W" << width << " H" << height << " F" << frame_rate << " Ip A1:1 C420jpeg\n";
    chroma_.assign(2 * ((width + 1) / 2) * ((height + 1) / 2), 128);
  }
  Y4mWriter(const Y4mWriter&) = delete;
  Y4mWriter& operator=(const Y4mWriter&) = delete;
  ~Y4mWriter() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

  void write(const ImagePlane& p) {
    if (p.width() != width_ || p.height() != height_) throw data_error("y4m writer: frame dimension mismatch");
    out_ << "FRAME\n";
    std::vector<std::uint8_t> row(width_);
    for (std::size_t r = 0; r < height_; ++r) {
      for (std::size_t c = 0; c < width_; ++c) {
        const double v = std::round(p(r, c));
        row[c] = static_cast<std::uint8_t>(v < 0 ? 0 : v > 255 ? 255 : v);
      }
      out_.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    out_.write(reinterpret_cast<const char*>(chroma_.data()), static_cast<std::streamsize>(chroma_.size()));
  }

  void commit() {
    out_.close();
    if (!out_) throw io_error("cannot write " + tmp_.string());
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw io_error("cannot rename onto " + path_.string());
    committed_ = true;
  }

 private:
  std::filesystem::path path_, tmp_;
  std::size_t width_, height_;
  std::ofstream out_;
  std::vector<std::uint8_t> chroma_;
  bool committed_ = false;
};

inline void write_y4m(const std::filesystem::path& path, const std::vector<ImagePlane>& frames) {
  if (frames.empty()) throw usage_error("cannot write a y4m file with no frames");
  Y4mWriter w(path, frames[0].width(), frames[0].height());
  for (const auto& f : frames) w.write(f);
  w.commit();
}

}  // namespace prnu
