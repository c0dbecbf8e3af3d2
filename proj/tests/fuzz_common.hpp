#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <vector>

#include <string>

#include "prnu/h264/masks.hpp"
#include "prnu/h264/mp4.hpp"
#include "prnu/h264/trace.hpp"

namespace prnu::fuzz {

struct Corpus {
  std::vector<prnu::Bytes> streams;
  std::vector<prnu::Bytes> traces;
};

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const auto ext = p.extension().string();
    if (ext == ".264" || ext == ".mp4" || ext == ".mov") c.streams.push_back(prnu::read_file(p));
    if (ext == ".trace") c.traces.push_back(prnu::read_file(p));
  }
  return c;
}

inline prnu::Bytes mutate(prnu::Bytes b, std::mt19937_64& rng, const std::vector<prnu::Bytes>& pool) {
  const int ops = 1 + static_cast<int>(rng() % 8);
  for (int i = 0; i < ops && !b.empty(); ++i) {
    const std::size_t at = rng() % b.size();
    switch (rng() % 7) {
      case 0: b[at] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
      case 1: b[at] = static_cast<std::uint8_t>(rng()); break;
      case 2: b.erase(b.begin() + at, b.begin() + std::min(b.size(), at + 1 + rng() % 16)); break;
      case 3: b.insert(b.begin() + at, 1 + rng() % 16, static_cast<std::uint8_t>(rng())); break;
      case 4: b.resize(at); break;
      case 5: {
        const auto& o = pool[rng() % pool.size()];
        if (o.empty()) break;
        const std::size_t from = rng() % o.size();
        const std::size_t n = std::min<std::size_t>(o.size() - from, 1 + rng() % 256);
        b.insert(b.begin() + at, o.begin() + from, o.begin() + from + n);
        break;
      }
      default: {
        // Boundary values in multi-byte fields.
        static constexpr std::uint8_t kVals[] = {0x00, 0xff, 0x7f, 0x80, 0x01, 0x03};
        b[at] = kVals[rng() % 6];
        break;
      }
    }
  }
  return b;
}


/// Feeds one input through the parsers. Returns the error code, "ok", or
/// "UNEXPECTED: <what>" for anything that is not a structured error.
inline std::string run_one(const prnu::Bytes& input, bool trace) {
  try {
    if (trace) {
      prnu::h264::parse_trace(std::string_view(reinterpret_cast<const char*>(input.data()), input.size()));
    } else {
      const auto s = prnu::h264::split_stream(input);
      prnu::h264::build_masks(prnu::h264::parse_stream(s.nals));
    }
  } catch (const prnu::h264::StreamError& e) {
    return e.code();
  } catch (const prnu::Error&) {
    return "error";
  } catch (const std::exception& e) {
    return std::string("UNEXPECTED: ") + e.what();
  }
  return "ok";
}

}  // namespace prnu::fuzz
