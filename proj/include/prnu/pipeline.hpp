#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prnu/fingerprint.hpp"
#include "prnu/h264/masks.hpp"
#include "prnu/h264/mp4.hpp"
#include "prnu/h264/trace.hpp"
#include "prnu/noise.hpp"
#include "prnu/parallel.hpp"
#include "prnu/y4m.hpp"

namespace prnu {

/// Frame policies: C1 = I frames only, C2 = all frames, block = masked
/// estimator over every frame.
enum class Method { C1, C2, Block };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::C1: return "c1";
    case Method::C2: return "c2";
    case Method::Block: return "block";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "c1" || s == "C1") return Method::C1;
  if (s == "c2" || s == "C2") return Method::C2;
  if (s == "block") return Method::Block;
  throw usage_error("unknown method '" + s + "' (expected c1, c2 or block)");
}

/// Masks from a PRNUMK1 file (.prnumk), a PRNUTRACE file (.trace) or an
/// H.264 stream (anything else).
inline std::vector<FrameMask> load_mask_source(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".prnumk") return h264::load_masks(path);
  if (ext == ".trace") return h264::build_masks(h264::ingest_trace(path));
  return h264::build_masks(h264::parse_file(path));
}

struct EstimateParams {
  DenoiseParams denoise;
  bool post_process = true;
  std::size_t workers = 1;
  std::size_t batch = 8;  // frames decoded ahead per worker
};

struct EstimateResult {
  Fingerprint fingerprint;
  std::size_t frames_total = 0;
  bool low_confidence = false;
  std::vector<std::string> warnings;
};

/// Streams a YUV4MPEG2 file through residual extraction and the estimator
/// selected by `method`. Masks supply frame types (C1) and M_k (block).
inline EstimateResult estimate_fingerprint(const std::filesystem::path& frames_path,
                                           const std::vector<FrameMask>* masks, Method method,
                                           const EstimateParams& params = {}) {
  if (method != Method::C2 && !masks)
    throw usage_error(std::string("method ") + to_string(method) + " needs masks, a trace or the H.264 stream");
  params.denoise.validate();
  Y4mReader reader(frames_path);
  const std::size_t W = reader.info().width, H = reader.info().height;
  if (masks && !masks->empty() && ((*masks)[0].width() != W || (*masks)[0].height() != H))
    throw data_error("masks are " + std::to_string((*masks)[0].width()) + "x" + std::to_string((*masks)[0].height()) +
                     ", frames are " + std::to_string(W) + "x" + std::to_string(H));
  FingerprintAccumulator acc(W, H, method == Method::Block);
  EstimateResult res;
  const std::size_t workers = std::max<std::size_t>(1, params.workers);
  const std::size_t batch = workers * std::max<std::size_t>(1, params.batch);
  std::vector<ImagePlane> frames;
  std::vector<NoiseResidual> residuals;
  std::vector<std::size_t> indices;
  bool eof = false;
  while (!eof) {
    frames.clear();
    indices.clear();
    while (frames.size() < batch) {
      ImagePlane p;
      if (!reader.next(p)) {
        eof = true;
        break;
      }
      const std::size_t k = res.frames_total++;
      if (masks && k >= masks->size())
        throw data_error("frame-count mismatch: masks cover " + std::to_string(masks->size()) +
                         " frames, " + frames_path.string() + " has more");
      if (method == Method::C1 && (*masks)[k].frame_type != FrameType::I) continue;
      frames.push_back(std::move(p));
      indices.push_back(k);
    }
    residuals.assign(frames.size(), NoiseResidual{});
    parallel_for(frames.size(), workers,
                 [&](std::size_t i) { residuals[i] = extract_noise(frames[i], params.denoise); });
    for (std::size_t i = 0; i < frames.size(); ++i)
      acc.accumulate(frames[i], residuals[i], method == Method::Block ? &(*masks)[indices[i]] : nullptr);
  }
  if (masks && res.frames_total != masks->size())
    throw data_error("frame-count mismatch: masks cover " + std::to_string(masks->size()) + " frames, " +
                     frames_path.string() + " has " + std::to_string(res.frames_total));
  if (acc.frames_seen() == 0) throw data_error(frames_path.string() + ": no frames selected by method " + to_string(method));
  res.fingerprint = finalize(acc, params.post_process);
  res.fingerprint.source_label = frames_path.filename().string();
  if (method == Method::C1 && acc.frames_seen() == 1) {
    res.low_confidence = true;
    res.warnings.push_back("only one I frame available; fingerprint is low-confidence");
  }
  if (method == Method::Block) {
    bool any = false;
    for (double v : acc.denominator()) any = any || v != 0.0;
    if (!any) {
      res.low_confidence = true;
      res.warnings.push_back("all masks are zero; fingerprint is identically zero");
    }
  }
  return res;
}

}  // namespace prnu
