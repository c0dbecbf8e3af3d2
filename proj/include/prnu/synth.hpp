#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prnu/codec_sim.hpp"
#include "prnu/eval.hpp"
#include "prnu/h264/masks.hpp"
#include "prnu/h264/trace.hpp"
#include "prnu/y4m.hpp"

namespace prnu::sim {

/// Synthetic corpus layout. Defaults give the heavy-quantization regime used
/// for the Scenario 6 method comparison.
struct SynthParams {
  std::size_t devices = 4;
  std::size_t videos = 6;       // natural-content videos per device
  std::size_t flat_videos = 1;  // flat-content videos per device
  std::size_t frames = 60;
  std::size_t width = 128;
  std::size_t height = 128;
  double qp = 18.0;
  double native_qp = 0.0;  // > 0: also emit a native encode, and derive youtube from it
  int block_size = 4;
  std::string gop = "IPPPPPPPPPPPPPPP";
  double k_std = 0.005;
  double psi_sigma = 3.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (devices == 0) throw usage_error("devices must be at least 1");
    if (videos + flat_videos == 0) throw usage_error("need at least one video per device");
    if (frames == 0) throw usage_error("frames must be at least 1");
    if (width < ImagePlane::kMinDim || height < ImagePlane::kMinDim) throw usage_error("frames must be at least 8x8");
    if (!(native_qp >= 0.0)) throw usage_error("native_qp must be >= 0");
    SimCodecParams{qp, block_size, gop, true, seed}.validate();
  }
};

struct SynthVideo {
  std::string stem;
  std::string device_id;
  double coverage = 0.0;
  std::size_t i_frames = 0;
};

struct SynthReport {
  eval::Manifest manifest;  // paths relative to the output directory
  std::vector<SynthVideo> videos;
};

namespace detail {
inline void write_stream(const SimStream& s, const std::filesystem::path& dir, const std::string& stem,
                         const std::string& comment) {
  Y4mWriter w(dir / (stem + ".y4m"), s.decoded_frames[0].width(), s.decoded_frames[0].height());
  for (const auto& f : s.decoded_frames) w.write(f);
  h264::save_masks(s.ground_truth_masks, dir / (stem + ".prnumk"));
  write_file_atomic(dir / (stem + ".trace"), h264::emit_trace(s.residual_maps, comment));
  w.commit();
}

inline std::vector<ImagePlane> quantize_8bit(const std::vector<ImagePlane>& in) {
  std::vector<ImagePlane> out;
  out.reserve(in.size());
  for (const auto& f : in) {
    RealMatrix m = f.pixels();
    for (double& v : m) v = std::clamp(std::round(v), 0.0, 255.0);
    out.emplace_back(std::move(m));
  }
  return out;
}
}  // namespace detail

/// Writes <stem>.y4m, <stem>.prnumk and <stem>.trace per video plus
/// manifest.csv into `out_dir`.
inline SynthReport synth_corpus(const SynthParams& p, const std::filesystem::path& out_dir) {
  p.validate();
  std::filesystem::create_directories(out_dir);
  SynthReport rep;
  const std::string res_class = std::to_string(p.height) + "p";
  char buf[64];
  for (std::size_t d = 0; d < p.devices; ++d) {
    const SensorModel sensor = make_sensor(p.width, p.height, mix_seed(p.seed, d), p.k_std, p.psi_sigma);
    std::snprintf(buf, sizeof buf, "dev%02zu", d);
    const std::string device = buf;
    for (std::size_t v = 0; v < p.flat_videos + p.videos; ++v) {
      const bool flat = v < p.flat_videos;
      SceneParams sp;
      sp.content = flat ? Content::flat : Content::natural;
      sp.motion = flat ? Motion::still : static_cast<Motion>(v % 3);
      sp.seed = mix_seed(p.seed, 1000003 * (d + 1) + v);
      const SceneGenerator gen(p.width, p.height, sp);
      std::vector<ImagePlane> frames;
      frames.reserve(p.frames);
      for (std::size_t t = 0; t < p.frames; ++t) frames.push_back(synth_frame(sensor, gen.frame(t), mix_seed(sp.seed, t)));

      SimCodecParams cp{p.qp, p.block_size, p.gop, true, p.seed};
      std::snprintf(buf, sizeof buf, "%s_%s%02zu", device.c_str(), flat ? "flat" : "natural", v);
      const std::string base = buf;
      auto emit = [&](const SimStream& s, eval::Origin origin) {
        const std::string stem = base + "_" + eval::to_string(origin);
        detail::write_stream(s, out_dir, stem, "synthetic " + stem);
        eval::ManifestEntry e;
        e.path = stem + ".y4m";
        e.mask_path = stem + ".prnumk";
        e.device_id = device;
        e.content = sp.content;
        e.origin = origin;
        e.motion = sp.motion;
        e.resolution_class = res_class;
        e.row = rep.manifest.entries.size() + 1;
        rep.manifest.entries.push_back(e);
        const auto stats = h264::mask_stats(s.ground_truth_masks);
        rep.videos.push_back({stem, device, stats.stream, stats.count_by_type[0]});
      };
      if (p.native_qp > 0.0) {
        SimCodecParams np = cp;
        np.qp = p.native_qp;
        const SimStream native = encode_decode(frames, np);
        emit(native, eval::Origin::native);
        emit(encode_decode(detail::quantize_8bit(native.decoded_frames), cp), eval::Origin::youtube);
      } else {
        emit(encode_decode(frames, cp), eval::Origin::youtube);
      }
    }
  }
  write_file_atomic(out_dir / "manifest.csv", eval::manifest_csv(rep.manifest));
  return rep;
}

}  // namespace prnu::sim
