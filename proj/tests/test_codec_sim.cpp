#include <gtest/gtest.h>

#include "prnu/codec_sim.hpp"
#include "prnu/h264/masks.hpp"
#include "prnu/h264/trace.hpp"
#include "test_util.hpp"

using namespace prnu;
using namespace prnu::sim;

namespace {

std::vector<ImagePlane> scene_frames(std::size_t w, std::size_t h, std::size_t n, SceneParams p) {
  const SceneGenerator g(w, h, p);
  std::vector<ImagePlane> out;
  for (std::size_t t = 0; t < n; ++t) out.push_back(g.frame(t));
  return out;
}

std::vector<ImagePlane> sensor_frames(const SensorModel& m, std::size_t n, SceneParams p) {
  const SceneGenerator g(m.width, m.height, p);
  std::vector<ImagePlane> out;
  for (std::size_t t = 0; t < n; ++t) out.push_back(synth_frame(m, g.frame(t), t));
  return out;
}

}  // namespace

TEST(SynthFrame, NoPrnuNoNoiseReturnsScene) {
  SensorModel m = make_sensor(32, 24, 3, 0.0, 0.0);
  const ImagePlane scene = SceneGenerator(32, 24, {}).frame(0);
  EXPECT_EQ(synth_frame(m, scene, 0), scene);
}

TEST(SynthFrame, DarkSceneHidesPrnu) {
  const SensorModel m = make_sensor(16, 16, 3, 0.05, 0.0);
  const ImagePlane out = synth_frame(m, ImagePlane(16, 16, 0.0), 0);
  for (double v : out.pixels()) EXPECT_EQ(v, 0.0);
  const SensorModel noisy = make_sensor(16, 16, 3, 0.05, 2.0);
  for (double v : synth_frame(noisy, ImagePlane(16, 16, 0.0), 0).pixels()) EXPECT_GE(v, 0.0);
}

TEST(SynthFrame, AveragingFlatFramesRecoversK) {
  const SensorModel m = make_sensor(64, 64, 9, 0.02, 3.0);
  const ImagePlane flat(64, 64, 128.0);
  RealMatrix avg(64, 64);
  for (std::size_t t = 0; t < 100; ++t) {
    const ImagePlane f = synth_frame(m, flat, t);
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += f.pixels()[i] / 100.0;
  }
  for (auto& v : avg) v = v / 128.0 - 1.0;
  EXPECT_GT(correlation(avg, m.K), 0.95);
}

TEST(SynthFrame, DeterministicPerSeedAndIndex) {
  const SensorModel m = make_sensor(16, 16, 4, 0.02, 2.0);
  const ImagePlane s(16, 16, 100.0);
  EXPECT_EQ(synth_frame(m, s, 7), synth_frame(m, s, 7));
  EXPECT_NE(synth_frame(m, s, 7), synth_frame(m, s, 8));
  EXPECT_EQ(make_sensor(16, 16, 4).K, make_sensor(16, 16, 4).K);
  EXPECT_NE(make_sensor(16, 16, 4).K, make_sensor(16, 16, 5).K);
}

TEST(SynthFrame, DimensionMismatchThrows) {
  const SensorModel m = make_sensor(16, 16, 4);
  EXPECT_THROW(synth_frame(m, ImagePlane(16, 17, 1.0), 0), Error);
}

TEST(SynthFrame, PlantedKShowsInResidual) {
  const SensorModel m = make_sensor(64, 64, 21, 0.02, 1.0);
  const auto frames = sensor_frames(m, 10, {Content::natural, Motion::pan, 3});
  RealMatrix wi(64, 64);
  for (const auto& f : frames) {
    const auto w = extract_noise(f);
    for (std::size_t i = 0; i < wi.size(); ++i) wi[i] += w.plane[i] * f.pixels()[i];
  }
  // 4096 samples: correlation 0.1 is far beyond the null spread (~0.016).
  EXPECT_GT(correlation(wi, m.K), 0.1);
}

TEST(Dct, OrthonormalAndInvertible) {
  for (int n : {4, 8}) {
    const RealMatrix C = dct_matrix(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += C(i, k) * C(j, k);
        EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
      }
    const RealMatrix x = prnu::testing::random_matrix(n, n, 5, 30.0);
    EXPECT_LT(max_abs_diff(idct2(dct2(x, C), C), x), 1e-10);
  }
}

TEST(Quantize, RoundsHalfAwayFromZero) {
  EXPECT_EQ(quantize(2.5, 1.0), 3.0);
  EXPECT_EQ(quantize(-2.5, 1.0), -3.0);
  EXPECT_EQ(quantize(0.49, 1.0), 0.0);
  EXPECT_EQ(quantize(-0.5, 1.0), -1.0);
  EXPECT_EQ(quantize(10.0, 4.0), 3.0);
}

TEST(SimCodecParams, Validation) {
  SimCodecParams p;
  p.qp = 0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.block_size = 6;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.gop = "PIP";
  EXPECT_THROW(p.validate(), Error);
  p.gop = "IBP";
  EXPECT_THROW(p.validate(), Error);
  p.gop = "";
  EXPECT_THROW(p.validate(), Error);
  p.gop = "IPP";
  EXPECT_EQ(p.type_of(3), FrameType::I);
  EXPECT_EQ(p.type_of(4), FrameType::P);
}

TEST(EncodeDecode, HugeQpZeroesMasksAndCopiesReferences) {
  SimCodecParams p;
  p.qp = 1e6;
  const auto frames = scene_frames(32, 32, 6, {Content::natural, Motion::pan, 2});
  const SimStream s = encode_decode(frames, p);
  for (const auto& m : s.ground_truth_masks) EXPECT_EQ(m.ones(), 0u);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    if (p.type_of(k) != FrameType::P) continue;
    EXPECT_EQ(s.decoded_frames[k], s.decoded_frames[k - 1]);
    EXPECT_EQ(s.predictions[k], s.decoded_frames[k - 1]);
  }
}

TEST(EncodeDecode, TinyQpIsNearLossless) {
  const SensorModel m = make_sensor(32, 32, 8, 0.02, 2.0);
  const auto frames = sensor_frames(m, 5, {});
  SimCodecParams p;
  p.qp = 1e-6;
  const SimStream s = encode_decode(frames, p);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    EXPECT_LT(max_abs_diff(s.decoded_frames[k].pixels(), frames[k].pixels()), 1e-5);
    EXPECT_EQ(s.ground_truth_masks[k].ones(), 32u * 32u);
  }
}

TEST(EncodeDecode, DcOnlyBlockIsMaskedOutButNotSkipped) {
  SimCodecParams p;
  p.qp = 4.0;
  p.gop = "IP";
  std::vector<ImagePlane> frames{ImagePlane(8, 8, 128.0), ImagePlane(8, 8, 132.0)};
  const SimStream s = encode_decode(frames, p);
  // Residue 4 everywhere: DC = 16 -> level 4, all AC zero.
  EXPECT_EQ(s.ground_truth_masks[1].ones(), 0u);
  for (const auto& cell : s.residual_maps[1].grid) {
    EXPECT_EQ(cell.nonzero_ac_count, 0);
    EXPECT_EQ(cell.mb_type, h264::MbKind::Inter);
  }
  EXPECT_LT(max_abs_diff(s.decoded_frames[1].pixels(), frames[1].pixels()), 1e-9);
}

TEST(EncodeDecode, ReconstructionIdentityPerBlock) {
  const SensorModel m = make_sensor(40, 24, 12, 0.02, 2.0);
  const auto frames = sensor_frames(m, 6, {});
  for (int n : {4, 8}) {
    SimCodecParams p;
    p.qp = 10.0;
    p.block_size = n;
    p.gop = "IPP";
    const SimStream s = encode_decode(frames, p);
    const RealMatrix C = dct_matrix(n);
    for (std::size_t k = 0; k < frames.size(); ++k)
      for (std::size_t by = 0; by < 24; by += n)
        for (std::size_t bx = 0; bx < 40; bx += n) {
          RealMatrix res(n, n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
              res(i, j) = frames[k](by + i, bx + j) - s.predictions[k](by + i, bx + j);
          RealMatrix q = dct2(res, C);
          for (auto& v : q) v = quantize(v, p.qp) * p.qp;
          const RealMatrix rec = idct2(q, C);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
              ASSERT_NEAR(s.decoded_frames[k](by + i, bx + j), s.predictions[k](by + i, bx + j) + rec(i, j), 1e-9);
        }
  }
}

TEST(EncodeDecode, IntraPredictorUsesDecodedNeighbours) {
  SimCodecParams p;
  p.qp = 1e6;
  p.gop = "I";
  RealMatrix px(8, 8, 200.0);
  const SimStream s = encode_decode({ImagePlane(px)}, p);
  // Every block collapses to its predictor; the first has no neighbours.
  for (double v : s.decoded_frames[0].pixels()) EXPECT_EQ(v, 128.0);
  p.intra_copy_prediction = false;
  p.qp = 1.0;
  const SimStream flat = encode_decode({ImagePlane(px)}, p);
  EXPECT_EQ(flat.predictions[0](4, 4), 128.0);
}

TEST(EncodeDecode, MasksMatchResidualMaps) {
  const SensorModel m = make_sensor(37, 29, 14, 0.02, 2.0);
  const auto frames = sensor_frames(m, 8, {});
  for (int n : {4, 8}) {
    SimCodecParams p;
    p.qp = 14.0;
    p.block_size = n;
    const SimStream s = encode_decode(frames, p);
    ASSERT_EQ(s.decoded_frames[0].width(), 37u);
    ASSERT_EQ(s.decoded_frames[0].height(), 29u);
    EXPECT_EQ(h264::build_masks(s.residual_maps), s.ground_truth_masks);
    if (n == 8)
      for (std::size_t r = 0; r + 1 < s.residual_maps[0].grid_rows(); r += 2)
        for (std::size_t c = 0; c + 1 < s.residual_maps[0].grid_cols(); c += 2) {
          const auto& g = s.residual_maps[0].grid;
          EXPECT_EQ(g(r, c), g(r + 1, c + 1));
          EXPECT_EQ(g(r, c).transform_size, h264::TransformSize::T8x8);
        }
  }
}

TEST(EncodeDecode, TraceAndMaskFilesRoundTrip) {
  const SensorModel m = make_sensor(48, 32, 15, 0.02, 2.0);
  SimCodecParams p;
  p.qp = 12.0;
  const SimStream s = simulate(m, {}, p, 9);
  const auto back = h264::parse_trace(h264::emit_trace(s.residual_maps));
  ASSERT_EQ(back.size(), s.residual_maps.size());
  for (std::size_t k = 0; k < back.size(); ++k) EXPECT_TRUE(h264::same_counts(back[k], s.residual_maps[k]));
  EXPECT_EQ(h264::build_masks(back), s.ground_truth_masks);
  EXPECT_EQ(h264::decode_masks(h264::encode_masks(s.ground_truth_masks)), s.ground_truth_masks);
}

TEST(EncodeDecode, CoverageMonotoneInQp) {
  const SensorModel m = make_sensor(64, 64, 16, 0.02, 3.0);
  const auto frames = sensor_frames(m, 16, {});
  double last = 2.0;
  for (double qp : {1.0, 4.0, 8.0, 12.0, 16.0, 22.0, 30.0, 60.0, 200.0}) {
    SimCodecParams p;
    p.qp = qp;
    const double cov = h264::mask_stats(encode_decode(frames, p).ground_truth_masks).stream;
    EXPECT_LE(cov, last) << "qp " << qp;
    last = cov;
  }
}

TEST(EncodeDecode, Deterministic) {
  const SensorModel m = make_sensor(32, 32, 17, 0.02, 3.0);
  SimCodecParams p;
  p.qp = 16.0;
  const SimStream a = simulate(m, {}, p, 10), b = simulate(m, {}, p, 10);
  EXPECT_EQ(a.decoded_frames, b.decoded_frames);
  EXPECT_EQ(a.ground_truth_masks, b.ground_truth_masks);
  EXPECT_EQ(a.residual_maps, b.residual_maps);
}

TEST(EncodeDecode, ZeroMaskBlocksCarryReferenceNoise) {
  const SensorModel m = make_sensor(64, 64, 18, 0.02, 3.0);
  const SceneParams sp{Content::natural, Motion::still, 4};
  const SceneGenerator g(64, 64, sp);
  std::vector<ImagePlane> frames, scenes;
  for (std::size_t t = 0; t < 12; ++t) {
    scenes.push_back(g.frame(t));
    frames.push_back(synth_frame(m, scenes.back(), t));
  }
  SimCodecParams p;
  p.qp = 22.0;
  const SimStream s = encode_decode(frames, p);
  std::vector<double> dec, ref, psi;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    if (p.type_of(k) != FrameType::P) continue;
    for (std::size_t i = 0; i < frames[k].pixels().size(); ++i) {
      if (s.ground_truth_masks[k].bits[i]) continue;
      const double sc = scenes[k].pixels()[i];
      dec.push_back(s.decoded_frames[k].pixels()[i] - sc);
      ref.push_back(s.predictions[k].pixels()[i] - sc);
      psi.push_back(frames[k].pixels()[i] - sc - sc * m.K[i]);
    }
  }
  ASSERT_GT(dec.size(), 1000u);
  const auto as_matrix = [](const std::vector<double>& v) { return RealMatrix(1, v.size(), v); };
  const double to_ref = correlation(as_matrix(dec), as_matrix(ref));
  const double to_psi = correlation(as_matrix(dec), as_matrix(psi));
  EXPECT_GT(to_ref, to_psi);
}

TEST(Survival, DegenerateQps) {
  const SensorModel m = make_sensor(64, 64, 19, 0.02, 3.0);
  SimCodecParams p;
  p.qp = 1e6;
  const SurvivalReport huge = survival_experiment(m, p, 20);
  EXPECT_EQ(huge.coverage, 0.0);
  EXPECT_EQ(huge.corr_masked, 0.0);
  p.qp = 1e-3;
  const SurvivalReport tiny = survival_experiment(m, p, 20);
  EXPECT_EQ(tiny.coverage, 1.0);
  EXPECT_NEAR(tiny.corr_masked, tiny.corr_all, 1e-3);
  EXPECT_THROW(survival_experiment(m, p, 19), Error);
}
