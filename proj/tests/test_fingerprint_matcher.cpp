#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "prnu/fingerprint.hpp"
#include "prnu/matcher.hpp"
#include "test_util.hpp"

using namespace prnu;
using prnu::testing::random_matrix;
using prnu::testing::uniform_matrix;

namespace {

FrameMask full_mask(std::size_t w, std::size_t h, std::uint8_t v) {
  FrameMask m;
  m.bits = Matrix<std::uint8_t>(h, w, v);
  return m;
}

// Direct evaluation of the circular NCC definition.
RealMatrix brute_ncc(const RealMatrix& f, const RealMatrix& w) {
  const std::size_t R = f.rows(), C = f.cols();
  const double mf = mean(f), mw = mean(w);
  double nf = 0, nw = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    nf += (f[i] - mf) * (f[i] - mf);
    nw += (w[i] - mw) * (w[i] - mw);
  }
  RealMatrix rho(R, C);
  for (std::size_t s1 = 0; s1 < R; ++s1)
    for (std::size_t s2 = 0; s2 < C; ++s2) {
      double acc = 0;
      for (std::size_t k = 0; k < R; ++k)
        for (std::size_t l = 0; l < C; ++l) acc += (f(k, l) - mf) * (w((k + s1) % R, (l + s2) % C) - mw);
      rho(s1, s2) = acc / std::sqrt(nf * nw);
    }
  return rho;
}

double brute_pce(const RealMatrix& rho, std::size_t pr, std::size_t pc, int h) {
  const long R = static_cast<long>(rho.rows()), C = static_cast<long>(rho.cols());
  std::set<std::pair<long, long>> S;
  for (long dr = -h; dr <= h; ++dr)
    for (long dc = -h; dc <= h; ++dc)
      S.insert({((static_cast<long>(pr) + dr) % R + R) % R, ((static_cast<long>(pc) + dc) % C + C) % C});
  double e = 0;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c)
      if (!S.count({r, c})) e += rho(r, c) * rho(r, c);
  e /= static_cast<double>(R * C - static_cast<long>(S.size()));
  return rho(pr, pc) * rho(pr, pc) / e;
}

RealMatrix shift(const RealMatrix& f, std::size_t dr, std::size_t dc) {
  RealMatrix w(f.rows(), f.cols());
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t c = 0; c < f.cols(); ++c) w((r + dr) % f.rows(), (c + dc) % f.cols()) = f(r, c);
  return w;
}

}  // namespace

TEST(Accumulator, MaskedZeroMaskOnlyCountsFrame) {
  FingerprintAccumulator acc(16, 16, true);
  const auto mask = full_mask(16, 16, 0);
  acc.accumulate(ImagePlane(16, 16, 100.0), {random_matrix(16, 16, 1)}, &mask);
  EXPECT_EQ(acc.frames_seen(), 1u);
  for (double v : acc.numerator()) EXPECT_EQ(v, 0.0);
  for (double v : acc.denominator()) EXPECT_EQ(v, 0.0);
  const Fingerprint raw = finalize_raw(acc);
  for (double v : raw.plane) EXPECT_EQ(v, 0.0);
}

TEST(Accumulator, UnmaskedConstantFrame) {
  FingerprintAccumulator acc(8, 8, false);
  const RealMatrix W = random_matrix(8, 8, 2);
  acc.accumulate(ImagePlane(8, 8, 3.0), {W});
  const RealMatrix num = acc.numerator(), den = acc.denominator();
  for (std::size_t i = 0; i < W.size(); ++i) {
    EXPECT_DOUBLE_EQ(num[i], 3.0 * W[i]);
    EXPECT_DOUBLE_EQ(den[i], 9.0);
  }
}

TEST(Accumulator, OrderIndependent) {
  const ImagePlane i1(uniform_matrix(8, 8, 1, 0, 255)), i2(uniform_matrix(8, 8, 2, 0, 255));
  const NoiseResidual w1{random_matrix(8, 8, 3)}, w2{random_matrix(8, 8, 4)};
  FingerprintAccumulator a(8, 8, false), b(8, 8, false);
  a.accumulate(i1, w1);
  a.accumulate(i2, w2);
  b.accumulate(i2, w2);
  b.accumulate(i1, w1);
  EXPECT_TRUE(a.numerator() == b.numerator());
  EXPECT_TRUE(a.denominator() == b.denominator());
}

TEST(Accumulator, ModeAndDimensionErrors) {
  FingerprintAccumulator acc(8, 8, false);
  const auto mask = full_mask(8, 8, 1);
  EXPECT_THROW(acc.accumulate(ImagePlane(8, 8), {RealMatrix(8, 8)}, &mask), Error);
  EXPECT_THROW(acc.accumulate(ImagePlane(9, 8), {RealMatrix(8, 9)}), Error);
  FingerprintAccumulator masked(8, 8, true);
  EXPECT_THROW(masked.accumulate(ImagePlane(8, 8), {RealMatrix(8, 8)}), Error);
  EXPECT_THROW(acc.merge(masked), Error);
  EXPECT_THROW(finalize(FingerprintAccumulator(8, 8, false)), Error);
}

TEST(Accumulator, MergeMonoid) {
  FingerprintAccumulator a(8, 8, false), b(8, 8, false), empty(8, 8, false);
  a.accumulate(ImagePlane(uniform_matrix(8, 8, 5, 0, 255)), {random_matrix(8, 8, 6)});
  b.accumulate(ImagePlane(uniform_matrix(8, 8, 7, 0, 255)), {random_matrix(8, 8, 8)});
  const auto ae = merge(a, empty);
  EXPECT_TRUE(ae.numerator() == a.numerator());
  EXPECT_EQ(ae.frames_seen(), 1u);
  const auto ab = merge(a, b), ba = merge(b, a);
  EXPECT_LE(max_abs_diff(ab.numerator(), ba.numerator()), 1e-9);
  EXPECT_LE(max_abs_diff(ab.denominator(), ba.denominator()), 1e-9);
  EXPECT_EQ(ab.frames_seen(), 2u);
}

TEST(Accumulator, ShardedMergeMatchesSequential) {
  const std::size_t n = 100;
  FingerprintAccumulator seq(16, 16, false);
  std::vector<FingerprintAccumulator> shards(4, FingerprintAccumulator(16, 16, false));
  for (std::size_t k = 0; k < n; ++k) {
    const ImagePlane I(uniform_matrix(16, 16, 100 + k, 0, 255));
    const NoiseResidual W{random_matrix(16, 16, 500 + k, 2.0)};
    seq.accumulate(I, W);
    shards[k % 4].accumulate(I, W);
  }
  FingerprintAccumulator merged(16, 16, false);
  for (const auto& s : shards) merged.merge(s);
  EXPECT_LE(max_abs_diff(merged.numerator(), seq.numerator()), 1e-9);
  EXPECT_LE(max_abs_diff(merged.denominator(), seq.denominator()), 1e-9);
  EXPECT_EQ(merged.frames_seen(), n);
}

TEST(Finalize, MaskedSingleConstantFrame) {
  FingerprintAccumulator acc(8, 8, true);
  const RealMatrix W = random_matrix(8, 8, 9);
  const auto mask = full_mask(8, 8, 1);
  acc.accumulate(ImagePlane(8, 8, 5.0), {W}, &mask);
  const Fingerprint f = finalize_raw(acc);
  for (std::size_t i = 0; i < W.size(); ++i) EXPECT_NEAR(f.plane[i], 5.0 * W[i] / 26.0, 1e-15);
}

TEST(Finalize, AllOnesMaskIdentity) {
  FingerprintAccumulator masked(32, 32, true), plain(32, 32, false);
  const auto ones = full_mask(32, 32, 1);
  for (int k = 0; k < 50; ++k) {
    const ImagePlane I(uniform_matrix(32, 32, 900 + k, 0, 4));  // dark frames make J visible
    const NoiseResidual W{random_matrix(32, 32, 1900 + k)};
    masked.accumulate(I, W, &ones);
    plain.accumulate(I, W);
  }
  const RealMatrix fv = finalize_raw(masked).plane, f = finalize_raw(plain).plane;
  const RealMatrix D = plain.denominator();
  double min_den = 1e300;
  for (std::size_t i = 0; i < D.size(); ++i) {
    EXPECT_NEAR(fv[i] / f[i], D[i] / (D[i] + 1.0), 1e-9);
    EXPECT_NEAR(fv[i] * (D[i] + 1.0), f[i] * D[i], 1e-9 * std::max(1.0, std::abs(f[i] * D[i])));
    min_den = std::min(min_den, D[i]);
  }
  for (std::size_t i = 0; i < D.size(); ++i)
    EXPECT_LE(std::abs(fv[i] - f[i]), std::abs(f[i]) / min_den + 1e-12);
}

TEST(Finalize, FiniteOnBlackFramesAndCountsGuard) {
  FingerprintAccumulator acc(8, 8, false);
  acc.accumulate(ImagePlane(8, 8, 0.0), {RealMatrix(8, 8, 0.0)});
  const Fingerprint f = finalize(acc);
  EXPECT_EQ(f.guarded_pixels, 64u);
  for (double v : f.plane) EXPECT_TRUE(std::isfinite(v));
}

TEST(Finalize, PostProcessedMeansVanish) {
  FingerprintAccumulator acc(24, 16, false);
  for (int k = 0; k < 3; ++k)
    acc.accumulate(ImagePlane(uniform_matrix(16, 24, 40 + k, 50, 200)), {random_matrix(16, 24, 60 + k)});
  EXPECT_LE(max_row_col_mean(finalize(acc).plane), 1e-9);
}

TEST(FingerprintFile, RoundTripBitIdentical) {
  Fingerprint f;
  f.plane = random_matrix(16, 16, 77);
  for (auto& v : f.plane) v = static_cast<float>(v);
  f.masked = true;
  f.frames_used = 42;
  const Bytes b = encode_fingerprint(f);
  ASSERT_EQ(b.size(), 24u + 16 * 16 * 4 + 8);
  const Fingerprint g = decode_fingerprint(b);
  EXPECT_TRUE(g.plane == f.plane);
  EXPECT_TRUE(g.masked);
  EXPECT_EQ(g.frames_used, 42u);
  EXPECT_EQ(encode_fingerprint(g), b);
}

TEST(FingerprintFile, TruncationNamesMissingRange) {
  Fingerprint f;
  f.plane = random_matrix(8, 8, 1);
  const Bytes b = encode_fingerprint(f);
  for (std::size_t len = 0; len < b.size(); ++len) {
    try {
      decode_fingerprint(std::span(b).first(len));
      FAIL() << len;
    } catch (const FormatError& e) {
      EXPECT_EQ(e.missing_begin(), len) << e.what();
      EXPECT_GT(e.missing_end(), len);
      EXPECT_NE(std::string(e.what()).find("missing bytes"), std::string::npos) << e.what();
    }
  }
}

TEST(FingerprintFile, RejectsBadMagicAndCorruption) {
  Fingerprint f;
  f.plane = random_matrix(8, 8, 2);
  Bytes b = encode_fingerprint(f);
  Bytes bad = b;
  bad[0] = 'X';
  EXPECT_THROW(decode_fingerprint(bad), FormatError);
  bad = b;
  bad[40] ^= 1;
  EXPECT_THROW(decode_fingerprint(bad), FormatError);
  bad = b;
  bad.push_back(0);
  EXPECT_THROW(decode_fingerprint(bad), FormatError);
  bad = b;
  bad[8] = 0xff;  // huge width
  bad[9] = 0xff;
  EXPECT_THROW(decode_fingerprint(bad), FormatError);
}

TEST(FingerprintFile, SaveLoadOnDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "prnu_fp_test";
  std::filesystem::create_directories(dir);
  Fingerprint f;
  f.plane = RealMatrix(8, 12, 0.25);
  save_fingerprint(f, dir / "a.prnufp");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.prnufp.tmp"));
  const Fingerprint g = load_fingerprint(dir / "a.prnufp");
  EXPECT_TRUE(g.plane == f.plane);
  EXPECT_THROW(load_fingerprint(dir / "missing.prnufp"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Ncc, SelfAndNegation) {
  const RealMatrix f = random_matrix(16, 16, 3);
  EXPECT_NEAR(ncc(f, f).values(0, 0), 1.0, 1e-9);
  RealMatrix neg = f;
  for (auto& v : neg) v = -v;
  EXPECT_NEAR(ncc(f, neg).values(0, 0), -1.0, 1e-9);
}

TEST(Ncc, ShiftedPeakLocation) {
  const RealMatrix f = random_matrix(16, 16, 4);
  const NccSurface s = ncc(f, shift(f, 3, 5));
  EXPECT_EQ(s.peak_row, 4u);
  EXPECT_EQ(s.peak_col, 6u);
  EXPECT_NEAR(s.peak_value, 1.0, 1e-9);
  const RealMatrix ref = brute_ncc(f, shift(f, 3, 5));
  EXPECT_NEAR(ref(3, 5), 1.0, 1e-9);
}

TEST(Ncc, Errors) {
  EXPECT_THROW(ncc(RealMatrix(8, 8, 1.0), random_matrix(8, 8, 1)), Error);
  EXPECT_THROW(ncc(random_matrix(8, 8, 1), random_matrix(8, 9, 1)), Error);
}

TEST(Ncc, TiesBreakLexicographically) {
  RealMatrix f(8, 8, 0.0);
  f(0, 0) = 1;
  f(0, 4) = 1;  // period-4 pattern makes shifts (0,0) and (0,4) tie
  f(4, 0) = 1;
  f(4, 4) = 1;
  const NccSurface t = ncc(f, f);
  EXPECT_EQ(t.peak_row, 1u);
  EXPECT_EQ(t.peak_col, 1u);
}

TEST(Ncc, FftMatchesBruteForce) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t R = 8 + rng() % 25, C = 8 + rng() % 25;
    const RealMatrix f = random_matrix(R, C, rng()), w = random_matrix(R, C, rng());
    const NccSurface s = ncc(f, w);
    const RealMatrix ref = brute_ncc(f, w);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_LE(std::abs(s.values[i] - ref[i]), 1e-6 * std::max(1e-3, std::abs(ref[i])));
      EXPECT_LE(std::abs(s.values[i]), 1.0 + 1e-9);
    }
  }
}

TEST(Pce, ClosedForm) {
  NccSurface s;
  s.values = RealMatrix(64, 64, 0.01);
  s.values(0, 0) = 0.5;
  PceParams p;
  p.aligned_mode = true;
  EXPECT_NEAR(pce(s, p), 2500.0, 1e-6);
  s.peak_value = 0.5;
  p.aligned_mode = false;
  EXPECT_NEAR(pce(s, p), 2500.0, 1e-6);
}

TEST(Pce, AllEqualIsOne) {
  NccSurface s;
  s.values = RealMatrix(16, 16, 0.3);
  s.peak_value = 0.3;
  EXPECT_NEAR(pce(s), 1.0, 1e-12);
}

TEST(Pce, MatchesBruteForceIncludingBorderPeaks) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NccSurface s;
    s.values = random_matrix(16, 16, seed, 0.1);
    std::size_t best = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i)
      if (s.values[i] > s.values[best]) best = i;
    s.peak_row = best / 16 + 1;
    s.peak_col = best % 16 + 1;
    s.peak_value = s.values[best];
    PceParams p;
    p.exclusion_half_width = 1;
    EXPECT_NEAR(pce(s, p), brute_pce(s.values, best / 16, best % 16, 1), 1e-9 * brute_pce(s.values, best / 16, best % 16, 1));
  }
}

TEST(Pce, ZeroOffPeakIsInfinite) {
  NccSurface s;
  s.values = RealMatrix(16, 16, 0.0);
  s.values(0, 0) = 1.0;
  s.peak_value = 1.0;
  EXPECT_TRUE(std::isinf(pce(s)));
}

TEST(Pce, SignedModeAndExclusionTooLarge) {
  NccSurface s;
  s.values = RealMatrix(16, 16, 0.01);
  s.values(0, 0) = -0.5;
  PceParams p;
  p.aligned_mode = true;
  EXPECT_GT(pce(s, p), 0.0);
  p.signed_mode = true;
  EXPECT_LT(pce(s, p), 0.0);
  p.exclusion_half_width = 8;
  EXPECT_THROW(pce(s, p), Error);
}

TEST(Pce, InvariancesAndAlignedBound) {
  const RealMatrix f = random_matrix(24, 24, 50);
  RealMatrix w = random_matrix(24, 24, 51);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.3 * f[i];
  const double base = pce(ncc(f, w));
  RealMatrix f2 = f, w2 = w;
  for (auto& v : f2) v = 3.0 * v + 7.0;
  for (auto& v : w2) v = 0.5 * v - 2.0;
  EXPECT_NEAR(pce(ncc(f2, w2)), base, 1e-6 * base);
  PceParams aligned;
  aligned.aligned_mode = true;
  EXPECT_LE(pce(ncc(f, w), aligned), base + 1e-9);
}

TEST(Decide, Threshold) {
  EXPECT_EQ(decide(60, 50).decision, Decision::H1);
  EXPECT_EQ(decide(50, 50).decision, Decision::H0);
  EXPECT_THROW(decide(std::nan(""), 50), Error);
  EXPECT_EQ(decide(std::numeric_limits<double>::infinity(), 50).decision, Decision::H1);
  for (double a : {-1.0, 10.0, 49.9, 50.0, 50.1, 1e9})
    for (double b : {-1.0, 10.0, 49.9, 50.0, 50.1, 1e9})
      if (a <= b && decide(a, 50).decision == Decision::H1) {
        EXPECT_EQ(decide(b, 50).decision, Decision::H1);
      }
}

TEST(LinkVideos, SelfMatchIsHuge) {
  Fingerprint a;
  a.plane = zero_mean(random_matrix(1024, 1024, 5));
  const PceResult r = link_videos(a, a);
  EXPECT_TRUE(std::isinf(r.pce) || r.pce >= 1e6) << r.pce;
  EXPECT_EQ(r.decision, Decision::H1);
}

TEST(LinkVideos, AlignedPceIsSymmetric) {
  Fingerprint a, b;
  a.plane = random_matrix(32, 32, 8);
  b.plane = random_matrix(32, 32, 9);
  for (std::size_t i = 0; i < b.plane.size(); ++i) b.plane[i] += 0.5 * a.plane[i];
  EXPECT_NEAR(link_videos(a, b).pce, link_videos(b, a).pce, 1e-6 * link_videos(a, b).pce);
}
