#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include "prnu/prnu.hpp"

namespace fs = std::filesystem;
using namespace prnu;

namespace {

const fs::path kFixtures = fs::path(PRNU_FIXTURE_DIR) / "h264";

struct CliResult {
  int rc = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("prnu_cli_" + std::to_string(::getpid()) + "_" + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    const std::string cmd = quote(PRNU_CLI_PATH) + " " + args + " >" + quote(o.string()) + " 2>" + quote(e.string());
    const int st = std::system(cmd.c_str());
    CliResult r;
    r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
  }

  // Small corpus: 2 devices, 2 natural videos each, IPPP over 20 frames.
  fs::path synth(const std::string& name, const std::string& extra = "") const {
    const fs::path out = dir_ / name;
    const CliResult r = run("synth --devices 2 --videos 2 --flat-videos 0 --frames 20 --width 64 --height 64 --gop IPPP "
                      "--k-std 0.02 -o " + quote(out.string()) + " " + extra);
    EXPECT_EQ(r.rc, 0) << r.err;
    return out;
  }

  fs::path dir_;
};

double parse_field(const std::string& text, const std::string& key) {
  const std::regex re("(^|\\s)" + key + "=([-0-9.eE+]+)");
  std::smatch m;
  if (!std::regex_search(text, m, re)) ADD_FAILURE() << "no " << key << " in: " << text;
  return m.empty() ? NAN : std::stod(m[2].str());
}

}  // namespace

TEST_F(CliTest, NoArgumentsIsUsageError) {
  EXPECT_EQ(run("").rc, 1);
  EXPECT_EQ(run("bogus").rc, 1);
  EXPECT_EQ(run("--help").rc, 0);
}

TEST_F(CliTest, MaskOnCavlcStreamMatchesLibrary) {
  const fs::path in = kFixtures / "ipp_qp26.264";
  const fs::path out = dir_ / "m.prnumk";
  const CliResult r = run("mask " + quote(in.string()) + " -o " + quote(out.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("coverage="), std::string::npos);
  const auto masks = h264::load_masks(out);
  EXPECT_EQ(masks, h264::build_masks(h264::parse_file(in)));
  EXPECT_EQ(parse_field(r.out, "frames"), static_cast<double>(masks.size()));
}

TEST_F(CliTest, MaskWithTraceMatchesIngest) {
  const fs::path in = kFixtures / "ipp_qp26.264";
  const fs::path tr = kFixtures / "ipp_qp26.ref.trace";
  const fs::path out = dir_ / "m.prnumk";
  const CliResult r = run("mask " + quote(in.string()) + " --trace " + quote(tr.string()) + " -o " + quote(out.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(h264::load_masks(out), h264::build_masks(h264::ingest_trace(tr)));
}

TEST_F(CliTest, CabacWithoutTraceIsUnsupportedWithRemedy) {
  const fs::path out = dir_ / "m.prnumk";
  const CliResult r = run("mask " + quote((kFixtures / "cabac_main.264").string()) + " -o " + quote(out.string()));
  EXPECT_EQ(r.rc, 3);
  EXPECT_NE(r.err.find("unsupported_entropy"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--trace"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, CorruptStreamIsDataErrorAndLeavesNoOutput) {
  std::string bytes = slurp(kFixtures / "ipp_qp26.264");
  bytes.resize(bytes.size() / 3);
  for (std::size_t i = 40; i < bytes.size(); i += 7) bytes[i] = static_cast<char>(bytes[i] ^ 0x5a);
  const fs::path bad = dir_ / "bad.264";
  std::ofstream(bad, std::ios::binary) << bytes;
  const fs::path out = dir_ / "m.prnumk";
  const CliResult r = run("mask " + quote(bad.string()) + " -o " + quote(out.string()));
  EXPECT_EQ(r.rc, 2) << r.err;
  EXPECT_FALSE(fs::exists(out));
  EXPECT_FALSE(fs::exists(dir_ / "m.prnumk.tmp"));
}

TEST_F(CliTest, MissingInputIsDataError) {
  const CliResult r = run("mask " + quote((dir_ / "nope.264").string()) + " -o " + quote((dir_ / "m").string()));
  EXPECT_EQ(r.rc, 2) << r.err;
}

TEST_F(CliTest, FingerprintC1CountsIFrames) {
  const fs::path c = synth("corpus");
  const fs::path fp = dir_ / "a.prnufp";
  const CliResult r = run("fingerprint " + quote((c / "dev00_natural00_youtube.y4m").string()) + " --method c1 --masks " +
                    quote((c / "dev00_natural00_youtube.prnumk").string()) + " -o " + quote(fp.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(parse_field(r.out, "frames_used"), 5.0);
  EXPECT_EQ(parse_field(r.out, "frames_total"), 20.0);
  EXPECT_EQ(load_fingerprint(fp).frames_used, 5u);
}

TEST_F(CliTest, FingerprintBlockNeedsMasks) {
  const fs::path c = synth("corpus");
  const CliResult r = run("fingerprint " + quote((c / "dev00_natural00_youtube.y4m").string()) + " --method block -o " +
                    quote((dir_ / "a.prnufp").string()));
  EXPECT_EQ(r.rc, 1);
  EXPECT_FALSE(fs::exists(dir_ / "a.prnufp"));
}

TEST_F(CliTest, FingerprintFrameCountMismatchIsDataError) {
  const fs::path c = synth("corpus");
  auto masks = h264::load_masks(c / "dev00_natural00_youtube.prnumk");
  masks.pop_back();
  const fs::path mk = dir_ / "short.prnumk";
  h264::save_masks(masks, mk);
  const fs::path fp = dir_ / "a.prnufp";
  const CliResult r = run("fingerprint " + quote((c / "dev00_natural00_youtube.y4m").string()) + " --method block --masks " +
                    quote(mk.string()) + " -o " + quote(fp.string()));
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.err.find("frame-count mismatch"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(fp));
}

TEST_F(CliTest, AllZeroMasksGiveZeroFingerprintAndWarning) {
  const fs::path c = synth("corpus");
  auto masks = h264::load_masks(c / "dev00_natural00_youtube.prnumk");
  for (auto& m : masks) std::fill(m.bits.begin(), m.bits.end(), std::uint8_t{0});
  const fs::path mk = dir_ / "zero.prnumk";
  h264::save_masks(masks, mk);
  const fs::path fp = dir_ / "z.prnufp";
  const CliResult r = run("fingerprint " + quote((c / "dev00_natural00_youtube.y4m").string()) + " --method block --masks " +
                    quote(mk.string()) + " -o " + quote(fp.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.err.find("all masks are zero"), std::string::npos) << r.err;
  for (double v : load_fingerprint(fp).plane) ASSERT_EQ(v, 0.0);
}

TEST_F(CliTest, BlockWithAllOnesMasksFollowsUnmaskedRatio) {
  const fs::path c = synth("corpus");
  const fs::path y4m = c / "dev01_natural01_youtube.y4m";
  auto masks = h264::load_masks(c / "dev01_natural01_youtube.prnumk");
  for (auto& m : masks) std::fill(m.bits.begin(), m.bits.end(), std::uint8_t{1});
  const fs::path mk = dir_ / "ones.prnumk";
  h264::save_masks(masks, mk);
  const fs::path f_c2 = dir_ / "c2.prnufp", f_blk = dir_ / "blk.prnufp";
  ASSERT_EQ(run("fingerprint " + quote(y4m.string()) + " --method c2 --no-post -o " + quote(f_c2.string())).rc, 0);
  ASSERT_EQ(run("fingerprint " + quote(y4m.string()) + " --method block --no-post --masks " + quote(mk.string()) +
                " -o " + quote(f_blk.string())).rc, 0);
  RealMatrix D(64, 64, 0.0);
  for (const auto& f : read_y4m(y4m))
    for (std::size_t i = 0; i < D.size(); ++i) D.data()[i] += f.pixels().data()[i] * f.pixels().data()[i];
  const auto a = load_fingerprint(f_c2).plane, b = load_fingerprint(f_blk).plane;
  for (std::size_t i = 0; i < D.size(); ++i) {
    const double lhs = b.data()[i] * (D.data()[i] + 1.0), rhs = a.data()[i] * D.data()[i];
    ASSERT_NEAR(lhs, rhs, 1e-6 * std::abs(rhs) + 1e-12) << i;
  }
}

TEST_F(CliTest, MatchSelfIsH1AndOtherDeviceIsH0) {
  const fs::path c = synth("corpus");
  auto fp = [&](const std::string& stem) {
    const fs::path out = dir_ / (stem + ".prnufp");
    EXPECT_EQ(run("fingerprint " + quote((c / (stem + ".y4m")).string()) + " --method c2 -o " + quote(out.string())).rc, 0);
    return out;
  };
  const fs::path a = fp("dev00_natural00_youtube"), b = fp("dev01_natural00_youtube");
  const CliResult self = run("match " + quote(a.string()) + " " + quote(a.string()));
  ASSERT_EQ(self.rc, 0) << self.err;
  EXPECT_TRUE(std::regex_search(self.out, std::regex("^pce=[-0-9.e+]+ decision=H1\n$"))) << self.out;
  const CliResult other = run("match " + quote(a.string()) + " " + quote(b.string()));
  ASSERT_EQ(other.rc, 0) << other.err;
  EXPECT_NE(other.out.find("decision=H0"), std::string::npos) << other.out;
  EXPECT_EQ(run("match " + quote(a.string()) + " " + quote(b.string()) + " --tau -1").rc, 1);
}

TEST_F(CliTest, MatchCorruptFingerprintIsDataError) {
  const fs::path bad = dir_ / "bad.prnufp";
  std::ofstream(bad, std::ios::binary) << "PRNUFP1 garbage";
  EXPECT_EQ(run("match " + quote(bad.string()) + " " + quote(bad.string())).rc, 2);
}

TEST_F(CliTest, SynthIsByteIdenticalPerSeed) {
  const fs::path a = synth("a"), b = synth("b");
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++n;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
  }
  EXPECT_EQ(n, 2u * 2u * 3u + 1u);
  const fs::path c = synth("c", "--seed 2");
  EXPECT_NE(slurp(a / "dev00_natural00_youtube.y4m"), slurp(c / "dev00_natural00_youtube.y4m"));
}

TEST_F(CliTest, SynthManifestListsRequestedDevices) {
  const fs::path c = synth("corpus");
  const auto m = eval::load_manifest(c / "manifest.csv");
  std::set<std::string> devices;
  for (const auto& e : m.entries) devices.insert(e.device_id);
  EXPECT_EQ(devices.size(), 2u);
  EXPECT_EQ(m.entries.size(), 4u);
}

TEST_F(CliTest, SynthCoverageFallsWithQp) {
  double prev = 2.0;
  for (const char* qp : {"2", "10", "40"}) {
    const CliResult r = run(std::string("synth --devices 1 --videos 1 --flat-videos 0 --frames 8 --width 64 --height 64 --qp ") +
                      qp + " -o " + quote((dir_ / (std::string("q") + qp)).string()));
    ASSERT_EQ(r.rc, 0) << r.err;
    const double cov = parse_field(r.out, "coverage");
    EXPECT_LE(cov, prev) << "qp " << qp;
    prev = cov;
  }
}

TEST_F(CliTest, EvaluateScenarioSixWritesReport) {
  const fs::path c = synth("corpus");
  const fs::path out = dir_ / "report";
  const CliResult r = run("evaluate " + quote((c / "manifest.csv").string()) + " --scenario 6 --workers 2 -o " +
                    quote(out.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const char* m : {"c1", "c2", "block"}) EXPECT_NE(r.out.find(std::string(",") + m + ","), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(out / "scores.csv"));
  EXPECT_TRUE(fs::exists(out / "auc_summary.csv"));
  EXPECT_TRUE(fs::exists(out / "roc_s6_64p.svg"));
  EXPECT_FALSE(fs::is_empty(out / "cache"));
  // 4 videos, ordered pairs without self-pairs, 3 methods.
  const std::string scores = slurp(out / "scores.csv");
  EXPECT_EQ(std::count(scores.begin(), scores.end(), '\n'), 1 + 12 * 3);
  // Second run reuses the cache and reproduces the scores.
  ASSERT_EQ(run("evaluate " + quote((c / "manifest.csv").string()) + " --scenario 6 -o " + quote(out.string())).rc, 0);
  EXPECT_EQ(slurp(out / "scores.csv"), scores);
}

TEST_F(CliTest, EvaluateBadManifestNamesColumn) {
  const fs::path m = dir_ / "m.csv";
  std::ofstream(m) << "path,mask_path,device,content,origin,motion,resolution_class\n";
  const CliResult r = run("evaluate " + quote(m.string()) + " -o " + quote((dir_ / "r").string()));
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("device"), std::string::npos) << r.err;

  std::ofstream(m) << "path,mask_path,device_id,content,origin,motion,resolution_class\n"
                      "a.y4m,a.prnumk,d0,sky,native,still,720p\n";
  const CliResult r2 = run("evaluate " + quote(m.string()) + " -o " + quote((dir_ / "r").string()));
  EXPECT_EQ(r2.rc, 1);
  EXPECT_NE(r2.err.find("content"), std::string::npos) << r2.err;
}

TEST_F(CliTest, ConfigFileAppliesAndFlagsWin) {
  const fs::path cfg = dir_ / "synth.conf";
  std::ofstream(cfg) << "# small corpus\ndevices=1\nvideos=1\nflat_videos=0\nframes=4\nwidth=32\nheight=32\nseed=7\n";
  const fs::path out = dir_ / "c";
  const CliResult r = run("synth --config " + quote(cfg.string()) + " --seed 9 -o " + quote(out.string()));
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.err.find("# effective config: prnu synth"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("seed=9"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("frames=4"), std::string::npos) << r.err;
  const auto m = eval::load_manifest(out / "manifest.csv");
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].resolution_class, "32p");
}

TEST_F(CliTest, ConfigUnknownKeyIsUsageError) {
  const fs::path cfg = dir_ / "bad.conf";
  std::ofstream(cfg) << "devices=1\nflux_capacitor=3\n";
  const CliResult r = run("synth --config " + quote(cfg.string()) + " -o " + quote((dir_ / "c").string()));
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("flux"), std::string::npos) << r.err;
}

TEST_F(CliTest, OutOfRangeOptionIsUsageError) {
  EXPECT_EQ(run("synth --block-size 5 -o " + quote((dir_ / "c").string())).rc, 1);
  EXPECT_EQ(run("synth --gop XPP -o " + quote((dir_ / "c").string())).rc, 1);
}
