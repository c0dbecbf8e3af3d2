// prnu: mask extraction, fingerprint estimation, matching, evaluation and
// synthetic corpora from the command line.
//
// Exit codes: 0 ok, 1 usage, 2 data/io, 3 unsupported, 4 internal.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prnu/prnu.hpp"

namespace fs = std::filesystem;
using namespace prnu;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kUnsupported = 3, kInternal = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return kUsage;
    case ErrorKind::data:
    case ErrorKind::io: return kData;
    case ErrorKind::unsupported: return kUnsupported;
    case ErrorKind::internal: return kInternal;
  }
  return kInternal;
}

std::string fmt(double v) {
  char b[48];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

/// Reads key=value lines; '#' starts a comment. Keys may use '_' for '-'.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t n = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw usage_error(path.string() + ":" + std::to_string(n) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    for (char& c : key)
      if (c == '_') c = '-';
    if (key.empty()) throw usage_error(path.string() + ":" + std::to_string(n) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

void echo_config(const CLI::App& sub) {
  std::cerr << "# effective config: prnu " << sub.get_name() << "\n";
  for (const CLI::Option* o : sub.get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help" || name == "config" || o->get_lnames().empty()) continue;
    std::string value;
    if (o->count() > 0) {
      const auto& res = o->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      if (o->get_type_size() == 0 && value.empty()) value = "true";
    } else {
      value = o->get_default_str();
      if (o->get_type_size() == 0 && value.empty()) value = "false";
    }
    std::cerr << name << "=" << value << "\n";
  }
}

struct DenoiseOpts {
  int levels = 4;
  double sigma0_sq = 9.0;
  std::vector<int> windows = {3, 5, 7, 9};
  bool no_post = false;

  void add(CLI::App* s) {
    s->add_option("--levels", levels, "wavelet decomposition levels")->check(CLI::Range(1, 8));
    s->add_option("--sigma0-sq", sigma0_sq, "assumed noise variance of the denoiser")
        ->check(CLI::PositiveNumber);
    s->add_option("--windows", windows, "local variance window sizes")
        ->delimiter(',')
        ->check(CLI::Range(1, 63));
    s->add_flag("--no-post", no_post, "skip zero-mean and Wiener post-processing");
  }
  EstimateParams params(std::size_t workers) const {
    EstimateParams p;
    p.denoise.wavelet_levels = levels;
    p.denoise.sigma0_sq = sigma0_sq;
    p.denoise.window_sizes = windows;
    p.post_process = !no_post;
    p.workers = workers;
    return p;
  }
};

// ---- commands --------------------------------------------------------------

struct MaskCmd {
  std::string input, trace, out;
  int run() {
    if (input.empty() && trace.empty()) throw usage_error("mask: give an H.264 stream, --trace, or both");
    std::vector<h264::BlockResidualMap> maps;
    if (!trace.empty()) {
      h264::TraceExpectation expect;
      if (!input.empty()) {
        const auto info = h264::probe_stream(h264::load_stream(input));
        expect.width = info.width;
        expect.height = info.height;
        expect.frame_count = info.frame_count;
      }
      maps = h264::ingest_trace(trace, expect);
    } else {
      maps = h264::parse_file(input);
    }
    if (maps.empty()) throw data_error((input.empty() ? trace : input) + ": no decodable frames");
    const auto masks = h264::build_masks(maps);
    h264::save_masks(masks, out);
    const auto st = h264::mask_stats(masks);
    std::cout << "frames=" << masks.size() << " width=" << (masks.empty() ? 0 : masks[0].width())
              << " height=" << (masks.empty() ? 0 : masks[0].height()) << " coverage=" << fmt(st.stream)
              << " i_frames=" << st.count_by_type[0] << " p_frames=" << st.count_by_type[1]
              << " b_frames=" << st.count_by_type[2] << " i_coverage=" << fmt(st.by_type[0])
              << " p_coverage=" << fmt(st.by_type[1]) << " b_coverage=" << fmt(st.by_type[2]) << "\n";
    return kOk;
  }
};

struct FingerprintCmd {
  std::string input, method = "c2", masks, out;
  std::size_t workers = 1;
  DenoiseOpts dn;
  int run() {
    const Method m = method_from_string(method);
    std::optional<std::vector<FrameMask>> mk;
    if (!masks.empty()) mk = load_mask_source(masks);
    if (m != Method::C2 && !mk) throw usage_error(std::string("method ") + method + " requires --masks");
    const EstimateResult r = estimate_fingerprint(input, mk ? &*mk : nullptr, m, dn.params(workers));
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    save_fingerprint(r.fingerprint, out);
    std::cout << "frames_used=" << r.fingerprint.frames_used << " frames_total=" << r.frames_total
              << " method=" << to_string(m) << " width=" << r.fingerprint.width()
              << " height=" << r.fingerprint.height() << (r.low_confidence ? " low_confidence=1" : "") << "\n";
    return kOk;
  }
};

struct MatchCmd {
  std::string a, b;
  double tau = kDefaultTau;
  int exclusion = 5;
  bool search = false, signed_peak = false;
  int run() {
    const Fingerprint fa = load_fingerprint(a), fb = load_fingerprint(b);
    const PceParams p{exclusion, !search, signed_peak};
    const PceResult r = link_videos(fa, fb, p, tau);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", r.pce);
    std::cout << "pce=" << buf << " decision=" << to_string(r.decision) << "\n";
    return kOk;
  }
};

struct EvaluateCmd {
  std::string manifest, out, cache, motion;
  std::vector<int> scenarios = {6};
  std::vector<std::string> methods = {"c1", "c2", "block"};
  std::size_t workers = 1;
  double tau = kDefaultTau;
  int exclusion = 5;
  DenoiseOpts dn;
  int run() {
    const eval::Manifest m = eval::load_manifest(manifest);
    std::optional<sim::Motion> mf;
    if (motion == "still") mf = sim::Motion::still;
    else if (motion == "move") mf = sim::Motion::move;
    else if (motion == "pan") mf = sim::Motion::pan;
    else if (!motion.empty()) throw usage_error("--motion must be still, move or pan");
    std::vector<Method> ms;
    for (const auto& s : methods) ms.push_back(method_from_string(s));
    eval::RunParams rp;
    rp.estimate = dn.params(1);
    rp.pce = {exclusion, true, false};
    rp.tau = tau;
    rp.workers = workers;
    rp.cache_dir = cache.empty() ? fs::path(out) / "cache" : fs::path(cache);
    std::vector<eval::ScoreRow> rows;
    std::vector<eval::RocReport> reports;
    std::size_t failures = 0;
    for (int id : scenarios) {
      const eval::PairPlan plan = eval::plan_pairs(m, id, mf);
      for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";
      for (Method meth : ms) {
        const eval::ScoreTable t = eval::run_plan(plan, meth, rp);
        for (const auto& f : t.failures) std::cerr << "failed: " << to_string(meth) << " " << f << "\n";
        failures += t.failures.size();
        auto rs = eval::reports_for(t);
        if (rs.empty() && !plan.pairs.empty())
          std::cerr << "warning: scenario " << id << " " << to_string(meth)
                    << ": no resolution class has both matching and non-matching scores\n";
        rows.insert(rows.end(), t.rows.begin(), t.rows.end());
        reports.insert(reports.end(), rs.begin(), rs.end());
      }
    }
    eval::emit_report(rows, reports, out);
    std::cout << eval::auc_summary_csv(reports);
    if (failures) std::cerr << failures << " estimation failures; see status column in scores.csv\n";
    return kOk;
  }
};

struct SynthCmd {
  sim::SynthParams p;
  std::string out;
  int run() {
    const auto rep = sim::synth_corpus(p, out);
    for (const auto& v : rep.videos)
      std::cout << v.stem << " device=" << v.device_id << " coverage=" << fmt(v.coverage) << " i_frames=" << v.i_frames
                << "\n";
    std::cout << "manifest=" << (fs::path(out) / "manifest.csv").string() << " devices=" << p.devices
              << " videos=" << rep.videos.size() << "\n";
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRNU source attribution for H.264 video", "prnu"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string unused_config;

  MaskCmd mask;
  auto* s_mask = app.add_subcommand("mask", "extract per-frame residual masks (PRNUMK1)");
  s_mask->add_option("input", mask.input, "H.264 stream (Annex-B or MP4)");
  s_mask->add_option("--trace", mask.trace, "PRNUTRACE file from an instrumented decoder (needed for CABAC)");
  s_mask->add_option("-o,--output", mask.out, "output mask file")->required();

  FingerprintCmd fpc;
  auto* s_fp = app.add_subcommand("fingerprint", "estimate a PRNUFP1 fingerprint from YUV4MPEG2 frames");
  s_fp->add_option("input", fpc.input, "decoded frames (.y4m)")->required();
  s_fp->add_option("--method", fpc.method, "c1 (I frames), c2 (all frames) or block (masked)")
      ->check(CLI::IsMember({"c1", "c2", "block"}));
  s_fp->add_option("--masks", fpc.masks, "PRNUMK1 file, PRNUTRACE file or the H.264 stream");
  s_fp->add_option("-o,--output", fpc.out, "output fingerprint file")->required();
  s_fp->add_option("--workers", fpc.workers, "parallel residual extraction")->check(CLI::Range(1, 256));
  fpc.dn.add(s_fp);

  MatchCmd mc;
  auto* s_match = app.add_subcommand("match", "PCE between two fingerprints");
  s_match->add_option("a", mc.a, "first fingerprint")->required();
  s_match->add_option("b", mc.b, "second fingerprint")->required();
  s_match->add_option("--tau", mc.tau, "decision threshold")->check(CLI::NonNegativeNumber);
  s_match->add_option("--exclusion", mc.exclusion, "half-width of the peak exclusion region")->check(CLI::Range(0, 64));
  s_match->add_flag("--search", mc.search, "take the peak over all shifts instead of shift (0,0)");
  s_match->add_flag("--signed", mc.signed_peak, "use the signed peak value");

  EvaluateCmd ev;
  auto* s_eval = app.add_subcommand("evaluate", "run scenarios over a corpus manifest");
  s_eval->add_option("manifest", ev.manifest, "manifest CSV")->required();
  s_eval->add_option("--scenario", ev.scenarios, "scenario ids")->delimiter(',')->check(CLI::Range(1, 6));
  s_eval->add_option("--method", ev.methods, "methods")->delimiter(',')->check(CLI::IsMember({"c1", "c2", "block"}));
  s_eval->add_option("--motion", ev.motion, "restrict both sides to one motion class")
      ->check(CLI::IsMember({"still", "move", "pan"}));
  s_eval->add_option("-o,--output", ev.out, "report directory")->required();
  s_eval->add_option("--cache", ev.cache, "fingerprint cache directory (default <output>/cache)");
  s_eval->add_option("--workers", ev.workers, "parallel jobs")->check(CLI::Range(1, 256));
  s_eval->add_option("--tau", ev.tau, "decision threshold")->check(CLI::NonNegativeNumber);
  s_eval->add_option("--exclusion", ev.exclusion, "half-width of the peak exclusion region")->check(CLI::Range(0, 64));
  ev.dn.add(s_eval);
  // Scenario and method lists are replaced, not appended, when given.
  s_eval->get_option("--scenario")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  s_eval->get_option("--method")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  SynthCmd sy;
  auto* s_syn = app.add_subcommand("synth", "write a synthetic corpus with ground-truth masks");
  s_syn->add_option("--devices", sy.p.devices)->check(CLI::Range(1, 1000));
  s_syn->add_option("--videos", sy.p.videos, "natural videos per device")->check(CLI::Range(0, 1000));
  s_syn->add_option("--flat-videos", sy.p.flat_videos, "flat videos per device")->check(CLI::Range(0, 1000));
  s_syn->add_option("--frames", sy.p.frames)->check(CLI::Range(1, 100000));
  s_syn->add_option("--width", sy.p.width)->check(CLI::Range(8, 8192));
  s_syn->add_option("--height", sy.p.height)->check(CLI::Range(8, 8192));
  s_syn->add_option("--qp", sy.p.qp, "quantizer step")->check(CLI::Range(1e-9, 1e9));
  s_syn->add_option("--native-qp", sy.p.native_qp, "also emit native encodes at this step (0: off)")
      ->check(CLI::Range(0.0, 1e9));
  s_syn->add_option("--block-size", sy.p.block_size)->check(CLI::IsMember({4, 8}));
  s_syn->add_option("--gop", sy.p.gop, "frame type pattern, e.g. IPPP");
  s_syn->add_option("--k-std", sy.p.k_std, "PRNU standard deviation")->check(CLI::Range(0.0, 1.0));
  s_syn->add_option("--psi", sy.p.psi_sigma, "temporal noise standard deviation")->check(CLI::Range(0.0, 255.0));
  s_syn->add_option("--seed", sy.p.seed);
  s_syn->add_option("-o,--output", sy.out, "output directory")->required();

  for (CLI::App* s : {s_mask, s_fp, s_match, s_eval, s_syn})
    s->add_option("--config", unused_config, "key=value file; command-line flags take precedence");

  try {
    // Expand --config into flags placed ahead of the user's own arguments.
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> expanded;
    if (!args.empty()) {
      CLI::App* sub = nullptr;
      for (CLI::App* s : {s_mask, s_fp, s_match, s_eval, s_syn})
        if (s->get_name() == args[0]) sub = s;
      std::vector<std::string> rest;
      std::vector<std::string> from_config;
      for (std::size_t i = 1; i < args.size(); ++i) {
        std::string cfg;
        if (args[i] == "--config" && i + 1 < args.size()) cfg = args[++i];
        else if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
        else {
          rest.push_back(args[i]);
          continue;
        }
        if (!sub) throw usage_error("--config needs a command");
        for (const auto& [k, v] : read_config(cfg)) {
          const bool overridden = std::any_of(args.begin() + 1, args.end(), [&, key = "--" + k](const std::string& a) {
            return a == key || a.rfind(key + "=", 0) == 0;
          });
          const CLI::Option* o = sub->get_option_no_throw("--" + k);
          if (!o || k == "config" || k == "help")
            throw usage_error("config file " + cfg + ": unknown key '" + k + "' for command " + sub->get_name());
          if (overridden) continue;
          if (o->get_type_size() == 0) {
            if (v == "true" || v == "1") from_config.push_back("--" + k);
            else if (v != "false" && v != "0") throw usage_error("config key '" + k + "' expects true or false");
          } else {
            from_config.push_back("--" + k + "=" + v);
          }
        }
      }
      expanded.push_back(args[0]);
      expanded.insert(expanded.end(), from_config.begin(), from_config.end());
      expanded.insert(expanded.end(), rest.begin(), rest.end());
    }
    std::reverse(expanded.begin(), expanded.end());
    app.parse(expanded);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  }

  try {
    for (CLI::App* s : app.get_subcommands()) echo_config(*s);
    if (s_mask->parsed()) return mask.run();
    if (s_fp->parsed()) return fpc.run();
    if (s_match->parsed()) return mc.run();
    if (s_eval->parsed()) return ev.run();
    if (s_syn->parsed()) return sy.run();
    return kUsage;
  } catch (const h264::StreamError& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
