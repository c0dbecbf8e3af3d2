#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prnu/binary_io.hpp"
#include "prnu/checksum.hpp"
#include "prnu/codec_sim.hpp"
#include "prnu/matcher.hpp"
#include "prnu/parallel.hpp"
#include "prnu/pipeline.hpp"

namespace prnu::eval {

using sim::Content;
using sim::Motion;

enum class Origin { native, youtube };

inline const char* to_string(Content c) { return c == Content::flat ? "flat" : "natural"; }
inline const char* to_string(Origin o) { return o == Origin::native ? "native" : "youtube"; }
inline const char* to_string(Motion m) { return m == Motion::still ? "still" : m == Motion::move ? "move" : "pan"; }

// ---- manifest --------------------------------------------------------------

inline constexpr std::array<const char*, 7> kManifestColumns = {"path",   "mask_path", "device_id",       "content",
                                                                "origin", "motion",    "resolution_class"};

struct ManifestEntry {
  std::filesystem::path path;
  std::filesystem::path mask_path;  // empty when absent
  std::string device_id;
  Content content = Content::natural;
  Origin origin = Origin::native;
  Motion motion = Motion::still;
  std::string resolution_class;
  std::size_t row = 0;  // 1-based data row in the source file

  /// Frame height implied by the class label ("720p" -> 720).
  std::size_t nominal_height() const { return std::stoul(resolution_class.substr(0, resolution_class.size() - 1)); }
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw usage_error("manifest line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

inline bool valid_resolution_class(const std::string& s) {
  if (s.size() < 2 || s.back() != 'p' || s.size() > 7) return false;
  for (std::size_t i = 0; i + 1 < s.size(); ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  return s[0] != '0';
}

}  // namespace detail

/// Parses manifest CSV. Relative paths resolve against `base_dir`.
inline Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Manifest m;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line, line_no);
    if (!header) {
      for (std::size_t i = 0; i < std::max(f.size(), kManifestColumns.size()); ++i) {
        if (i >= f.size())
          throw usage_error("manifest header is missing column '" + std::string(kManifestColumns[i]) + "'");
        if (i >= kManifestColumns.size()) throw usage_error("manifest header has unexpected column '" + f[i] + "'");
        if (f[i] != kManifestColumns[i])
          throw usage_error("manifest column " + std::to_string(i + 1) + " is '" + f[i] + "', expected '" +
                            kManifestColumns[i] + "'");
      }
      header = true;
      continue;
    }
    const std::string where = "manifest line " + std::to_string(line_no);
    if (f.size() != kManifestColumns.size())
      throw usage_error(where + ": expected 7 fields, found " + std::to_string(f.size()));
    auto bad = [&](std::size_t col, const std::string& expected) {
      return usage_error(where + ": column '" + kManifestColumns[col] + "' has value '" + f[col] + "', expected " +
                         expected);
    };
    ManifestEntry e;
    if (f[0].empty()) throw bad(0, "a frame file path");
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path q(p);
      return q.is_absolute() || base_dir.empty() ? q : base_dir / q;
    };
    e.path = resolve(f[0]);
    if (!f[1].empty()) e.mask_path = resolve(f[1]);
    if (f[2].empty()) throw bad(2, "a nonempty device id");
    e.device_id = f[2];
    if (f[3] == "flat") e.content = Content::flat;
    else if (f[3] == "natural") e.content = Content::natural;
    else throw bad(3, "flat or natural");
    if (f[4] == "native") e.origin = Origin::native;
    else if (f[4] == "youtube") e.origin = Origin::youtube;
    else throw bad(4, "native or youtube");
    if (f[5] == "still") e.motion = Motion::still;
    else if (f[5] == "move") e.motion = Motion::move;
    else if (f[5] == "pan") e.motion = Motion::pan;
    else throw bad(5, "still, move or pan");
    if (!detail::valid_resolution_class(f[6])) throw bad(6, "a class such as 720p or 1080p");
    e.resolution_class = f[6];
    e.row = m.entries.size() + 1;
    m.entries.push_back(std::move(e));
  }
  if (!header) throw usage_error("manifest is empty (no header line)");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return parse_manifest(std::string(b.begin(), b.end()), path.parent_path());
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string manifest_csv(const Manifest& m) {
  std::string out;
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) out += std::string(i ? "," : "") + kManifestColumns[i];
  out += "\n";
  for (const auto& e : m.entries)
    out += csv_field(e.path.generic_string()) + "," + csv_field(e.mask_path.generic_string()) + "," +
           csv_field(e.device_id) + "," + to_string(e.content) + "," + to_string(e.origin) + "," +
           to_string(e.motion) + "," + e.resolution_class + "\n";
  return out;
}

// ---- scenarios and pairing -------------------------------------------------

struct Scenario {
  int id;
  Content ref_content;
  Origin ref_origin;
  Content query_content;
  Origin query_origin;
};

inline constexpr std::array<Scenario, 6> kScenarios = {{
    {1, Content::flat, Origin::native, Content::natural, Origin::native},
    {2, Content::natural, Origin::native, Content::natural, Origin::native},
    {3, Content::flat, Origin::native, Content::natural, Origin::youtube},
    {4, Content::natural, Origin::native, Content::natural, Origin::youtube},
    {5, Content::flat, Origin::youtube, Content::natural, Origin::youtube},
    {6, Content::natural, Origin::youtube, Content::natural, Origin::youtube},
}};

inline const Scenario& scenario(int id) {
  if (id < 1 || id > 6) throw usage_error("scenario must be 1..6, got " + std::to_string(id));
  return kScenarios[static_cast<std::size_t>(id - 1)];
}

struct PairSpec {
  std::size_t ref = 0;  // indices into PairPlan::entries
  std::size_t query = 0;
  bool is_matching = false;
};

struct PairPlan {
  int scenario_id = 0;
  std::vector<ManifestEntry> entries;  // canonical order
  std::vector<PairSpec> pairs;
  std::vector<std::string> warnings;
};

inline bool canonical_less(const ManifestEntry& a, const ManifestEntry& b) {
  return std::tie(a.path, a.mask_path, a.device_id, a.resolution_class) <
         std::tie(b.path, b.mask_path, b.device_id, b.resolution_class);
}

/// Every reference against every query of the same resolution class, self
/// pairs excluded. `motion` optionally restricts both sides.
inline PairPlan plan_pairs(const Manifest& manifest, int scenario_id, std::optional<Motion> motion = std::nullopt) {
  const Scenario& s = scenario(scenario_id);
  PairPlan plan;
  plan.scenario_id = scenario_id;
  plan.entries = manifest.entries;
  std::sort(plan.entries.begin(), plan.entries.end(), canonical_less);
  auto keep = [&](const ManifestEntry& e, Content c, Origin o) {
    return e.content == c && e.origin == o && (!motion || e.motion == *motion);
  };
  std::size_t n_ref = 0, n_query = 0;
  for (const auto& e : plan.entries) {
    n_ref += keep(e, s.ref_content, s.ref_origin);
    n_query += keep(e, s.query_content, s.query_origin);
  }
  for (std::size_t r = 0; r < plan.entries.size(); ++r) {
    const auto& ref = plan.entries[r];
    if (!keep(ref, s.ref_content, s.ref_origin)) continue;
    for (std::size_t q = 0; q < plan.entries.size(); ++q) {
      const auto& query = plan.entries[q];
      if (!keep(query, s.query_content, s.query_origin)) continue;
      if (ref.path == query.path) continue;
      if (ref.resolution_class != query.resolution_class) continue;
      plan.pairs.push_back({r, q, ref.device_id == query.device_id});
    }
  }
  if (plan.pairs.empty()) {
    std::ostringstream w;
    w << "scenario " << scenario_id << ": empty plan (" << n_ref << " " << to_string(s.ref_origin) << "-"
      << to_string(s.ref_content) << " reference videos, " << n_query << " " << to_string(s.query_origin) << "-"
      << to_string(s.query_content) << " query videos with a same-resolution partner)";
    plan.warnings.push_back(w.str());
  }
  return plan;
}

// ---- scoring ---------------------------------------------------------------

struct RunParams {
  EstimateParams estimate;
  PceParams pce{5, true, false};
  double tau = kDefaultTau;
  std::filesystem::path cache_dir;  // empty: in-memory only
  std::size_t workers = 1;
};

struct ScoreRow {
  int scenario = 0;
  Method method = Method::C2;
  std::string ref_path;
  std::string query_path;
  std::string ref_device;
  std::string query_device;
  bool is_matching = false;
  double pce = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  std::string resolution_class;

  bool ok() const { return status == "ok" || status == "low_confidence"; }
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
  std::vector<std::string> failures;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string params_hash(Method method, const RunParams& p) {
  std::ostringstream s;
  s << to_string(method) << '|' << p.estimate.denoise.wavelet_levels << '|' << format_double(p.estimate.denoise.sigma0_sq)
    << '|' << p.estimate.post_process;
  for (int w : p.estimate.denoise.window_sizes) s << ',' << w;
  const std::string k = s.str();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(xxh64(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(k.data()), k.size()))));
  return hex;
}

namespace detail {

inline std::string cache_key(const ManifestEntry& e, Method method, const RunParams& p) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(e.path, ec);
  const std::string k = e.path.generic_string() + '|' + e.mask_path.generic_string() + '|' + std::to_string(ec ? 0 : size) +
                        '|' + params_hash(method, p);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(xxh64(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(k.data()), k.size()))));
  return hex;
}

struct CachedEstimate {
  std::optional<Fingerprint> fp;
  bool low_confidence = false;
  std::string error;
};

inline CachedEstimate estimate_entry(const ManifestEntry& e, Method method, const RunParams& p) {
  CachedEstimate out;
  try {
    std::filesystem::path cache_file, flag_file;
    if (!p.cache_dir.empty()) {
      const std::string key = cache_key(e, method, p);
      cache_file = p.cache_dir / (key + ".prnufp");
      flag_file = p.cache_dir / (key + ".lowconf");
      if (std::filesystem::exists(cache_file)) {
        try {
          out.fp = load_fingerprint(cache_file);
          out.low_confidence = std::filesystem::exists(flag_file);
          return out;
        } catch (const Error&) {
          // unreadable cache entry: recompute
        }
      }
    }
    std::vector<FrameMask> masks;
    const bool need_masks = method != Method::C2;
    if (need_masks) {
      if (e.mask_path.empty())
        throw usage_error(std::string("method ") + to_string(method) + " needs mask_path (frame types / masks)");
      masks = load_mask_source(e.mask_path);
    }
    EstimateParams ep = p.estimate;
    ep.workers = 1;
    EstimateResult r = estimate_fingerprint(e.path, need_masks ? &masks : nullptr, method, ep);
    const std::size_t H = r.fingerprint.height();
    if (H != e.nominal_height())
      throw data_error("resolution_class " + e.resolution_class + " but frames are " + std::to_string(H) + " rows high");
    out.fp = std::move(r.fingerprint);
    // Same precision as a cache hit, so scores never depend on cache state.
    for (double& v : out.fp->plane) v = static_cast<float>(v);
    out.low_confidence = r.low_confidence;
    if (!cache_file.empty()) {
      std::filesystem::create_directories(p.cache_dir);
      save_fingerprint(*out.fp, cache_file);
      if (out.low_confidence) write_file_atomic(flag_file, std::string("1\n"));
    }
  } catch (const std::exception& ex) {
    out.fp.reset();
    out.error = ex.what();
  }
  return out;
}

}  // namespace detail

/// Estimates each involved video once, then scores every planned pair with
/// aligned PCE. Failures are recorded per pair.
inline ScoreTable run_plan(const PairPlan& plan, Method method, const RunParams& params = {}) {
  std::vector<char> used(plan.entries.size(), 0);
  for (const auto& pr : plan.pairs) used[pr.ref] = used[pr.query] = 1;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i]) todo.push_back(i);
  std::vector<detail::CachedEstimate> est(plan.entries.size());
  parallel_for(todo.size(), params.workers,
               [&](std::size_t k) { est[todo[k]] = detail::estimate_entry(plan.entries[todo[k]], method, params); });

  ScoreTable table;
  table.rows.resize(plan.pairs.size());
  parallel_for(plan.pairs.size(), params.workers, [&](std::size_t i) {
    const PairSpec& pr = plan.pairs[i];
    const auto& a = plan.entries[pr.ref];
    const auto& b = plan.entries[pr.query];
    ScoreRow& row = table.rows[i];
    row.scenario = plan.scenario_id;
    row.method = method;
    row.ref_path = a.path.generic_string();
    row.query_path = b.path.generic_string();
    row.ref_device = a.device_id;
    row.query_device = b.device_id;
    row.is_matching = pr.is_matching;
    row.resolution_class = a.resolution_class;
    const auto& ea = est[pr.ref];
    const auto& eb = est[pr.query];
    if (!ea.fp || !eb.fp) {
      row.status = "error: " + (!ea.fp ? a.path.filename().string() + ": " + ea.error
                                       : b.path.filename().string() + ": " + eb.error);
      return;
    }
    try {
      row.pce = link_videos(*ea.fp, *eb.fp, params.pce, params.tau).pce;
      row.status = ea.low_confidence || eb.low_confidence ? "low_confidence" : "ok";
    } catch (const std::exception& ex) {
      row.status = std::string("error: ") + ex.what();
    }
  });
  for (std::size_t i = 0; i < plan.entries.size(); ++i)
    if (used[i] && !est[i].fp) table.failures.push_back(plan.entries[i].path.generic_string() + ": " + est[i].error);
  return table;
}

inline std::string score_csv_header() {
  return "scenario,method,ref_path,query_path,ref_device,query_device,is_matching,pce,status\n";
}

inline std::string score_csv_rows(const std::vector<ScoreRow>& rows) {
  std::string out;
  for (const auto& r : rows)
    out += std::to_string(r.scenario) + "," + to_string(r.method) + "," + csv_field(r.ref_path) + "," +
           csv_field(r.query_path) + "," + csv_field(r.ref_device) + "," + csv_field(r.query_device) + "," +
           (r.is_matching ? "1" : "0") + "," + format_double(r.pce) + "," + csv_field(r.status) + "\n";
  return out;
}

// ---- ROC -------------------------------------------------------------------

struct RocReport {
  Method method = Method::C2;
  int scenario = 0;
  std::string resolution_class;
  std::vector<std::pair<double, double>> points;  // (fpr, tpr)
  double auc = 0.0;
  std::size_t n_matching = 0;
  std::size_t n_nonmatching = 0;
};

/// Sweeps every distinct score as a threshold (score >= t -> H1). Tied
/// scores move both rates in one step, so the trapezoid gives half credit.
inline RocReport roc_auc(std::vector<std::pair<double, bool>> scores) {
  RocReport r;
  for (const auto& [v, m] : scores) {
    if (std::isnan(v)) throw data_error("roc_auc: NaN score");
    (m ? r.n_matching : r.n_nonmatching)++;
  }
  if (r.n_matching == 0 || r.n_nonmatching == 0)
    throw data_error("roc_auc needs both matching and non-matching scores (got " + std::to_string(r.n_matching) +
                     " and " + std::to_string(r.n_nonmatching) + ")");
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const double P = static_cast<double>(r.n_matching), N = static_cast<double>(r.n_nonmatching);
  std::size_t tp = 0, fp = 0;
  r.points.emplace_back(0.0, 0.0);
  double area2 = 0.0;  // twice the area, in counts
  for (std::size_t i = 0; i < scores.size();) {
    const std::size_t tp0 = tp, fp0 = fp;
    const double t = scores[i].first;
    for (; i < scores.size() && scores[i].first == t; ++i) (scores[i].second ? tp : fp)++;
    area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    r.points.emplace_back(static_cast<double>(fp) / N, static_cast<double>(tp) / P);
  }
  r.auc = area2 / (2.0 * P * N);
  return r;
}

inline std::vector<RocReport> reports_for(const ScoreTable& t) {
  std::map<std::tuple<int, int, std::string>, std::vector<std::pair<double, bool>>> groups;
  for (const auto& row : t.rows)
    if (row.ok()) groups[{row.scenario, static_cast<int>(row.method), row.resolution_class}].emplace_back(row.pce, row.is_matching);
  std::vector<RocReport> out;
  for (auto& [key, scores] : groups) {
    bool pos = false, neg = false;
    for (const auto& s : scores) (s.second ? pos : neg) = true;
    if (!pos || !neg) continue;
    RocReport r = roc_auc(std::move(scores));
    r.scenario = std::get<0>(key);
    r.method = static_cast<Method>(std::get<1>(key));
    r.resolution_class = std::get<2>(key);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- report files ----------------------------------------------------------

inline std::string auc_summary_csv(const std::vector<RocReport>& reports) {
  std::string out = "scenario,method,resolution_class,auc,n_matching,n_nonmatching\n";
  for (const auto& r : reports)
    out += std::to_string(r.scenario) + "," + to_string(r.method) + "," + r.resolution_class + "," + format_double(r.auc) +
           "," + std::to_string(r.n_matching) + "," + std::to_string(r.n_nonmatching) + "\n";
  return out;
}

inline std::string roc_svg(const std::vector<const RocReport*>& curves, const std::string& title) {
  static constexpr const char* kColours[] = {"#d62728", "#1f77b4", "#2ca02c"};
  constexpr double X0 = 60, Y0 = 40, S = 360;
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"460\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"480\" height=\"460\" fill=\"white\"/>\n"
    << "<text x=\"240\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
    << "<rect x=\"" << X0 << "\" y=\"" << Y0 << "\" width=\"" << S << "\" height=\"" << S
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<line x1=\"" << X0 << "\" y1=\"" << Y0 + S << "\" x2=\"" << X0 + S << "\" y2=\"" << Y0
    << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 4\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    o << "<text x=\"" << X0 + f * S << "\" y=\"" << Y0 + S + 16 << "\" text-anchor=\"middle\">" << f << "</text>\n"
      << "<text x=\"" << X0 - 6 << "\" y=\"" << Y0 + S - f * S + 4 << "\" text-anchor=\"end\">" << f << "</text>\n";
  }
  o << "<text x=\"" << X0 + S / 2 << "\" y=\"" << Y0 + S + 34 << "\" text-anchor=\"middle\">false positive rate</text>\n"
    << "<text x=\"16\" y=\"" << Y0 + S / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << Y0 + S / 2
    << ")\">true positive rate</text>\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const RocReport& r = *curves[k];
    const char* colour = kColours[static_cast<int>(r.method) % 3];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    o.precision(3);
    for (const auto& [x, y] : r.points) o << X0 + x * S << "," << Y0 + S - y * S << " ";
    o.precision(2);
    o << "\"/>\n";
    o.precision(4);
    o << "<text x=\"" << X0 + S - 8 << "\" y=\"" << Y0 + S - 12 - 16.0 * static_cast<double>(curves.size() - 1 - k)
      << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << to_string(r.method) << " AUC " << r.auc << "</text>\n";
    o.precision(2);
  }
  o << "</svg>\n";
  return o.str();
}

/// Writes scores.csv, auc_summary.csv and one roc_s<id>_<class>.svg per
/// scenario and resolution class. Returns the written file names.
inline std::vector<std::string> emit_report(const std::vector<ScoreRow>& rows, const std::vector<RocReport>& reports,
                                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  write_file_atomic(out_dir / "scores.csv", score_csv_header() + score_csv_rows(rows));
  written.push_back("scores.csv");
  write_file_atomic(out_dir / "auc_summary.csv", auc_summary_csv(reports));
  written.push_back("auc_summary.csv");
  std::map<std::pair<int, std::string>, std::vector<const RocReport*>> plots;
  for (const auto& r : reports) plots[{r.scenario, r.resolution_class}].push_back(&r);
  for (const auto& [key, curves] : plots) {
    const std::string name = "roc_s" + std::to_string(key.first) + "_" + key.second + ".svg";
    write_file_atomic(out_dir / name,
                      roc_svg(curves, "Scenario " + std::to_string(key.first) + ", " + key.second));
    written.push_back(name);
  }
  return written;
}

}  // namespace prnu::eval
