#pragma once

#include <sodium.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "curvemark/attacks.hpp"
#include "curvemark/core.hpp"
#include "curvemark/geometry.hpp"
#include "curvemark/keyfile.hpp"
#include "curvemark/metrics.hpp"
#include "curvemark/pgm.hpp"
#include "curvemark/watermark.hpp"

#ifndef CURVEMARK_VERSION
#define CURVEMARK_VERSION "dev"
#endif

// Benchmark runner: embed every corpus image, run the attack grid, detect,
// and collect records plus aggregates into a JSON report and CSV curves.
namespace curvemark::bench {

using json = nlohmann::ordered_json;

inline constexpr const char* kSoftware = "curvemark " CURVEMARK_VERSION;

struct CorpusImage {
  std::string path;  // relative to the corpus directory
  Dims dims;
  std::string blake2b;
  Image image;
  bool converted_from_color = false;
};

inline std::string blake2b_hex(const std::vector<std::uint8_t>& bytes) {
  ensure_sodium();
  unsigned char h[32];
  crypto_generichash(h, sizeof h, bytes.data(), bytes.size(), nullptr, 0);
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : h) {
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

inline bool is_image_path(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".pnm" || ext == ".ppm";
}

// Netpbm files directly inside `dir`, sorted by name.
inline std::vector<CorpusImage> load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("corpus directory not found: " + dir);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && is_image_path(e.path())) paths.push_back(e.path());
  if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw IoError("corpus " + dir + " holds no .pgm/.pnm/.ppm images");
  std::vector<CorpusImage> out;
  for (const auto& p : paths) {
    const auto bytes = read_file_bytes(p.string());
    LoadedImage li;
    try {
      li = decode_pnm(bytes);
    } catch (const IoError& e) {
      throw IoError(p.string() + ": " + e.what());
    }
    out.push_back({p.filename().string(), {li.image.cols(), li.image.rows()}, blake2b_hex(bytes), std::move(li.image),
                   li.converted_from_color});
  }
  return out;
}

struct BenchConfig {
  std::vector<AttackSpec> attacks = default_attack_grid();
  std::optional<std::vector<bool>> bits;  // multibit payload; default alternates
  bool geometric = true;                  // magnitude + geometric modes on scale/rotate
  int fakes = 0;                          // fake keys per direct record, 0 = none
  std::uint64_t fake_base = kDefaultFakeBase;
  bool timing = false;
};

inline std::vector<bool> parse_bits(const std::string& s) {
  std::vector<bool> out;
  for (char c : s) {
    if (c != '0' && c != '1') throw InvalidArgument("bits must be a string of 0 and 1");
    out.push_back(c == '1');
  }
  if (out.empty()) throw InvalidArgument("bits must not be empty");
  return out;
}

inline std::string format_bits(const std::vector<bool>& bits) {
  std::string s;
  for (bool b : bits) s += b ? '1' : '0';
  return s;
}

// {"attacks": "default" | [spec...], "seed": n, "bits": "101101",
//  "geometric": bool, "fakes": n, "timing": bool}
inline BenchConfig parse_config(const json& j) {
  if (!j.is_object()) throw InvalidArgument("bench config must be a JSON object");
  BenchConfig c;
  try {
    const std::uint64_t seed = j.value("seed", std::uint64_t{1});
    c.attacks = default_attack_grid(seed);
    if (j.contains("attacks")) {
      const auto& a = j["attacks"];
      if (a.is_string()) {
        if (a.get<std::string>() != "default") throw InvalidArgument("attacks must be \"default\" or a list");
      } else if (a.is_array()) {
        c.attacks.clear();
        for (const auto& s : a) c.attacks.push_back(s.get<AttackSpec>());
      } else {
        throw InvalidArgument("attacks must be \"default\" or a list");
      }
    }
    if (j.contains("bits")) c.bits = parse_bits(j["bits"].get<std::string>());
    c.geometric = j.value("geometric", true);
    c.fakes = j.value("fakes", 0);
    if (c.fakes < 0) throw InvalidArgument("fakes must be >= 0");
    c.timing = j.value("timing", false);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed bench config: ") + e.what());
  }
  return c;
}

inline json config_json(const BenchConfig& c) {
  json j;
  j["attacks"] = json::array();
  for (const auto& a : c.attacks) j["attacks"].push_back(a);
  if (c.bits) j["bits"] = format_bits(*c.bits);
  j["geometric"] = c.geometric;
  j["fakes"] = c.fakes;
  return j;
}

// Six significant digits; non-finite values become strings.
inline json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;
}

inline std::vector<bool> default_bits(std::size_t n) {
  std::vector<bool> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = i % 2 == 0;
  return b;
}

// What the report records about one detection.
struct Record {
  std::string image;
  std::string label;
  AttackSpec attack;
  DetectionMode mode = DetectionMode::kDirect;
  std::optional<DetectionReport> report;
  std::optional<metrics::BitErrorStats> ber;
  std::optional<double> max_fake;
  std::string error;
  double seconds = 0.0;
};

struct Fidelity {
  std::string image;
  double psnr = 0.0, ssim = 0.0, max_delta = 0.0;
  std::size_t clamped_pixels = 0;
  std::string error;
  double seconds = 0.0;
};

struct BenchResult {
  std::vector<Fidelity> fidelity;
  std::vector<Record> records;
};

// Brings an attacked image back to nominal size for the fixed-size detectors:
// resize after scaling, centre crop after rotation.
inline Image to_nominal(const Image& img, const AttackSpec& spec, Dims nominal) {
  if (img.cols() == nominal.width && img.rows() == nominal.height) return img;
  if (spec.kind == AttackKind::kScale) return quantize_8bit(geometry::resize(img, nominal.width, nominal.height));
  return geometry::crop_or_pad(img, nominal.width, nominal.height);
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void run_image(const CorpusImage& ci, const KeyFile& kf, const BenchConfig& cfg, Fidelity& fid,
                      std::vector<Record>& recs) {
  const auto t0 = std::chrono::steady_clock::now();
  const WatermarkKey& key = kf.key;
  fid.image = ci.path;
  std::vector<bool> bits;
  Image marked;
  PlanPtr plan;
  try {
    plan = plan_for(key, ci.dims.width, ci.dims.height);
    key.validate(*plan);
    EmbedResult e;
    if (key.is_multibit()) {
      bits = cfg.bits ? *cfg.bits : default_bits(key.message_directions.size());
      e = embed_multibit(ci.image, key, bits, *plan);
    } else {
      e = embed_zero_bit(ci.image, key, *plan);
    }
    marked = quantize_8bit(e.image);
    fid.psnr = metrics::psnr(ci.image, marked);
    fid.ssim = metrics::ssim(ci.image, marked);
    fid.max_delta = metrics::max_abs_diff(ci.image, marked);
    fid.clamped_pixels = e.clamped_pixels;
  } catch (const std::exception& ex) {
    fid.error = ex.what();
    fid.seconds = seconds_since(t0);
    return;
  }
  fid.seconds = seconds_since(t0);

  for (const auto& la : attack_matrix(cfg.attacks)) {
    std::vector<DetectionMode> modes{DetectionMode::kDirect};
    if (cfg.geometric && la.spec.is_geometric()) {
      modes.push_back(DetectionMode::kMagnitude);
      modes.push_back(DetectionMode::kGeometric);
    }
    Image attacked, nominal;
    std::string attack_error;
    try {
      attacked = apply(marked, la.spec);
      nominal = to_nominal(attacked, la.spec, ci.dims);
    } catch (const std::exception& ex) {
      attack_error = ex.what();
    }
    for (DetectionMode m : modes) {
      const auto t1 = std::chrono::steady_clock::now();
      Record r;
      r.image = ci.path;
      r.label = la.label;
      r.attack = la.spec;
      r.mode = m;
      r.error = attack_error;
      if (attack_error.empty()) {
        try {
          DetectionReport rep;
          if (m == DetectionMode::kDirect) {
            const AnalyzedImage img(nominal, plan);
            rep = key.is_multibit() ? detect_multibit(img, key, kf.thresholds.direct)
                                    : detect_zero_bit(img, key, kf.thresholds.direct);
            if (cfg.fakes > 0) {
              double mx = -std::numeric_limits<double>::infinity();
              for (int i = 0; i < cfg.fakes; ++i)
                mx = std::max(mx, detect_zero_bit(img, fake_key(key, cfg.fake_base, i), 0.0).decision_statistic());
              r.max_fake = mx;
            }
          } else if (m == DetectionMode::kMagnitude) {
            rep = detect_magnitude(nominal, key, plan, {}, kf.thresholds.magnitude);
          } else {
            rep = detect_geometric(attacked, key, plan, ci.dims, kf.thresholds.geometric);
          }
          if (key.is_multibit() && rep.bits) r.ber = metrics::ber(bits, rep.decoded_bits());
          r.report = std::move(rep);
        } catch (const std::exception& ex) {
          r.error = ex.what();
        }
      }
      r.seconds = seconds_since(t1);
      recs.push_back(std::move(r));
    }
  }
}

inline int mode_rank(DetectionMode m) { return static_cast<int>(m); }

}  // namespace detail

inline BenchResult run(const std::vector<CorpusImage>& corpus, const KeyFile& kf, const BenchConfig& cfg) {
  kf.key.validate();
  for (const auto& a : cfg.attacks) a.validate();
  std::vector<Fidelity> fid(corpus.size());
  std::vector<std::vector<Record>> per(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { detail::run_image(corpus[i], kf, cfg, fid[i], per[i]); });
  BenchResult out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.fidelity.push_back(std::move(fid[i]));
    for (auto& r : per[i]) out.records.push_back(std::move(r));
  }
  std::stable_sort(out.fidelity.begin(), out.fidelity.end(),
                   [](const Fidelity& a, const Fidelity& b) { return a.image < b.image; });
  std::stable_sort(out.records.begin(), out.records.end(), [](const Record& a, const Record& b) {
    if (a.image != b.image) return a.image < b.image;
    if (a.label != b.label) return a.label < b.label;
    return detail::mode_rank(a.mode) < detail::mode_rank(b.mode);
  });
  return out;
}

struct Provenance {
  std::string key_fingerprint;
  std::string seed;
  std::string software = kSoftware;
};

inline Provenance provenance(const WatermarkKey& key) {
  return {key.fingerprint(key.message_directions.front()), key.seed.hex(), kSoftware};
}

inline json provenance_json(const Provenance& p) {
  return {{"key_fingerprint", p.key_fingerprint}, {"seed", p.seed}, {"software", p.software}};
}

inline json detection_json(const DetectionReport& d) {
  json j;
  j["mode"] = mode_name(d.mode);
  j["statistic"] = d.mode != DetectionMode::kDirect ? "magnitude"
                   : d.statistic == Statistic::kRaw ? "raw"
                                                    : "normalized";
  j["raw_correlation"] = num(d.raw_correlation);
  j["normalized_correlation"] = num(d.normalized_correlation);
  if (d.mode != DetectionMode::kDirect) j["magnitude_statistic"] = num(d.magnitude_statistic);
  j["threshold"] = num(d.threshold);
  j["decision"] = d.present ? "present" : "absent";
  if (d.matched_scale) j["matched_scale"] = *d.matched_scale;
  if (d.mode == DetectionMode::kGeometric) {
    j["normalization"] = d.normalization;
    j["rotation_index"] = d.rotation_index ? json(*d.rotation_index) : json(nullptr);
    j["residual_rotation_degrees"] = num(d.residual_rotation_degrees);
    j["residual_zoom"] = num(d.residual_zoom);
  }
  if (d.bits) {
    j["bits"] = format_bits(d.decoded_bits());
    json corr = json::array();
    for (const auto& b : *d.bits) corr.push_back(num(b.correlation));
    j["bit_correlations"] = corr;
  }
  if (!d.notes.empty()) j["notes"] = d.notes;
  return j;
}

inline json record_json(const Record& r, const Provenance& prov, bool timing) {
  json j;
  j["image"] = r.image;
  j["label"] = r.label;
  j["attack"] = r.attack;
  j["mode"] = mode_name(r.mode);
  if (r.report) j.update(detection_json(*r.report));
  if (r.ber) j["ber"] = {{"b_e", r.ber->b_e}, {"b_c", r.ber->b_c}, {"b_t", r.ber->b_t}, {"ber", num(r.ber->ber)}};
  if (r.max_fake) j["max_fake"] = num(*r.max_fake);
  if (!r.error.empty()) j["error"] = r.error;
  if (timing) j["seconds"] = num(r.seconds);
  j["provenance"] = provenance_json(prov);
  return j;
}

namespace detail {

struct Agg {
  AttackSpec attack;
  std::string label;
  DetectionMode mode;
  std::size_t n = 0, present = 0, errors = 0, ber_n = 0;
  double sum_stat = 0, min_stat = std::numeric_limits<double>::infinity(), sum_norm = 0, sum_ber = 0;
  double max_fake = -std::numeric_limits<double>::infinity();
};

inline std::vector<Agg> aggregate(const std::vector<Record>& recs) {
  std::map<std::pair<std::string, int>, Agg> m;
  for (const auto& r : recs) {
    auto& a = m[{r.label, mode_rank(r.mode)}];
    a.attack = r.attack;
    a.label = r.label;
    a.mode = r.mode;
    if (!r.report) {
      ++a.errors;
      continue;
    }
    ++a.n;
    a.present += r.report->present;
    const double s = r.report->decision_statistic();
    a.sum_stat += s;
    a.min_stat = std::min(a.min_stat, s);
    a.sum_norm += r.report->normalized_correlation;
    if (r.ber) {
      ++a.ber_n;
      a.sum_ber += r.ber->ber;
    }
    if (r.max_fake) a.max_fake = std::max(a.max_fake, *r.max_fake);
  }
  std::vector<Agg> out;
  for (auto& [k, a] : m) out.push_back(a);
  // Curve order: by kind, then parameter.
  std::stable_sort(out.begin(), out.end(), [](const Agg& a, const Agg& b) {
    if (a.attack.kind != b.attack.kind) return a.attack.kind < b.attack.kind;
    if (a.attack.param != b.attack.param) return a.attack.param < b.attack.param;
    return mode_rank(a.mode) < mode_rank(b.mode);
  });
  return out;
}

}  // namespace detail

inline json aggregates_json(const BenchResult& res) {
  json j;
  json fid;
  std::size_t n = 0;
  double sp = 0, ss = 0, min_psnr = std::numeric_limits<double>::infinity(), max_delta = 0;
  for (const auto& f : res.fidelity) {
    if (!f.error.empty()) continue;
    ++n;
    sp += f.psnr;
    ss += f.ssim;
    min_psnr = std::min(min_psnr, f.psnr);
    max_delta = std::max(max_delta, f.max_delta);
  }
  fid["images"] = n;
  fid["failed"] = res.fidelity.size() - n;
  if (n) {
    fid["mean_psnr"] = num(sp / n);
    fid["min_psnr"] = num(min_psnr);
    fid["mean_ssim"] = num(ss / n);
    fid["max_delta"] = num(max_delta);
  }
  j["fidelity"] = fid;
  json rows = json::array();
  for (const auto& a : detail::aggregate(res.records)) {
    json r;
    r["label"] = a.label;
    r["attack"] = a.attack;
    r["mode"] = mode_name(a.mode);
    r["images"] = a.n;
    r["errors"] = a.errors;
    if (a.n) {
      r["detection_rate"] = num(static_cast<double>(a.present) / a.n);
      r["mean_statistic"] = num(a.sum_stat / a.n);
      r["min_statistic"] = num(a.min_stat);
      r["mean_normalized_correlation"] = num(a.sum_norm / a.n);
    }
    if (a.ber_n) r["mean_ber"] = num(a.sum_ber / a.ber_n);
    if (std::isfinite(a.max_fake)) {
      r["max_fake"] = num(a.max_fake);
      if (a.max_fake > 0 && a.n) r["separation_ratio"] = num(a.min_stat / a.max_fake);
    }
    rows.push_back(r);
  }
  j["attacks"] = rows;
  return j;
}

inline json report_json(const std::vector<CorpusImage>& corpus, const KeyFile& kf, const BenchConfig& cfg,
                        const BenchResult& res) {
  const Provenance prov = provenance(kf.key);
  json j;
  j["format"] = "curvemark-bench";
  j["format_version"] = 1;
  j["provenance"] = provenance_json(prov);
  j["key"] = to_json(kf);
  j["config"] = config_json(cfg);
  json manifest = json::array();
  for (const auto& c : corpus) {
    json m = {{"path", c.path}, {"width", c.dims.width}, {"height", c.dims.height}, {"blake2b", c.blake2b}};
    if (c.converted_from_color) m["converted_from_color"] = true;
    manifest.push_back(m);
  }
  j["corpus"] = manifest;
  json fid = json::array();
  for (const auto& f : res.fidelity) {
    json r;
    r["image"] = f.image;
    if (f.error.empty()) {
      r["psnr"] = num(f.psnr);
      r["ssim"] = num(f.ssim);
      r["max_delta"] = num(f.max_delta);
      r["clamped_pixels"] = f.clamped_pixels;
    } else {
      r["error"] = f.error;
    }
    if (cfg.timing) r["seconds"] = num(f.seconds);
    r["provenance"] = provenance_json(prov);
    fid.push_back(r);
  }
  j["fidelity"] = fid;
  json recs = json::array();
  for (const auto& r : res.records) recs.push_back(record_json(r, prov, cfg.timing));
  j["records"] = recs;
  j["aggregates"] = aggregates_json(res);
  return j;
}

inline std::string csv_field(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// Curve data: one row per (attack, mode), ordered by kind then parameter.
inline std::string curves_csv(const json& aggregates) {
  std::ostringstream os;
  os << "kind,param,mode,images,detection_rate,mean_statistic,min_statistic,mean_normalized_correlation,mean_ber\n";
  for (const auto& r : aggregates["attacks"]) {
    const AttackSpec a = r["attack"].get<AttackSpec>();
    os << attack_name(a.kind) << ',';
    if (a.has_param()) os << csv_field(num(a.param));
    os << ',' << r["mode"].get<std::string>() << ',' << r["images"].dump();
    for (const char* f : {"detection_rate", "mean_statistic", "min_statistic", "mean_normalized_correlation",
                          "mean_ber"})
      os << ',' << (r.contains(f) ? csv_field(r[f]) : "");
    os << '\n';
  }
  return os.str();
}

}  // namespace curvemark::bench
