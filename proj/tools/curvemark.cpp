#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "curvemark/attacks.hpp"
#include "curvemark/bench.hpp"
#include "curvemark/keyfile.hpp"
#include "curvemark/metrics.hpp"
#include "curvemark/pgm.hpp"
#include "curvemark/watermark.hpp"

namespace cm = curvemark;
using json = nlohmann::ordered_json;

namespace {

enum Exit {
  kOk = 0,
  kIo = 1,
  kBadKey = 2,
  kInvisible = 3,
  kAbsent = 4,
  kNoTemplate = 5,
  kBadAttack = 6,
  kUsage = 64,
};

// Carries an exit code up to main.
struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw Failure{code, msg}; }

cm::KeyFile read_key(const std::string& path) {
  try {
    return cm::load_key(path);
  } catch (const cm::IoError& e) {
    fail(kIo, e.what());
  } catch (const cm::KeyFileError& e) {
    fail(kBadKey, path + ": " + e.what());
  }
}

cm::Image read_image(const std::string& path) {
  cm::LoadedImage li;
  try {
    li = cm::load_image(path);
  } catch (const cm::IoError& e) {
    fail(kIo, e.what());
  }
  if (li.converted_from_color) std::cerr << "warning: " << path << " is color; using BT.601 luma\n";
  return std::move(li.image);
}

void write_image(const std::string& path, const cm::Image& img) {
  try {
    cm::save_pgm(path, img);
  } catch (const cm::IoError& e) {
    fail(kIo, e.what());
  }
}

cm::PlanPtr plan_checked(const cm::WatermarkKey& key, int w, int h) {
  try {
    auto plan = cm::plan_for(key, w, h);
    key.validate(*plan);
    return plan;
  } catch (const cm::InvalidArgument& e) {
    fail(kBadKey, std::string("key does not fit a ") + std::to_string(w) + "x" + std::to_string(h) +
                      " image: " + e.what());
  }
}

cm::Dims parse_dims(const std::string& s) {
  int w = 0, h = 0;
  char x = 0, extra = 0;
  std::istringstream is(s);
  if (!(is >> w >> x >> h) || (x != 'x' && x != 'X') || (is >> extra) || w <= 0 || h <= 0)
    fail(kUsage, "size must look like WIDTHxHEIGHT, got '" + s + "'");
  return {w, h};
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(kUsage, "expected a comma-separated list of integers, got '" + s + "'");
    }
  }
  if (out.empty()) fail(kUsage, "empty integer list");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  try {
    cm::write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  } catch (const cm::IoError& e) {
    fail(kIo, e.what());
  }
}

// keygen ------------------------------------------------------------------

struct KeygenArgs {
  std::string seed, out, mode = "zero", directions;
  std::optional<double> alpha;
  int scales = cm::kDefaultScales, angles = 32, embed_scale = 3, template_offset = 8;
};

int cmd_keygen(const KeygenArgs& a) {
  if (a.mode != "zero" && a.mode != "multi") fail(kUsage, "--mode must be zero or multi");
  cm::Seed256 seed;
  if (a.seed.empty()) {
    seed = cm::Seed256::random();
  } else {
    try {
      seed = cm::Seed256::from_hex(a.seed);
    } catch (const cm::InvalidArgument& e) {
      fail(kUsage, std::string("bad --seed: ") + e.what());
    }
  }
  cm::KeyFile kf;
  kf.key = cm::default_key(a.mode == "multi", seed);
  if (a.alpha) kf.key.alpha = *a.alpha;
  kf.key.plan = {a.scales, a.angles};
  kf.key.embed_scale = a.embed_scale;
  kf.key.template_offset = a.template_offset;
  if (!a.directions.empty()) kf.key.message_directions = parse_int_list(a.directions);
  const int n = cm::FdctPlan::angle_schedule(std::max(a.scales, a.embed_scale), a.angles)[a.embed_scale - 1];
  kf.key.template_direction = (kf.key.message_directions.front() - 1 + a.template_offset) % n + 1;
  try {
    kf.key.validate();
  } catch (const cm::InvalidArgument& e) {
    fail(kUsage, std::string("invalid key parameters: ") + e.what());
  }
  const std::string text = cm::serialize_key(kf);
  if (a.out.empty() || a.out == "-")
    std::cout << text;
  else
    write_text(a.out, text);
  return kOk;
}

// embed -------------------------------------------------------------------

struct EmbedArgs {
  std::string input, key, output, mode, bits;
};

int cmd_embed(const EmbedArgs& a) {
  const cm::KeyFile kf = read_key(a.key);
  const std::string mode = a.mode.empty() ? (kf.key.is_multibit() ? "multi" : "zero") : a.mode;
  if (mode != "zero" && mode != "multi") fail(kUsage, "--mode must be zero or multi");
  if (mode == "multi" && a.bits.empty()) fail(kUsage, "multi mode needs --bits");
  if (mode == "zero" && !a.bits.empty()) fail(kUsage, "--bits only applies to multi mode");
  if ((mode == "multi") != kf.key.is_multibit())
    fail(kBadKey, std::string("key is ") + (kf.key.is_multibit() ? "multibit" : "zero-bit") + ", mode is " + mode);
  std::vector<bool> bits;
  if (mode == "multi") {
    try {
      bits = cm::bench::parse_bits(a.bits);
    } catch (const cm::InvalidArgument& e) {
      fail(kUsage, e.what());
    }
    if (bits.size() != kf.key.message_directions.size())
      fail(kUsage, "key carries " + std::to_string(kf.key.message_directions.size()) + " bits, got " +
                       std::to_string(bits.size()));
  }
  const cm::Image img = read_image(a.input);
  const auto plan = plan_checked(kf.key, img.cols(), img.rows());
  cm::EmbedResult e;
  try {
    e = mode == "multi" ? cm::embed_multibit(img, kf.key, bits, *plan) : cm::embed_zero_bit(img, kf.key, *plan);
  } catch (const cm::InvisibilityViolation& ex) {
    fail(kInvisible, ex.what());
  }
  const cm::Image out = cm::quantize_8bit(e.image);
  write_image(a.output, out);
  json j;
  j["psnr"] = cm::bench::num(cm::metrics::psnr(img, out));
  j["ssim"] = cm::bench::num(cm::metrics::ssim(img, out));
  j["max_delta"] = cm::bench::num(cm::metrics::max_abs_diff(img, out));
  j["clamped_pixels"] = e.clamped_pixels;
  j["mode"] = mode;
  if (mode == "multi") j["bits"] = cm::bench::format_bits(bits);
  std::cout << j.dump() << "\n";
  return kOk;
}

// detect ------------------------------------------------------------------

struct DetectArgs {
  std::string input, key, mode = "direct", nominal, statistic = "normalized";
  std::optional<double> threshold;
};

int cmd_detect(const DetectArgs& a) {
  cm::DetectionMode mode;
  try {
    mode = cm::parse_mode(a.mode);
  } catch (const cm::InvalidArgument& e) {
    fail(kUsage, e.what());
  }
  if (a.statistic != "normalized" && a.statistic != "raw") fail(kUsage, "--statistic must be normalized or raw");
  if (mode == cm::DetectionMode::kGeometric && a.nominal.empty()) fail(kUsage, "geometric mode needs --nominal WxH");
  const cm::KeyFile kf = read_key(a.key);
  const cm::Image img = read_image(a.input);
  const cm::Dims nominal = a.nominal.empty() ? cm::Dims{img.cols(), img.rows()} : parse_dims(a.nominal);
  const auto plan = plan_checked(kf.key, nominal.width, nominal.height);
  if (mode != cm::DetectionMode::kGeometric && (img.cols() != nominal.width || img.rows() != nominal.height))
    fail(kUsage, "image is " + std::to_string(img.cols()) + "x" + std::to_string(img.rows()) +
                     ", not the nominal size; use --mode geometric");
  cm::DetectionReport r;
  const auto stat = a.statistic == "raw" ? cm::Statistic::kRaw : cm::Statistic::kNormalized;
  switch (mode) {
    case cm::DetectionMode::kDirect: {
      // Stored thresholds are in normalized units.
      std::optional<double> t = a.threshold;
      if (!t && stat == cm::Statistic::kNormalized) t = kf.thresholds.direct;
      r = kf.key.is_multibit() ? cm::detect_multibit(img, kf.key, plan, t, stat)
                               : cm::detect_zero_bit(img, kf.key, plan, t, stat);
      break;
    }
    case cm::DetectionMode::kMagnitude:
      r = cm::detect_magnitude(img, kf.key, plan, {}, a.threshold ? a.threshold : kf.thresholds.magnitude);
      break;
    case cm::DetectionMode::kGeometric:
      r = cm::detect_geometric(img, kf.key, plan, nominal, a.threshold ? a.threshold : kf.thresholds.geometric);
      break;
  }
  std::cout << cm::bench::detection_json(r).dump() << "\n";
  if (r.present) return kOk;
  if (mode == cm::DetectionMode::kGeometric && !r.rotation_index) return kNoTemplate;
  return kAbsent;
}

// attack ------------------------------------------------------------------

struct AttackArgs {
  std::string input, output, kind;
  std::optional<double> param, sigma, density, quality, radius, factor, degrees;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& a) {
  cm::AttackSpec spec;
  try {
    spec.kind = cm::parse_attack_kind(a.kind);
  } catch (const cm::InvalidArgument& e) {
    fail(kBadAttack, e.what());
  }
  spec.seed = a.seed;
  std::vector<std::pair<const char*, std::optional<double>>> given{
      {"sigma", a.sigma}, {"density", a.density}, {"quality", a.quality},
      {"radius", a.radius}, {"factor", a.factor}, {"degrees", a.degrees}};
  std::optional<double> value = a.param;
  for (const auto& [name, v] : given) {
    if (!v) continue;
    if (!spec.has_param() || std::string(name) != spec.param_name())
      fail(kBadAttack, std::string("--") + name + " does not apply to " + cm::attack_name(spec.kind));
    value = v;
  }
  if (spec.has_param()) {
    if (!value) fail(kBadAttack, std::string(cm::attack_name(spec.kind)) + " needs --" + spec.param_name());
    spec.param = *value;
  } else if (value) {
    fail(kBadAttack, std::string(cm::attack_name(spec.kind)) + " takes no parameter");
  }
  try {
    spec.validate();
  } catch (const cm::InvalidArgument& e) {
    fail(kBadAttack, e.what());
  }
  const cm::Image img = read_image(a.input);
  write_image(a.output, cm::apply(img, spec));
  json j = spec;
  std::cout << json{{"attack", j}, {"label", spec.label()}}.dump() << "\n";
  return kOk;
}

// bench -------------------------------------------------------------------

struct BenchArgs {
  std::string corpus, key, grid, out, csv;
  bool timing = false;
};

int cmd_bench(const BenchArgs& a) {
  const cm::KeyFile kf = read_key(a.key);
  cm::bench::BenchConfig cfg;
  if (!a.grid.empty()) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = cm::read_file_bytes(a.grid);
    } catch (const cm::IoError& e) {
      fail(kIo, e.what());
    }
    try {
      cfg = cm::bench::parse_config(json::parse(bytes.begin(), bytes.end()));
    } catch (const json::exception& e) {
      fail(kBadAttack, a.grid + ": " + e.what());
    } catch (const cm::InvalidArgument& e) {
      fail(kBadAttack, a.grid + ": " + e.what());
    }
  }
  if (a.timing) cfg.timing = true;
  if (cfg.bits && kf.key.is_multibit() && cfg.bits->size() != kf.key.message_directions.size())
    fail(kUsage, "config bits do not match the key's message directions");
  std::vector<cm::bench::CorpusImage> corpus;
  try {
    corpus = cm::bench::load_corpus(a.corpus);
  } catch (const cm::IoError& e) {
    fail(kIo, e.what());
  }
  const auto res = cm::bench::run(corpus, kf, cfg);
  const json report = cm::bench::report_json(corpus, kf, cfg, res);
  write_text(a.out, report.dump(2) + "\n");
  const std::string csv = a.csv.empty() ? std::filesystem::path(a.out).replace_extension(".csv").string() : a.csv;
  write_text(csv, cm::bench::curves_csv(report["aggregates"]));
  std::cout << json{{"report", a.out}, {"csv", csv}, {"images", corpus.size()}, {"records", res.records.size()}}.dump()
            << "\n";
  return kOk;
}

// calibrate ---------------------------------------------------------------

struct CalibrateArgs {
  std::string corpus, key, mode = "direct";
  int fakes = 1000;
  double margin = cm::kDefaultMargin;
  std::uint64_t fake_base = cm::kDefaultFakeBase;
  bool embed = false, no_store = false;
};

int cmd_calibrate(const CalibrateArgs& a) {
  if (a.fakes < 100) fail(kUsage, "--fakes must be at least 100");
  if (!(a.margin >= 0.0)) fail(kUsage, "--margin must be >= 0");
  cm::DetectionMode mode;
  try {
    mode = cm::parse_mode(a.mode);
  } catch (const cm::InvalidArgument& e) {
    fail(kUsage, e.what());
  }
  cm::KeyFile kf = read_key(a.key);
  std::vector<cm::bench::CorpusImage> corpus;
  try {
    corpus = cm::bench::load_corpus(a.corpus);
  } catch (const cm::IoError& e) {
    fail(kIo, e.what());
  }
  std::vector<std::unique_ptr<cm::AnalyzedImage>> images;
  std::vector<std::unique_ptr<cm::GeometricViews>> views;
  for (const auto& c : corpus) {
    const auto plan = plan_checked(kf.key, c.dims.width, c.dims.height);
    cm::Image img = c.image;
    if (a.embed) {
      try {
        const auto bits = cm::bench::default_bits(kf.key.message_directions.size());
        img = cm::quantize_8bit(kf.key.is_multibit() ? cm::embed_multibit(img, kf.key, bits, *plan).image
                                                     : cm::embed_zero_bit(img, kf.key, *plan).image);
      } catch (const cm::InvisibilityViolation& e) {
        fail(kInvisible, c.path + ": " + e.what());
      }
    }
    if (mode == cm::DetectionMode::kGeometric)
      views.push_back(std::make_unique<cm::GeometricViews>(cm::geometric_views(img, kf.key, plan, c.dims)));
    else
      images.push_back(std::make_unique<cm::AnalyzedImage>(img, plan));
  }
  std::vector<const cm::AnalyzedImage*> ptrs;
  for (const auto& p : images) ptrs.push_back(p.get());
  double t = 0.0;
  switch (mode) {
    case cm::DetectionMode::kDirect:
      t = cm::calibrate_threshold(ptrs, kf.key, a.fakes, a.margin, a.fake_base);
      kf.thresholds.direct = t;
      break;
    case cm::DetectionMode::kMagnitude:
      t = cm::calibrate_magnitude_threshold(ptrs, kf.key, a.fakes, a.margin, a.fake_base);
      kf.thresholds.magnitude = t;
      break;
    case cm::DetectionMode::kGeometric: {
      // Views of differently sized images need their own plans.
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < views.size(); ++i) {
        const auto plan = cm::plan_for(kf.key, corpus[i].dims.width, corpus[i].dims.height);
        m = std::max(m, cm::calibrate_geometric_threshold({views[i].get()}, kf.key, *plan, a.fakes, a.margin,
                                                          a.fake_base));
      }
      t = m;
      kf.thresholds.geometric = t;
      break;
    }
  }
  if (!a.no_store) write_text(a.key, cm::serialize_key(kf));
  std::printf("%.6g\n", t);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvelet-domain blind image watermarking"};
  app.set_version_flag("--version", cm::bench::kSoftware);
  app.require_subcommand(1);

  KeygenArgs kg;
  auto* keygen = app.add_subcommand("keygen", "Write a new key file");
  keygen->add_option("--seed", kg.seed, "64 hex digits; random when omitted");
  keygen->add_option("--mode", kg.mode, "zero or multi")->capture_default_str();
  keygen->add_option("--alpha", kg.alpha, "Embedding strength");
  keygen->add_option("--scales", kg.scales, "Curvelet scales")->capture_default_str();
  keygen->add_option("--angles", kg.angles, "Directions at scale 3")->capture_default_str();
  keygen->add_option("--embed-scale", kg.embed_scale)->capture_default_str();
  keygen->add_option("--directions", kg.directions, "Message directions, comma separated");
  keygen->add_option("--template-offset", kg.template_offset)->capture_default_str();
  keygen->add_option("-o,--out", kg.out, "Key file (stdout when omitted)");

  EmbedArgs em;
  auto* embed = app.add_subcommand("embed", "Watermark an image");
  embed->add_option("-i,--input", em.input)->required();
  embed->add_option("-k,--key", em.key)->required();
  embed->add_option("-o,--output", em.output)->required();
  embed->add_option("--mode", em.mode, "zero or multi (default from key)");
  embed->add_option("--bits", em.bits, "Payload, e.g. 101101");

  DetectArgs de;
  auto* detect = app.add_subcommand("detect", "Detect a watermark");
  detect->add_option("-i,--input", de.input)->required();
  detect->add_option("-k,--key", de.key)->required();
  detect->add_option("--mode", de.mode, "direct, magnitude or geometric")->capture_default_str();
  detect->add_option("--nominal", de.nominal, "Original size WxH (geometric mode)");
  detect->add_option("--threshold", de.threshold);
  detect->add_option("--statistic", de.statistic, "normalized or raw (direct mode)")->capture_default_str();

  AttackArgs at;
  auto* attack = app.add_subcommand("attack", "Apply one attack");
  attack->add_option("-i,--input", at.input)->required();
  attack->add_option("-o,--output", at.output)->required();
  attack->add_option("--kind", at.kind)->required();
  attack->add_option("--param", at.param, "Parameter of the chosen kind");
  attack->add_option("--sigma", at.sigma);
  attack->add_option("--density", at.density);
  attack->add_option("--quality", at.quality);
  attack->add_option("--radius", at.radius);
  attack->add_option("--factor", at.factor);
  attack->add_option("--degrees", at.degrees);
  attack->add_option("--seed", at.seed)->capture_default_str();

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "Run the attack benchmark over a corpus");
  bench->add_option("--corpus", be.corpus)->required();
  bench->add_option("-k,--key", be.key)->required();
  bench->add_option("--grid", be.grid, "JSON bench config");
  bench->add_option("-o,--out", be.out)->required();
  bench->add_option("--csv", be.csv, "Curve CSV (default: report path with .csv)");
  bench->add_flag("--timing", be.timing, "Record wall times");

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "Threshold from fake keys");
  calibrate->add_option("--corpus", ca.corpus)->required();
  calibrate->add_option("-k,--key", ca.key)->required();
  calibrate->add_option("--fakes", ca.fakes)->capture_default_str();
  calibrate->add_option("--margin", ca.margin)->capture_default_str();
  calibrate->add_option("--fake-base", ca.fake_base)->capture_default_str();
  calibrate->add_option("--mode", ca.mode, "direct, magnitude or geometric")->capture_default_str();
  calibrate->add_flag("--embed", ca.embed, "Watermark the corpus first");
  calibrate->add_flag("--no-store", ca.no_store, "Leave the key file untouched");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*keygen) return cmd_keygen(kg);
    if (*embed) return cmd_embed(em);
    if (*detect) return cmd_detect(de);
    if (*attack) return cmd_attack(at);
    if (*bench) return cmd_bench(be);
    if (*calibrate) return cmd_calibrate(ca);
  } catch (const Failure& f) {
    std::cerr << "curvemark: " << f.message << "\n";
    return f.code;
  } catch (const cm::IoError& e) {
    std::cerr << "curvemark: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "curvemark: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
