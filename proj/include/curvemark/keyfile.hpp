#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "curvemark/core.hpp"
#include "curvemark/pgm.hpp"
#include "curvemark/wedge_pattern.hpp"

namespace curvemark {

class KeyFileError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline constexpr int kKeyFileVersion = 1;

// Calibrated decision thresholds; absent entries fall back to the detector
// defaults.
struct Thresholds {
  std::optional<double> direct, magnitude, geometric;
  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct KeyFile {
  WatermarkKey key;
  Thresholds thresholds;
};

inline bool operator==(const WatermarkKey& a, const WatermarkKey& b) {
  return a.seed == b.seed && a.embed_scale == b.embed_scale && a.message_directions == b.message_directions &&
         a.template_direction == b.template_direction && a.template_offset == b.template_offset &&
         a.alpha == b.alpha && a.plan == b.plan;
}

inline bool operator==(const KeyFile& a, const KeyFile& b) { return a.key == b.key && a.thresholds == b.thresholds; }

// Defaults for freshly generated keys, tuned on the synthetic corpus.
inline constexpr double kDefaultZeroBitAlpha = 0.56;
inline constexpr double kDefaultMultibitAlpha = 0.3;
inline constexpr int kDefaultScales = 3;

inline WatermarkKey default_key(bool multibit, const Seed256& seed) {
  WatermarkKey k;
  k.seed = seed;
  k.embed_scale = 3;
  k.message_directions = multibit ? std::vector<int>{1, 2, 3, 6, 7, 8} : std::vector<int>{1};
  k.template_direction = 9;
  k.template_offset = 8;
  k.alpha = multibit ? kDefaultMultibitAlpha : kDefaultZeroBitAlpha;
  k.plan = {kDefaultScales, 32};
  return k;
}

inline nlohmann::ordered_json to_json(const KeyFile& f) {
  nlohmann::ordered_json j;
  j["version"] = kKeyFileVersion;
  j["seed"] = f.key.seed.hex();
  j["embed_scale"] = f.key.embed_scale;
  j["message_directions"] = f.key.message_directions;
  j["template_direction"] = f.key.template_direction;
  j["template_offset"] = f.key.template_offset;
  j["alpha"] = f.key.alpha;
  j["plan_params"] = {{"n_scales", f.key.plan.n_scales}, {"angles_at_embed_scale", f.key.plan.angles_at_embed_scale}};
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  if (f.thresholds.direct) t["direct"] = *f.thresholds.direct;
  if (f.thresholds.magnitude) t["magnitude"] = *f.thresholds.magnitude;
  if (f.thresholds.geometric) t["geometric"] = *f.thresholds.geometric;
  if (!t.empty()) j["thresholds"] = t;
  return j;
}

inline std::string serialize_key(const KeyFile& f) { return to_json(f).dump(2) + "\n"; }

inline KeyFile parse_key(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw KeyFileError(std::string("key file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw KeyFileError("key file must be a JSON object");
  auto need = [&](const char* name) -> const nlohmann::ordered_json& {
    if (!j.contains(name)) throw KeyFileError(std::string("key file lacks '") + name + "'");
    return j[name];
  };
  try {
    const auto& v = need("version");
    if (!v.is_number_integer() || v.get<int>() != kKeyFileVersion)
      throw KeyFileError("unsupported key file version " + v.dump());
    KeyFile f;
    f.key.seed = Seed256::from_hex(need("seed").get<std::string>());
    f.key.embed_scale = need("embed_scale").get<int>();
    f.key.message_directions = need("message_directions").get<std::vector<int>>();
    f.key.template_direction = need("template_direction").get<int>();
    f.key.template_offset = need("template_offset").get<int>();
    f.key.alpha = need("alpha").get<double>();
    const auto& p = need("plan_params");
    if (!p.is_object()) throw KeyFileError("plan_params must be an object");
    f.key.plan.n_scales = p.at("n_scales").get<int>();
    f.key.plan.angles_at_embed_scale = p.at("angles_at_embed_scale").get<int>();
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      if (!t.is_object()) throw KeyFileError("thresholds must be an object");
      if (t.contains("direct")) f.thresholds.direct = t["direct"].get<double>();
      if (t.contains("magnitude")) f.thresholds.magnitude = t["magnitude"].get<double>();
      if (t.contains("geometric")) f.thresholds.geometric = t["geometric"].get<double>();
    }
    f.key.validate();
    return f;
  } catch (const KeyFileError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw KeyFileError(std::string("malformed key file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw KeyFileError(std::string("invalid key: ") + e.what());
  }
}

inline KeyFile load_key(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_key(std::string(bytes.begin(), bytes.end()));
}

inline void save_key(const std::string& path, const KeyFile& f) {
  const std::string s = serialize_key(f);
  write_file_bytes(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace curvemark
