#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "curvemark/core.hpp"
#include "curvemark/geometry.hpp"
#include "curvemark/keyed_stream.hpp"

// Attack simulators. Every output is an 8-bit raster (rounded, clamped), as a
// saved image would be.
namespace curvemark {

enum class AttackKind { kNone, kGaussianNoise, kSaltPepper, kJpeg, kLowpass, kHistEq, kScale, kRotate };

inline const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kGaussianNoise: return "gaussian_noise";
    case AttackKind::kSaltPepper: return "salt_pepper";
    case AttackKind::kJpeg: return "jpeg";
    case AttackKind::kLowpass: return "lowpass";
    case AttackKind::kHistEq: return "hist_eq";
    case AttackKind::kScale: return "scale";
    case AttackKind::kRotate: return "rotate";
  }
  return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
  for (auto k : {AttackKind::kNone, AttackKind::kGaussianNoise, AttackKind::kSaltPepper, AttackKind::kJpeg,
                 AttackKind::kLowpass, AttackKind::kHistEq, AttackKind::kScale, AttackKind::kRotate})
    if (s == attack_name(k)) return k;
  if (s == "gaussian") return AttackKind::kGaussianNoise;
  if (s == "saltpepper" || s == "salt-pepper") return AttackKind::kSaltPepper;
  if (s == "blur") return AttackKind::kLowpass;
  if (s == "histeq" || s == "hist-eq") return AttackKind::kHistEq;
  throw InvalidArgument("unknown attack kind '" + s + "'");
}

// One parameter per kind: sigma (gray levels), density, quality, blur radius,
// factor or degrees. hist_eq and none take none.
struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  double param = 0.0;
  std::uint64_t seed = 0;

  const char* param_name() const {
    switch (kind) {
      case AttackKind::kGaussianNoise: return "sigma";
      case AttackKind::kSaltPepper: return "density";
      case AttackKind::kJpeg: return "quality";
      case AttackKind::kLowpass: return "radius";
      case AttackKind::kScale: return "factor";
      case AttackKind::kRotate: return "degrees";
      default: return nullptr;
    }
  }

  bool has_param() const { return param_name() != nullptr; }
  bool is_geometric() const { return kind == AttackKind::kScale || kind == AttackKind::kRotate; }

  void validate() const {
    auto bad = [&](const std::string& why) {
      throw InvalidArgument(std::string(attack_name(kind)) + ": " + why);
    };
    if (!std::isfinite(param)) bad("parameter must be finite");
    switch (kind) {
      case AttackKind::kGaussianNoise:
        if (param < 0.0) bad("sigma must be >= 0");
        break;
      case AttackKind::kSaltPepper:
        if (param < 0.0 || param > 1.0) bad("density must lie in [0, 1]");
        break;
      case AttackKind::kJpeg:
        if (param < 1.0 || param > 100.0 || param != std::floor(param)) bad("quality must be an integer in 1..100");
        break;
      case AttackKind::kLowpass:
        if (param < 0.0 || param > 50.0) bad("radius must lie in [0, 50]");
        break;
      case AttackKind::kScale:
        if (param <= 0.0 || param > 8.0) bad("factor must lie in (0, 8]");
        break;
      case AttackKind::kRotate:
        if (std::abs(param) > 360.0) bad("degrees must lie in [-360, 360]");
        break;
      default:
        break;
    }
  }

  std::string label() const {
    if (!has_param()) return attack_name(kind);
    std::ostringstream os;
    os << attack_name(kind) << "(" << param_name() << "=" << param << ")";
    return os.str();
  }
};

inline bool operator==(const AttackSpec& a, const AttackSpec& b) {
  return a.kind == b.kind && a.param == b.param && a.seed == b.seed;
}

inline void to_json(nlohmann::ordered_json& j, const AttackSpec& s) {
  j = nlohmann::ordered_json::object();
  j["kind"] = attack_name(s.kind);
  if (s.has_param()) j[s.param_name()] = s.param;
  if (s.kind == AttackKind::kGaussianNoise || s.kind == AttackKind::kSaltPepper) j["seed"] = s.seed;
}

inline void from_json(const nlohmann::ordered_json& j, AttackSpec& s) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw InvalidArgument("attack spec needs a string 'kind'");
  s = {};
  s.kind = parse_attack_kind(j["kind"].get<std::string>());
  if (s.has_param()) {
    if (!j.contains(s.param_name()) || !j[s.param_name()].is_number())
      throw InvalidArgument(std::string("attack spec needs numeric '") + s.param_name() + "'");
    s.param = j[s.param_name()].get<double>();
  }
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  s.validate();
}

namespace attacks {

inline Image gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  Image out = img;
  if (sigma > 0.0) {
    KeyedStream rng(seed_from_u64(seed, "curvemark/attack"), StreamDomain::kAttackNoise, 1, 0);
    for (double& v : out.values()) v += sigma * rng.next_normal();
  }
  return quantize_8bit(std::move(out));
}

// Exactly round(density * L) pixels, chosen without replacement.
inline Image salt_pepper(const Image& img, double density, std::uint64_t seed) {
  Image out = quantize_8bit(img);
  const std::size_t n = out.size();
  const auto count = static_cast<std::size_t>(std::llround(density * static_cast<double>(n)));
  if (count == 0) return out;
  KeyedStream rng(seed_from_u64(seed, "curvemark/attack"), StreamDomain::kAttackNoise, 2, 0);
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
    out[idx[i]] = (rng.next_u64() & 1u) ? 255.0 : 0.0;
  }
  return out;
}

namespace detail {

inline constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

inline std::array<double, 64> dct_basis() {
  std::array<double, 64> b{};
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n)
      b[k * 8 + n] = (k == 0 ? std::sqrt(0.125) : 0.5) * std::cos((2 * n + 1) * k * kPi / 16.0);
  return b;
}

}  // namespace detail

inline std::array<int, 64> jpeg_quant_table(int quality) {
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (int i = 0; i < 64; ++i) q[i] = std::clamp((detail::kLumaTable[i] * scale + 50) / 100, 1, 255);
  return q;
}

// Baseline JPEG quantization loss: level shift, 8x8 DCT, quantize, dequantize,
// inverse DCT. Partial edge blocks are padded by edge replication.
inline Image jpeg(const Image& img, int quality) {
  const auto q = jpeg_quant_table(quality);
  static const auto basis = detail::dct_basis();
  const Image src = quantize_8bit(img);
  Image out(src.rows(), src.cols());
  const int rows = src.rows(), cols = src.cols();
  std::array<double, 64> block{}, tmp{}, coef{};
  for (int by = 0; by < rows; by += 8) {
    for (int bx = 0; bx < cols; bx += 8) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          block[y * 8 + x] = src(std::min(by + y, rows - 1), std::min(bx + x, cols - 1)) - 128.0;
      for (int y = 0; y < 8; ++y)
        for (int k = 0; k < 8; ++k) {
          double acc = 0.0;
          for (int n = 0; n < 8; ++n) acc += basis[k * 8 + n] * block[y * 8 + n];
          tmp[y * 8 + k] = acc;
        }
      for (int k = 0; k < 8; ++k)
        for (int x = 0; x < 8; ++x) {
          double acc = 0.0;
          for (int n = 0; n < 8; ++n) acc += basis[k * 8 + n] * tmp[n * 8 + x];
          coef[k * 8 + x] = std::nearbyint(acc / q[k * 8 + x]) * q[k * 8 + x];
        }
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          double acc = 0.0;
          for (int k = 0; k < 8; ++k) acc += basis[k * 8 + y] * coef[k * 8 + x];
          tmp[y * 8 + x] = acc;
        }
      for (int y = 0; y < 8 && by + y < rows; ++y)
        for (int x = 0; x < 8 && bx + x < cols; ++x) {
          double acc = 0.0;
          for (int k = 0; k < 8; ++k) acc += basis[k * 8 + x] * tmp[y * 8 + k];
          out(by + y, bx + x) = acc + 128.0;
        }
    }
  }
  return quantize_8bit(std::move(out));
}

// Separable Gaussian blur, sigma = radius / 2, edge replication.
inline Image lowpass(const Image& img, double radius) {
  const double sigma = radius / 2.0;
  if (sigma <= 0.0) return quantize_8bit(img);
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) sum += k[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int rows = img.rows(), cols = img.cols();
  Image tmp(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += k[i + half] * img(r, std::clamp(c + i, 0, cols - 1));
      tmp(r, c) = acc;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += k[i + half] * tmp(std::clamp(r + i, 0, rows - 1), c);
      out(r, c) = acc;
    }
  return quantize_8bit(std::move(out));
}

// Cumulative-histogram equalization over 256 bins:
// v -> round(255 * (cdf(v) - cdf_min) / (L - cdf_min)).
inline Image hist_eq(const Image& img) {
  const Image src = quantize_8bit(img);
  std::array<std::size_t, 256> hist{};
  for (double v : src.values()) ++hist[static_cast<int>(v)];
  std::array<std::size_t, 256> cdf{};
  std::size_t acc = 0;
  for (int i = 0; i < 256; ++i) cdf[i] = acc += hist[i];
  std::size_t cdf_min = 0;
  for (int i = 0; i < 256; ++i)
    if (hist[i]) {
      cdf_min = cdf[i];
      break;
    }
  const std::size_t total = src.size();
  Image out(src.rows(), src.cols());
  if (total == cdf_min) return src;  // single gray level
  std::array<double, 256> lut{};
  for (int i = 0; i < 256; ++i)
    lut[i] = cdf[i] < cdf_min ? 0.0
                              : std::nearbyint(255.0 * static_cast<double>(cdf[i] - cdf_min) /
                                               static_cast<double>(total - cdf_min));
  for (std::size_t i = 0; i < total; ++i) out[i] = lut[static_cast<int>(src[i])];
  return out;
}

inline Image scale(const Image& img, double factor) {
  const int w = std::max(1, static_cast<int>(std::lround(img.cols() * factor)));
  const int h = std::max(1, static_cast<int>(std::lround(img.rows() * factor)));
  return quantize_8bit(geometry::resize(img, w, h));
}

inline Image rotate(const Image& img, double degrees) {
  return quantize_8bit(geometry::rotate_expand(img, degrees, geometry::Border::kReplicate));
}

}  // namespace attacks

inline Image apply(const Image& img, const AttackSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case AttackKind::kNone: return quantize_8bit(img);
    case AttackKind::kGaussianNoise: return attacks::gaussian_noise(img, spec.param, spec.seed);
    case AttackKind::kSaltPepper: return attacks::salt_pepper(img, spec.param, spec.seed);
    case AttackKind::kJpeg: return attacks::jpeg(img, static_cast<int>(spec.param));
    case AttackKind::kLowpass: return attacks::lowpass(img, spec.param);
    case AttackKind::kHistEq: return attacks::hist_eq(img);
    case AttackKind::kScale: return attacks::scale(img, spec.param);
    case AttackKind::kRotate: return attacks::rotate(img, spec.param);
  }
  throw InvalidArgument("unknown attack kind");
}

struct LabeledAttack {
  AttackSpec spec;
  std::string label;
};

inline std::vector<LabeledAttack> attack_matrix(const std::vector<AttackSpec>& specs) {
  std::vector<LabeledAttack> out;
  out.reserve(specs.size());
  for (const auto& s : specs) {
    s.validate();
    out.push_back({s, s.label()});
  }
  return out;
}

// Benchmark grid: every kind at several levels, in a fixed order.
inline std::vector<AttackSpec> default_attack_grid(std::uint64_t seed = 1) {
  std::vector<AttackSpec> g;
  g.push_back({AttackKind::kNone, 0.0, 0});
  for (double s : {1.0, 2.0, 3.0, 5.0, 7.0, 10.0}) g.push_back({AttackKind::kGaussianNoise, s, seed});
  for (double d : {0.001, 0.005, 0.01, 0.02}) g.push_back({AttackKind::kSaltPepper, d, seed});
  for (int q = 30; q <= 90; q += 10) g.push_back({AttackKind::kJpeg, static_cast<double>(q), 0});
  for (double r : {0.5, 1.0, 1.5, 2.0}) g.push_back({AttackKind::kLowpass, r, 0});
  g.push_back({AttackKind::kHistEq, 0.0, 0});
  for (double f : {0.5, 0.75, 1.25, 1.5}) g.push_back({AttackKind::kScale, f, 0});
  for (double a : {5.625, 11.25, 22.5, 45.0, 90.0}) g.push_back({AttackKind::kRotate, a, 0});
  return g;
}

}  // namespace curvemark
