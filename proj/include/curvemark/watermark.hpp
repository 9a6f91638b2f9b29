#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "curvemark/core.hpp"
#include "curvemark/fdct.hpp"
#include "curvemark/fft.hpp"
#include "curvemark/geometry.hpp"
#include "curvemark/keyed_stream.hpp"
#include "curvemark/metrics.hpp"
#include "curvemark/wedge_pattern.hpp"

// Multiplicative curvelet-domain embedding C' = C + alpha |C| W and blind
// correlation detection, with magnitude-domain and template-based variants for
// geometric attacks.
namespace curvemark {

class InvisibilityViolation : public Error {
 public:
  using Error::Error;
};

class NoTemplateFound : public Error {
 public:
  using Error::Error;
};

enum class Statistic { kNormalized, kRaw };
enum class DetectionMode { kDirect, kMagnitude, kGeometric };

inline const char* mode_name(DetectionMode m) {
  switch (m) {
    case DetectionMode::kDirect: return "direct";
    case DetectionMode::kMagnitude: return "magnitude";
    case DetectionMode::kGeometric: return "geometric";
  }
  return "?";
}

inline DetectionMode parse_mode(const std::string& s) {
  if (s == "direct") return DetectionMode::kDirect;
  if (s == "magnitude") return DetectionMode::kMagnitude;
  if (s == "geometric") return DetectionMode::kGeometric;
  throw InvalidArgument("unknown detection mode '" + s + "'");
}

// Share of pixels allowed outside [0, 255] before embedding is refused.
inline constexpr double kMaxClampFraction = 0.01;
inline constexpr double kClampTolerance = 0.5;

struct EmbedResult {
  Image image;      // clamped to [0, 255], not rounded
  Image unclamped;  // host + watermark signal
  double psnr_vs_original = 0.0;  // clamped image
  double psnr_pre_clamp = 0.0;
  std::size_t clamped_pixels = 0;
  std::vector<WedgeId> wedges_touched;
};

// C' = C + sign * alpha * |C| * W, entry by entry.
inline ComplexGrid embed_coefficients(const ComplexGrid& c, const ComplexGrid& w, double alpha, double sign = 1.0) {
  if (c.size() != w.size()) throw DimensionMismatch("pattern does not match subband");
  ComplexGrid out = c;
  for (std::size_t i = 0; i < c.size(); ++i) out[i] += sign * alpha * std::abs(c[i]) * w[i];
  return out;
}

namespace detail {

inline EmbedResult embed_impl(const Image& image, const WatermarkKey& key, const FdctPlan& plan,
                              const std::vector<double>& signs) {
  key.validate(plan);
  require_dims(image, plan);
  const ComplexGrid spec = fft::spectrum(image);
  ComplexGrid delta(plan.height(), plan.width());
  EmbedResult res;
  auto add = [&](WedgeId w, const ComplexGrid& pattern, double sign) {
    const ComplexGrid c = analyze(spec, plan, w);
    ComplexGrid d = embed_coefficients(c, pattern, key.alpha, sign);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= c[i];
    synthesize_pair_into(delta, d, plan, w);
    res.wedges_touched.push_back(w);
    if (!(plan.partner(w) == w)) res.wedges_touched.push_back(plan.partner(w));
  };
  for (std::size_t i = 0; i < key.message_directions.size(); ++i) {
    const int d = key.message_directions[i];
    add({key.embed_scale, d}, generate_pattern(key, plan, d).values, signs[i]);
  }
  add({key.embed_scale, key.template_direction}, make_template(key, plan).values, 1.0);

  const Image signal = real_image_from_spectrum(std::move(delta)).image;
  res.unclamped = image;
  for (std::size_t i = 0; i < image.size(); ++i) res.unclamped[i] += signal[i];
  res.image = clamp_to_8bit_range(res.unclamped);
  // Clipping that rounding to 8 bits would absorb anyway does not count.
  for (std::size_t i = 0; i < image.size(); ++i)
    res.clamped_pixels += std::abs(res.image[i] - res.unclamped[i]) > kClampTolerance;
  if (static_cast<double>(res.clamped_pixels) > kMaxClampFraction * static_cast<double>(image.size()))
    throw InvisibilityViolation("embedding clamps " + std::to_string(res.clamped_pixels) + " of " +
                                std::to_string(image.size()) + " pixels; lower alpha");
  res.psnr_pre_clamp = metrics::psnr(image, res.unclamped);
  res.psnr_vs_original = metrics::psnr(image, res.image);
  return res;
}

}  // namespace detail

inline EmbedResult embed_zero_bit(const Image& image, const WatermarkKey& key, const FdctPlan& plan) {
  if (key.message_directions.size() != 1) throw InvalidArgument("zero-bit embedding needs one message direction");
  return detail::embed_impl(image, key, plan, {1.0});
}

// Direct message coding: bit b scales its wedge's pattern by 2b - 1.
inline EmbedResult embed_multibit(const Image& image, const WatermarkKey& key, const std::vector<bool>& bits,
                                  const FdctPlan& plan) {
  if (key.message_directions.size() < 2) throw InvalidArgument("multibit embedding needs several message directions");
  if (bits.size() != key.message_directions.size())
    throw InvalidArgument("need " + std::to_string(key.message_directions.size()) + " bits");
  std::vector<double> signs;
  for (bool b : bits) signs.push_back(b ? 1.0 : -1.0);
  return detail::embed_impl(image, key, plan, signs);
}

// Lazily analyzed subbands of one image.
class AnalyzedImage {
 public:
  AnalyzedImage(const Image& image, PlanPtr plan) : plan_(std::move(plan)) {
    require_dims(image, *plan_);
    spectrum_ = fft::spectrum(image);
  }

  const FdctPlan& plan() const { return *plan_; }
  const PlanPtr& plan_ptr() const { return plan_; }

  const ComplexGrid& band(WedgeId w) const {
    std::lock_guard lock(mutex_);
    auto it = bands_.find(w);
    if (it == bands_.end()) it = bands_.emplace(w, analyze(spectrum_, *plan_, w)).first;
    return it->second;
  }

 private:
  PlanPtr plan_;
  ComplexGrid spectrum_;
  mutable std::mutex mutex_;
  mutable std::map<WedgeId, ComplexGrid> bands_;
};

struct CorrelationStats {
  double raw = 0.0;         // (1/L) sum Re(C' conj W)
  double normalized = 0.0;  // sum Re(C' conj W) / (|C'| |W|)
};

inline CorrelationStats correlate(const ComplexGrid& c, const ComplexGrid& w) {
  if (c.size() != w.size()) throw DimensionMismatch("pattern does not match subband");
  double dot = 0.0, nc = 0.0, nw = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    dot += c[i].real() * w[i].real() + c[i].imag() * w[i].imag();
    nc += std::norm(c[i]);
    nw += std::norm(w[i]);
  }
  CorrelationStats s;
  s.raw = c.size() ? dot / static_cast<double>(c.size()) : 0.0;
  s.normalized = nc > 0.0 && nw > 0.0 ? dot / std::sqrt(nc * nw) : 0.0;
  return s;
}

// Standard deviation of the normalized statistic for an unrelated pattern:
// the correlation is a sum over |A| real frequency samples, each seeing half
// of a complex coefficient's energy.
inline double null_std(const FdctPlan& plan, WedgeId w) {
  return 1.0 / std::sqrt(2.0 * static_cast<double>(plan.entries(w).size()));
}

inline constexpr double kDefaultThresholdSigmas = 6.0;

inline double default_direct_threshold(const FdctPlan& plan, WedgeId w) {
  return kDefaultThresholdSigmas * null_std(plan, w);
}

struct BitReport {
  int direction = 0;
  bool value = false;
  double correlation = 0.0;
};

struct DetectionReport {
  DetectionMode mode = DetectionMode::kDirect;
  Statistic statistic = Statistic::kNormalized;
  double raw_correlation = 0.0;
  double normalized_correlation = 0.0;
  double magnitude_statistic = std::numeric_limits<double>::quiet_NaN();
  double threshold = 0.0;
  bool present = false;
  std::optional<std::vector<BitReport>> bits;
  std::optional<int> rotation_index;
  std::optional<int> matched_scale;
  double residual_rotation_degrees = 0.0;
  double residual_zoom = 1.0;
  std::string normalization = "none";
  std::vector<std::string> notes;

  // Value compared against the threshold.
  double decision_statistic() const {
    if (mode != DetectionMode::kDirect) return magnitude_statistic;
    return statistic == Statistic::kRaw ? raw_correlation : normalized_correlation;
  }

  std::vector<bool> decoded_bits() const {
    std::vector<bool> out;
    if (bits)
      for (const auto& b : *bits) out.push_back(b.value);
    return out;
  }
};

struct Reference {
  WedgeId wedge;
  ComplexGrid pattern;
};

namespace detail {

// Thread-safe memo of immutable values, dropped wholesale when it grows
// past `limit` entries.
template <typename V>
class Memo {
 public:
  explicit Memo(std::size_t limit) : limit_(limit) {}

  template <typename Make>
  std::shared_ptr<const V> get(const std::string& id, Make&& make) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = map_.find(id); it != map_.end()) return it->second;
    }
    auto v = std::make_shared<const V>(make());
    std::lock_guard lock(mutex_);
    if (map_.size() >= limit_) map_.clear();
    return map_.emplace(id, std::move(v)).first->second;
  }

 private:
  std::size_t limit_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const V>> map_;
};

inline std::string reference_id(const WatermarkKey& key, const FdctPlan& plan) {
  std::string id = key.seed.hex();
  for (long v : {static_cast<long>(reinterpret_cast<std::uintptr_t>(&plan)), static_cast<long>(plan.width()),
                 static_cast<long>(plan.height()), static_cast<long>(plan.n_scales()),
                 static_cast<long>(key.embed_scale), static_cast<long>(key.template_direction),
                 static_cast<long>(key.template_offset)})
    id += "/" + std::to_string(v);
  for (int d : key.message_directions) id += "," + std::to_string(d);
  return id;
}

// Wedges and patterns that signal presence. A zero-bit key pools the message
// wedge with the template, which carries the same embedded energy; a
// multibit key uses the template alone, its message signs being unknown.
inline std::shared_ptr<const std::vector<Reference>> presence_references(const WatermarkKey& key,
                                                                         const FdctPlan& plan) {
  static Memo<std::vector<Reference>> memo(4096);
  return memo.get(reference_id(key, plan), [&] {
    std::vector<Reference> refs;
    if (!key.is_multibit()) {
      const int d = key.message_directions.front();
      refs.push_back({{key.embed_scale, d}, generate_pattern(key, plan, d).values});
    }
    refs.push_back({{key.embed_scale, key.template_direction}, make_template(key, plan).values});
    return refs;
  });
}

inline std::size_t support_size(const FdctPlan& plan, const std::vector<Reference>& refs) {
  std::size_t n = 0;
  for (const auto& r : refs) n += plan.entries(r.wedge).size();
  return n;
}

}  // namespace detail

// Correlation pooled over several (subband, pattern) pairs.
inline CorrelationStats correlate(const AnalyzedImage& img, const std::vector<Reference>& refs) {
  double dot = 0.0, nc = 0.0, nw = 0.0;
  std::size_t n = 0;
  for (const auto& r : refs) {
    const ComplexGrid& c = img.band(r.wedge);
    if (c.size() != r.pattern.size()) throw DimensionMismatch("pattern does not match subband");
    for (std::size_t i = 0; i < c.size(); ++i) {
      dot += c[i].real() * r.pattern[i].real() + c[i].imag() * r.pattern[i].imag();
      nc += std::norm(c[i]);
      nw += std::norm(r.pattern[i]);
    }
    n += c.size();
  }
  CorrelationStats s;
  s.raw = n ? dot / static_cast<double>(n) : 0.0;
  s.normalized = nc > 0.0 && nw > 0.0 ? dot / std::sqrt(nc * nw) : 0.0;
  return s;
}

namespace detail {

inline void finish_direct(DetectionReport& r, const AnalyzedImage& img, const std::vector<Reference>& refs,
                          std::optional<double> threshold, Statistic statistic) {
  r.statistic = statistic;
  const double norm_threshold =
      kDefaultThresholdSigmas / std::sqrt(2.0 * static_cast<double>(support_size(img.plan(), refs)));
  if (statistic == Statistic::kNormalized) {
    r.threshold = threshold.value_or(norm_threshold);
  } else if (threshold) {
    r.threshold = *threshold;
  } else {
    // Same decision as the normalized default, in raw units.
    double nc = 0.0, nw = 0.0;
    std::size_t n = 0;
    for (const auto& ref : refs) {
      for (const auto& x : img.band(ref.wedge).values()) nc += std::norm(x);
      for (const auto& x : ref.pattern.values()) nw += std::norm(x);
      n += ref.pattern.size();
    }
    r.threshold = norm_threshold * std::sqrt(nc * nw) / static_cast<double>(n);
  }
  r.present = r.decision_statistic() > r.threshold;
}

}  // namespace detail

inline DetectionReport detect_zero_bit(const AnalyzedImage& img, const WatermarkKey& key,
                                       std::optional<double> threshold = {},
                                       Statistic statistic = Statistic::kNormalized) {
  key.validate(img.plan());
  const auto refs_ptr = detail::presence_references(key, img.plan());
  const auto& refs = *refs_ptr;
  const auto s = correlate(img, refs);
  DetectionReport r;
  r.mode = DetectionMode::kDirect;
  r.raw_correlation = s.raw;
  r.normalized_correlation = s.normalized;
  detail::finish_direct(r, img, refs, threshold, statistic);
  return r;
}

inline DetectionReport detect_zero_bit(const Image& image, const WatermarkKey& key, const PlanPtr& plan,
                                       std::optional<double> threshold = {},
                                       Statistic statistic = Statistic::kNormalized) {
  return detect_zero_bit(AnalyzedImage(image, plan), key, threshold, statistic);
}

// Bits are the signs of the per-wedge normalized correlations; presence is
// judged on the template wedge.
inline DetectionReport detect_multibit(const AnalyzedImage& img, const WatermarkKey& key,
                                       std::optional<double> threshold = {},
                                       Statistic statistic = Statistic::kNormalized) {
  if (!key.is_multibit()) throw InvalidArgument("multibit detection needs several message directions");
  DetectionReport r = detect_zero_bit(img, key, threshold, statistic);
  std::vector<BitReport> bits;
  for (int d : key.message_directions) {
    const auto s = correlate(img.band({key.embed_scale, d}), generate_pattern(key, img.plan(), d).values);
    bits.push_back({d, s.normalized > 0.0, s.normalized});
  }
  r.bits = std::move(bits);
  return r;
}

inline DetectionReport detect_multibit(const Image& image, const WatermarkKey& key, const PlanPtr& plan,
                                       std::optional<double> threshold = {},
                                       Statistic statistic = Statistic::kNormalized) {
  return detect_multibit(AnalyzedImage(image, plan), key, threshold, statistic);
}

// ---------------------------------------------------------------------------
// Magnitude domain

struct MagnitudeEstimate {
  std::vector<RealGrid> values;
  std::vector<WedgeId> source_subbands;
};

// W~abs = |C' + alpha |C'| W| - |C'|: the magnitude change a second embedding
// would cause.
inline RealGrid estimate_wabs(const ComplexGrid& c, const ComplexGrid& w, double alpha) {
  if (c.size() != w.size()) throw DimensionMismatch("pattern does not match subband");
  RealGrid out(c.rows(), c.cols());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double m = std::abs(c[i]);
    out[i] = std::abs(c[i] + alpha * m * w[i]) - m;
  }
  return out;
}

inline MagnitudeEstimate estimate_wabs(const Image& test, const WatermarkKey& key, const PlanPtr& plan) {
  const AnalyzedImage img(test, plan);
  MagnitudeEstimate out;
  for (const auto& r : *detail::presence_references(key, *plan)) {
    out.values.push_back(estimate_wabs(img.band(r.wedge), r.pattern, key.alpha));
    out.source_subbands.push_back(r.wedge);
  }
  return out;
}

// The statistic works on the relative gain r = W~abs / |C'| of each
// coefficient and returns mean(r) / sd(r). W~abs itself scales with |C'|
// under multiplicative embedding, so correlating it with |C'| mostly
// measures the spread of host magnitudes. Zero coefficients are skipped.
// The null mean is positive (second-order term), so thresholds come from
// fake keys.
class MagnitudeAccumulator {
 public:
  void add(const ComplexGrid& c, const ComplexGrid& w, double alpha) {
    if (c.size() != w.size()) throw DimensionMismatch("pattern does not match subband");
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double m = std::abs(c[i]);
      if (m > 0.0) add_gain(std::abs(c[i] / m + alpha * w[i]) - 1.0);
    }
  }
  void add_gain(double r) {
    ++n_;
    s_ += r;
    ss_ += r * r;
  }
  double value() const {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double mean = s_ / n, var = ss_ / n - mean * mean;
    return var > 0.0 ? mean / std::sqrt(var) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double s_ = 0, ss_ = 0;
};

inline double magnitude_statistic(const ComplexGrid& c, const ComplexGrid& w, double alpha) {
  MagnitudeAccumulator acc;
  acc.add(c, w, alpha);
  return acc.value();
}

inline double magnitude_statistic(const ComplexGrid& c, const RealGrid& wabs) {
  if (c.size() != wabs.size()) throw DimensionMismatch("estimate does not match subband");
  MagnitudeAccumulator acc;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double m = std::abs(c[i]);
    if (m > 0.0) acc.add_gain(wabs[i] / m);
  }
  return acc.value();
}

// Reference patterns for one candidate scale. At the embedding scale this is
// the pattern itself; at a neighbouring scale it is the rendered pattern
// analyzed into every wedge that receives a noticeable share of it.
struct ScaleReference {
  int scale = 0;
  std::vector<Reference> parts;
};

inline constexpr double kProjectionShare = 0.05;

inline void add_scale_parts(ScaleReference& ref, const Reference& source, const FdctPlan& plan) {
  const int scale = ref.scale;
  if (scale == source.wedge.scale) {
    ref.parts.push_back(source);
    return;
  }
  const ComplexGrid spec = fft::spectrum(render_subband(source.pattern, plan, source.wedge));
  std::vector<Reference> all;
  std::vector<double> energy;
  double best = 0.0;
  for (int d = 1; d <= plan.angles(scale); ++d) {
    WedgeId w{scale, d};
    ComplexGrid band = analyze(spec, plan, w);
    double e = 0.0;
    for (const auto& x : band.values()) e += std::norm(x);
    best = std::max(best, e);
    all.push_back({w, std::move(band)});
    energy.push_back(e);
  }
  // Negligible against the source: nothing of the pattern reaches this scale.
  double source_energy = 0.0;
  for (const auto& x : source.pattern.values()) source_energy += std::norm(x);
  if (best <= 1e-9 * source_energy) return;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (energy[i] >= kProjectionShare * best) {
      detail::normalize_pattern(all[i].pattern);
      ref.parts.push_back(std::move(all[i]));
    }
}

inline std::vector<int> default_magnitude_scales(const WatermarkKey& key, const FdctPlan& plan) {
  std::vector<int> out;
  for (int s : {key.embed_scale, key.embed_scale - 1, key.embed_scale + 1})
    if (s >= 2 && s <= plan.n_scales()) out.push_back(s);
  return out;
}

inline double magnitude_score(const AnalyzedImage& img, const ScaleReference& ref, double alpha) {
  MagnitudeAccumulator acc;
  for (const auto& p : ref.parts) acc.add(img.band(p.wedge), p.pattern, alpha);
  return acc.value();
}

struct MagnitudeResult {
  double statistic = -std::numeric_limits<double>::infinity();
  int scale = 0;
  std::vector<std::string> notes;
};

inline std::shared_ptr<const std::vector<ScaleReference>> magnitude_references(const WatermarkKey& key,
                                                                             const FdctPlan& plan,
                                                                             std::vector<int> scales,
                                                                             std::vector<std::string>* notes) {
  static detail::Memo<std::pair<std::vector<ScaleReference>, std::vector<std::string>>> memo(4096);
  key.validate(plan);
  if (scales.empty()) scales = default_magnitude_scales(key, plan);
  std::string id = detail::reference_id(key, plan) + "|";
  for (int s : scales) id += std::to_string(s) + ",";
  auto entry = memo.get(id, [&] {
    std::pair<std::vector<ScaleReference>, std::vector<std::string>> out;
    const auto sources = detail::presence_references(key, plan);
    for (int s : scales) {
      if (s < 2 || s > plan.n_scales()) {
        out.second.push_back("scale " + std::to_string(s) + " not in plan; skipped");
        continue;
      }
      ScaleReference ref;
      ref.scale = s;
      for (const auto& src : *sources) add_scale_parts(ref, src, plan);
      if (ref.parts.empty()) {
        out.second.push_back("scale " + std::to_string(s) + " receives no watermark energy; skipped");
        continue;
      }
      out.first.push_back(std::move(ref));
    }
    return out;
  });
  if (notes) notes->insert(notes->end(), entry->second.begin(), entry->second.end());
  return std::shared_ptr<const std::vector<ScaleReference>>(entry, &entry->first);
}

inline MagnitudeResult magnitude_best(const AnalyzedImage& img, const std::vector<ScaleReference>& refs,
                                      double alpha) {
  MagnitudeResult best;
  for (const auto& ref : refs) {
    const double v = magnitude_score(img, ref, alpha);
    if (v > best.statistic) {
      best.statistic = v;
      best.scale = ref.scale;
    }
  }
  return best;
}

// Fake keys: the true key with the seed replaced by a derived one.
inline WatermarkKey fake_key(const WatermarkKey& key, std::uint64_t base, std::uint64_t index) {
  WatermarkKey k = key;
  k.seed = derive_seed(nullptr, "curvemark/fake-key", {base, index});
  return k;
}

inline constexpr int kNullPopulation = 48;

// Threshold from the statistic's spread over fake keys on the same views:
// mean + 6 sd.
template <typename Score>
double monte_carlo_threshold(const WatermarkKey& key, Score&& score, int population = kNullPopulation) {
  std::vector<double> v(population);
  parallel_for(population, [&](std::size_t i) { v[i] = score(fake_key(key, 0x6e756c6cULL, i)); });
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= population;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / std::max(1, population - 1));
  return mean + kDefaultThresholdSigmas * sd;
}

inline DetectionReport detect_magnitude(const AnalyzedImage& img, const WatermarkKey& key,
                                        std::vector<int> scales = {}, std::optional<double> threshold = {}) {
  const FdctPlan& plan = img.plan();
  DetectionReport r;
  r.mode = DetectionMode::kMagnitude;
  const auto refs = magnitude_references(key, plan, scales, &r.notes);
  if (refs->empty()) throw InvalidArgument("no candidate scale lies in the plan");
  const auto best = magnitude_best(img, *refs, key.alpha);
  r.magnitude_statistic = best.statistic;
  r.matched_scale = best.scale;
  const auto s = correlate(img, *detail::presence_references(key, plan));
  r.raw_correlation = s.raw;
  r.normalized_correlation = s.normalized;
  if (threshold) {
    r.threshold = *threshold;
  } else {
    r.threshold = monte_carlo_threshold(key, [&](const WatermarkKey& k) {
      return magnitude_best(img, *magnitude_references(k, plan, scales, nullptr), k.alpha).statistic;
    });
  }
  r.present = r.magnitude_statistic > r.threshold;
  return r;
}

inline DetectionReport detect_magnitude(const Image& test, const WatermarkKey& key, const PlanPtr& plan,
                                        std::vector<int> scales = {}, std::optional<double> threshold = {}) {
  return detect_magnitude(AnalyzedImage(test, plan), key, std::move(scales), threshold);
}

// ---------------------------------------------------------------------------
// Rotation template

// Candidate rotations on a grid of half wedge widths. For each, the template
// and first message pattern as they would appear after the image is rotated
// by that angle: rendered, rotated, re-analyzed into the wedge(s) the
// rotation carries them to. Noise-like patterns decorrelate under even a few
// degrees of misalignment, so whole steps alone miss rotations that fall
// between two wedges. Depends only on key and plan; computed once and cached.
class RotationReferences {
 public:
  struct Candidate {
    double degrees = 0.0;
    int index = 0;  // whole wedge steps, rounded down
    std::vector<Reference> template_parts, message_parts;
  };

  static std::shared_ptr<const RotationReferences> get(const WatermarkKey& key, const PlanPtr& plan) {
    static std::mutex mutex;
    static std::map<std::tuple<std::string, const FdctPlan*, int, int, int, int>,
                    std::pair<PlanPtr, std::shared_ptr<const RotationReferences>>>
        cache;
    auto id = std::make_tuple(key.seed.hex(), plan.get(), key.embed_scale, key.message_directions.front(),
                              key.template_direction, key.template_offset);
    {
      std::lock_guard lock(mutex);
      if (auto it = cache.find(id); it != cache.end()) return it->second.second;
    }
    auto refs = std::make_shared<const RotationReferences>(key, *plan);
    std::lock_guard lock(mutex);
    if (cache.size() > 64) cache.clear();
    return cache.emplace(id, std::make_pair(plan, refs)).first->second.second;
  }

  RotationReferences(const WatermarkKey& key, const FdctPlan& plan) {
    const int e = key.embed_scale, n = plan.angles(e);
    const WedgeId t{e, key.template_direction}, m{e, key.message_directions.front()};
    const Image t_img = render_subband(make_template(key, plan).values, plan, t);
    const Image m_img = render_subband(generate_pattern(key, plan, m.direction).values, plan, m);
    candidates_.resize(2 * n);
    parallel_for(2 * n, [&](std::size_t j) {
      Candidate c;
      c.degrees = 180.0 * static_cast<double>(j) / n;
      c.index = static_cast<int>(j / 2);
      auto parts = [&](const Image& img, WedgeId source) {
        const ComplexGrid spec = fft::spectrum(geometry::rotate_same(img, c.degrees, geometry::Border::kZero));
        std::vector<Reference> out;
        for (int step = 0; step <= static_cast<int>(j % 2); ++step) {
          WedgeId w{e, (source.direction - 1 + c.index + step) % n + 1};
          ComplexGrid band = analyze(spec, plan, w);
          detail::normalize_pattern(band);
          out.push_back({w, std::move(band)});
        }
        return out;
      };
      c.template_parts = parts(t_img, t);
      c.message_parts = parts(m_img, m);
      candidates_[j] = std::move(c);
    });
  }

  const std::vector<Candidate>& candidates() const { return candidates_; }

 private:
  std::vector<Candidate> candidates_;
};

struct RotationEstimate {
  std::optional<int> index;  // multiples of 360 / n degrees
  double degrees = 0.0;      // best candidate angle (half-step grid)
  std::vector<double> scores;
  double robust_z = 0.0;
};

// Peak must stand this many robust standard deviations above the median.
inline constexpr double kRotationMinZ = 5.0;

// Template evidence alone is ambiguous: the template is the first message
// pattern rotated by template_offset, so it also matches k - offset. Adding
// the message evidence at its own rotated wedge makes the true k the unique
// peak. Message evidence enters as |score| because multibit keys may carry it
// with either sign.
inline RotationEstimate estimate_rotation_scores(const AnalyzedImage& img, const WatermarkKey& key,
                                                 const PlanPtr& plan) {
  key.validate(*plan);
  const auto refs = RotationReferences::get(key, plan);
  RotationEstimate est;
  auto score = [&](const std::vector<Reference>& parts) {
    MagnitudeAccumulator acc;
    for (const auto& p : parts) acc.add(img.band(p.wedge), p.pattern, key.alpha);
    return acc.value();
  };
  for (const auto& c : refs->candidates())
    est.scores.push_back(score(c.template_parts) + std::abs(score(c.message_parts)));
  std::vector<double> sorted = est.scores;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  std::vector<double> dev;
  for (double s : est.scores) dev.push_back(std::abs(s - median));
  std::sort(dev.begin(), dev.end());
  const double mad = 1.4826 * dev[dev.size() / 2];
  const auto top = std::max_element(est.scores.begin(), est.scores.end());
  const auto& best = refs->candidates()[top - est.scores.begin()];
  est.robust_z = mad > 0.0 ? (*top - median) / mad : 0.0;
  est.degrees = best.degrees;
  if (est.robust_z >= kRotationMinZ) est.index = best.index;
  return est;
}

inline std::optional<int> estimate_rotation(const Image& test, const WatermarkKey& key, const PlanPtr& plan) {
  return estimate_rotation_scores(AnalyzedImage(test, plan), key, plan).index;
}

// ---------------------------------------------------------------------------
// Geometric pipeline

struct GeometricOptions {
  double residual_degrees = 5.6;
  double residual_step = 1.0;
  std::vector<double> zooms{0.95, 1.0, 1.05};
  std::vector<int> scales;  // magnitude candidates; empty = default
};

namespace detail {

struct NormalizedView {
  std::string how;
  Image image;
};

// Candidate ways to bring a test image back to nominal size: centre crop/pad
// (rotation with expanded canvas) and resize (scaling). Resizing is only
// plausible when the aspect ratio survived.
inline std::vector<NormalizedView> normalization_candidates(const Image& test, Dims nominal) {
  if (test.cols() == nominal.width && test.rows() == nominal.height) return {{"none", test}};
  std::vector<NormalizedView> out;
  const double ar_test = static_cast<double>(test.cols()) / test.rows();
  const double ar_nom = static_cast<double>(nominal.width) / nominal.height;
  const bool aspect_kept = std::abs(ar_test / ar_nom - 1.0) <= 0.01;
  if (aspect_kept) out.push_back({"resize", geometry::resize(test, nominal.width, nominal.height)});
  if (!aspect_kept || nominal.width == nominal.height)
    out.push_back({"crop", geometry::crop_or_pad(test, nominal.width, nominal.height)});
  return out;
}

}  // namespace detail

// Aligned, analyzed views of a test image; key-independent once the coarse
// rotation is fixed, so calibration can reuse them across fake keys.
struct GeometricViews {
  std::string normalization;
  std::optional<int> rotation_index;
  double rotation_degrees = 0.0;
  double rotation_z = 0.0;
  struct View {
    double degrees, zoom;
    std::unique_ptr<AnalyzedImage> img;
  };
  std::vector<View> views;
};

inline GeometricViews geometric_views(const Image& test, const WatermarkKey& key, const PlanPtr& plan, Dims nominal,
                                      const GeometricOptions& opt = {}) {
  if (nominal.width != plan->width() || nominal.height != plan->height())
    throw DimensionMismatch("nominal size does not match plan");
  GeometricViews out;
  // Coarse rotation: the normalization whose template peak is clearest.
  std::optional<detail::NormalizedView> chosen;
  for (auto& cand : detail::normalization_candidates(test, nominal)) {
    const auto est = estimate_rotation_scores(AnalyzedImage(cand.image, plan), key, plan);
    if (!chosen || est.robust_z > out.rotation_z) {
      out.rotation_z = est.robust_z;
      out.rotation_index = est.index;
      out.rotation_degrees = est.degrees;
      out.normalization = cand.how;
      chosen = std::move(cand);
    }
  }
  const double coarse = out.rotation_index ? -out.rotation_degrees : 0.0;
  std::vector<std::pair<double, double>> grid;
  const int steps = static_cast<int>(std::floor(opt.residual_degrees / opt.residual_step + 1e-9));
  for (int i = -steps; i <= steps; ++i)
    for (double z : opt.zooms) grid.emplace_back(i * opt.residual_step, z);
  out.views.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const auto [deg, zoom] = grid[i];
    const Image& src = chosen->image;
    Image aligned = (deg == 0.0 && zoom == 1.0 && coarse == 0.0)
                        ? src
                        : geometry::warp(src, geometry::rotation_zoom(coarse + deg, zoom), src.cols(), src.rows(),
                                         geometry::Border::kReplicate);
    out.views[i] = {deg, zoom, std::make_unique<AnalyzedImage>(aligned, plan)};
  });
  return out;
}

struct GeometricBest {
  double statistic = -std::numeric_limits<double>::infinity();
  int scale = 0;
  std::size_t view = 0;
};

inline GeometricBest geometric_best(const GeometricViews& v, const WatermarkKey& key, const FdctPlan& plan,
                                    const std::vector<int>& scales) {
  const auto refs = magnitude_references(key, plan, scales, nullptr);
  GeometricBest best;
  for (std::size_t i = 0; i < v.views.size(); ++i) {
    const auto r = magnitude_best(*v.views[i].img, *refs, key.alpha);
    if (r.statistic > best.statistic) best = {r.statistic, r.scale, i};
  }
  return best;
}

inline DetectionReport detect_geometric(const Image& test, const WatermarkKey& key, const PlanPtr& plan, Dims nominal,
                                        std::optional<double> threshold = {}, const GeometricOptions& opt = {}) {
  key.validate(*plan);
  const GeometricViews views = geometric_views(test, key, plan, nominal, opt);
  DetectionReport r;
  r.mode = DetectionMode::kGeometric;
  r.normalization = views.normalization;
  r.rotation_index = views.rotation_index;
  if (!views.rotation_index) r.notes.push_back("no template found; searched around k = 0");
  const auto best = geometric_best(views, key, *plan, opt.scales);
  const auto& view = views.views[best.view];
  r.magnitude_statistic = best.statistic;
  r.matched_scale = best.scale;
  r.residual_rotation_degrees = view.degrees;
  r.residual_zoom = view.zoom;
  const auto s = correlate(*view.img, *detail::presence_references(key, *plan));
  r.raw_correlation = s.raw;
  r.normalized_correlation = s.normalized;
  if (key.is_multibit()) {
    std::vector<BitReport> bits;
    for (int d : key.message_directions) {
      const auto b = correlate(view.img->band({key.embed_scale, d}), generate_pattern(key, *plan, d).values);
      bits.push_back({d, b.normalized > 0.0, b.normalized});
    }
    r.bits = std::move(bits);
  }
  if (threshold) {
    r.threshold = *threshold;
  } else {
    r.threshold = monte_carlo_threshold(
        key, [&](const WatermarkKey& k) { return geometric_best(views, k, *plan, opt.scales).statistic; });
  }
  r.present = r.magnitude_statistic > r.threshold;
  return r;
}

// ---------------------------------------------------------------------------
// Calibration

inline constexpr double kDefaultMargin = 0.5;
inline constexpr std::uint64_t kDefaultFakeBase = 0x66616b65ULL;

// Largest statistic over `population` fake keys on every image, times
// (1 + margin).
template <typename Score>
double calibrate_with(const WatermarkKey& key, int population, double margin, std::uint64_t fake_base,
                      Score&& score) {
  if (population < 1) throw InvalidArgument("fake key population must be positive");
  std::vector<double> best(population, -std::numeric_limits<double>::infinity());
  parallel_for(population, [&](std::size_t i) { best[i] = score(fake_key(key, fake_base, i)); });
  return *std::max_element(best.begin(), best.end()) * (1.0 + margin);
}

inline double calibrate_threshold(const std::vector<const AnalyzedImage*>& images, const WatermarkKey& key,
                                  int population = 1000, double margin = kDefaultMargin,
                                  std::uint64_t fake_base = kDefaultFakeBase,
                                  Statistic statistic = Statistic::kNormalized) {
  if (images.empty()) throw InvalidArgument("calibration needs at least one image");
  return calibrate_with(key, population, margin, fake_base, [&](const WatermarkKey& k) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto* img : images) {
      const auto r = detect_zero_bit(*img, k, 0.0, statistic);
      m = std::max(m, r.decision_statistic());
    }
    return m;
  });
}

inline double calibrate_threshold(const Image& image, const WatermarkKey& key, const PlanPtr& plan,
                                  int population = 1000, double margin = kDefaultMargin,
                                  std::uint64_t fake_base = kDefaultFakeBase) {
  const AnalyzedImage img(image, plan);
  return calibrate_threshold({&img}, key, population, margin, fake_base);
}

inline double calibrate_magnitude_threshold(const std::vector<const AnalyzedImage*>& images, const WatermarkKey& key,
                                            int population = 1000, double margin = kDefaultMargin,
                                            std::uint64_t fake_base = kDefaultFakeBase) {
  if (images.empty()) throw InvalidArgument("calibration needs at least one image");
  return calibrate_with(key, population, margin, fake_base, [&](const WatermarkKey& k) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto* img : images) {
      const auto refs = magnitude_references(k, img->plan(), {}, nullptr);
      m = std::max(m, magnitude_best(*img, *refs, k.alpha).statistic);
    }
    return m;
  });
}

inline double calibrate_geometric_threshold(const std::vector<const GeometricViews*>& views,
                                            const WatermarkKey& key, const FdctPlan& plan, int population = 1000,
                                            double margin = kDefaultMargin,
                                            std::uint64_t fake_base = kDefaultFakeBase) {
  if (views.empty()) throw InvalidArgument("calibration needs at least one image");
  return calibrate_with(key, population, margin, fake_base, [&](const WatermarkKey& k) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto* v : views) m = std::max(m, geometric_best(*v, k, plan, {}).statistic);
    return m;
  });
}

}  // namespace curvemark
