#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "curvemark/core.hpp"
#include "curvemark/fdct.hpp"
#include "curvemark/fft.hpp"
#include "curvemark/geometry.hpp"
#include "curvemark/keyed_stream.hpp"

namespace curvemark {

struct PlanParams {
  int n_scales = 0;  // 0: FdctPlan::default_scales for the image size
  int angles_at_embed_scale = 32;
  friend bool operator==(const PlanParams&, const PlanParams&) = default;
};

struct WatermarkKey {
  Seed256 seed;
  int embed_scale = 3;
  std::vector<int> message_directions{1};
  int template_direction = 9;
  int template_offset = 8;
  double alpha = 0.25;
  PlanParams plan;

  bool is_multibit() const { return message_directions.size() > 1; }

  // Throws InvalidArgument on inconsistent fields. Plan-dependent checks take
  // the plan the key will be used with.
  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("alpha must be finite and >= 0");
    if (message_directions.empty()) throw InvalidArgument("key has no message directions");
    if (plan.angles_at_embed_scale <= 0 || plan.angles_at_embed_scale % 4 != 0)
      throw InvalidArgument("angles_at_embed_scale must be a positive multiple of 4");
    if (plan.n_scales != 0 && plan.n_scales < 3) throw InvalidArgument("n_scales must be >= 3");
    if (embed_scale < 2) throw InvalidArgument("embed_scale must be a directional scale (>= 2)");
    if (plan.n_scales != 0 && embed_scale > plan.n_scales) throw InvalidArgument("embed_scale exceeds n_scales");
    if (template_offset < 0) throw InvalidArgument("template_offset must be >= 0");
    auto sorted = message_directions;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw InvalidArgument("duplicate message direction");
    if (std::find(sorted.begin(), sorted.end(), template_direction) != sorted.end())
      throw InvalidArgument("template direction collides with a message direction");
    const int n = FdctPlan::angle_schedule(embed_scale, plan.angles_at_embed_scale).back();
    auto check = [&](int d, const char* what) {
      if (d < 1 || d > n) throw InvalidArgument(std::string(what) + " direction out of range for embed scale");
    };
    for (int d : message_directions) {
      check(d, "message");
      // A partner wedge carries the same information as its twin.
      const int p = (d - 1 + n / 2) % n + 1;
      if (std::find(sorted.begin(), sorted.end(), p) != sorted.end())
        throw InvalidArgument("message directions include a conjugate pair");
      if (p == template_direction) throw InvalidArgument("template direction is a message wedge's conjugate");
    }
    check(template_direction, "template");
    if ((message_directions.front() - 1 + template_offset) % n + 1 != template_direction)
      throw InvalidArgument("template_direction must equal first message direction + template_offset");
  }

  void validate(const FdctPlan& plan_) const {
    validate();
    if (embed_scale > plan_.n_scales()) throw InvalidArgument("embed_scale exceeds the plan's scales");
    if (plan_.angles(embed_scale) != FdctPlan::angle_schedule(embed_scale, plan.angles_at_embed_scale).back())
      throw InvalidArgument("key and plan disagree on the angle count");
  }

  std::string fingerprint(int direction) const { return curvemark::fingerprint(seed, embed_scale, direction); }
};

inline PlanPtr plan_for(const WatermarkKey& key, int width, int height) {
  return make_plan(width, height, key.plan.n_scales, key.plan.angles_at_embed_scale);
}

struct Pattern {
  ComplexGrid values;
  WedgeId wedge;
  std::string key_fingerprint;
};

namespace detail {

inline void normalize_pattern(ComplexGrid& v) {
  if (v.empty()) return;
  Complex mean = 0.0;
  for (const auto& x : v.values()) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (auto& x : v.values()) {
    x -= mean;
    var += std::norm(x);
  }
  var /= static_cast<double>(v.size());
  if (var <= 0.0) return;
  const double inv = 1.0 / std::sqrt(var);
  for (auto& x : v.values()) x *= inv;
}

}  // namespace detail

// Normalized correlation Re<a, b> / (|a| |b|), 0 if either is zero.
inline double normalized_correlation(const ComplexGrid& a, const ComplexGrid& b) {
  if (a.size() != b.size()) throw DimensionMismatch("correlation operands differ in size");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    na += std::norm(a[i]);
    nb += std::norm(b[i]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

// Complex normals (real part drawn first) scattered on the wedge mask in
// row-major (u, v) order, inverse DFT, zero mean, unit variance. Real
// spectral values would make every rendered pattern point-symmetric, so a
// rotation by 180 degrees could not be told apart from none.
inline Pattern generate_pattern(const Seed256& seed, const FdctPlan& plan, WedgeId wedge) {
  const WedgeMask mask = wedge_mask(plan, wedge);
  if (mask.support.empty()) throw InvalidArgument("wedge mask is empty");
  KeyedStream rng(seed, StreamDomain::kWedgePattern, static_cast<std::uint32_t>(wedge.scale),
                  static_cast<std::uint32_t>(wedge.direction));
  ComplexGrid freq(mask.shape.height, mask.shape.width);
  for (auto [u, v] : mask.support) {
    const double re = rng.next_normal();
    freq(u, v) = Complex(re, rng.next_normal());
  }
  fft::backward(freq);
  detail::normalize_pattern(freq);
  return {std::move(freq), wedge, fingerprint(seed, wedge.scale, wedge.direction)};
}

inline Pattern generate_pattern(const WatermarkKey& key, const FdctPlan& plan, int direction) {
  return generate_pattern(key.seed, plan, {key.embed_scale, direction});
}

// Complex white noise over the whole subband grid.
inline Pattern generate_white_pattern(const Seed256& seed, Dims shape, WedgeId tie = {}) {
  if (shape.width <= 0 || shape.height <= 0) throw InvalidArgument("white pattern shape must be positive");
  KeyedStream rng(seed, StreamDomain::kWhitePattern, static_cast<std::uint32_t>(shape.width),
                  static_cast<std::uint32_t>(shape.height));
  ComplexGrid v(shape.height, shape.width);
  for (auto& x : v.values()) {
    const double re = rng.next_normal();
    x = Complex(re, rng.next_normal());
  }
  detail::normalize_pattern(v);
  return {std::move(v), tie, fingerprint(seed, tie.scale, tie.direction)};
}

inline Pattern generate_white_pattern(const WatermarkKey& key, const FdctPlan& plan, int direction) {
  const WedgeId w{key.embed_scale, direction};
  return generate_white_pattern(key.seed, plan.geometry(w).subband, w);
}

// Inserts a subband and its conjugate partner into a spectrum.
inline void synthesize_pair_into(ComplexGrid& spectrum, const ComplexGrid& band, const FdctPlan& plan,
                                 WedgeId wedge) {
  synthesize_into(spectrum, band, plan, wedge);
  const WedgeId partner = plan.partner(wedge);
  if (partner == wedge) return;
  ComplexGrid mirrored = band;
  for (auto& x : mirrored.values()) x = std::conj(x);
  synthesize_into(spectrum, mirrored, plan, partner);
}

// Real image of a single subband (plus its mirrored partner).
inline Image render_subband(const ComplexGrid& band, const FdctPlan& plan, WedgeId wedge) {
  ComplexGrid spec(plan.height(), plan.width());
  synthesize_pair_into(spec, band, plan, wedge);
  return real_image_from_spectrum(std::move(spec)).image;
}

// Fraction of the pattern that comes back from a round trip through the
// image domain.
inline double filter_survival(const Pattern& pattern, const FdctPlan& plan) {
  plan.require(pattern.wedge);
  const Dims d = plan.geometry(pattern.wedge).subband;
  if (pattern.values.cols() != d.width || pattern.values.rows() != d.height)
    throw DimensionMismatch("pattern shape does not match its wedge");
  double energy = 0.0;
  for (const auto& x : pattern.values.values()) energy += std::norm(x);
  if (energy == 0.0) return 0.0;
  const Image img = render_subband(pattern.values, plan, pattern.wedge);
  const ComplexGrid back = analyze(fft::spectrum(img), plan, pattern.wedge);
  return std::clamp(normalized_correlation(back, pattern.values), 0.0, 1.0);
}

// Rotation that maps the first message wedge onto the template wedge.
inline double template_rotation_degrees(const WatermarkKey& key, const FdctPlan& plan) {
  return key.template_offset * 360.0 / plan.angles(key.embed_scale);
}

// Base pattern of the first message direction, rendered, rotated by the
// offset between it and the template direction, and re-projected onto the
// template wedge.
inline Pattern make_template(const WatermarkKey& key, const FdctPlan& plan) {
  if (key.message_directions.empty()) throw InvalidArgument("key has no message directions");
  if (key.embed_scale < 2 || key.embed_scale > plan.n_scales()) throw InvalidArgument("embed_scale out of range");
  const int n = plan.angles(key.embed_scale);
  if (key.template_offset < 0 || key.template_direction < 1 || key.template_direction > n ||
      (key.message_directions.front() - 1 + key.template_offset) % n + 1 != key.template_direction)
    throw InvalidArgument("template_direction must equal first message direction + template_offset");
  const WedgeId source{key.embed_scale, key.message_directions.front()};
  const WedgeId target{key.embed_scale, key.template_direction};
  const Pattern base = generate_pattern(key.seed, plan, source);
  Image rendered = render_subband(base.values, plan, source);
  double before = 0.0;
  for (double v : rendered.values()) before += v * v;
  rendered = geometry::rotate_same(rendered, template_rotation_degrees(key, plan), geometry::Border::kZero);
  ComplexGrid values = analyze(fft::spectrum(rendered), plan, target);
  double after = 0.0;
  for (const auto& x : values.values()) after += std::norm(x);
  // The rendered pattern holds the subband twice (wedge and partner).
  if (before == 0.0 || 2.0 * after / before < 1e-6)
    throw InvalidArgument("template projection is degenerate for this offset");
  detail::normalize_pattern(values);
  return {std::move(values), target, key.fingerprint(target.direction) + "/template"};
}

}  // namespace curvemark
