#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "curvemark/core.hpp"
#include "curvemark/fft.hpp"

// Fast discrete curvelet transform, wrapping variant.
//
// The image spectrum is partitioned by smooth windows U_{s,d} whose squares sum
// to one at every DFT sample: a radial partition into dyadic coronae (scale 1
// is the low-pass disc, the last scale reaches the spectrum corners) times an
// angular partition of each corona into equal-angle wedges. Each windowed
// wedge is periodized ("wrapped") onto a rectangle just large enough to hold
// it without overlap, and an inverse FFT of that rectangle gives the
// subband. Analysis followed by its adjoint is the identity (tight frame).
//
// Frequencies are measured in cycles per pixel, f = (kx / W, ky / H), so wedge
// angles follow the physical orientation of image structure and a rotation
// of the image rotates the wedge tiling with it. Direction d of a scale with n
// wedges covers angles [(d - 1 + 1/8), (d + 1/8)] * 360/n degrees, measured
// from +x towards +y (row index increasing). The 1/8 offset and the
// irrational radial boundaries keep every DFT sample off the exact window
// edges, where it would be split evenly between two wedges.
//
// Wedges d and d + n/2 are conjugate partners: for a real image their
// subbands are exact complex conjugates of each other, entry by entry. This
// holds on even-sized grids too; samples on the Nyquist lines are shared
// between their two aliases.
namespace curvemark {

struct WedgeId {
  int scale = 1;      // 1 = coarsest
  int direction = 1;  // 1-based
  friend auto operator<=>(const WedgeId&, const WedgeId&) = default;
};

inline std::string to_string(const WedgeId& w) {
  return "(" + std::to_string(w.scale) + "," + std::to_string(w.direction) + ")";
}

struct FdctOptions {
  // Inner edge of the finest corona, cycles/pixel. Coarser boundaries halve
  // per scale. 2^-2.25: its square is irrational, so no sample sits on a
  // radial edge.
  double finest_boundary = 0.21022410381342863;
  // Half-width of every window transition, in DFT samples of the coarser
  // axis. 0 gives sharp windows: every sample belongs to exactly one wedge
  // and wedge-supported signals pass analysis/synthesis unchanged. Any
  // positive width leaves a few samples with fractional weight, which small
  // wedges cannot absorb.
  double transition_samples = 0.0;
  friend auto operator<=>(const FdctOptions&, const FdctOptions&) = default;
};

struct WedgeGeometry {
  WedgeId id;
  int partner_direction = 1;
  double center_angle = 0.0;  // radians in [0, 2 pi); 0 for the coarsest scale
  Dims subband;               // wrapped rectangle: width = columns, height = rows
  // Bounding box of the support in integer frequency coordinates.
  int kx_min = 0, kx_max = 0, ky_min = 0, ky_max = 0;
  std::size_t support_size = 0;

  std::array<std::pair<int, int>, 4> corners() const {
    return {{{kx_min, ky_min}, {kx_max, ky_min}, {kx_max, ky_max}, {kx_min, ky_max}}};
  }
};

class FdctPlan {
 public:
  static constexpr double kAngularOffset = 0.125;

  struct Entry {
    std::uint32_t grid;  // index into the H x W spectrum (fft order)
    std::uint32_t sub;   // index into the wrapped subband rectangle
    double weight;       // window value U_{s,d}, in (0, 1]
  };

  static int default_scales(int width, int height) {
    const int m = std::min(width, height);
    return std::max(3, static_cast<int>(std::ceil(std::log2(static_cast<double>(m)))) - 4);
  }

  // Angle counts per scale for a given count at scale 3: doubles every other
  // scale, 1 for the low-pass scale. Scale 2 is rounded up to a multiple of 4.
  static std::vector<int> angle_schedule(int n_scales, int angles_at_embed_scale) {
    std::vector<int> out(n_scales, 1);
    for (int j = 2; j <= n_scales; ++j) {
      if (j == 2) {
        out[j - 1] = 4 * ((angles_at_embed_scale + 7) / 8);
      } else {
        const int doublings = (j - 2 + 1) / 2 - 1;  // ceil((j-2)/2) - 1
        out[j - 1] = angles_at_embed_scale << doublings;
      }
    }
    return out;
  }

  FdctPlan(int width, int height, int n_scales, int angles_at_embed_scale, FdctOptions options = {})
      : width_(width), height_(height), n_scales_(n_scales), options_(options) {
    if (width < 64 || height < 64) throw InvalidArgument("image dimensions must be at least 64x64");
    if (n_scales < 3) throw InvalidArgument("at least 3 scales are required");
    if (angles_at_embed_scale <= 0 || angles_at_embed_scale % 4 != 0)
      throw InvalidArgument("angle count must be a positive multiple of 4");
    if (!(options.finest_boundary > 0.0 && options.finest_boundary < 0.5))
      throw InvalidArgument("finest_boundary must lie in (0, 0.5)");
    if (!(options.transition_samples >= 0.0 && options.transition_samples <= 2.0))
      throw InvalidArgument("transition_samples must lie in [0, 2]");
    angles_ = angle_schedule(n_scales, angles_at_embed_scale);
    build();
  }

  // Process-wide cache; plans are immutable.
  static std::shared_ptr<const FdctPlan> shared(int width, int height, int n_scales,
                                                int angles_at_embed_scale, FdctOptions options = {}) {
    static std::mutex mutex;
    static std::map<std::tuple<int, int, int, int, double, double>, std::shared_ptr<const FdctPlan>>
        cache;
    auto key = std::make_tuple(width, height, n_scales, angles_at_embed_scale,
                               options.finest_boundary, options.transition_samples);
    {
      std::lock_guard lock(mutex);
      if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    auto plan = std::make_shared<const FdctPlan>(width, height, n_scales, angles_at_embed_scale, options);
    std::lock_guard lock(mutex);
    return cache.emplace(key, plan).first->second;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Dims dims() const { return {width_, height_}; }
  int n_scales() const { return n_scales_; }
  const FdctOptions& options() const { return options_; }
  const std::vector<int>& angles_per_scale() const { return angles_; }
  int angles(int scale) const { return angles_.at(scale - 1); }

  bool valid(WedgeId w) const {
    return w.scale >= 1 && w.scale <= n_scales_ && w.direction >= 1 && w.direction <= angles(w.scale);
  }
  void require(WedgeId w) const {
    if (!valid(w)) throw InvalidArgument("invalid wedge " + to_string(w));
  }

  WedgeId partner(WedgeId w) const {
    require(w);
    const int n = angles(w.scale);
    if (n == 1) return w;
    return {w.scale, (w.direction - 1 + n / 2) % n + 1};
  }

  std::vector<WedgeId> wedges() const {
    std::vector<WedgeId> out;
    for (int s = 1; s <= n_scales_; ++s)
      for (int d = 1; d <= angles(s); ++d) out.push_back({s, d});
    return out;
  }

  const WedgeGeometry& geometry(WedgeId w) const { return geometry_[linear(w)]; }
  std::span<const Entry> entries(WedgeId w) const { return entries_[linear(w)]; }

  // Boundary between scales j and j+1, cycles/pixel.
  double boundary(int j) const {
    return options_.finest_boundary * std::ldexp(1.0, j - (n_scales_ - 1));
  }

  double radial_window(int scale, double r) const {
    const double hi = scale == n_scales_ ? 1.0 : lowpass(scale, r);
    const double lo = scale == 1 ? 0.0 : lowpass(scale - 1, r);
    return std::sqrt(std::max(0.0, hi * hi - lo * lo));
  }

  double angular_window(WedgeId w, double theta) const {
    const int n = angles(w.scale);
    if (n == 1) return 1.0;
    const double width = 2.0 * kPi / n;
    const double eps = angular_halfwidth_[w.scale - 1];
    const double left = (w.direction - 1 + kAngularOffset) * width;
    return rise(wrap_angle(theta - left), eps) * rise(wrap_angle(left + width - theta), eps);
  }

  // Continuous window at physical frequency (fx, fy) in cycles/pixel.
  double window(WedgeId w, double fx, double fy) const {
    require(w);
    const double r = std::hypot(fx, fy);
    const double radial = radial_window(w.scale, r);
    if (radial == 0.0) return 0.0;
    return radial * angular_window(w, angle_of(fx, fy));
  }

  static double angle_of(double fx, double fy) {
    double t = std::atan2(fy, fx);
    if (t < 0) t += 2.0 * kPi;
    return t;
  }

 private:
  static double meyer_poly(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * t * t * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
  }

  // 1 for x <= b - h, 0 for x >= b + h; s(b - u)^2 + s(b + u)^2 = 1.
  static double step_down(double x, double b, double h) {
    if (h == 0.0) return x < b ? 1.0 : (x > b ? 0.0 : std::sqrt(0.5));
    if (x <= b - h) return 1.0;
    if (x >= b + h) return 0.0;
    return std::cos(0.5 * kPi * meyer_poly((x - (b - h)) / (2.0 * h)));
  }
  static double rise(double x, double eps) { return step_down(-x, 0.0, eps); }

  static double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
  }

  double lowpass(int j, double r) const { return step_down(r, boundary(j), radial_halfwidth_); }

  std::size_t linear(WedgeId w) const {
    require(w);
    return offsets_[w.scale - 1] + (w.direction - 1);
  }

  static int smooth_size(int n) {
    for (int m = std::max(n, 1);; ++m) {
      int k = m;
      for (int p : {2, 3, 5, 7})
        while (k % p == 0) k /= p;
      if (k == 1) return m;
    }
  }

  struct Accum {
    std::size_t wedge;
    double w2;
    double best;
    int kx, ky;
  };

  // Windows at one sample. Nyquist samples of even-sized grids are evaluated
  // at their centred alias only; the conjugate sample then lands on the
  // opposite alias, so symmetry stays exact.
  void evaluate_point(int kx, int ky, std::vector<Accum>& acc) const {
    acc.clear();
    const double fx = static_cast<double>(kx) / width_, fy = static_cast<double>(ky) / height_;
    const double r = std::hypot(fx, fy);
    const double theta = angle_of(fx, fy);
    for (int s = 1; s <= n_scales_; ++s) {
      const double radial = radial_window(s, r);
      if (radial == 0.0) continue;
      const int n = angles(s);
      auto add = [&](int dir, double value) {
        if (value > 0.0) acc.push_back({offsets_[s - 1] + (dir - 1), value * value, value, kx, ky});
      };
      if (n == 1) {
        add(1, radial);
        continue;
      }
      const double width = 2.0 * kPi / n;
      const int base = static_cast<int>(std::floor(theta / width - kAngularOffset));
      for (int off = -1; off <= 1; ++off) {
        const int l = ((base + off) % n + n) % n;
        add(l + 1, radial * angular_window({s, l + 1}, theta));
      }
    }
  }

  void build() {
    offsets_.assign(n_scales_ + 1, 0);
    for (int s = 1; s <= n_scales_; ++s) offsets_[s] = offsets_[s - 1] + angles(s);
    const std::size_t n_wedges = offsets_.back();

    const double sample = 1.0 / std::min(width_, height_);
    radial_halfwidth_ = options_.transition_samples * sample;
    angular_halfwidth_.assign(n_scales_, 0.0);
    for (int s = 2; s <= n_scales_; ++s) {
      const double width = 2.0 * kPi / angles(s);
      angular_halfwidth_[s - 1] =
          std::min(0.25 * width, options_.transition_samples * sample / boundary(s - 1));
    }
    for (int j = 2; j < n_scales_; ++j) {
      if (boundary(j) - boundary(j - 1) <= 2.0 * radial_halfwidth_)
        throw InvalidArgument("too many scales for this image size");
    }

    struct Raw {
      std::uint32_t grid;
      int kx, ky;
      double weight;
    };
    std::vector<std::vector<Raw>> raw(n_wedges);
    std::vector<std::size_t> partner_of(n_wedges);
    for (int s = 1; s <= n_scales_; ++s)
      for (int d = 1; d <= angles(s); ++d) partner_of[linear({s, d})] = linear(partner({s, d}));

    auto centered = [](int idx, int n) { return idx < n - idx ? idx : idx - n; };
    auto index_of = [&](int kx, int ky) {
      const int ix = ((kx % width_) + width_) % width_;
      const int iy = ((ky % height_) + height_) % height_;
      return static_cast<std::uint32_t>(iy * width_ + ix);
    };

    std::vector<Accum> acc;
    for (int iy = 0; iy < height_; ++iy) {
      for (int ix = 0; ix < width_; ++ix) {
        const int kx = centered(ix, width_), ky = centered(iy, height_);
        const std::uint32_t here = static_cast<std::uint32_t>(iy * width_ + ix);
        const std::uint32_t mirror = index_of(-kx, -ky);
        if (mirror < here) continue;
        evaluate_point(kx, ky, acc);
        if (mirror == here) {
          // Self-conjugate sample: make partner weights identical and their
          // representatives negatives of each other.
          std::vector<Accum> sym;
          for (const auto& a : acc) {
            const std::size_t p = partner_of[a.wedge];
            double other = 0.0;
            for (const auto& b : acc)
              if (b.wedge == p) other = b.w2;
            Accum out = a;
            out.w2 = 0.5 * (a.w2 + other);
            if (p < a.wedge) {
              const Accum* lead = nullptr;
              for (const auto& b : acc)
                if (b.wedge == p) lead = &b;
              if (lead) {
                out.kx = -lead->kx;
                out.ky = -lead->ky;
              }
            }
            sym.push_back(out);
          }
          for (const auto& a : acc) {
            const std::size_t p = partner_of[a.wedge];
            bool present = false;
            for (const auto& b : acc)
              if (b.wedge == p) present = true;
            if (!present) sym.push_back({p, 0.5 * a.w2, a.best, -a.kx, -a.ky});
          }
          for (const auto& a : sym)
            if (a.w2 > 0.0) raw[a.wedge].push_back({here, a.kx, a.ky, std::sqrt(a.w2)});
        } else {
          for (const auto& a : acc) {
            if (a.w2 <= 0.0) continue;
            const double w = std::sqrt(a.w2);
            raw[a.wedge].push_back({here, a.kx, a.ky, w});
            raw[partner_of[a.wedge]].push_back({mirror, -a.kx, -a.ky, w});
          }
        }
      }
    }

    geometry_.assign(n_wedges, {});
    entries_.assign(n_wedges, {});
    for (int s = 1; s <= n_scales_; ++s) {
      for (int d = 1; d <= angles(s); ++d) {
        const std::size_t lin = linear({s, d});
        auto& pts = raw[lin];
        if (pts.empty())
          throw InvalidArgument("wedge " + to_string({s, d}) + " has empty support; use fewer scales");
        std::sort(pts.begin(), pts.end(), [](const Raw& a, const Raw& b) { return a.grid < b.grid; });
        WedgeGeometry g;
        g.id = {s, d};
        g.partner_direction = partner({s, d}).direction;
        g.center_angle = angles(s) == 1 ? 0.0 : (d - 0.5 + kAngularOffset) * 2.0 * kPi / angles(s);
        g.kx_min = g.kx_max = pts[0].kx;
        g.ky_min = g.ky_max = pts[0].ky;
        for (const auto& p : pts) {
          g.kx_min = std::min(g.kx_min, p.kx);
          g.kx_max = std::max(g.kx_max, p.kx);
          g.ky_min = std::min(g.ky_min, p.ky);
          g.ky_max = std::max(g.ky_max, p.ky);
        }
        // Per-column and per-row extents decide the tightest injective wrap.
        std::map<int, std::pair<int, int>> cols, rows;
        for (const auto& p : pts) {
          auto [ci, cnew] = cols.try_emplace(p.kx, p.ky, p.ky);
          if (!cnew) ci->second = {std::min(ci->second.first, p.ky), std::max(ci->second.second, p.ky)};
          auto [ri, rnew] = rows.try_emplace(p.ky, p.kx, p.kx);
          if (!rnew) ri->second = {std::min(ri->second.first, p.kx), std::max(ri->second.second, p.kx)};
        }
        int col_ext = 0, row_ext = 0;
        for (auto& [k, v] : cols) col_ext = std::max(col_ext, v.second - v.first + 1);
        for (auto& [k, v] : rows) row_ext = std::max(row_ext, v.second - v.first + 1);
        const int ext_x = g.kx_max - g.kx_min + 1, ext_y = g.ky_max - g.ky_min + 1;
        const int ax = smooth_size(ext_x), ay = smooth_size(col_ext);
        const int bx = smooth_size(row_ext), by = smooth_size(ext_y);
        const bool use_a = static_cast<long>(ax) * ay <= static_cast<long>(bx) * by;
        const int lx = use_a ? ax : bx, ly = use_a ? ay : by;
        g.subband = {lx, ly};
        g.support_size = pts.size();

        auto& out = entries_[lin];
        out.reserve(pts.size());
        std::vector<bool> used(static_cast<std::size_t>(lx) * ly, false);
        for (const auto& p : pts) {
          const int ux = ((p.kx % lx) + lx) % lx, uy = ((p.ky % ly) + ly) % ly;
          const std::uint32_t sub = static_cast<std::uint32_t>(uy * lx + ux);
          if (used[sub]) throw Error("internal: wrap is not injective for wedge " + to_string({s, d}));
          used[sub] = true;
          out.push_back({p.grid, sub, p.weight});
        }
        geometry_[lin] = g;
      }
    }
  }

  int width_, height_, n_scales_;
  FdctOptions options_;
  std::vector<int> angles_;
  std::vector<std::size_t> offsets_;
  double radial_halfwidth_ = 0.0;
  std::vector<double> angular_halfwidth_;
  std::vector<WedgeGeometry> geometry_;
  std::vector<std::vector<Entry>> entries_;
};

using PlanPtr = std::shared_ptr<const FdctPlan>;

inline PlanPtr make_plan(int width, int height, int n_scales = 0, int angles_at_embed_scale = 32,
                         FdctOptions options = {}) {
  if (n_scales <= 0) n_scales = FdctPlan::default_scales(width, height);
  return FdctPlan::shared(width, height, n_scales, angles_at_embed_scale, options);
}

// Subbands indexed by (scale, direction). A band left empty reads as zero.
class CurveletPyramid {
 public:
  CurveletPyramid() = default;
  explicit CurveletPyramid(PlanPtr plan, bool zero_filled = false) : plan_(std::move(plan)) {
    bands_.resize(plan_->n_scales());
    for (int s = 1; s <= plan_->n_scales(); ++s) {
      bands_[s - 1].resize(plan_->angles(s));
      if (zero_filled)
        for (int d = 1; d <= plan_->angles(s); ++d) bands_[s - 1][d - 1] = zero_band({s, d});
    }
  }

  const PlanPtr& plan() const { return plan_; }

  bool has(WedgeId w) const { return plan_->valid(w) && !bands_[w.scale - 1][w.direction - 1].empty(); }

  const ComplexGrid& at(WedgeId w) const {
    plan_->require(w);
    return bands_[w.scale - 1][w.direction - 1];
  }

  // Creates a zero band on first access.
  ComplexGrid& at(WedgeId w) {
    plan_->require(w);
    auto& b = bands_[w.scale - 1][w.direction - 1];
    if (b.empty()) b = zero_band(w);
    return b;
  }

  void set(WedgeId w, ComplexGrid band) {
    plan_->require(w);
    const Dims d = plan_->geometry(w).subband;
    if (band.cols() != d.width || band.rows() != d.height)
      throw DimensionMismatch("subband shape does not match wedge " + to_string(w));
    bands_[w.scale - 1][w.direction - 1] = std::move(band);
  }

  double energy() const {
    double e = 0.0;
    for (const auto& scale : bands_)
      for (const auto& b : scale)
        for (const auto& v : b.values()) e += std::norm(v);
    return e;
  }

 private:
  ComplexGrid zero_band(WedgeId w) const {
    const Dims d = plan_->geometry(w).subband;
    return ComplexGrid(d.height, d.width);
  }

  PlanPtr plan_;
  std::vector<std::vector<ComplexGrid>> bands_;
};

inline void require_dims(const Image& image, const FdctPlan& plan) {
  if (image.cols() != plan.width() || image.rows() != plan.height())
    throw DimensionMismatch("image is " + std::to_string(image.cols()) + "x" +
                            std::to_string(image.rows()) + ", plan expects " +
                            std::to_string(plan.width()) + "x" + std::to_string(plan.height()));
}

inline ComplexGrid image_spectrum(const Image& image, const FdctPlan& plan) {
  require_dims(image, plan);
  return fft::spectrum(image);
}

// One subband from a full unitary spectrum.
inline ComplexGrid analyze(const ComplexGrid& spectrum, const FdctPlan& plan, WedgeId w) {
  const Dims d = plan.geometry(w).subband;
  ComplexGrid band(d.height, d.width);
  for (const auto& e : plan.entries(w)) band[e.sub] = e.weight * spectrum[e.grid];
  fft::backward(band);
  return band;
}

// Adjoint of analyze(), accumulated into spectrum.
inline void synthesize_into(ComplexGrid& spectrum, const ComplexGrid& band, const FdctPlan& plan,
                            WedgeId w) {
  const Dims d = plan.geometry(w).subband;
  if (band.cols() != d.width || band.rows() != d.height)
    throw DimensionMismatch("subband shape does not match wedge " + to_string(w));
  ComplexGrid freq = band;
  fft::forward(freq);
  for (const auto& e : plan.entries(w)) spectrum[e.grid] += e.weight * freq[e.sub];
}

inline CurveletPyramid forward(const Image& image, const PlanPtr& plan) {
  const ComplexGrid spec = image_spectrum(image, *plan);
  CurveletPyramid pyr(plan);
  const auto ids = plan->wedges();
  std::vector<ComplexGrid> bands(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { bands[i] = analyze(spec, *plan, ids[i]); });
  for (std::size_t i = 0; i < ids.size(); ++i) pyr.set(ids[i], std::move(bands[i]));
  return pyr;
}

// Only the listed subbands; the rest stay empty.
inline CurveletPyramid forward(const Image& image, const PlanPtr& plan, std::span<const WedgeId> only) {
  const ComplexGrid spec = image_spectrum(image, *plan);
  CurveletPyramid pyr(plan);
  for (const auto& w : only) pyr.set(w, analyze(spec, *plan, w));
  return pyr;
}

// Complex spectrum of the synthesis, before projection onto real images.
inline ComplexGrid synthesize_spectrum(const CurveletPyramid& pyr) {
  const auto& plan = *pyr.plan();
  ComplexGrid spec(plan.height(), plan.width());
  std::vector<WedgeId> ids;
  for (const auto& w : plan.wedges())
    if (pyr.has(w)) ids.push_back(w);
  std::vector<ComplexGrid> freqs(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    freqs[i] = pyr.at(ids[i]);
    fft::forward(freqs[i]);
  });
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (const auto& e : plan.entries(ids[i])) spec[e.grid] += e.weight * freqs[i][e.sub];
  return spec;
}

struct InverseResult {
  Image image;
  // ||anti-Hermitian part|| / ||spectrum||: zero for conjugate-consistent input.
  double imaginary_ratio = 0.0;
  bool conjugate_consistent = true;
};

inline constexpr double kConjugateTolerance = 1e-9;

// Real image whose spectrum is the Hermitian part of spec.
inline InverseResult real_image_from_spectrum(ComplexGrid spec) {
  const int rows = spec.rows(), cols = spec.cols();
  double total = 0.0, anti = 0.0;
  ComplexGrid herm(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int nr = (rows - r) % rows;
    for (int c = 0; c < cols; ++c) {
      const int nc = (cols - c) % cols;
      const Complex v = spec(r, c);
      const Complex h = 0.5 * (v + std::conj(spec(nr, nc)));
      herm(r, c) = h;
      total += std::norm(v);
      anti += std::norm(v - h);
    }
  }
  InverseResult out;
  out.imaginary_ratio = total > 0.0 ? std::sqrt(anti / total) : 0.0;
  out.conjugate_consistent = out.imaginary_ratio <= kConjugateTolerance;
  out.image = fft::real_image(herm);
  return out;
}

inline InverseResult inverse(const CurveletPyramid& pyr) {
  return real_image_from_spectrum(synthesize_spectrum(pyr));
}

inline InverseResult inverse(const CurveletPyramid& pyr, const FdctPlan& plan) {
  if (pyr.plan().get() != &plan &&
      (pyr.plan()->dims() != plan.dims() || pyr.plan()->n_scales() != plan.n_scales() ||
       pyr.plan()->angles_per_scale() != plan.angles_per_scale() ||
       pyr.plan()->options() != plan.options()))
    throw DimensionMismatch("pyramid was produced by a different plan");
  return inverse(pyr);
}

// Frequency support of one subband, in its own (wrapped) DFT grid.
struct WedgeMask {
  WedgeId id;
  Dims shape;
  std::vector<std::pair<int, int>> support;  // (u = row, v = column), row-major order
  std::vector<double> weights;
  double epsilon = 1e-6;

  std::size_t size() const { return support.size(); }
};

inline WedgeMask wedge_mask(const FdctPlan& plan, WedgeId w, double epsilon = 1e-6) {
  plan.require(w);
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  const auto& g = plan.geometry(w);
  std::vector<std::pair<std::uint32_t, double>> picked;
  for (const auto& e : plan.entries(w))
    if (e.weight > epsilon) picked.emplace_back(e.sub, e.weight);
  std::sort(picked.begin(), picked.end());
  WedgeMask m;
  m.id = w;
  m.shape = g.subband;
  m.epsilon = epsilon;
  for (auto [sub, wt] : picked) {
    m.support.emplace_back(static_cast<int>(sub) / g.subband.width, static_cast<int>(sub) % g.subband.width);
    m.weights.push_back(wt);
  }
  return m;
}

// Window of one wedge over the centred image spectrum, scaled to [0, 255].
inline Image window_visualization(const FdctPlan& plan, WedgeId w) {
  Image img(plan.height(), plan.width());
  for (const auto& e : plan.entries(w)) {
    const int iy = static_cast<int>(e.grid) / plan.width(), ix = static_cast<int>(e.grid) % plan.width();
    const int cy = (iy + plan.height() / 2) % plan.height(), cx = (ix + plan.width() / 2) % plan.width();
    img(cy, cx) = 255.0 * e.weight;
  }
  return img;
}

}  // namespace curvemark
