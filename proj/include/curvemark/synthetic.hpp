#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include "curvemark/core.hpp"
#include "curvemark/fft.hpp"
#include "curvemark/keyed_stream.hpp"

// Procedural photo-like test images: a 1/f background, occluding shapes with
// shading and oriented texture, lens blur, sensor noise, 8-bit quantization.
// Deterministic in (index, width, height).
namespace curvemark::synthetic {

struct SceneOptions {
  double background_std = 22.0;
  int min_shapes = 30;
  int max_shapes = 70;
  double texture_probability = 0.35;
  double blur_sigma = 0.8;
  double noise_std = 1.2;
};

namespace detail {

// Real field with power spectrum ~ 1/f^(2 * exponent), zero mean, unit std.
inline Image power_law_field(int width, int height, double exponent, KeyedStream& rng) {
  ComplexGrid spec(height, width);
  for (int r = 0; r < height; ++r) {
    const double fy = static_cast<double>(r < height - r ? r : r - height) / height;
    for (int c = 0; c < width; ++c) {
      const double fx = static_cast<double>(c < width - c ? c : c - width) / width;
      const double f = std::hypot(fx, fy);
      const double amp = f == 0.0 ? 0.0 : std::pow(f, -exponent);
      spec(r, c) = Complex(rng.next_normal(), rng.next_normal()) * amp;
    }
  }
  fft::backward(spec);
  Image out(height, width);
  double mean = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) mean += out[i] = spec[i].real();
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (double& v : out.values()) {
    v -= mean;
    var += v * v;
  }
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var / out.size()) : 0.0;
  for (double& v : out.values()) v *= inv;
  return out;
}

inline double uniform(KeyedStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.next_uniform(); }

// Coverage of a pixel by a shape with signed distance d (negative inside),
// smoothed over about one pixel.
inline double coverage(double d) { return std::clamp(0.5 - d, 0.0, 1.0); }

inline void gaussian_blur_inplace(Image& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int rows = img.rows(), cols = img.cols();
  Image tmp(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img(r, std::clamp(c + i, 0, cols - 1));
      tmp(r, c) = acc;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(std::clamp(r + i, 0, rows - 1), c);
      img(r, c) = acc;
    }
}

}  // namespace detail

inline Image natural_scene(std::uint64_t index, int width, int height, const SceneOptions& opt = {}) {
  if (width < 16 || height < 16) throw InvalidArgument("synthetic scene too small");
  const Seed256 seed = seed_from_u64(index, "curvemark/synthetic-scene");
  KeyedStream rng(seed, StreamDomain::kSynthetic, static_cast<std::uint32_t>(width),
                  static_cast<std::uint32_t>(height));

  Image img = detail::power_law_field(width, height, 1.0, rng);
  const double base = detail::uniform(rng, 90.0, 150.0);
  for (double& v : img.values()) v = base + opt.background_std * v;

  // Texture fields shared by textured shapes: fine isotropic grain and
  // oriented stripes are generated per shape below.
  const Image grain = detail::power_law_field(width, height, 0.35, rng);

  const int n_shapes = opt.min_shapes + static_cast<int>(rng.next_below(opt.max_shapes - opt.min_shapes + 1));
  const double diag = std::hypot(width, height);
  for (int s = 0; s < n_shapes; ++s) {
    const int kind = static_cast<int>(rng.next_below(3));  // 0 ellipse, 1 rectangle, 2 band
    const double cx = detail::uniform(rng, -0.1, 1.1) * width;
    const double cy = detail::uniform(rng, -0.1, 1.1) * height;
    // Sizes follow a rough 1/size law so small objects dominate in count.
    const double size = diag * std::exp(detail::uniform(rng, std::log(0.01), std::log(0.25)));
    const double aspect = std::exp(detail::uniform(rng, -1.0, 1.0));
    const double a = size * aspect, b = size / aspect;
    const double angle = detail::uniform(rng, 0.0, kPi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double level = detail::uniform(rng, 20.0, 235.0);
    const double gx = detail::uniform(rng, -0.3, 0.3), gy = detail::uniform(rng, -0.3, 0.3);
    const bool textured = rng.next_uniform() < opt.texture_probability;
    const double tex_amp = textured ? detail::uniform(rng, 4.0, 18.0) : 0.0;
    const double stripe_f = detail::uniform(rng, 0.04, 0.3);
    const double stripe_angle = detail::uniform(rng, 0.0, kPi);
    const double stripe_mix = rng.next_uniform();
    const double phase = detail::uniform(rng, 0.0, 2.0 * kPi);

    const double reach = std::max(a, b) + 2.0;
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cy + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cx + reach)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double dx = c - cx, dy = r - cy;
        const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
        double d;
        if (kind == 0) {
          const double q = std::hypot(u / a, v / b);
          d = (q - 1.0) * std::min(a, b);
        } else if (kind == 1) {
          d = std::max(std::abs(u) - a, std::abs(v) - b);
        } else {
          d = std::abs(v) - 0.15 * b - 1.0;
          d = std::max(d, std::abs(u) - a);
        }
        const double cov = detail::coverage(d);
        if (cov <= 0.0) continue;
        double value = level + gx * dx + gy * dy;
        if (textured) {
          const double t = c * std::cos(stripe_angle) + r * std::sin(stripe_angle);
          const double stripes = std::sin(2.0 * kPi * stripe_f * t + phase);
          value += tex_amp * (stripe_mix * stripes + (1.0 - stripe_mix) * grain(r, c));
        }
        img(r, c) = (1.0 - cov) * img(r, c) + cov * value;
      }
    }
  }

  detail::gaussian_blur_inplace(img, opt.blur_sigma);
  KeyedStream noise(seed, StreamDomain::kSynthetic, 0xFFFFFFFFu, static_cast<std::uint32_t>(index));
  for (double& v : img.values()) v += opt.noise_std * noise.next_normal();
  return quantize_8bit(std::move(img));
}

// Default evaluation corpus: ten scenes spanning 720x576 to 1024x768.
struct CorpusEntry {
  std::string name;
  Image image;
};

inline std::vector<Dims> default_corpus_sizes() {
  return {{720, 576}, {768, 576}, {800, 600}, {720, 576}, {1024, 768},
          {800, 640}, {960, 720}, {720, 600}, {864, 648}, {1024, 768}};
}

inline std::vector<CorpusEntry> default_corpus() {
  std::vector<CorpusEntry> out;
  const auto sizes = default_corpus_sizes();
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene%02zu.pgm", i);
    out.push_back({name, natural_scene(i, sizes[i].width, sizes[i].height)});
  }
  return out;
}

}  // namespace curvemark::synthetic
