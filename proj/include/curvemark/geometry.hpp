#pragma once

#include <algorithm>
#include <cmath>

#include "curvemark/core.hpp"

// Raster resampling. Pixel (r, c) has centre (x, y) = (c, r); rotations by a
// positive angle turn +x towards +y, the same sense as wedge angles in the
// frequency plane, so rotating an image by k wedge widths moves its energy k
// directions up.
namespace curvemark::geometry {

enum class Border { kZero, kReplicate };

inline double sample_bilinear(const Image& img, double x, double y, Border border) {
  const int w = img.cols(), h = img.rows();
  if (border == Border::kReplicate) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  }
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  auto at = [&](int c, int r) -> double {
    if (c < 0 || r < 0 || c >= w || r >= h) {
      if (border == Border::kZero) return 0.0;
      c = std::clamp(c, 0, w - 1);
      r = std::clamp(r, 0, h - 1);
    }
    return img(r, c);
  };
  const double top = (1.0 - ax) * at(x0, y0) + (ax == 0.0 ? 0.0 : ax * at(x0 + 1, y0));
  if (ay == 0.0) return top;
  const double bottom = (1.0 - ax) * at(x0, y0 + 1) + (ax == 0.0 ? 0.0 : ax * at(x0 + 1, y0 + 1));
  return (1.0 - ay) * top + ay * bottom;
}

// 2x2 map from output offsets to input offsets, both about the image centres.
struct Affine {
  double a = 1, b = 0, c = 0, d = 1;
};

// Rotation by `degrees` combined with magnification `zoom`, expressed as the
// inverse map needed for resampling.
inline Affine rotation_zoom(double degrees, double zoom = 1.0) {
  const double t = degrees * kPi / 180.0;
  const double cs = std::cos(t) / zoom, sn = std::sin(t) / zoom;
  return {cs, sn, -sn, cs};
}

inline Image warp(const Image& img, const Affine& inv, int out_w, int out_h, Border border) {
  const double cxi = 0.5 * (img.cols() - 1), cyi = 0.5 * (img.rows() - 1);
  const double cxo = 0.5 * (out_w - 1), cyo = 0.5 * (out_h - 1);
  Image out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const double dy = r - cyo;
    for (int c = 0; c < out_w; ++c) {
      const double dx = c - cxo;
      out(r, c) = sample_bilinear(img, cxi + inv.a * dx + inv.b * dy, cyi + inv.c * dx + inv.d * dy, border);
    }
  }
  return out;
}

inline bool is_identity_angle(double degrees) { return std::fmod(std::abs(degrees), 360.0) == 0.0; }

// Same-size canvas.
inline Image rotate_same(const Image& img, double degrees, Border border) {
  if (is_identity_angle(degrees)) return img;
  return warp(img, rotation_zoom(degrees), img.cols(), img.rows(), border);
}

inline Dims expanded_dims(int w, int h, double degrees) {
  const double t = degrees * kPi / 180.0;
  const double cs = std::abs(std::cos(t)), sn = std::abs(std::sin(t));
  auto fit = [](double v) { return std::max(1, static_cast<int>(std::ceil(v - 1e-6))); };
  return {fit(w * cs + h * sn), fit(w * sn + h * cs)};
}

// Canvas grown to hold the whole rotated image.
inline Image rotate_expand(const Image& img, double degrees, Border border) {
  if (is_identity_angle(degrees)) return img;
  const Dims d = expanded_dims(img.cols(), img.rows(), degrees);
  return warp(img, rotation_zoom(degrees), d.width, d.height, border);
}

// Bilinear resize, pixel centres aligned.
inline Image resize(const Image& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw InvalidArgument("resize target must be positive");
  if (out_w == img.cols() && out_h == img.rows()) return img;
  const double sx = static_cast<double>(img.cols()) / out_w, sy = static_cast<double>(img.rows()) / out_h;
  Image out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const double y = (r + 0.5) * sy - 0.5;
    for (int c = 0; c < out_w; ++c)
      out(r, c) = sample_bilinear(img, (c + 0.5) * sx - 0.5, y, Border::kReplicate);
  }
  return out;
}

// Centre crop and/or edge-replicating pad to the requested size.
inline Image crop_or_pad(const Image& img, int out_w, int out_h) {
  if (out_w == img.cols() && out_h == img.rows()) return img;
  const int ox = (img.cols() - out_w) / 2, oy = (img.rows() - out_h) / 2;
  Image out(out_h, out_w);
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c)
      out(r, c) = img(std::clamp(r + oy, 0, img.rows() - 1), std::clamp(c + ox, 0, img.cols() - 1));
  return out;
}

}  // namespace curvemark::geometry
