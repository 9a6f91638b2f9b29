#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "curvemark/core.hpp"

namespace curvemark::metrics {

inline void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionMismatch("images differ in size");
}

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

// +inf for identical images.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) sum += w[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
  for (double& v : w) v /= sum;
  return w;
}

// Separable 'valid' filtering: output is (rows - k + 1) x (cols - k + 1).
inline Image filter_valid(const Image& img, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int rows = img.rows(), cols = img.cols();
  Image tmp(rows, cols - n + 1);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c + n <= cols; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * img(r, c + i);
      tmp(r, c) = acc;
    }
  Image out(rows - n + 1, cols - n + 1);
  for (int r = 0; r + n <= rows; ++r)
    for (int c = 0; c < out.cols(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp(r + i, c);
      out(r, c) = acc;
    }
  return out;
}

}  // namespace detail

// Mean SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 255,
// averaged over window positions fully inside the image.
inline double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b);
  constexpr int kWin = 11;
  if (a.rows() < kWin || a.cols() < kWin) throw InvalidArgument("SSIM needs images of at least 11x11");
  const auto w = detail::gaussian_window(kWin, 1.5);
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  Image aa(a.rows(), a.cols()), bb(a.rows(), a.cols()), ab(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Image mu_a = detail::filter_valid(a, w), mu_b = detail::filter_valid(b, w);
  const Image s_aa = detail::filter_valid(aa, w), s_bb = detail::filter_valid(bb, w), s_ab = detail::filter_valid(ab, w);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

struct BitErrorStats {
  std::size_t b_e = 0;
  std::size_t b_c = 0;
  std::size_t b_t = 0;
  double ber = 0.0;
};

inline BitErrorStats ber(const std::vector<bool>& sent, const std::vector<bool>& received) {
  if (sent.size() != received.size()) throw DimensionMismatch("bit vectors differ in length");
  if (sent.empty()) throw InvalidArgument("bit vectors are empty");
  BitErrorStats s;
  for (std::size_t i = 0; i < sent.size(); ++i) (sent[i] == received[i] ? s.b_c : s.b_e)++;
  s.b_t = s.b_e + s.b_c;
  s.ber = static_cast<double>(s.b_e) / static_cast<double>(s.b_t);
  return s;
}

struct Separation {
  double min_true = 0.0;
  double max_fake = 0.0;
  // min_true / max_fake; +inf when max_fake <= 0.
  double ratio = 0.0;
  // Statistics on the wrong side of the other list's extreme:
  // trues <= max_fake plus fakes >= min_true.
  std::size_t overlap = 0;
};

inline Separation separation(const std::vector<double>& trues, const std::vector<double>& fakes) {
  if (trues.empty() || fakes.empty()) throw InvalidArgument("separation needs nonempty lists");
  Separation s;
  s.min_true = *std::min_element(trues.begin(), trues.end());
  s.max_fake = *std::max_element(fakes.begin(), fakes.end());
  s.ratio = s.max_fake > 0.0 ? s.min_true / s.max_fake : std::numeric_limits<double>::infinity();
  for (double t : trues) s.overlap += t <= s.max_fake;
  for (double f : fakes) s.overlap += f >= s.min_true;
  return s;
}

}  // namespace curvemark::metrics
