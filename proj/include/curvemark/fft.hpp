#pragma once

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "curvemark/core.hpp"

// Unitary 2-D DFTs over FFTW. Plans are created once per shape (the FFTW planner
// is not reentrant, so creation is serialized) and executed through the
// new-array interface, which is safe to call concurrently.
namespace curvemark::fft {

namespace detail {

enum class Kind { kForward, kBackward, kR2C, kC2R };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(Kind kind, int rows, int cols) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(static_cast<int>(kind), rows, cols);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    fftw_plan p = nullptr;
    switch (kind) {
      case Kind::kForward:
      case Kind::kBackward: {
        auto* buf = fftw_alloc_complex(n);
        p = fftw_plan_dft_2d(rows, cols, buf, buf,
                             kind == Kind::kForward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
        fftw_free(buf);
        break;
      }
      case Kind::kR2C: {
        auto* in = fftw_alloc_real(n);
        auto* out = fftw_alloc_complex(static_cast<std::size_t>(rows) * (cols / 2 + 1));
        p = fftw_plan_dft_r2c_2d(rows, cols, in, out, flags);
        fftw_free(in);
        fftw_free(out);
        break;
      }
      case Kind::kC2R: {
        auto* in = fftw_alloc_complex(static_cast<std::size_t>(rows) * (cols / 2 + 1));
        auto* out = fftw_alloc_real(n);
        p = fftw_plan_dft_c2r_2d(rows, cols, in, out, flags);
        fftw_free(in);
        fftw_free(out);
        break;
      }
    }
    if (!p) throw Error("FFTW failed to create a plan");
    plans_.emplace(key, p);
    return p;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace detail

// In-place unitary DFT. forward uses exp(-2 pi i k n / N).
inline void transform(ComplexGrid& g, bool forward) {
  if (g.empty()) return;
  auto plan = detail::PlanCache::instance().get(
      forward ? detail::Kind::kForward : detail::Kind::kBackward, g.rows(), g.cols());
  fftw_execute_dft(plan, detail::as_fftw(g.data()), detail::as_fftw(g.data()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(g.size()));
  for (auto& v : g.values()) v *= scale;
}

inline void forward(ComplexGrid& g) { transform(g, true); }
inline void backward(ComplexGrid& g) { transform(g, false); }

// Full (not half) unitary spectrum of a real raster, index order matching
// fftw: row ky mod H, column kx mod W.
inline ComplexGrid spectrum(const Image& img) {
  const int rows = img.rows(), cols = img.cols();
  const int half = cols / 2 + 1;
  std::vector<Complex> out(static_cast<std::size_t>(rows) * half);
  std::vector<double> in(img.values().begin(), img.values().end());
  auto plan = detail::PlanCache::instance().get(detail::Kind::kR2C, rows, cols);
  fftw_execute_dft_r2c(plan, in.data(), detail::as_fftw(out.data()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(img.size()));
  ComplexGrid full(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < half; ++c) full(r, c) = out[static_cast<std::size_t>(r) * half + c] * scale;
    const int nr = (rows - r) % rows;
    for (int c = half; c < cols; ++c)
      full(r, c) = std::conj(out[static_cast<std::size_t>(nr) * half + (cols - c)]) * scale;
  }
  return full;
}

// Inverse of spectrum() for Hermitian-symmetric input. Only the half plane
// c <= W/2 is read; callers symmetrize first when symmetry is not exact.
inline Image real_image(const ComplexGrid& spec) {
  const int rows = spec.rows(), cols = spec.cols();
  const int half = cols / 2 + 1;
  std::vector<Complex> in(static_cast<std::size_t>(rows) * half);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < half; ++c) in[static_cast<std::size_t>(r) * half + c] = spec(r, c);
  Image out(rows, cols);
  auto plan = detail::PlanCache::instance().get(detail::Kind::kC2R, rows, cols);
  fftw_execute_dft_c2r(plan, detail::as_fftw(in.data()), out.data());
  const double scale = 1.0 / std::sqrt(static_cast<double>(out.size()));
  for (double& v : out.values()) v *= scale;
  return out;
}

}  // namespace curvemark::fft
