#pragma once

#include <algorithm>
#include <atomic>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace curvemark {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Dense row-major 2-D array. rows() is the vertical extent (image height).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw InvalidArgument("negative grid extent");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int width() const { return cols_; }
  int height() const { return rows_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// Grayscale raster, luma in [0, 255] (not enforced: intermediate results may overshoot).
using Image = Grid<double>;
using ComplexGrid = Grid<Complex>;
using RealGrid = Grid<double>;

struct Dims {
  int width = 0;
  int height = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

template <typename T>
Dims dims_of(const Grid<T>& g) {
  return {g.cols(), g.rows()};
}

inline Image clamp_to_8bit_range(Image img) {
  for (double& v : img.values()) v = std::clamp(v, 0.0, 255.0);
  return img;
}

// Round and clamp, as if the raster were stored with 8 bits per pixel.
inline Image quantize_8bit(Image img) {
  for (double& v : img.values()) v = std::clamp(std::nearbyint(v), 0.0, 255.0);
  return img;
}

// Worker count, capped by CURVEMARK_THREADS when set.
inline int thread_count() {
  static const int n = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("CURVEMARK_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) return cap;
    }
    return hw;
  }();
  return n;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Runs fn(i) for i in [0, n). Nested calls run serially. Callers write results by
// index, so outcomes do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int max_threads = 0) {
  int threads = max_threads > 0 ? max_threads : thread_count();
  if (detail::in_parallel_region || threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = static_cast<int>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    detail::in_parallel_region = true;
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
    detail::in_parallel_region = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace curvemark
