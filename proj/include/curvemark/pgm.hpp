#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "curvemark/core.hpp"

// Netpbm I/O. P5 (8-bit gray) is the interchange format; P2 and P6 are read
// as well, P6 converted to BT.601 luma.
namespace curvemark {

class IoError : public Error {
 public:
  using Error::Error;
};

struct LoadedImage {
  Image image;
  bool converted_from_color = false;
};

namespace detail {

class PnmCursor {
 public:
  explicit PnmCursor(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) throw IoError(std::string("malformed PNM header: ") + what);
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > 1 << 24) throw IoError(std::string("PNM header value too large: ") + what);
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw IoError("malformed PNM header");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline LoadedImage decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw IoError("not a PNM file");
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '2' && kind != '5' && kind != '6')
    throw IoError(std::string("unsupported PNM variant P") + kind + " (expected P5, P2 or P6)");
  detail::PnmCursor cur(bytes);
  cur.advance(2);
  const long width = cur.read_uint("width");
  const long height = cur.read_uint("height");
  const long maxval = cur.read_uint("maxval");
  if (width <= 0 || height <= 0) throw IoError("PNM image has zero extent");
  if (maxval <= 0 || maxval > 255) throw IoError("only 8-bit PNM files (maxval <= 255) are supported");
  LoadedImage out;
  out.image = Image(static_cast<int>(height), static_cast<int>(width));
  const double scale = maxval == 255 ? 1.0 : 255.0 / maxval;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (kind == '2') {
    for (std::size_t i = 0; i < n; ++i) {
      const long v = cur.read_uint("sample");
      if (v > maxval) throw IoError("PNM sample exceeds maxval");
      out.image[i] = v * scale;
    }
    return out;
  }
  cur.end_header();
  const std::size_t channels = kind == '6' ? 3 : 1;
  if (cur.remaining() < n * channels) throw IoError("PNM file is truncated");
  const std::uint8_t* p = bytes.data() + cur.pos();
  for (std::size_t i = 0; i < n; ++i) {
    if (channels == 1) {
      if (p[i] > maxval) throw IoError("PNM sample exceeds maxval");
      out.image[i] = p[i] * scale;
    } else {
      const double y = 0.299 * p[3 * i] + 0.587 * p[3 * i + 1] + 0.114 * p[3 * i + 2];
      out.image[i] = std::nearbyint(y * scale);
    }
  }
  out.converted_from_color = channels == 3;
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read " + path);
  return bytes;
}

inline LoadedImage load_image(const std::string& path) {
  try {
    return decode_pnm(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

// Rounds to the nearest integer and clamps to [0, 255].
inline std::vector<std::uint8_t> encode_pgm(const Image& img) {
  const std::string header =
      "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (double v : img.values())
    out.push_back(static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)));
  return out;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path);
}

inline void save_pgm(const std::string& path, const Image& img) { write_file_bytes(path, encode_pgm(img)); }

}  // namespace curvemark
