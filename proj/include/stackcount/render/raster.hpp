#pragma once

// Depth maps and three-class segmentation masks, with their file formats.
//
// Depth file: "stackdepth 1 <width> <height>\n" then width*height float32
// little-endian values, row-major from the top-left; +inf marks no hit.
// Mask file: binary PGM (P5, maxval 255) holding only 0, 128 and 255.

#include "stackcount/common.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace stackcount::render {

enum Label : std::uint8_t { kGround = 0, kContainer = 128, kObjects = 255 };

inline bool valid_label(std::uint8_t v) { return v == kGround || v == kContainer || v == kObjects; }

template <class T>
struct Raster {
  int width = 0, height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int i, int j) { return data[static_cast<std::size_t>(j) * width + i]; }
  const T& at(int i, int j) const { return data[static_cast<std::size_t>(j) * width + i]; }
  bool same_size(int w, int h) const { return width == w && height == h; }
};

using DepthMap = Raster<float>;
using SegMask = Raster<std::uint8_t>;

inline constexpr float kNoDepth = std::numeric_limits<float>::infinity();

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const PixelBox&) const = default;
};

inline std::size_t count_label(const SegMask& mask, Label label) {
  return static_cast<std::size_t>(std::count(mask.data.begin(), mask.data.end(), static_cast<std::uint8_t>(label)));
}

inline PixelBox label_bounds(const SegMask& mask, Label label) {
  PixelBox b{mask.width, mask.height, 0, 0};
  for (int j = 0; j < mask.height; ++j)
    for (int i = 0; i < mask.width; ++i)
      if (mask.at(i, j) == label) {
        b.x0 = std::min(b.x0, i);
        b.y0 = std::min(b.y0, j);
        b.x1 = std::max(b.x1, i + 1);
        b.y1 = std::max(b.y1, j + 1);
      }
  if (b.x1 <= b.x0) throw DataError("mask has no pixels with label " + std::to_string(int(label)));
  return b;
}

// Tight crop around `label` pixels; other pixels inside the crop become +inf.
inline DepthMap crop_to_mask(const DepthMap& depth, const SegMask& mask, Label label) {
  if (!mask.same_size(depth.width, depth.height)) throw DataError("crop_to_mask: depth and mask sizes differ");
  PixelBox b = label_bounds(mask, label);
  DepthMap out(b.width(), b.height(), kNoDepth);
  for (int j = b.y0; j < b.y1; ++j)
    for (int i = b.x0; i < b.x1; ++i)
      if (mask.at(i, j) == label) out.at(i - b.x0, j - b.y0) = depth.at(i, j);
  return out;
}

inline SegMask crop_mask(const SegMask& mask, const PixelBox& b) {
  SegMask out(b.width(), b.height(), kGround);
  for (int j = b.y0; j < b.y1; ++j)
    for (int i = b.x0; i < b.x1; ++i) out.at(i - b.x0, j - b.y0) = mask.at(i, j);
  return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& header, const char* bytes, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << header;
  out.write(bytes, static_cast<std::streamsize>(n));
  if (!out) throw DataError("write failed for " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline void save_depth(const std::filesystem::path& path, const DepthMap& d) {
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  std::vector<char> bytes(d.data.size() * 4);
  for (std::size_t k = 0; k < d.data.size(); ++k) {
    auto bits = std::bit_cast<std::uint32_t>(d.data[k]);
    for (int b = 0; b < 4; ++b) bytes[4 * k + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  std::string header = "stackdepth 1 " + std::to_string(d.width) + " " + std::to_string(d.height) + "\n";
  detail::write_file(path, header, bytes.data(), bytes.size());
}

inline DepthMap load_depth(const std::filesystem::path& path) {
  std::string s = detail::read_file(path);
  auto nl = s.find('\n');
  if (nl == std::string::npos) throw DataError(path.string() + ": missing depth header");
  std::istringstream hs(s.substr(0, nl));
  std::string magic;
  int version = 0, w = 0, h = 0;
  if (!(hs >> magic >> version >> w >> h) || magic != "stackdepth" || version != 1)
    throw DataError(path.string() + ": bad depth header (expected 'stackdepth 1 <w> <h>')");
  if (w < 1 || h < 1) throw DataError(path.string() + ": bad depth size");
  std::size_t n = static_cast<std::size_t>(w) * h;
  if (s.size() - nl - 1 != n * 4)
    throw DataError(path.string() + ": expected " + std::to_string(n * 4) + " payload bytes, found " +
                    std::to_string(s.size() - nl - 1));
  DepthMap d(w, h, 0.0f);
  const auto* p = reinterpret_cast<const unsigned char*>(s.data() + nl + 1);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[4 * k + b]) << (8 * b);
    d.data[k] = std::bit_cast<float>(bits);
    if (std::isnan(d.data[k]) || d.data[k] < 0.0f) throw DataError(path.string() + ": negative or NaN depth");
  }
  return d;
}

inline void save_mask(const std::filesystem::path& path, const SegMask& m) {
  std::string header = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
  detail::write_file(path, header, reinterpret_cast<const char*>(m.data.data()), m.data.size());
}

inline SegMask load_mask(const std::filesystem::path& path) {
  std::string s = detail::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
  };
  if (token() != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (...) {
    throw DataError(path.string() + ": bad PGM header");
  }
  if (w < 1 || h < 1 || maxval != 255) throw DataError(path.string() + ": PGM must be 8-bit with positive size");
  ++pos;  // single whitespace before the raster
  std::size_t n = static_cast<std::size_t>(w) * h;
  if (s.size() < pos || s.size() - pos != n) throw DataError(path.string() + ": PGM payload size mismatch");
  SegMask m(w, h, kGround);
  std::memcpy(m.data.data(), s.data() + pos, n);
  for (auto v : m.data)
    if (!valid_label(v)) throw DataError(path.string() + ": label " + std::to_string(int(v)) + " is not 0, 128 or 255");
  return m;
}

}  // namespace stackcount::render
