#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "utd/error.hpp"

namespace utd {

/// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  int w = 0;
  int h = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int width, int height, int ch, std::uint8_t fill = 0) : w(width), h(height), channels(ch) {
    if (width <= 0 || height <= 0) throw InputError("Image: size must be positive");
    if (ch != 1 && ch != 3) throw InputError("Image: channels must be 1 or 3");
    pixels.assign(static_cast<std::size_t>(width) * height * ch, fill);
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * w + x) * channels + c;
  }
  std::uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

  bool operator==(const Image&) const = default;
};

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Next whitespace-delimited header token of a netpbm file, skipping comments.
inline std::string pnm_token(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) tok += data[pos++];
  return tok;
}

}  // namespace detail

/// Binary PPM (P6) or PGM (P5) with maxval 255.
inline Image decode_pnm(const std::string& data) {
  std::size_t pos = 0;
  const std::string magic = detail::pnm_token(data, pos);
  int channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw InputError("not a binary PPM/PGM file (magic '" + magic + "')");
  }
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(detail::pnm_token(data, pos));
    h = std::stoi(detail::pnm_token(data, pos));
    maxval = std::stoi(detail::pnm_token(data, pos));
  } catch (const std::exception&) {
    throw InputError("malformed PNM header");
  }
  if (maxval != 255) throw InputError("only maxval 255 PNM files are supported");
  ++pos;  // single whitespace byte after maxval
  Image img(w, h, channels);
  if (data.size() < pos + img.pixels.size()) throw InputError("PNM pixel data truncated");
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(), img.pixels.begin());
  return img;
}

inline std::string encode_pnm(const Image& img) {
  std::string out = (img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.w) + " " +
                    std::to_string(img.h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline Image read_pnm(const std::filesystem::path& path) {
  return decode_pnm(detail::read_file_bytes(path));
}

inline void write_pnm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const std::string bytes = encode_pnm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Binary mask (values 0/1) written as an 8-bit PGM with 0/255 levels.
inline void write_mask_pgm(const std::filesystem::path& path, const Image& mask) {
  Image scaled = mask;
  for (auto& p : scaled.pixels) p = p ? 255 : 0;
  write_pnm(path, scaled);
}

}  // namespace utd
