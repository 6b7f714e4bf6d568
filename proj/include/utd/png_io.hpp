#pragma once

// PNG reading/writing through libpng. Consumers of this header must link
// libpng; the rest of the library has no such dependency.

#include <png.h>

#include <filesystem>
#include <string>

#include "utd/error.hpp"
#include "utd/image.hpp"

namespace utd {

/// Loads 8-bit gray or RGB; palette, 16-bit and alpha inputs are converted.
inline Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw InputError("cannot read PNG " + path.string() + ": " + img.message);
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), gray ? 1 : 3);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw InputError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.w);
  img.height = static_cast<png_uint_32>(image.h);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw InputError("cannot write PNG " + path.string() + ": " + img.message);
}

/// Dispatches on extension: .png through libpng, anything else as PPM/PGM.
inline Image read_image(const std::filesystem::path& path) {
  if (path.extension() == ".png") return read_png(path);
  return read_pnm(path);
}

inline void write_image(const std::filesystem::path& path, const Image& image) {
  if (path.extension() == ".png") return write_png(path, image);
  write_pnm(path, image);
}

}  // namespace utd
