#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <png.h>

#include "refertok/errors.hpp"
#include "refertok/geometry.hpp"

namespace refertok {

namespace detail {

struct FileHandle {
  std::FILE* fp = nullptr;
  explicit FileHandle(const std::string& path, const char* mode)
      : fp(std::fopen(path.c_str(), mode)) {}
  ~FileHandle() {
    if (fp) std::fclose(fp);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

// Decodes any 8-bit-expandable PNG to interleaved RGB8 rows.
inline void read_png_rgb8(const std::string& path, std::size_t& width,
                          std::size_t& height, std::vector<unsigned char>& rgb) {
  FileHandle file(path, "rb");
  if (!file.fp) raise(ErrorKind::IoError, "cannot open '" + path + "'");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.fp) != 8 || png_sig_cmp(sig, 0, 8))
    raise(ErrorKind::FormatError, "'" + path + "' is not a PNG file");

  PngReader reader;
  if (!reader.png || !reader.info)
    raise(ErrorKind::IoError, "libpng initialisation failed");
  if (setjmp(png_jmpbuf(reader.png)))
    raise(ErrorKind::FormatError, "'" + path + "': PNG decode error");

  png_init_io(reader.png, file.fp);
  png_set_sig_bytes(reader.png, 8);
  png_read_info(reader.png, reader.info);

  width = png_get_image_width(reader.png, reader.info);
  height = png_get_image_height(reader.png, reader.info);

  png_set_expand(reader.png);
  png_set_strip_16(reader.png);
  png_set_strip_alpha(reader.png);
  if (png_get_color_type(reader.png, reader.info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(reader.png, reader.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(reader.png);
  png_read_update_info(reader.png, reader.info);

  rgb.assign(width * height * 3, 0);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = rgb.data() + y * width * 3;
  png_read_image(reader.png, rows.data());
  png_read_end(reader.png, nullptr);
}

inline void read_png_gray8(const std::string& path, std::size_t& width,
                           std::size_t& height, std::vector<unsigned char>& gray) {
  FileHandle file(path, "rb");
  if (!file.fp) raise(ErrorKind::IoError, "cannot open '" + path + "'");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.fp) != 8 || png_sig_cmp(sig, 0, 8))
    raise(ErrorKind::FormatError, "'" + path + "' is not a PNG file");

  PngReader reader;
  if (!reader.png || !reader.info)
    raise(ErrorKind::IoError, "libpng initialisation failed");
  if (setjmp(png_jmpbuf(reader.png)))
    raise(ErrorKind::FormatError, "'" + path + "': PNG decode error");

  png_init_io(reader.png, file.fp);
  png_set_sig_bytes(reader.png, 8);
  png_read_info(reader.png, reader.info);

  const int color_type = png_get_color_type(reader.png, reader.info);
  if (color_type != PNG_COLOR_TYPE_GRAY)
    raise(ErrorKind::FormatError,
          "'" + path + "': mask PNGs must be 8-bit grayscale");
  png_set_expand_gray_1_2_4_to_8(reader.png);
  png_set_strip_16(reader.png);
  png_read_update_info(reader.png, reader.info);

  width = png_get_image_width(reader.png, reader.info);
  height = png_get_image_height(reader.png, reader.info);
  gray.assign(width * height, 0);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = gray.data() + y * width;
  png_read_image(reader.png, rows.data());
  png_read_end(reader.png, nullptr);
}

inline void write_png(const std::string& path, std::size_t width,
                      std::size_t height, int color_type, std::size_t stride,
                      const unsigned char* pixels) {
  FileHandle file(path, "wb");
  if (!file.fp) raise(ErrorKind::IoError, "cannot open '" + path + "' for writing");

  PngWriter writer;
  if (!writer.png || !writer.info)
    raise(ErrorKind::IoError, "libpng initialisation failed");
  if (setjmp(png_jmpbuf(writer.png)))
    raise(ErrorKind::IoError, "'" + path + "': PNG encode error");

  png_init_io(writer.png, file.fp);
  png_set_IHDR(writer.png, writer.info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(writer.png, writer.info);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(pixels + y * stride);
  png_write_image(writer.png, rows.data());
  png_write_end(writer.png, nullptr);
}

}  // namespace detail

// 8-bit grayscale PNG mask: 0 is background, any nonzero value foreground.
inline BinaryMask load_mask_png(const std::string& path) {
  std::size_t w = 0, h = 0;
  std::vector<unsigned char> gray;
  detail::read_png_gray8(path, w, h, gray);
  BinaryMask mask(w, h);
  for (std::size_t i = 0; i < gray.size(); ++i) mask.bits[i] = gray[i] ? 1 : 0;
  return mask;
}

inline void save_mask_png(const std::string& path, const BinaryMask& mask) {
  std::vector<unsigned char> gray(mask.width * mask.height);
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = mask.bits[i] ? 255 : 0;
  detail::write_png(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY,
                    mask.width, gray.data());
}

// COCO-style uncompressed RLE: {"size": [height, width], "counts": [...]}.
// Counts are column-major run lengths alternating background/foreground,
// starting with a background run (possibly zero-length).
inline BinaryMask decode_rle(const nlohmann::json& j, const std::string& origin) {
  if (!j.contains("size") || !j.contains("counts"))
    raise(ErrorKind::FormatError, "'" + origin + "': RLE needs size and counts");
  const auto size = j.at("size");
  if (!size.is_array() || size.size() != 2)
    raise(ErrorKind::FormatError, "'" + origin + "': size must be [height, width]");
  std::size_t height = 0;
  std::size_t width = 0;
  try {
    height = size[0].get<std::size_t>();
    width = size[1].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + origin + "': size: " + e.what());
  }
  if (width == 0 || height == 0)
    raise(ErrorKind::FormatError, "'" + origin + "': zero mask dimensions");
  if (!j.at("counts").is_array())
    raise(ErrorKind::FormatError,
          "'" + origin + "': only integer-array counts are supported");

  BinaryMask mask(width, height);
  std::size_t pos = 0;
  bool foreground = false;
  for (const auto& run : j.at("counts")) {
    if (!run.is_number())
      raise(ErrorKind::FormatError,
            "'" + origin + "': only integer-array counts are supported");
    const auto len = run.get<std::size_t>();
    // Bound len first: a wrapped negative count must not overflow pos + len.
    if (len > width * height || pos + len > width * height)
      raise(ErrorKind::FormatError, "'" + origin + "': RLE overruns mask size");
    for (std::size_t k = 0; k < len; ++k, ++pos) {
      if (foreground) mask.set(pos % height, pos / height);
    }
    foreground = !foreground;
  }
  if (pos != width * height)
    raise(ErrorKind::FormatError, "'" + origin + "': RLE covers " +
                                      std::to_string(pos) + " of " +
                                      std::to_string(width * height) + " pixels");
  return mask;
}

inline nlohmann::json encode_rle(const BinaryMask& mask) {
  nlohmann::json j;
  j["size"] = {mask.height, mask.width};
  std::vector<std::size_t> counts;
  bool current = false;
  std::size_t run = 0;
  for (std::size_t x = 0; x < mask.width; ++x) {
    for (std::size_t y = 0; y < mask.height; ++y) {
      const bool fg = mask.at(y, x) != 0;
      if (fg == current) {
        ++run;
      } else {
        counts.push_back(run);
        current = fg;
        run = 1;
      }
    }
  }
  counts.push_back(run);
  j["counts"] = counts;
  return j;
}

inline BinaryMask load_mask_rle(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::IoError, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::FormatError, "'" + path + "': " + e.what());
  }
  return decode_rle(j, path);
}

// Dispatch on extension: .png for grayscale PNG, anything else parses as
// RLE JSON.
inline BinaryMask load_mask(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    return load_mask_png(path);
  return load_mask_rle(path);
}

// Image PNGs map onto 3-channel buffers with intensities value/255.
inline ImageBuffer load_image_png(const std::string& path) {
  std::size_t w = 0, h = 0;
  std::vector<unsigned char> rgb;
  detail::read_png_rgb8(path, w, h, rgb);
  ImageBuffer img(w, h, 3);
  for (std::size_t i = 0; i < rgb.size(); ++i)
    img.values[i] = static_cast<double>(rgb[i]) / 255.0;
  return img;
}

inline void save_image_png(const std::string& path, const ImageBuffer& img) {
  if (img.channels != 3)
    raise(ErrorKind::InvalidConfig, "save_image_png expects 3 channels");
  std::vector<unsigned char> rgb(img.width * img.height * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    double v = img.values[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    rgb[i] = static_cast<unsigned char>(v * 255.0 + 0.5);
  }
  detail::write_png(path, img.width, img.height, PNG_COLOR_TYPE_RGB,
                    img.width * 3, rgb.data());
}

}  // namespace refertok
