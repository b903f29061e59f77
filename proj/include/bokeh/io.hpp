#pragma once

#include <png.h>
// jpeglib.h expects stdio and size_t to be declared first
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/raster.hpp"

namespace bokeh {

namespace io_detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  return f;
}

enum class Container { png, jpeg, unknown };

inline Container sniff(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  std::array<unsigned char, 8> magic{};
  const std::size_t n = std::fread(magic.data(), 1, magic.size(), f.get());
  static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (n == 8 && magic == kPng) return Container::png;
  if (n >= 3 && magic[0] == 0xff && magic[1] == 0xd8 && magic[2] == 0xff) return Container::jpeg;
  return Container::unknown;
}

inline float quantize_scale(int bit_depth) { return bit_depth == 16 ? 65535.0f : 255.0f; }

// libpng reports errors through a longjmp; route them into an exception once
// we are back in C++ frames.
struct PngErrorState {
  std::jmp_buf jump;
  char message[256] = {0};
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  std::longjmp(state->jump, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

inline Raster<float> read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  PngErrorState state;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_error_fn, png_warning_fn);
  if (!png) fail(ErrorCode::DecodeError, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);

  // Everything touched after setjmp must not need destruction on the error path.
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int channels = 0, bit_depth = 0;

  if (setjmp(state.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::DecodeError, path.string() + ": " + state.message);
  }

  png_init_io(png, file.get());
  png_read_info(png, info);
  int color_type = 0;
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  channels = png_get_channels(png, info);
  bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3)
    fail(ErrorCode::UnsupportedFormat, path.string() + ": unexpected channel count after expansion");

  const std::size_t count = static_cast<std::size_t>(width) * height * static_cast<std::size_t>(channels);
  std::vector<float> data(count);
  const float scale = quantize_scale(bit_depth);
  if (bit_depth == 16) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      data[i] = static_cast<float>(v) / scale;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<float>(buffer[i]) / scale;
  }
  return Raster<float>(static_cast<int>(width), static_cast<int>(height), channels, std::move(data));
}

struct JpegErrorState {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {0};
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* state = reinterpret_cast<JpegErrorState*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, state->message);
  std::longjmp(state->jump, 1);
}

inline void jpeg_silent(j_common_ptr, int) {}

inline Raster<float> read_jpeg(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegErrorState state;
  cinfo.err = jpeg_std_error(&state.base);
  state.base.error_exit = jpeg_error_exit;
  state.base.emit_message = jpeg_silent;

  std::vector<unsigned char> buffer;
  JDIMENSION width = 0, height = 0;
  int channels = 0;

  if (setjmp(state.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorCode::DecodeError, path.string() + ": " + state.message);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = cinfo.output_width;
  height = cinfo.output_height;
  channels = cinfo.output_components;
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  buffer.resize(stride * height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  std::vector<float> data(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) data[i] = static_cast<float>(buffer[i]) / 255.0f;
  return Raster<float>(static_cast<int>(width), static_cast<int>(height), channels, std::move(data));
}

inline void write_png(const Raster<float>& img, const std::filesystem::path& path, int bit_depth) {
  auto file = open_file(path, "wb");
  PngErrorState state;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_error_fn, png_warning_fn);
  if (!png) fail(ErrorCode::IoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);

  const float scale = quantize_scale(bit_depth);
  const int bytes = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width()) * img.channels() * bytes;
  std::vector<unsigned char> buffer(rowbytes * img.height());
  std::size_t i = 0;
  for (float v : img.data()) {
    const float c = std::clamp(std::isnan(v) ? 0.0f : v, 0.0f, 1.0f);
    const auto q = static_cast<std::uint16_t>(std::lround(c * scale));
    if (bytes == 2) {
      buffer[i++] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
      buffer[i++] = static_cast<unsigned char>(q & 0xff);
    } else {
      buffer[i++] = static_cast<unsigned char>(q);
    }
  }
  std::vector<png_bytep> rows(img.height());
  for (int y = 0; y < img.height(); ++y) rows[y] = buffer.data() + y * rowbytes;

  if (setjmp(state.jump)) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoError, path.string() + ": " + state.message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth,
               img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace io_detail

/// Decodes a PNG (8/16-bit) or JPEG. Alpha is dropped; palette and low-bit
/// gray are expanded. With Transfer::srgb the stored values are converted to
/// linear light, otherwise they are returned as stored.
inline RasterImage load_image(const std::filesystem::path& path, Transfer transfer = Transfer::linear) {
  Raster<float> raw;
  switch (io_detail::sniff(path)) {
    case io_detail::Container::png: raw = io_detail::read_png(path); break;
    case io_detail::Container::jpeg: raw = io_detail::read_jpeg(path); break;
    case io_detail::Container::unknown:
      fail(ErrorCode::UnsupportedFormat, path.string() + ": not a PNG or JPEG file");
  }
  RasterImage img(std::move(raw));
  return transfer == Transfer::srgb ? decode_srgb(img) : img;
}

/// Writes a PNG. Values are clamped to [0, 1] and rounded to the nearest code.
inline void save_image(const RasterImage& img, const std::filesystem::path& path,
                       Transfer transfer = Transfer::linear, int bit_depth = 8) {
  require(bit_depth == 8 || bit_depth == 16, ErrorCode::UnsupportedFormat, "PNG bit depth must be 8 or 16");
  if (transfer == Transfer::srgb) {
    RasterImage encoded = img;
    for (float& v : encoded.data()) v = static_cast<float>(linear_to_srgb(std::clamp(v, 0.0f, 1.0f)));
    io_detail::write_png(encoded, path, bit_depth);
  } else {
    io_detail::write_png(img, path, bit_depth);
  }
}

// PFM ("Pf" = one channel). Rows are stored bottom-to-top; a negative scale
// marks little-endian samples.
inline Raster<float> read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());

  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };

  const std::string magic = next_token();
  if (magic == "PF") fail(ErrorCode::DecodeError, path.string() + ": three-channel PFM where depth expected");
  if (magic != "Pf") fail(ErrorCode::DecodeError, path.string() + ": missing Pf header");

  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    scale = std::stod(next_token());
  } catch (const std::exception&) {
    fail(ErrorCode::DecodeError, path.string() + ": malformed PFM header");
  }
  if (width <= 0 || height <= 0 || scale == 0.0)
    fail(ErrorCode::DecodeError, path.string() + ": invalid PFM dimensions or scale");

  const bool little = scale < 0.0;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint32_t> bits(count);
  in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(in.gcount()) != count * 4)
    fail(ErrorCode::DecodeError, path.string() + ": truncated PFM payload");

  const bool swap = little != (std::endian::native == std::endian::little);
  std::vector<float> data(count);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x) {
      std::uint32_t b = bits[static_cast<std::size_t>(row) * width + x];
      if (swap) b = __builtin_bswap32(b);
      data[static_cast<std::size_t>(y) * width + x] = std::bit_cast<float>(b);
    }
  }
  return Raster<float>(width, height, 1, std::move(data));
}

inline void write_pfm(const Raster<float>& plane, const std::filesystem::path& path) {
  require(plane.channels() == 1, ErrorCode::DimensionMismatch, "PFM writer expects a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "Pf\n" << plane.width() << ' ' << plane.height() << "\n-1.0\n";
  std::vector<std::uint32_t> bits(plane.size());
  for (int row = 0; row < plane.height(); ++row) {
    const int y = plane.height() - 1 - row;
    for (int x = 0; x < plane.width(); ++x) {
      std::uint32_t b = std::bit_cast<std::uint32_t>(plane.at(x, y));
      if constexpr (std::endian::native != std::endian::little) b = __builtin_bswap32(b);
      bits[static_cast<std::size_t>(row) * plane.width() + x] = b;
    }
  }
  out.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size() * 4));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline DepthMap load_depth(const std::filesystem::path& path) { return DepthMap(read_pfm(path)); }

inline void save_depth(const DepthMap& depth, const std::filesystem::path& path) { write_pfm(depth, path); }

}  // namespace bokeh
