// Copyright 2026 The nsart Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "common/image.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstring>

#include "common/error.hpp"
#include "common/fs.hpp"

namespace nsart {

ImageBuffer::ImageBuffer(int width, int height, Rgb fill) : width_(width), height_(height) {
  require(width >= 0 && height >= 0, ErrorKind::Parameter, "image dimensions must be non-negative");
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  require(width >= 0 && height >= 0, ErrorKind::Parameter, "image dimensions must be non-negative");
  require(pixels_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3,
          ErrorKind::Parameter, "pixel buffer length must equal width * height * 3");
}

namespace {

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct WriteSink {
  std::vector<std::uint8_t>* out;
};

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
  sink->out->insert(sink->out->end(), data, data + length);
}

struct ReadSource {
  std::span<const std::uint8_t> in;
  std::size_t offset = 0;
};

void read_from_span(png_structp png, png_bytep data, png_size_t length) {
  auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
  if (src->offset + length > src->in.size()) png_error(png, "truncated PNG stream");
  std::memcpy(data, src->in.data() + src->offset, length);
  src->offset += length;
}

// The setjmp frames live in these helpers so no C++ object with a
// destructor is in scope across a longjmp.
bool png_encode_rows(png_structp png, png_infop info, WriteSink* sink, png_uint_32 width, png_uint_32 height,
                     png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, sink, write_to_vector, nullptr);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

bool png_read_header(png_structp png, png_infop info, ReadSource* src, png_uint_32* width, png_uint_32* height) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, src, read_from_span);
  png_read_info(png, info);
  *width = png_get_image_width(png, info);
  *height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  return true;
}

bool png_read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  require(!image.empty(), ErrorKind::Parameter, "cannot encode an empty image");
  std::string message;
  std::vector<std::uint8_t> out;
  WriteSink sink{&out};
  const auto bytes = image.bytes();
  const std::size_t stride = static_cast<std::size_t>(image.width()) * 3;
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = const_cast<png_bytep>(bytes.data() + y * stride);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
  require(png != nullptr, ErrorKind::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  const bool ok = info != nullptr && png_encode_rows(png, info, &sink, static_cast<png_uint_32>(image.width()),
                                                     static_cast<png_uint_32>(image.height()), rows.data());
  png_destroy_write_struct(&png, &info);
  require(ok, ErrorKind::Io, "PNG encode failed: " + message);
  return out;
}

ImageBuffer decode_png(std::span<const std::uint8_t> data) {
  require(data.size() >= 8 && png_sig_cmp(data.data(), 0, 8) == 0, ErrorKind::Format, "not a PNG stream");
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
  require(png != nullptr, ErrorKind::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadSource src{data};
  png_uint_32 width = 0, height = 0;
  bool ok = info != nullptr && png_read_header(png, info, &src, &width, &height);
  std::vector<std::uint8_t> pixels;
  if (ok) {
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y) rows[y] = pixels.data() + y * static_cast<std::size_t>(width) * 3;
    ok = png_read_rows(png, rows.data());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  require(ok, ErrorKind::Format, "PNG decode failed: " + message);
  return ImageBuffer(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  write_file_atomic(path, encode_png(image));
}

ImageBuffer read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes);
}

ImageBuffer downsample_half(const ImageBuffer& image) {
  require(image.width() % 2 == 0 && image.height() % 2 == 0, ErrorKind::Parameter,
          "downsample_half needs even dimensions");
  ImageBuffer out(image.width() / 2, image.height() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const Rgb a = image.at(2 * x, 2 * y), b = image.at(2 * x + 1, 2 * y);
      const Rgb c = image.at(2 * x, 2 * y + 1), d = image.at(2 * x + 1, 2 * y + 1);
      Rgb m;
      for (int k = 0; k < 3; ++k) m[k] = static_cast<std::uint8_t>((a[k] + b[k] + c[k] + d[k] + 2) / 4);
      out.set(x, y, m);
    }
  }
  return out;
}

ImageBuffer tile_grid(std::span<const ImageBuffer> images, int columns) {
  require(!images.empty() && columns > 0, ErrorKind::Parameter, "tile_grid needs images and columns > 0");
  const int w = images.front().width(), h = images.front().height();
  const int n = static_cast<int>(images.size());
  const int rows = (n + columns - 1) / columns;
  ImageBuffer out(w * std::min(columns, n), h * rows, Rgb{0, 0, 0});
  for (int i = 0; i < n; ++i) {
    const auto& img = images[static_cast<std::size_t>(i)];
    require(img.width() == w && img.height() == h, ErrorKind::Parameter, "tile_grid images must share a size");
    const int ox = (i % columns) * w, oy = (i / columns) * h;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.set(ox + x, oy + y, img.at(x, y));
  }
  return out;
}

}  // namespace nsart
