#include "gsurf/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "gsurf/errors.hpp"

namespace gsurf {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_abort(png_structp, png_const_charp msg) {
  throw std::runtime_error(msg ? msg : "libpng error");
}

void png_quiet(png_structp, png_const_charp) {}

struct ReadCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadCtx() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct WriteCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteCtx() { png_destroy_write_struct(&png, &info); }
};

void write_rows(const std::string& path, const Image& img, int bit_depth,
                int color_type, int channels) {
  if (img.empty() || img.channels != channels)
    throw IoError(IoErrorKind::write_failure, path, "unexpected channel count for png write");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file)
    throw IoError(IoErrorKind::write_failure, path, "cannot open for writing");

  const double peak = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t stride =
      static_cast<std::size_t>(img.width) * channels * (bit_depth / 8);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.height) * stride);
  for (int y = 0; y < img.height; ++y) {
    unsigned char* row = bytes.data() + y * stride;
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < channels; ++c) {
        double v = img.at(y, x, c);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        auto q = static_cast<unsigned int>(std::lround(v * peak));
        if (bit_depth == 16) {
          // PNG stores 16-bit samples big-endian.
          *row++ = static_cast<unsigned char>(q >> 8);
          *row++ = static_cast<unsigned char>(q & 0xff);
        } else {
          *row++ = static_cast<unsigned char>(q);
        }
      }
  }

  WriteCtx ctx;
  try {
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_abort, png_quiet);
    if (!ctx.png) throw std::runtime_error("png_create_write_struct failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
    png_init_io(ctx.png, file.get());
    png_set_IHDR(ctx.png, ctx.info, img.width, img.height, bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = bytes.data() + y * stride;
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
  } catch (const std::exception& e) {
    throw IoError(IoErrorKind::write_failure, path, e.what());
  }
}

}  // namespace

Image read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError(IoErrorKind::missing_file, path, "cannot open");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw IoError(IoErrorKind::bad_image, path, "not a png file");

  ReadCtx ctx;
  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, channels = 0;
  std::vector<unsigned char> bytes;
  std::size_t stride = 0;
  try {
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_abort, png_quiet);
    if (!ctx.png) throw std::runtime_error("png_create_read_struct failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
    png_init_io(ctx.png, file.get());
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    int color_type = 0;
    png_get_IHDR(ctx.png, ctx.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    channels = png_get_channels(ctx.png, ctx.info);
    stride = png_get_rowbytes(ctx.png, ctx.info);
    bytes.resize(stride * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = bytes.data() + y * stride;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(IoErrorKind::bad_image, path, e.what());
  }
  if (channels < 1 || channels > 3 || (bit_depth != 8 && bit_depth != 16))
    throw IoError(IoErrorKind::bad_image, path, "unsupported png layout");

  Image img(static_cast<int>(h), static_cast<int>(w), channels);
  const double inv = bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (png_uint_32 y = 0; y < h; ++y) {
    const unsigned char* row = bytes.data() + y * stride;
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        unsigned int q;
        if (bit_depth == 16) {
          q = (static_cast<unsigned int>(row[0]) << 8) | row[1];
          row += 2;
        } else {
          q = *row++;
        }
        img.at(static_cast<int>(y), static_cast<int>(x), c) = q * inv;
      }
  }
  return img;
}

void write_png_rgb8(const std::string& path, const Image& img) {
  write_rows(path, img, 8, PNG_COLOR_TYPE_RGB, 3);
}

void write_png_gray8(const std::string& path, const Image& img) {
  write_rows(path, img, 8, PNG_COLOR_TYPE_GRAY, 1);
}

void write_png_gray16(const std::string& path, const Image& img) {
  write_rows(path, img, 16, PNG_COLOR_TYPE_GRAY, 1);
}

}  // namespace gsurf
