#include "facesync/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "facesync/common.hpp"

namespace facesync {

Image resize_bilinear(const Image& src, int height, int width) {
  if (height < 1 || width < 1) throw DimensionError("resize: target size must be positive");
  if (src.height == height && src.width == width) return src;
  Image out(src.channels, height, width);
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1 - wx) * src.at(c, y0, x0) + wx * src.at(c, y0, x1);
        const double bot = (1 - wx) * src.at(c, y1, x0) + wx * src.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Image crop(const Image& src, int y0, int x0, int h, int w) {
  if (h < 1 || w < 1) throw DimensionError("crop: size must be positive");
  Image out(src.channels, h, w);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = src.at(c, std::clamp(y0 + y, 0, src.height - 1), std::clamp(x0 + x, 0, src.width - 1));
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void save_png(const Image& img, const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng: cannot create write struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng: failed writing '" + path + "'");
  }
  const int out_channels = img.channels == 3 ? 3 : 1;
  png_init_io(png, fp.get());
  // Level 6 keeps output bytes stable across runs.
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, img.width, img.height, 8, out_channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * out_channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < out_channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * out_channels + c] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open '" + path + "' for reading");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng: cannot create read struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng: failed reading '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  std::vector<png_byte> buf(static_cast<std::size_t>(w) * h * ch);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  const int out_ch = ch >= 3 ? 3 : 1;
  Image img(out_ch, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < out_ch; ++c)
        img.at(c, y, x) = rows[y][static_cast<std::size_t>(x) * ch + c] / 255.0f;
  return img;
}

Image normalize_channel(const Image& img, int c, float lo, float hi) {
  Image out(1, img.height, img.width);
  const float scale = hi > lo ? 1.0f / (hi - lo) : 1.0f;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(0, y, x) = (img.at(c, y, x) - lo) * scale;
  return out;
}

}  // namespace facesync
