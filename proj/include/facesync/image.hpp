#pragma once

#include <string>
#include <vector>

namespace facesync {

/// Planar float image, C x H x W, row-major within each channel.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Image&) const = default;
};

/// Bilinear resize with pixel-center alignment (half-pixel offsets) and
/// border clamping. Equal sizes return an exact copy.
Image resize_bilinear(const Image& src, int height, int width);

/// Rows [y0, y0+h) and columns [x0, x0+w); out-of-range pixels clamp.
Image crop(const Image& src, int y0, int x0, int h, int w);

/// 8-bit PNG I/O. Values are mapped through v * 255 (clamped, rounded);
/// 1 channel -> gray, 3 -> RGB; other channel counts write channel 0.
void save_png(const Image& img, const std::string& path);
/// Loads gray / RGB / RGBA PNG as 1 or 3 channel image in [0, 1].
Image load_png(const std::string& path);

/// Linear map of channel `c` to [0, 1] for previews (lo -> 0, hi -> 1).
Image normalize_channel(const Image& img, int c, float lo, float hi);

}  // namespace facesync
