#include "facesync/warp.hpp"

#include <algorithm>
#include <cmath>

#include "facesync/common.hpp"

namespace facesync {

namespace {

void check_flow(const Image& image, const Image& flow) {
  if (flow.channels != 2 || flow.height != image.height || flow.width != image.width)
    throw DimensionError("warp: flow must be 2 x H x W matching the image");
}

void check_mask(const Image& image, const Image& mask) {
  if (mask.channels != 1 || mask.height != image.height || mask.width != image.width)
    throw DimensionError("warp: mask must be 1 x H x W matching the image");
}

}  // namespace

Image bilinear_warp(const Image& image, const Image& flow) {
  check_flow(image, flow);
  Image out(image.channels, image.height, image.width);
  const int H = image.height, W = image.width;
  parallel_for(0, static_cast<std::size_t>(H), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < W; ++x) {
      const double sx = std::clamp(x + static_cast<double>(flow.at(0, y, x)), 0.0, W - 1.0);
      const double sy = std::clamp(y + static_cast<double>(flow.at(1, y, x)), 0.0, H - 1.0);
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double wx = sx - x0, wy = sy - y0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1.0 - wx) * image.at(c, y0, x0) + wx * image.at(c, y0, x1);
        const double bot = (1.0 - wx) * image.at(c, y1, x0) + wx * image.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  });
  return out;
}

Image warp_unstable(const Image& image, const Image& flow_raw, const Image& mask) {
  check_flow(image, flow_raw);
  check_mask(image, mask);
  Image flow = flow_raw;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) flow.at(c, y, x) *= mask.at(0, y, x);
  return bilinear_warp(image, flow);
}

Image warp_stable(const Image& image, const Image& flow_raw, const Image& mask) {
  check_mask(image, mask);
  return composite_blend(image, bilinear_warp(image, flow_raw), mask);
}

DetachedWarp warp_detached(const Image& image, const Image& flow_raw, const Image& mask) {
  return {warp_unstable(image, flow_raw, mask), true};
}

Image composite_blend(const Image& original, const Image& predicted, const Image& mask) {
  if (!original.same_shape(predicted)) throw DimensionError("blend: image shapes differ");
  check_mask(original, mask);
  Image out(original.channels, original.height, original.width);
  for (int c = 0; c < original.channels; ++c)
    for (int y = 0; y < original.height; ++y)
      for (int x = 0; x < original.width; ++x) {
        const float k = mask.at(0, y, x);
        // Written so that K = 0 and K = 1 reproduce their inputs bit-exactly.
        out.at(c, y, x) = k == 0.0f   ? original.at(c, y, x)
                          : k == 1.0f ? predicted.at(c, y, x)
                                      : original.at(c, y, x) * (1.0f - k) + predicted.at(c, y, x) * k;
      }
  return out;
}

double locality_metric(const Image& predicted, const Image& reference, const Image& mask) {
  if (!predicted.same_shape(reference)) throw DimensionError("locality: image shapes differ");
  check_mask(predicted, mask);
  double sum = 0.0;
  for (int c = 0; c < predicted.channels; ++c)
    for (int y = 0; y < predicted.height; ++y)
      for (int x = 0; x < predicted.width; ++x)
        sum += std::abs((1.0 - mask.at(0, y, x)) *
                        (static_cast<double>(predicted.at(c, y, x)) - reference.at(c, y, x)));
  return sum / static_cast<double>(predicted.data.size());
}

}  // namespace facesync
