#pragma once

#include "facesync/image.hpp"

namespace facesync {

/// Backward warp: output(p) = bilinear sample of `image` at p + flow(p),
/// with flow channels (dx, dy) in pixels. Samples outside the image clamp
/// to the border.
Image bilinear_warp(const Image& image, const Image& flow);

/// F = K * F_raw (K broadcast over both flow channels), then warp.
Image warp_unstable(const Image& image, const Image& flow_raw, const Image& mask);

/// K * warp(image, F_raw) + (1 - K) * image.
Image warp_stable(const Image& image, const Image& flow_raw, const Image& mask);

/// Result of the stop-gradient variant. The values equal warp_unstable; the
/// flag tells a gradient consumer that K must be treated as a constant.
struct DetachedWarp {
  Image image;
  bool mask_detached = true;
};
DetachedWarp warp_detached(const Image& image, const Image& flow_raw, const Image& mask);

/// I_orig * (1 - K) + I_pred * K.
Image composite_blend(const Image& original, const Image& predicted, const Image& mask);

/// Mean over pixels and channels of |(1 - K) * (pred - ref)|.
double locality_metric(const Image& predicted, const Image& reference, const Image& mask);

}  // namespace facesync
