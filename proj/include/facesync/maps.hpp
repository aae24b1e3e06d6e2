#pragma once

#include <optional>
#include <string>
#include <vector>

#include "facesync/camera.hpp"
#include "facesync/face_model.hpp"
#include "facesync/image.hpp"
#include "facesync/raster.hpp"

namespace facesync {

/// Conditioning maps for one driving frame.
struct RenderMaps {
  Image P;           // 3 x H x W mean-face coordinates (model units)
  Image S;           // 2 x H x W sketch: face contours, iris rings
  Image flow;        // 2 x H x W reference - driving screen position (px)
  Image foreground;  // 1 x H x W driving coverage
};

struct SketchOptions {
  double sigma = 0.5;       // Gaussian falloff (px)
  double cutoff = 1.0;      // strokes vanish beyond this distance (px)
  double depth_bias = 0.15; // model units a stroke may sit behind the z-buffer
};

/// Per covered pixel, the perspective-correct barycentric blend of the
/// facial (mean-shape) coordinates of its triangle; zero elsewhere.
Image render_P(const Fragments& frag, const std::vector<Triangle>& triangles,
               const Vertices& facial_coordinates);

/// One projected stroke list: indices into `screen`, optionally closed.
struct Stroke {
  std::vector<int> vertices;
  bool closed = false;
};

/// Draws anti-aliased strokes into `out` channel `channel` (max blending).
/// Intensity exp(-d^2 / 2 sigma^2) for distance d < cutoff, else 0. With
/// `zbuffer`, a stroke point is hidden when every pixel of the 3x3 block
/// around it holds a surface nearer than (stroke depth - depth_bias).
void draw_strokes(Image& out, int channel, const Vertices& screen, const std::vector<Stroke>& strokes,
                  const Fragments* zbuffer, const SketchOptions& options);

/// Two-channel sketch of a posed mesh: channel 0 draws every polyline of the
/// model, channel 1 the iris rings.
Image render_sketch(const FaceModel& model, const Vertices& posed, const Fragments& frag,
                    const ProjectiveCamera& camera, const SketchOptions& options = {});
Image render_sketch(const FaceModel& model, const FaceParams& params, const ProjectiveCamera& camera,
                    const SketchOptions& options = {});

/// Flow at every covered driving pixel: barycentric interpolation (driving
/// fragments) of screen_ref - screen_dri over the triangle's vertices.
/// Channels are (dx, dy); zero off the driving foreground.
Image flow_from_projections(const Fragments& frag_dri, const std::vector<Triangle>& triangles,
                            const Vertices& screen_ref, const Vertices& screen_dri);

struct FlowResult {
  Image flow;
  Image foreground;
};

/// F_3DMM between a reference and a driving parameter set. The driving mesh
/// is rasterized with `camera`; reference vertices are projected with
/// `camera_ref` when given (else `camera`).
FlowResult flow_3dmm(const FaceModel& model, const FaceParams& ref, const FaceParams& dri,
                     const ProjectiveCamera& camera,
                     const std::optional<ProjectiveCamera>& camera_ref = std::nullopt);

/// P, S and foreground of the driving frame plus F_3DMM from the reference.
RenderMaps render_maps(const FaceModel& model, const FaceParams& ref, const FaceParams& dri,
                       const ProjectiveCamera& camera, const SketchOptions& options = {});

/// Foreground mask as a 1-channel image.
Image foreground_image(const Fragments& frag);

/// Even-odd fill of a closed screen polygon, sampled at pixel centers.
Image fill_polygon(const std::vector<Eigen::Vector2d>& polygon, int height, int width);

/// Binary dilation with a disc of `radius` pixels (values > 0.5 are set).
Image dilate(const Image& mask, double radius);

/// 1 where the pixel center lies within `radius` px of the polyline.
Image polyline_band(const std::vector<Eigen::Vector2d>& points, bool closed, double radius, int height,
                    int width);

/// Pixels within `radius` px of a foreground/background transition.
Image boundary_ring(const Image& foreground, double radius);

/// FMAP container: magic "FMAP", uint32 header length, JSON header
/// {channels, height, width, tag}, float32 row-major planes.
void save_fmap(const Image& image, const std::string& tag, const std::string& path);
Image load_fmap(const std::string& path, std::string* tag = nullptr);
std::vector<char> encode_fmap(const Image& image, const std::string& tag);
Image decode_fmap(std::vector<char> bytes, std::string* tag = nullptr);

}  // namespace facesync
