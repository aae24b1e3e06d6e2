#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "facesync/camera.hpp"

namespace facesync {

/// Per-pixel rasterization result, row-major H x W.
struct Fragments {
  int height = 0;
  int width = 0;
  std::vector<int> pix_to_face;  // triangle index or -1
  std::vector<double> bary;      // 3 per pixel, perspective-correct
  std::vector<double> depth;     // camera-space z, +inf on background

  int face(int row, int col) const { return pix_to_face[static_cast<std::size_t>(row) * width + col]; }
  bool foreground(int row, int col) const { return face(row, col) >= 0; }
  const double* bary_at(int row, int col) const {
    return &bary[3 * (static_cast<std::size_t>(row) * width + col)];
  }
  double depth_at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
  std::size_t covered_count() const;
};

/// Sub-pixel precision of the fixed-point vertex snapping (1/256 px).
inline constexpr int kSubpixelBits = 8;

/// Vertex position snapped to the rasterizer's fixed-point grid.
std::int64_t snap_coordinate(double pixels);

/// Z-buffered rasterization of screen-space triangles (x, y pixels, z depth).
/// A pixel is covered when its center lies inside the triangle, with the
/// top-left rule on shared edges; the nearest surface wins and ties go to
/// the lower triangle index. Triangles with a vertex at z <= 0, with
/// coordinates beyond +-2^20 px, or with zero snapped area are skipped.
/// Barycentrics are perspective-correct (screen-space weights divided by
/// vertex depth, renormalized) and depth is the perspective-correct z.
Fragments rasterize_screen(const Vertices& screen, const std::vector<Triangle>& triangles,
                           int height, int width);

/// Projects world-space vertices with `camera` and rasterizes them.
Fragments rasterize(const Vertices& world, const std::vector<Triangle>& triangles,
                    const ProjectiveCamera& camera);

}  // namespace facesync
