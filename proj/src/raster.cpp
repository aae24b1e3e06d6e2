#include "facesync/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "facesync/common.hpp"

namespace facesync {

namespace {

constexpr double kMaxCoordinate = 1 << 20;
constexpr std::int64_t kOne = 1 << kSubpixelBits;
constexpr int kBandRows = 16;

struct SetupTriangle {
  int index;
  std::int64_t x[3], y[3];  // snapped, orientation normalized (area > 0)
  int order[3];             // original vertex slot of each normalized slot
  double inv_z[3];          // by normalized slot
  std::int64_t area;
  bool top_left[3];         // edge k runs from slot k to slot k+1
  int row_min, row_max, col_min, col_max;
};

bool is_top_left(std::int64_t dx, std::int64_t dy) { return dy < 0 || (dy == 0 && dx > 0); }

std::int64_t edge(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by,
                  std::int64_t px, std::int64_t py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Pixel center of column/row in snapped units: (i + 0.5) * 256.
std::int64_t center(int i) { return static_cast<std::int64_t>(i) * kOne + kOne / 2; }

bool setup(const Vertices& screen, const Triangle& tri, int index, int height, int width,
           SetupTriangle* out) {
  double z[3];
  for (int k = 0; k < 3; ++k) {
    const double sx = screen(tri[k], 0), sy = screen(tri[k], 1);
    z[k] = screen(tri[k], 2);
    if (!std::isfinite(sx) || !std::isfinite(sy) || !(z[k] > 0.0)) return false;
    if (std::abs(sx) > kMaxCoordinate || std::abs(sy) > kMaxCoordinate) return false;
  }
  std::int64_t x[3], y[3];
  for (int k = 0; k < 3; ++k) {
    x[k] = snap_coordinate(screen(tri[k], 0));
    y[k] = snap_coordinate(screen(tri[k], 1));
  }
  std::int64_t area = edge(x[0], y[0], x[1], y[1], x[2], y[2]);
  if (area == 0) return false;
  int order[3] = {0, 1, 2};
  if (area < 0) {
    std::swap(order[1], order[2]);
    area = -area;
  }
  out->index = index;
  out->area = area;
  for (int k = 0; k < 3; ++k) {
    out->x[k] = x[order[k]];
    out->y[k] = y[order[k]];
    out->order[k] = order[k];
    out->inv_z[k] = 1.0 / z[order[k]];
  }
  for (int k = 0; k < 3; ++k) {
    const int n = (k + 1) % 3;
    out->top_left[k] = is_top_left(out->x[n] - out->x[k], out->y[n] - out->y[k]);
  }
  const auto lo = [](std::int64_t v) {  // smallest pixel whose center >= v
    return static_cast<int>(std::ceil((static_cast<double>(v) - kOne / 2) / kOne));
  };
  const auto hi = [](std::int64_t v) {  // largest pixel whose center <= v
    return static_cast<int>(std::floor((static_cast<double>(v) - kOne / 2) / kOne));
  };
  out->col_min = std::max(0, lo(std::min({out->x[0], out->x[1], out->x[2]})));
  out->col_max = std::min(width - 1, hi(std::max({out->x[0], out->x[1], out->x[2]})));
  out->row_min = std::max(0, lo(std::min({out->y[0], out->y[1], out->y[2]})));
  out->row_max = std::min(height - 1, hi(std::max({out->y[0], out->y[1], out->y[2]})));
  return out->col_min <= out->col_max && out->row_min <= out->row_max;
}

void raster_band(const std::vector<SetupTriangle>& tris, const std::vector<int>& members, int row_begin,
                 int row_end, Fragments& frag) {
  for (int ti : members) {
    const SetupTriangle& t = tris[ti];
    const int r0 = std::max(row_begin, t.row_min), r1 = std::min(row_end - 1, t.row_max);
    for (int row = r0; row <= r1; ++row) {
      const std::int64_t py = center(row);
      for (int col = t.col_min; col <= t.col_max; ++col) {
        const std::int64_t px = center(col);
        // w[k] is the edge opposite slot k, i.e. the unnormalized weight of slot k.
        std::int64_t w[3];
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) {
          const int a = (k + 1) % 3, b = (k + 2) % 3;
          w[k] = edge(t.x[a], t.y[a], t.x[b], t.y[b], px, py);
          inside = w[k] > 0 || (w[k] == 0 && t.top_left[a]);
        }
        if (!inside) continue;
        double pc[3], sum = 0.0;
        for (int k = 0; k < 3; ++k) {
          pc[k] = (static_cast<double>(w[k]) / static_cast<double>(t.area)) * t.inv_z[k];
          sum += pc[k];
        }
        const double z = 1.0 / sum;
        const std::size_t pix = static_cast<std::size_t>(row) * frag.width + col;
        if (!(z < frag.depth[pix])) continue;
        frag.depth[pix] = z;
        frag.pix_to_face[pix] = t.index;
        for (int k = 0; k < 3; ++k) frag.bary[3 * pix + t.order[k]] = pc[k] / sum;
      }
    }
  }
}

}  // namespace

std::size_t Fragments::covered_count() const {
  return static_cast<std::size_t>(
      std::count_if(pix_to_face.begin(), pix_to_face.end(), [](int f) { return f >= 0; }));
}

std::int64_t snap_coordinate(double pixels) { return std::llround(pixels * kOne); }

Fragments rasterize_screen(const Vertices& screen, const std::vector<Triangle>& triangles, int height,
                           int width) {
  if (height < 1 || width < 1) throw Error("rasterize: image size must be at least 1x1");
  Fragments frag;
  frag.height = height;
  frag.width = width;
  const std::size_t npix = static_cast<std::size_t>(height) * width;
  frag.pix_to_face.assign(npix, -1);
  frag.bary.assign(3 * npix, 0.0);
  frag.depth.assign(npix, std::numeric_limits<double>::infinity());

  std::vector<SetupTriangle> tris;
  tris.reserve(triangles.size());
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    for (int v : triangles[i])
      if (v < 0 || v >= screen.rows()) throw DimensionError("rasterize: triangle index out of range");
    SetupTriangle t;
    if (setup(screen, triangles[i], static_cast<int>(i), height, width, &t)) tris.push_back(t);
  }

  const int bands = (height + kBandRows - 1) / kBandRows;
  std::vector<std::vector<int>> members(bands);
  for (std::size_t i = 0; i < tris.size(); ++i)
    for (int b = tris[i].row_min / kBandRows; b <= tris[i].row_max / kBandRows; ++b)
      members[b].push_back(static_cast<int>(i));
  parallel_for(0, bands, [&](std::size_t b) {
    const int r0 = static_cast<int>(b) * kBandRows;
    raster_band(tris, members[b], r0, std::min(height, r0 + kBandRows), frag);
  });
  return frag;
}

Fragments rasterize(const Vertices& world, const std::vector<Triangle>& triangles,
                    const ProjectiveCamera& camera) {
  const ScreenPoints s = project(world, camera);
  return rasterize_screen(s.xyz, triangles, camera.height, camera.width);
}

}  // namespace facesync
