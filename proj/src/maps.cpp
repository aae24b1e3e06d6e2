#include "facesync/maps.hpp"

#include <algorithm>
#include <cmath>

#include "container.hpp"

namespace facesync {

Image render_P(const Fragments& frag, const std::vector<Triangle>& triangles,
               const Vertices& facial_coordinates) {
  Image P(3, frag.height, frag.width);
  for (int y = 0; y < frag.height; ++y)
    for (int x = 0; x < frag.width; ++x) {
      const int f = frag.face(y, x);
      if (f < 0) continue;
      const double* b = frag.bary_at(y, x);
      const Triangle& t = triangles[f];
      for (int c = 0; c < 3; ++c)
        P.at(c, y, x) = static_cast<float>(b[0] * facial_coordinates(t[0], c) +
                                           b[1] * facial_coordinates(t[1], c) +
                                           b[2] * facial_coordinates(t[2], c));
    }
  return P;
}

namespace {

bool stroke_point_visible(const Fragments& zb, double x, double y, double z, double bias) {
  const int cx = static_cast<int>(std::floor(x)), cy = static_cast<int>(std::floor(y));
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px < 0 || py < 0 || px >= zb.width || py >= zb.height) return true;
      if (!zb.foreground(py, px) || zb.depth_at(py, px) >= z - bias) return true;
    }
  return false;
}

void draw_segment(Image& out, int channel, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                  const Fragments* zb, const SketchOptions& o) {
  const Eigen::Vector2d p0 = a.head<2>(), p1 = b.head<2>();
  const Eigen::Vector2d d = p1 - p0;
  const double len2 = d.squaredNorm();
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(p0.x(), p1.x()) - o.cutoff)));
  const int x1 = std::min(out.width - 1, static_cast<int>(std::ceil(std::max(p0.x(), p1.x()) + o.cutoff)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(p0.y(), p1.y()) - o.cutoff)));
  const int y1 = std::min(out.height - 1, static_cast<int>(std::ceil(std::max(p0.y(), p1.y()) + o.cutoff)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Eigen::Vector2d c(x + 0.5, y + 0.5);
      const double t = len2 > 0.0 ? std::clamp((c - p0).dot(d) / len2, 0.0, 1.0) : 0.0;
      const Eigen::Vector2d q = p0 + t * d;
      const double dist = (c - q).norm();
      if (!(dist < o.cutoff)) continue;
      if (zb) {
        const double z = 1.0 / ((1.0 - t) / a.z() + t / b.z());
        if (!stroke_point_visible(*zb, q.x(), q.y(), z, o.depth_bias)) continue;
      }
      const float v = static_cast<float>(std::exp(-dist * dist / (2.0 * o.sigma * o.sigma)));
      float& dst = out.at(channel, y, x);
      dst = std::max(dst, v);
    }
}

}  // namespace

void draw_strokes(Image& out, int channel, const Vertices& screen, const std::vector<Stroke>& strokes,
                  const Fragments* zbuffer, const SketchOptions& options) {
  for (const auto& s : strokes) {
    const std::size_t n = s.vertices.size();
    if (n == 0) continue;
    const std::size_t segs = s.closed ? n : n - 1;
    for (std::size_t i = 0; i < std::max<std::size_t>(segs, 1); ++i) {
      const Eigen::Vector3d a = screen.row(s.vertices[i]).transpose();
      const Eigen::Vector3d b = screen.row(s.vertices[(i + 1) % n]).transpose();
      if (!(a.z() > 0.0) || !(b.z() > 0.0)) continue;
      draw_segment(out, channel, a, b, zbuffer, options);
    }
  }
}

Image render_sketch(const FaceModel& model, const Vertices& posed, const Fragments& frag,
                    const ProjectiveCamera& camera, const SketchOptions& options) {
  const ScreenPoints s = project(posed, camera);
  Image S(2, camera.height, camera.width);
  std::vector<Stroke> contours;
  for (const auto& p : model.polylines) contours.push_back({p.vertices, p.closed});
  draw_strokes(S, 0, s.xyz, contours, &frag, options);
  std::vector<Stroke> irises;
  if (!model.iris_right.empty()) irises.push_back({model.iris_right, true});
  if (!model.iris_left.empty()) irises.push_back({model.iris_left, true});
  draw_strokes(S, 1, s.xyz, irises, &frag, options);
  return S;
}

Image render_sketch(const FaceModel& model, const FaceParams& params, const ProjectiveCamera& camera,
                    const SketchOptions& options) {
  const Vertices posed = evaluate_mesh(model, params);
  const Fragments frag = rasterize(posed, model.triangles, camera);
  return render_sketch(model, posed, frag, camera, options);
}

Image flow_from_projections(const Fragments& frag_dri, const std::vector<Triangle>& triangles,
                            const Vertices& screen_ref, const Vertices& screen_dri) {
  if (screen_ref.rows() != screen_dri.rows())
    throw DimensionError("flow: reference and driving meshes differ in vertex count");
  Image flow(2, frag_dri.height, frag_dri.width);
  for (int y = 0; y < frag_dri.height; ++y)
    for (int x = 0; x < frag_dri.width; ++x) {
      const int f = frag_dri.face(y, x);
      if (f < 0) continue;
      const double* b = frag_dri.bary_at(y, x);
      const Triangle& t = triangles[f];
      for (int c = 0; c < 2; ++c) {
        const double ref = b[0] * screen_ref(t[0], c) + b[1] * screen_ref(t[1], c) + b[2] * screen_ref(t[2], c);
        const double dri = b[0] * screen_dri(t[0], c) + b[1] * screen_dri(t[1], c) + b[2] * screen_dri(t[2], c);
        flow.at(c, y, x) = static_cast<float>(ref - dri);
      }
    }
  return flow;
}

Image foreground_image(const Fragments& frag) {
  Image fg(1, frag.height, frag.width);
  for (int y = 0; y < frag.height; ++y)
    for (int x = 0; x < frag.width; ++x) fg.at(0, y, x) = frag.foreground(y, x) ? 1.0f : 0.0f;
  return fg;
}

FlowResult flow_3dmm(const FaceModel& model, const FaceParams& ref, const FaceParams& dri,
                     const ProjectiveCamera& camera, const std::optional<ProjectiveCamera>& camera_ref) {
  const Vertices v_ref = evaluate_mesh(model, ref);
  const Vertices v_dri = evaluate_mesh(model, dri);
  const ScreenPoints s_dri = project(v_dri, camera);
  const ScreenPoints s_ref = project(v_ref, camera_ref.value_or(camera));
  const Fragments frag = rasterize_screen(s_dri.xyz, model.triangles, camera.height, camera.width);
  return {flow_from_projections(frag, model.triangles, s_ref.xyz, s_dri.xyz), foreground_image(frag)};
}

RenderMaps render_maps(const FaceModel& model, const FaceParams& ref, const FaceParams& dri,
                       const ProjectiveCamera& camera, const SketchOptions& options) {
  const Vertices v_ref = evaluate_mesh(model, ref);
  const Vertices v_dri = evaluate_mesh(model, dri);
  const ScreenPoints s_dri = project(v_dri, camera);
  const ScreenPoints s_ref = project(v_ref, camera);
  const Fragments frag = rasterize_screen(s_dri.xyz, model.triangles, camera.height, camera.width);
  RenderMaps maps;
  maps.P = render_P(frag, model.triangles, model.mean_vertices());
  maps.S = render_sketch(model, v_dri, frag, camera, options);
  maps.flow = flow_from_projections(frag, model.triangles, s_ref.xyz, s_dri.xyz);
  maps.foreground = foreground_image(frag);
  return maps;
}

Image fill_polygon(const std::vector<Eigen::Vector2d>& polygon, int height, int width) {
  Image mask(1, height, width);
  const std::size_t n = polygon.size();
  if (n < 3) return mask;
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    std::vector<double> xs;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& a = polygon[i];
      const Eigen::Vector2d& b = polygon[(i + 1) % n];
      if ((a.y() <= py) != (b.y() <= py)) xs.push_back(a.x() + (py - a.y()) / (b.y() - a.y()) * (b.x() - a.x()));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
      for (int x = x0; x <= x1; ++x) mask.at(0, y, x) = 1.0f;
    }
  }
  return mask;
}

Image dilate(const Image& mask, double radius) {
  Image out(1, mask.height, mask.width);
  const int r = static_cast<int>(std::floor(radius));
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!(mask.at(0, y, x) > 0.5f)) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (dx * dx + dy * dy > radius * radius) continue;
          const int px = x + dx, py = y + dy;
          if (px >= 0 && py >= 0 && px < mask.width && py < mask.height) out.at(0, py, px) = 1.0f;
        }
    }
  return out;
}

Image polyline_band(const std::vector<Eigen::Vector2d>& points, bool closed, double radius, int height,
                    int width) {
  Image band(1, height, width);
  const std::size_t n = points.size();
  if (n == 0) return band;
  const std::size_t segs = closed ? n : std::max<std::size_t>(n - 1, 1);
  for (std::size_t i = 0; i < segs; ++i) {
    const Eigen::Vector2d p0 = points[i], p1 = points[(i + 1) % n];
    const Eigen::Vector2d d = p1 - p0;
    const double len2 = d.squaredNorm();
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(p0.x(), p1.x()) - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(p0.x(), p1.x()) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(p0.y(), p1.y()) - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(p0.y(), p1.y()) + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector2d c(x + 0.5, y + 0.5);
        const double t = len2 > 0.0 ? std::clamp((c - p0).dot(d) / len2, 0.0, 1.0) : 0.0;
        if ((c - (p0 + t * d)).norm() <= radius) band.at(0, y, x) = 1.0f;
      }
  }
  return band;
}

Image boundary_ring(const Image& foreground, double radius) {
  Image edge(1, foreground.height, foreground.width);
  for (int y = 0; y < foreground.height; ++y)
    for (int x = 0; x < foreground.width; ++x) {
      const bool fg = foreground.at(0, y, x) > 0.5f;
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& o : nb) {
        const int px = x + o[0], py = y + o[1];
        if (px < 0 || py < 0 || px >= foreground.width || py >= foreground.height) continue;
        if ((foreground.at(0, py, px) > 0.5f) != fg) {
          edge.at(0, y, x) = 1.0f;
          break;
        }
      }
    }
  return dilate(edge, radius);
}

// --- FMAP ----------------------------------------------------------------------

std::vector<char> encode_fmap(const Image& image, const std::string& tag) {
  detail::ByteWriter w;
  w.magic("FMAP");
  w.header({{"format", "FMAP"},
            {"version", 1},
            {"channels", image.channels},
            {"height", image.height},
            {"width", image.width},
            {"tag", tag}});
  for (float v : image.data) w.f32(v);
  return w.bytes();
}

Image decode_fmap(std::vector<char> bytes, std::string* tag) {
  detail::ByteReader r(std::move(bytes), "FMAP");
  r.expect_magic("FMAP");
  const nlohmann::json h = r.header();
  Image img;
  try {
    img = Image(h.at("channels").get<int>(), h.at("height").get<int>(), h.at("width").get<int>());
    if (tag) *tag = h.at("tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("FMAP: malformed header (") + e.what() + ")");
  }
  for (float& v : img.data) v = r.f32();
  r.expect_end();
  return img;
}

void save_fmap(const Image& image, const std::string& tag, const std::string& path) {
  detail::write_file(path, encode_fmap(image, tag));
}

Image load_fmap(const std::string& path, std::string* tag) {
  return decode_fmap(detail::read_file(path), tag);
}

}  // namespace facesync
