#include <doctest.h>

#include <cmath>

#include "facesync/camera.hpp"
#include "facesync/maps.hpp"
#include "facesync/raster.hpp"
#include "facesync/synthetic.hpp"

using namespace facesync;

namespace {

Vertices screen_tri(double x0, double y0, double x1, double y1, double x2, double y2, double z = 1.0) {
  Vertices v(3, 3);
  v << x0, y0, z, x1, y1, z, x2, y2, z;
  return v;
}

}  // namespace

TEST_CASE("rasterizer covers pixel centers inside a triangle") {
  const Vertices v = screen_tri(0, 0, 8, 0, 0, 8);
  const Fragments f = rasterize_screen(v, {{0, 1, 2}}, 8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      const bool inside = x + y < 8.0;
      CHECK(f.foreground(r, c) == inside);
      if (inside) {
        const double* b = f.bary_at(r, c);
        CHECK(std::abs(b[0] + b[1] + b[2] - 1.0) < 1e-12);
        CHECK(std::abs(b[1] - x / 8.0) < 1e-12);
        CHECK(std::abs(b[2] - y / 8.0) < 1e-12);
      }
    }
}

TEST_CASE("shared edges are covered exactly once") {
  // Two triangles splitting a square along a diagonal through pixel centers.
  Vertices v(4, 3);
  v << 0.5, 0.5, 1, 6.5, 0.5, 1, 6.5, 6.5, 1, 0.5, 6.5, 1;
  const std::vector<Triangle> both{{0, 1, 2}, {0, 2, 3}};
  const Fragments f = rasterize_screen(v, both, 8, 8);
  const Fragments a = rasterize_screen(v, {both[0]}, 8, 8);
  const Fragments b = rasterize_screen(v, {both[1]}, 8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(int(a.foreground(r, c)) + int(b.foreground(r, c)) == int(f.foreground(r, c)));
  CHECK(f.covered_count() == a.covered_count() + b.covered_count());
}

TEST_CASE("z-buffer keeps the nearer surface and breaks ties by index") {
  Vertices v(6, 3);
  v << 0, 0, 5, 8, 0, 5, 0, 8, 5, 0, 0, 2, 8, 0, 2, 0, 8, 2;
  const Fragments f = rasterize_screen(v, {{0, 1, 2}, {3, 4, 5}}, 8, 8);
  CHECK(f.face(1, 1) == 1);
  CHECK(f.depth_at(1, 1) == doctest::Approx(2.0));
  Vertices w = v;
  w.bottomRows(3).col(2).setConstant(5.0);
  const Fragments g = rasterize_screen(w, {{3, 4, 5}, {0, 1, 2}}, 8, 8);
  CHECK(g.face(1, 1) == 0);
  CHECK(g.depth_at(4, 7) == std::numeric_limits<double>::infinity());
}

TEST_CASE("degenerate and behind-camera triangles are skipped") {
  Vertices v = screen_tri(1, 1, 5, 5, 3, 3);
  CHECK(rasterize_screen(v, {{0, 1, 2}}, 8, 8).covered_count() == 0);
  Vertices w = screen_tri(0, 0, 8, 0, 0, 8);
  w(1, 2) = -1.0;
  CHECK(rasterize_screen(w, {{0, 1, 2}}, 8, 8).covered_count() == 0);
  CHECK(snap_coordinate(1.0) == 256);
}

TEST_CASE("perspective-correct barycentrics") {
  Vertices v(3, 3);
  v << 0, 0, 1, 16, 0, 4, 0, 16, 1;
  const Fragments f = rasterize_screen(v, {{0, 1, 2}}, 16, 16);
  const double* b = f.bary_at(0, 7);
  // Screen weights divided by depth, renormalized.
  const double x = 7.5, y = 0.5;
  const double s1 = x / 16.0, s2 = y / 16.0, s0 = 1.0 - s1 - s2;
  const double w0 = s0 / 1.0, w1 = s1 / 4.0, w2 = s2 / 1.0, n = w0 + w1 + w2;
  CHECK(std::abs(b[0] - w0 / n) < 1e-12);
  CHECK(std::abs(b[1] - w1 / n) < 1e-12);
  CHECK(std::abs(f.depth_at(0, 7) - 1.0 / (s0 / 1.0 + s1 / 4.0 + s2 / 1.0)) < 1e-9);
}

TEST_CASE("P map interpolates facial coordinates") {
  const FaceModel m = make_icosphere(2);
  ProjectiveCamera cam = ProjectiveCamera::looking_at_origin(64, 64, 120.0, 5.0);
  const Vertices world = m.mean_vertices();
  const Fragments f = rasterize(world, m.triangles, cam);
  const Image P = render_P(f, m.triangles, world);
  CHECK(P.channels == 3);
  int checked = 0;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      if (!f.foreground(r, c)) {
        CHECK(P.at(0, r, c) == 0.0f);
        continue;
      }
      const Triangle& t = m.triangles[f.face(r, c)];
      const double* b = f.bary_at(r, c);
      for (int k = 0; k < 3; ++k) {
        const double e = b[0] * world(t[0], k) + b[1] * world(t[1], k) + b[2] * world(t[2], k);
        CHECK(std::abs(P.at(k, r, c) - e) < 1e-5);
      }
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("flow is zero for identical parameters and tracks a camera shift") {
  const FaceModel m = make_icosphere(2);
  const FaceParams p = FaceParams::neutral(m);
  const ProjectiveCamera cam = ProjectiveCamera::looking_at_origin(64, 64, 120.0, 5.0);
  const FlowResult same = flow_3dmm(m, p, p, cam);
  for (float x : same.flow.data) CHECK(x == 0.0f);
  const FlowResult shift = flow_3dmm(m, p, p, cam, cam.shifted(3.0, -2.0));
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      if (same.foreground.at(0, r, c) == 0.0f) continue;
      CHECK(std::abs(shift.flow.at(0, r, c) - 3.0) < 1e-4);
      CHECK(std::abs(shift.flow.at(1, r, c) + 2.0) < 1e-4);
    }
}

TEST_CASE("sketch strokes follow a Gaussian profile with a hard cutoff") {
  Image out(1, 8, 16);
  Vertices pts(2, 3);
  pts << 0.0, 4.0, 1.0, 16.0, 4.0, 1.0;
  draw_strokes(out, 0, pts, {Stroke{{0, 1}, false}}, nullptr, SketchOptions{});
  // Pixel centers sit 0.5 px from the stroke in rows 3 and 4, 1.5 px in rows 2 and 5.
  CHECK(out.at(0, 4, 5) == doctest::Approx(std::exp(-0.25 / (2 * 0.25))).epsilon(1e-5));
  CHECK(out.at(0, 3, 5) == doctest::Approx(std::exp(-0.25 / (2 * 0.25))).epsilon(1e-5));
  CHECK(out.at(0, 2, 5) == 0.0f);
  CHECK(out.at(0, 5, 5) == 0.0f);
}

TEST_CASE("mask helpers") {
  const Image poly = fill_polygon({{1, 1}, {5, 1}, {5, 5}, {1, 5}}, 8, 8);
  CHECK(poly.at(0, 2, 2) == 1.0f);
  CHECK(poly.at(0, 6, 6) == 0.0f);
  Image dot(1, 9, 9);
  dot.at(0, 4, 4) = 1.0f;
  const Image d = dilate(dot, 2.0);
  CHECK(d.at(0, 4, 6) == 1.0f);
  CHECK(d.at(0, 6, 6) == 0.0f);
  Image big(1, 12, 12);
  for (int y = 1; y < 11; ++y)
    for (int x = 1; x < 11; ++x) big.at(0, y, x) = 1.0f;
  const Image ring = boundary_ring(big, 1.0);
  CHECK(ring.at(0, 1, 5) == 1.0f);
  CHECK(ring.at(0, 0, 5) == 1.0f);
  CHECK(ring.at(0, 2, 5) == 1.0f);
  CHECK(ring.at(0, 5, 5) == 0.0f);
}

TEST_CASE("map container round trip") {
  Image img(2, 3, 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = 0.25f * i;
  std::string tag;
  CHECK(decode_fmap(encode_fmap(img, "flow"), &tag) == img);
  CHECK(tag == "flow");
  std::vector<char> bad = encode_fmap(img, "flow");
  bad.pop_back();
  CHECK_THROWS_AS(decode_fmap(bad), FormatError);
}
