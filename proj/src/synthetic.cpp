#include "facesync/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "facesync/maps.hpp"
#include "facesync/model_io.hpp"

namespace facesync {

namespace {

constexpr double kRx = 7.5, kRy = 10.0, kRz = 8.5;
constexpr double kEyeX = 3.0, kEyeY = 2.0, kEyeRadius = 1.2;
constexpr double kMouthY = -4.5;
constexpr double kPi = std::numbers::pi;

double head_z(double x, double y) {
  const double q = 1.0 - x * x / (kRx * kRx) - y * y / (kRy * kRy);
  return q > 0.0 ? kRz * std::sqrt(q) : 0.0;
}

Eigen::Vector3d eye_center(double side) { return {side * kEyeX, kEyeY, head_z(kEyeX, kEyeY)}; }

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Compact displacement bump on the front of the head.
struct Bump {
  double cx, cy, sx, sy;
  Eigen::Vector3d d;
  double pinch = 0.0;  // extra displacement pinch * (x - cx, y - cy, 0)
  int gate = 0;        // -1: below the mouth line only, +1: above only

  Bump mirrored() const {
    Bump b = *this;
    b.cx = -cx;
    b.d.x() = -d.x();
    return b;
  }
};

Eigen::Vector3d bump_field(const Bump& b, const Eigen::Vector3d& p) {
  const double front = smoothstep((p.z() - 0.5) / 2.0);
  if (front <= 0.0) return Eigen::Vector3d::Zero();
  const double u = (p.x() - b.cx) / b.sx, v = (p.y() - b.cy) / b.sy;
  const double q = u * u + v * v;
  if (q >= 1.0) return Eigen::Vector3d::Zero();
  double w = (1.0 - q) * (1.0 - q) * front;
  if (b.gate < 0) w *= smoothstep((kMouthY + 0.2 - p.y()) / 0.4);
  if (b.gate > 0) w *= smoothstep((p.y() - (kMouthY - 0.2)) / 0.4);
  return w * (b.d + b.pinch * Eigen::Vector3d(p.x() - b.cx, p.y() - b.cy, 0.0));
}

struct ShapeDef {
  std::string name;
  std::vector<Bump> bumps;
};

Eigen::Vector3d v3(double x, double y, double z) { return {x, y, z}; }

// Left-side definitions (+x); right-side versions are mirrored.
std::vector<ShapeDef> shape_definitions() {
  std::vector<ShapeDef> out;
  const auto pair = [&](const std::string& stem, std::vector<Bump> left) {
    std::vector<Bump> right;
    for (const auto& b : left) right.push_back(b.mirrored());
    out.push_back({stem + "_L", left});
    out.push_back({stem + "_R", right});
  };
  const auto single = [&](const std::string& name, std::vector<Bump> bumps) { out.push_back({name, bumps}); };

  const auto mirror = [](std::vector<Bump> bumps) {
    for (auto& b : bumps) b = b.mirrored();
    return bumps;
  };
  const std::vector<Bump> jaw_left = {{1.5, -6.5, 5.5, 4.0, v3(0.8, 0, 0), 0.0, -1}};
  const std::vector<Bump> mouth_left = {{1.0, kMouthY, 3.0, 2.0, v3(0.7, 0, 0)}};

  // Supports are placed so each shape either moves the landmarks in a
  // pattern no other combination reproduces, or leaves them untouched.
  pair("browDown", {{3.2, 4.0, 2.2, 1.2, v3(-0.15, -0.4, 0)}});
  pair("browInnerUp", {{1.6, 4.2, 1.4, 1.2, v3(0, 0.45, 0)}});
  pair("browOuterUp", {{4.6, 4.2, 1.4, 1.2, v3(0.1, 0.4, 0)}});
  pair("cheekPuff", {{4.0, -2.4, 1.3, 1.3, v3(0.25, 0, 0.25)}});
  pair("cheekSquint", {{3.4, -0.6, 1.5, 1.1, v3(0, 0.3, 0)}});
  pair("eyeBlink", {{kEyeX, kEyeY, 2.4, 2.4, v3(0, 0, 2.4)},
                    {kEyeX, kEyeY + 0.6, 1.8, 0.9, v3(0, -0.7, 0)},
                    {kEyeX, kEyeY - 0.6, 1.8, 0.9, v3(0, 0.2, 0)}});
  pair("eyeLookDown", {{kEyeX, kEyeY - 0.5, 2.0, 1.0, v3(0, -0.4, 0)}});
  pair("eyeLookIn", {{kEyeX - 1.0, kEyeY, 0.9, 1.2, v3(-0.4, 0, 0)}});
  pair("eyeLookOut", {{kEyeX + 1.0, kEyeY, 0.9, 1.2, v3(0.4, 0, 0)}});
  pair("eyeLookUp", {{kEyeX, kEyeY, 2.2, 1.6, v3(0, 0.4, 0)}});
  pair("eyeSquint", {{kEyeX + 0.6, kEyeY - 0.7, 1.6, 0.9, v3(0, 0.45, 0)}});
  pair("eyeWide", {{kEyeX + 0.6, kEyeY + 0.9, 1.4, 0.8, v3(0, 0.5, 0.05)}});
  single("jawForward", {{0.0, -6.5, 5.5, 4.0, v3(0, 0, 0.8), -0.1, -1}});
  single("jawLeft", jaw_left);
  single("jawOpen", {{0.0, -6.5, 5.5, 4.0, v3(0, -1.0, -0.25), 0.0, -1}});
  single("jawRight", mirror(jaw_left));
  single("mouthClose", {{0.0, -4.9, 2.2, 0.6, v3(0, 0.5, 0), 0.0, -1}});
  pair("mouthDimple", {{2.9, kMouthY, 1.0, 1.0, v3(-0.35, -0.15, -0.3)}});
  pair("mouthFrown", {{2.4, -5.1, 1.4, 1.2, v3(0.2, -0.45, 0)}});
  single("mouthFunnel", {{0.0, -3.8, 2.2, 1.0, v3(0, 0.35, 0.4), 0.0, 1}, {0.0, -5.2, 2.2, 1.0, v3(0, -0.35, 0.4), 0.0, -1}});
  single("mouthLeft", mouth_left);
  pair("mouthLowerDown", {{1.0, -5.2, 1.6, 1.0, v3(0, -0.45, 0), 0.0, -1}});
  pair("mouthPress", {{1.2, -4.1, 1.3, 0.5, v3(0, -0.2, -0.2), 0.0, 1}, {1.2, -4.9, 1.3, 0.5, v3(0, 0.2, -0.2), 0.0, -1}});
  single("mouthPucker", {{1.6, kMouthY, 1.4, 1.6, v3(-0.35, 0, 0.35)}, {-1.6, kMouthY, 1.4, 1.6, v3(0.35, 0, 0.35)}});
  single("mouthRight", mirror(mouth_left));
  single("mouthRollLower", {{0.0, -5.6, 2.4, 0.5, v3(0, 0.45, -0.2), 0.0, -1}});
  single("mouthRollUpper", {{0.0, -3.4, 2.4, 0.5, v3(0, -0.45, -0.2), 0.0, 1}});
  single("mouthShrugLower", {{0.0, -7.0, 3.0, 2.4, v3(0, 0.5, 0.2), 0.0, -1}});
  single("mouthShrugUpper", {{0.0, -3.0, 2.6, 1.3, v3(0, 0.4, 0.15), 0.0, 1}});
  pair("mouthSmile", {{2.6, -3.9, 1.4, 1.2, v3(0.35, 0.45, 0)}});
  pair("mouthStretch", {{2.6, kMouthY, 1.0, 1.2, v3(0.45, -0.1, 0)}});
  pair("mouthUpperUp", {{1.0, -3.8, 1.6, 1.0, v3(0, 0.45, 0), 0.0, 1}});
  pair("noseSneer", {{0.9, -1.6, 1.1, 1.0, v3(0, 0.3, 0.05)}});
  pair("cheekRaiser", {{3.8, -1.6, 1.3, 1.1, v3(0.15, 0.25, 0.15)}});
  return out;
}

// Smooth identity field k evaluated at a point on (or inside) the head.
Eigen::Vector3d identity_field(int k, const Eigen::Vector3d& p) {
  static const std::vector<std::array<int, 3>> monomials = [] {
    std::vector<std::array<int, 3>> m;
    for (int deg = 0; deg <= 3; ++deg)
      for (int a = deg; a >= 0; --a)
        for (int b = deg - a; b >= 0; --b) m.push_back({a, b, deg - a - b});
    return m;
  }();
  const auto& e = monomials[k / 3];
  const Eigen::Vector3d h(p.x() / kRx, p.y() / kRy, p.z() / kRz);
  const double m = std::pow(h.x(), e[0]) * std::pow(h.y(), e[1]) * std::pow(h.z(), e[2]);
  Eigen::Vector3d dir;
  switch (k % 3) {
    case 0: dir = Eigen::Vector3d(p.x() / (kRx * kRx), p.y() / (kRy * kRy), p.z() / (kRz * kRz)).normalized(); break;
    case 1: dir = Eigen::Vector3d::UnitX(); break;
    default: dir = Eigen::Vector3d::UnitY(); break;
  }
  return 0.25 * m * dir;
}

struct HeadGrid {
  int lon, lat;
  int index(int ring, int k) const { return (ring - 1) * lon + ((k % lon) + lon) % lon; }
  int north() const { return (lat - 1) * lon; }
  int south() const { return (lat - 1) * lon + 1; }
  int count() const { return (lat - 1) * lon + 2; }
};

int nearest_front_vertex(const Vertices& v, int head_count, double x, double y) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < head_count; ++i) {
    if (v(i, 2) < 1.0) continue;
    const double d = (v(i, 0) - x) * (v(i, 0) - x) + (v(i, 1) - y) * (v(i, 1) - y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<int> curve_chain(const Vertices& v, int head_count, const std::vector<Eigen::Vector2d>& pts,
                             bool closed) {
  std::vector<int> chain;
  for (const auto& p : pts) {
    const int i = nearest_front_vertex(v, head_count, p.x(), p.y());
    if (chain.empty() || chain.back() != i) chain.push_back(i);
  }
  if (closed && chain.size() > 1 && chain.front() == chain.back()) chain.pop_back();
  return chain;
}

std::vector<Eigen::Vector2d> ellipse(double cx, double cy, double ax, double ay, int n) {
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < n; ++i) {
    const double a = kPi + 2.0 * kPi * i / n;  // starts at the image-left corner
    pts.emplace_back(cx + ax * std::cos(a), cy - ay * std::sin(a));
  }
  return pts;
}

std::vector<Eigen::Vector2d> polyline_samples(const std::vector<Eigen::Vector2d>& knots, int per_segment) {
  std::vector<Eigen::Vector2d> out;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    for (int s = 0; s < per_segment; ++s)
      out.push_back(knots[i] + (knots[i + 1] - knots[i]) * (static_cast<double>(s) / per_segment));
  out.push_back(knots.back());
  return out;
}

// Binds a front-view point to the frontmost head triangle containing it.
LandmarkBinding bind_surface_point(const Vertices& v, const std::vector<Triangle>& tris, int head_tris, double x,
                           double y) {
  LandmarkBinding best;
  double best_z = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (int t = 0; t < head_tris; ++t) {
    const auto& tri = tris[t];
    const Eigen::Vector2d a = v.row(tri[0]).head<2>(), b = v.row(tri[1]).head<2>(), c = v.row(tri[2]).head<2>();
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (std::abs(det) < 1e-12) continue;
    const double l1 = ((x - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (y - a.y())) / det;
    const double l2 = ((b.x() - a.x()) * (y - a.y()) - (x - a.x()) * (b.y() - a.y())) / det;
    const double l0 = 1.0 - l1 - l2;
    if (l0 < -1e-9 || l1 < -1e-9 || l2 < -1e-9) continue;
    const double z = l0 * v(tri[0], 2) + l1 * v(tri[1], 2) + l2 * v(tri[2], 2);
    if (z > best_z) {
      best_z = z;
      best.triangle = t;
      best.bary = {l0, l1, 1.0 - l0 - l1};
      found = true;
    }
  }
  if (!found) throw Error("synthetic rig: landmark outside the head");
  return best;
}

LandmarkBinding bind_vertex(const std::vector<Triangle>& tris, int first_tri, int vertex) {
  for (int t = first_tri; t < static_cast<int>(tris.size()); ++t)
    for (int k = 0; k < 3; ++k)
      if (tris[t][k] == vertex) {
        LandmarkBinding b;
        b.triangle = t;
        b.bary = {0.0, 0.0, 0.0};
        b.bary[k] = 1.0;
        return b;
      }
  throw Error("synthetic rig: vertex has no triangle");
}

// 68 front landmarks in model units (iBUG ordering, image x = model x).
std::vector<Eigen::Vector2d> face_landmark_layout() {
  std::vector<Eigen::Vector2d> p;
  for (int i = 0; i <= 16; ++i) {
    const double a = kPi * i / 16.0;
    p.emplace_back(-6.6 * std::cos(a), 2.0 - 10.6 * std::sin(a));
  }
  for (int i = 0; i < 5; ++i) p.emplace_back(-5.2 + i, 3.8 + 0.5 * std::sin(kPi * (i + 0.5) / 5.0));
  for (int i = 0; i < 5; ++i) p.emplace_back(1.2 + i, 3.8 + 0.5 * std::sin(kPi * (i + 0.5) / 5.0));
  for (int i = 0; i < 4; ++i) p.emplace_back(0.0, 2.0 - i);
  for (int i = 0; i < 5; ++i) p.emplace_back(-1.2 + 0.6 * i, -2.1 + 0.3 * std::abs(i - 2) / 2.0);
  const auto eye = [&](double cx, bool left) {
    const double a[6] = {180, 120, 60, 0, 300, 240};  // outer, top x2, inner, bottom x2 (right eye)
    for (double deg : a) {
      double r = deg * kPi / 180.0;
      double x = cx + 1.35 * std::cos(r);
      if (left) x = -x;
      p.emplace_back(x, kEyeY + 0.6 * std::sin(r));
    }
  };
  eye(-kEyeX, false);
  // Left eye starts at its inner corner: mirror of the right eye sequence
  // (inner, top-inner, top-outer, outer, bottom-outer, bottom-inner).
  {
    const double a[6] = {0, 60, 120, 180, 240, 300};
    for (double deg : a) {
      const double r = deg * kPi / 180.0;
      p.emplace_back(-(-kEyeX + 1.35 * std::cos(r)), kEyeY + 0.6 * std::sin(r));
    }
  }
  for (int i = 0; i < 12; ++i) {
    const double a = kPi - 2.0 * kPi * i / 12.0;
    p.emplace_back(2.5 * std::cos(a), kMouthY + 1.1 * std::sin(a));
  }
  for (int i = 0; i < 8; ++i) {
    const double a = kPi - 2.0 * kPi * i / 8.0;
    p.emplace_back(1.9 * std::cos(a), kMouthY + 0.5 * std::sin(a));
  }
  return p;
}

}  // namespace

const std::vector<std::string>& synthetic_blendshape_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& s : shape_definitions()) n.push_back(s.name);
    return n;
  }();
  return names;
}

FaceModel make_synthetic_rig(const SyntheticRigOptions& o) {
  if (o.head_lon < 8 || o.head_lon % 2 != 0 || o.head_lat < 8 || o.eye_lon < 8 || o.eye_lon % 2 != 0 ||
      o.eye_lat < 4)
    throw Error("synthetic rig: resolution too small or odd longitude count");
  const HeadGrid g{o.head_lon, o.head_lat};
  const int head_n = g.count();
  const int eye_n = (o.eye_lat - 1) * o.eye_lon + 2;
  const int n = head_n + 2 * eye_n;

  Vertices v(n, 3);
  for (int i = 1; i < g.lat; ++i) {
    const double th = kPi * i / g.lat;
    for (int k = 0; k <= g.lon / 2; ++k) {
      const double ph = 2.0 * kPi * k / g.lon;
      const double x = (k == 0 || 2 * k == g.lon) ? 0.0 : kRx * std::sin(th) * std::sin(ph);
      v.row(g.index(i, k)) << x, kRy * std::cos(th), kRz * std::sin(th) * std::cos(ph);
    }
    for (int k = g.lon / 2 + 1; k < g.lon; ++k) {
      v.row(g.index(i, k)) = v.row(g.index(i, g.lon - k));
      v(g.index(i, k), 0) = -v(g.index(i, k), 0);
    }
  }
  v.row(g.north()) << 0.0, kRy, 0.0;
  v.row(g.south()) << 0.0, -kRy, 0.0;

  std::vector<Triangle> tris;
  for (int k = 0; k < g.lon; ++k) tris.push_back({g.north(), g.index(1, k), g.index(1, k + 1)});
  for (int i = 1; i + 1 < g.lat; ++i)
    for (int k = 0; k < g.lon; ++k) {
      const int a = g.index(i, k), b = g.index(i, k + 1), c = g.index(i + 1, k), d = g.index(i + 1, k + 1);
      if (2 * k < g.lon) {
        tris.push_back({a, c, d});
        tris.push_back({a, d, b});
      } else {
        tris.push_back({a, c, b});
        tris.push_back({b, c, d});
      }
    }
  for (int k = 0; k < g.lon; ++k) tris.push_back({g.south(), g.index(g.lat - 1, k + 1), g.index(g.lat - 1, k)});
  const int head_tris = static_cast<int>(tris.size());

  // Eyeballs: UV spheres with poles on the z axis. The left eye is the exact
  // mirror of the right one, vertex for vertex.
  const int er = head_n, el = head_n + eye_n;
  const auto eye_index = [&](int base, int ring, int m) {
    if (ring == 0) return base;
    if (ring == o.eye_lat) return base + eye_n - 1;
    return base + 1 + (ring - 1) * o.eye_lon + ((m % o.eye_lon) + o.eye_lon) % o.eye_lon;
  };
  const Eigen::Vector3d cr = eye_center(-1.0);
  for (int ring = 0; ring <= o.eye_lat; ++ring) {
    const double th = kPi * ring / o.eye_lat;
    const int count = (ring == 0 || ring == o.eye_lat) ? 1 : o.eye_lon;
    for (int m = 0; m < count; ++m) {
      const double ph = 2.0 * kPi * m / o.eye_lon;
      const Eigen::Vector3d p =
          cr + kEyeRadius * Eigen::Vector3d(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
      v.row(eye_index(er, ring, m)) = p.transpose();
      v.row(eye_index(el, ring, m)) << -p.x(), p.y(), p.z();
    }
  }
  const auto eye_tris = [&](int base, bool flip) {
    const auto push = [&](int a, int b, int c) { tris.push_back(flip ? Triangle{a, c, b} : Triangle{a, b, c}); };
    for (int m = 0; m < o.eye_lon; ++m) push(eye_index(base, 0, 0), eye_index(base, 1, m), eye_index(base, 1, m + 1));
    for (int ring = 1; ring + 1 < o.eye_lat; ++ring)
      for (int m = 0; m < o.eye_lon; ++m) {
        const int a = eye_index(base, ring, m), b = eye_index(base, ring, m + 1);
        const int c = eye_index(base, ring + 1, m), d = eye_index(base, ring + 1, m + 1);
        push(a, c, d);
        push(a, d, b);
      }
    for (int m = 0; m < o.eye_lon; ++m)
      push(eye_index(base, o.eye_lat, 0), eye_index(base, o.eye_lat - 1, m + 1), eye_index(base, o.eye_lat - 1, m));
  };
  const int eye_tri_begin = static_cast<int>(tris.size());
  eye_tris(er, false);
  eye_tris(el, true);

  FaceModel model;
  model.triangles = tris;
  model.eyeball_right = {er, er + eye_n};
  model.eyeball_left = {el, el + eye_n};
  const int iris_ring = std::max(1, static_cast<int>(std::lround(o.eye_lat / 6.0)));
  for (int m = 0; m < o.eye_lon; ++m) {
    model.iris_right.push_back(eye_index(er, iris_ring, m));
    model.iris_left.push_back(eye_index(el, iris_ring, m));
  }

  model.symmetry.resize(n);
  for (int i = 1; i < g.lat; ++i)
    for (int k = 0; k < g.lon; ++k) model.symmetry[g.index(i, k)] = g.index(i, g.lon - k);
  model.symmetry[g.north()] = g.north();
  model.symmetry[g.south()] = g.south();
  for (int j = 0; j < eye_n; ++j) {
    model.symmetry[er + j] = el + j;
    model.symmetry[el + j] = er + j;
  }

  model.mean.resize(3 * n);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) model.mean[3 * i + c] = static_cast<float>(v(i, c));
  // Bases are evaluated at the float-rounded mean so that file round trips
  // and evaluation agree exactly.
  const Vertices vm = model.mean_vertices();

  constexpr int kIdentity = 50;
  model.identity.setZero(3 * n, kIdentity);
  const Eigen::Vector3d cl = eye_center(1.0);
  for (int k = 0; k < kIdentity; ++k) {
    for (int i = 0; i < head_n; ++i) {
      const Eigen::Vector3d f = identity_field(k, vm.row(i).transpose());
      for (int c = 0; c < 3; ++c) model.identity(3 * i + c, k) = static_cast<float>(f[c]);
    }
    const Eigen::Vector3d fr = identity_field(k, cr), fl = identity_field(k, cl);
    for (int j = 0; j < eye_n; ++j)
      for (int c = 0; c < 3; ++c) {
        model.identity(3 * (er + j) + c, k) = static_cast<float>(fr[c]);
        model.identity(3 * (el + j) + c, k) = static_cast<float>(fl[c]);
      }
  }

  const auto defs = shape_definitions();
  model.blendshapes.setZero(3 * n, static_cast<Eigen::Index>(defs.size()));
  for (std::size_t s = 0; s < defs.size(); ++s) {
    model.blendshape_names.push_back(defs[s].name);
    for (int i = 0; i < head_n; ++i) {
      Eigen::Vector3d f = Eigen::Vector3d::Zero();
      for (const auto& b : defs[s].bumps) f += bump_field(b, vm.row(i).transpose());
      for (int c = 0; c < 3; ++c) model.blendshapes(3 * i + c, s) = static_cast<float>(f[c]);
    }
  }

  // Landmarks: 68 on the head surface, then 5 per eye (center, ring at
  // 0, 90, 180, 270 degrees), right eye first.
  for (const auto& p : face_landmark_layout())
    model.landmarks.push_back(bind_surface_point(vm, tris, head_tris, p.x(), p.y()));
  for (int base : {er, el}) {
    model.landmarks.push_back(bind_vertex(tris, eye_tri_begin, eye_index(base, 0, 0)));
    for (int q = 0; q < 4; ++q)
      model.landmarks.push_back(bind_vertex(tris, eye_tri_begin, eye_index(base, iris_ring, q * o.eye_lon / 4)));
  }

  // Polylines.
  const auto add = [&](const std::string& name, const std::string& kind, bool closed, std::vector<int> verts) {
    model.polylines.push_back({name, kind, closed, std::move(verts)});
  };
  {
    std::vector<int> sil{g.north()};
    for (int i = 1; i < g.lat; ++i) sil.push_back(g.index(i, g.lon / 4));
    sil.push_back(g.south());
    for (int i = g.lat - 1; i >= 1; --i) sil.push_back(g.index(i, 3 * g.lon / 4));
    add("silhouette", "contour", true, sil);
    std::vector<int> jaw;
    for (int i = 1; i < g.lat; ++i)
      if (vm(g.index(i, 3 * g.lon / 4), 1) < -3.0) jaw.push_back(g.index(i, 3 * g.lon / 4));
    jaw.push_back(g.south());
    for (int i = g.lat - 1; i >= 1; --i)
      if (vm(g.index(i, g.lon / 4), 1) < -3.0) jaw.push_back(g.index(i, g.lon / 4));
    add("jawline", "jawline", false, jaw);
  }
  const auto lm = face_landmark_layout();
  const auto segment = [&](int a, int b) { return std::vector<Eigen::Vector2d>(lm.begin() + a, lm.begin() + b); };
  add("brow_right", "contour", false, curve_chain(vm, head_n, polyline_samples(segment(17, 22), 6), false));
  add("brow_left", "contour", false, curve_chain(vm, head_n, polyline_samples(segment(22, 27), 6), false));
  add("nose_bridge", "contour", false, curve_chain(vm, head_n, polyline_samples(segment(27, 31), 6), false));
  add("nose_base", "contour", false, curve_chain(vm, head_n, polyline_samples(segment(31, 36), 6), false));
  add("eye_right", "contour", true, curve_chain(vm, head_n, ellipse(-kEyeX, kEyeY, 1.35, 0.6, 48), true));
  add("eye_left", "contour", true, curve_chain(vm, head_n, ellipse(kEyeX, kEyeY, 1.35, 0.6, 48), true));
  add("outer_lip", "contour", true, curve_chain(vm, head_n, ellipse(0.0, kMouthY, 2.5, 1.1, 64), true));
  add("inner_lip", "inner_lip", true, curve_chain(vm, head_n, ellipse(0.0, kMouthY, 1.9, 0.5, 64), true));

  model.validate();
  return model;
}

FaceModel make_icosphere(int subdivisions, double radius) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> pts = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                                      {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                                      {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : pts) p.normalize();
  std::vector<Triangle> tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    const auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      pts.push_back(((pts[a] + pts[b]) * 0.5).normalized());
      return mid[key] = static_cast<int>(pts.size()) - 1;
    };
    std::vector<Triangle> next;
    for (const auto& t : tris) {
      const int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    tris = std::move(next);
  }
  const int n = static_cast<int>(pts.size());
  FaceModel m;
  m.triangles = tris;
  m.mean.resize(3 * n);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m.mean[3 * i + c] = static_cast<float>(radius * pts[i][c]);
  const Vertices vm = m.mean_vertices();
  m.symmetry = mirror_symmetry_map(vm, 1e-6 * radius);
  m.identity.resize(3 * n, 0);
  // Symmetric bumps along the normal, so expressions deform the sphere.
  const std::vector<Eigen::Vector3d> centers = {{0, 0, 1}, {0, 0.7, 0.7}, {0, -0.8, 0.6}, {0, 1, 0}};
  m.blendshapes.setZero(3 * n, static_cast<Eigen::Index>(centers.size()));
  for (std::size_t k = 0; k < centers.size(); ++k) {
    m.blendshape_names.push_back("bump" + std::to_string(k));
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p = vm.row(i).transpose() / radius;
      const double d2 = (p - centers[k].normalized()).squaredNorm();
      const double w = d2 < 0.5 ? (1.0 - d2 / 0.5) * (1.0 - d2 / 0.5) : 0.0;
      for (int c = 0; c < 3; ++c) m.blendshapes(3 * i + c, k) = static_cast<float>(0.3 * radius * w * p[c]);
    }
  }
  m.validate();
  return m;
}

Eigen::Vector3f synthetic_albedo(const Eigen::Vector3d& p) {
  for (double side : {-1.0, 1.0}) {
    const Eigen::Vector3d c = eye_center(side);
    const Eigen::Vector3d d = p - c;
    if (d.norm() < kEyeRadius * 1.05 && d.norm() > kEyeRadius * 0.9 && p.z() > head_z(p.x(), p.y()) - 1e-3) {
      const double ang = std::acos(std::clamp(d.z() / d.norm(), -1.0, 1.0));
      if (ang < 0.2) return {0.05f, 0.04f, 0.04f};
      if (ang < 0.5) return {0.30f, 0.20f, 0.12f};
      return {0.93f, 0.92f, 0.90f};
    }
  }
  const double mx = p.x() / 1.9, my = (p.y() - kMouthY) / 0.5;
  if (mx * mx + my * my < 1.0) return {0.25f, 0.06f, 0.08f};
  const double ox = p.x() / 2.5, oy = (p.y() - kMouthY) / 1.1;
  if (ox * ox + oy * oy < 1.0) return {0.72f, 0.32f, 0.32f};
  for (double side : {-1.0, 1.0}) {
    const double bx = (p.x() - side * 3.2) / 2.2, by = (p.y() - 4.1) / 0.35;
    if (bx * bx + by * by < 1.0) return {0.30f, 0.20f, 0.15f};
  }
  const double pattern = 0.05 * std::sin(1.7 * p.x()) * std::cos(1.3 * p.y()) + 0.03 * std::sin(0.9 * p.y() + 2.1 * p.z());
  return {static_cast<float>(0.86 + pattern), static_cast<float>(0.66 + pattern), static_cast<float>(0.56 + 0.5 * pattern)};
}

Image render_synthetic(const FaceModel& model, const Vertices& posed, const ProjectiveCamera& camera) {
  const Fragments frag = rasterize(posed, model.triangles, camera);
  const Image P = render_P(frag, model.triangles, model.mean_vertices());
  Image img(3, camera.height, camera.width);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      Eigen::Vector3f c;
      if (frag.foreground(y, x)) {
        c = synthetic_albedo({P.at(0, y, x), P.at(1, y, x), P.at(2, y, x)});
      } else {
        c = {static_cast<float>(0.25 + 0.2 * x / camera.width), 0.35f,
             static_cast<float>(0.45 + 0.2 * y / camera.height)};
      }
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch];
    }
  return img;
}

FaceParams random_params(const FaceModel& model, Rng& rng, double pose_scale) {
  FaceParams p = FaceParams::neutral(model);
  for (int i = 0; i < p.alpha.size(); ++i) p.alpha[i] = 0.5 * rng.normal();
  for (int i = 0; i < p.beta.size(); ++i) p.beta[i] = rng.uniform();
  const Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  const double angle = pose_scale * rng.uniform(-10.0, 10.0) * kPi / 180.0;
  p.rot_head = matrix_to_rot6d(axis_angle(axis.normalized(), angle));
  p.trans_head = pose_scale * Eigen::Vector3d(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-2.0, 2.0));
  for (Vector6d* eye : {&p.rot_eye_right, &p.rot_eye_left}) {
    GazeAngles g;
    g.theta_h = rng.uniform(-20.0, 20.0) * kPi / 180.0;
    g.theta_v = rng.uniform(-20.0, 20.0) * kPi / 180.0;
    *eye = matrix_to_rot6d(gaze_rotation(g));
  }
  return p;
}

std::vector<FaceParams> random_sequence(const FaceModel& model, Rng& rng, int frames, int key_spacing,
                                        double pose_scale) {
  if (frames < 1 || key_spacing < 1) throw Error("random_sequence: frames and key spacing must be positive");
  const int keys = (frames - 1 + key_spacing - 1) / key_spacing + 1;
  std::vector<FaceParams> key;
  for (int k = 0; k < keys; ++k) key.push_back(random_params(model, rng, pose_scale));
  const auto blend6 = [](const Vector6d& a, const Vector6d& b, double w) {
    const Eigen::Matrix3d m = (1 - w) * rot6d_to_matrix(a) + w * rot6d_to_matrix(b);
    return matrix_to_rot6d(rot6d_to_matrix(matrix_to_rot6d(m)));
  };
  std::vector<FaceParams> out(frames);
  for (int f = 0; f < frames; ++f) {
    const int k = std::min(f / key_spacing, keys - 2 < 0 ? 0 : keys - 2);
    const FaceParams& a = key[k];
    const FaceParams& b = key[std::min(k + 1, keys - 1)];
    const double s = static_cast<double>(f - k * key_spacing) / key_spacing;
    const double w = 0.5 - 0.5 * std::cos(kPi * std::clamp(s, 0.0, 1.0));
    FaceParams& p = out[f];
    p.alpha = key[0].alpha;
    p.beta = (1 - w) * a.beta + w * b.beta;
    p.trans_head = (1 - w) * a.trans_head + w * b.trans_head;
    p.rot_head = blend6(a.rot_head, b.rot_head, w);
    p.rot_eye_right = blend6(a.rot_eye_right, b.rot_eye_right, w);
    p.rot_eye_left = blend6(a.rot_eye_left, b.rot_eye_left, w);
  }
  return out;
}

}  // namespace facesync
