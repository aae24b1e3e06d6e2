#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/LU>

#include "facesync/camera.hpp"
#include "facesync/common.hpp"
#include "facesync/face_model.hpp"
#include "facesync/model_io.hpp"
#include "facesync/rotation.hpp"
#include "facesync/synthetic.hpp"

using namespace facesync;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const FaceModel& rig() {
  static const FaceModel m = make_synthetic_rig();
  return m;
}

}  // namespace

TEST_CASE("rng streams are reproducible and split independently") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  CHECK(Rng(42).uniform() != c.uniform());
  Rng s1 = Rng(7).split(1), s2 = Rng(7).split(2);
  CHECK(s1.normal() != s2.normal());
  double mean = 0.0, sq = 0.0;
  Rng n(5);
  for (int i = 0; i < 20000; ++i) {
    const double x = n.normal();
    mean += x;
    sq += x * x;
  }
  CHECK(std::abs(mean / 20000) < 0.03);
  CHECK(std::abs(sq / 20000 - 1.0) < 0.05);
}

TEST_CASE("parallel_for visits each index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(0, hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("rot6d decoding") {
  CHECK(rot6d_to_matrix(rot6d_identity()) == Eigen::Matrix3d::Identity());
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    Vector6d r;
    for (int i = 0; i < 6; ++i) r[i] = rng.normal();
    const Eigen::Matrix3d R = rot6d_to_matrix(r);
    CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-6);
    CHECK(std::abs(R.determinant() - 1.0) < 1e-6);
    CHECK((rot6d_to_matrix(3.7 * r) - R).norm() < 1e-6);
    CHECK((rot6d_to_matrix(matrix_to_rot6d(R)) - R).norm() < 1e-12);
    // Analytic Jacobian against central differences.
    Rot6dJacobian J;
    rot6d_to_matrix(r, &J);
    for (int k = 0; k < 6; ++k) {
      Vector6d p = r, m = r;
      p[k] += 1e-6;
      m[k] -= 1e-6;
      const Eigen::Matrix3d d = (rot6d_to_matrix(p) - rot6d_to_matrix(m)) / 2e-6;
      for (int c = 0; c < 3; ++c)
        for (int row = 0; row < 3; ++row) CHECK(std::abs(J(3 * c + row, k) - d(row, c)) < 1e-6);
    }
  }
  Vector6d parallel;
  parallel << 1, 0, 0, 2, 0, 0;
  CHECK_THROWS_AS(rot6d_to_matrix(parallel), DegenerateError);
}

TEST_CASE("projection") {
  ProjectiveCamera cam = ProjectiveCamera::looking_at_origin(224, 224, 1015.0, 110.0);
  const Eigen::Vector3d on_axis = project_point({0, 0, 0}, cam);
  CHECK(on_axis.x() == doctest::Approx(cam.cx));
  CHECK(on_axis.y() == doctest::Approx(cam.cy));
  const Eigen::Vector3d p(2.0, -3.0, 5.0);
  const Eigen::Vector3d c = cam.to_camera(p);
  const Eigen::Vector3d s = project_point(p, cam);
  CHECK(std::abs(s.x() - (cam.focal * c.x() / c.z() + cam.cx)) < 1e-9);
  CHECK(std::abs(s.y() - (cam.focal * c.y() / c.z() + cam.cy)) < 1e-9);
  ProjectiveCamera cam2 = cam;
  cam2.focal *= 2.0;
  const Eigen::Vector3d s2 = project_point(p, cam2);
  CHECK(std::abs((s2.x() - cam.cx) - 2.0 * (s.x() - cam.cx)) < 1e-9);
  // World y up maps to screen y down.
  CHECK(project_point({0, 1, 0}, cam).y() < cam.cy);
}

TEST_CASE("synthetic rig invariants") {
  const FaceModel& m = rig();
  CHECK_NOTHROW(m.validate());
  CHECK(m.num_blendshapes() == 55);
  CHECK(m.landmarks.size() == 78);
  for (const LandmarkBinding& b : m.landmarks) CHECK(std::abs(b.bary[0] + b.bary[1] + b.bary[2] - 1.0) < 1e-6);
  for (int v = 0; v < m.num_vertices(); ++v) CHECK(m.symmetry[m.symmetry[v]] == v);
  const std::vector<int> mouth = default_mouth_indices(m);
  CHECK(mouth.size() == 35);
  CHECK_NOTHROW(check_mouth_indices(mouth, m.num_blendshapes()));
}

TEST_CASE("evaluate_mesh linearity") {
  const FaceModel& m = rig();
  FaceParams p = FaceParams::neutral(m);
  CHECK(evaluate_mesh(m, p) == m.mean_vertices());
  const int j = m.blendshape_index("jawOpen");
  p.beta[j] = 1.0;
  const Vertices one = evaluate_mesh(m, p);
  double err = 0.0;
  for (int v = 0; v < m.num_vertices(); ++v)
    for (int c = 0; c < 3; ++c)
      err = std::max(err, std::abs(one(v, c) - (static_cast<double>(m.mean[3 * v + c]) +
                                                static_cast<double>(m.blendshapes(3 * v + c, j)))));
  CHECK(err < 1e-5);

  Rng rng(3);
  Eigen::VectorXd a1(m.num_identity()), a2(m.num_identity()), b(m.num_blendshapes()), z0;
  for (int i = 0; i < a1.size(); ++i) a1[i] = rng.normal(), a2[i] = rng.normal();
  for (int i = 0; i < b.size(); ++i) b[i] = rng.uniform();
  const Vertices mean = m.mean_vertices();
  const Vertices whole = evaluate_shape(m, a1 + a2, b);
  const Vertices parts = evaluate_shape(m, a1, Eigen::VectorXd::Zero(b.size())) +
                         evaluate_shape(m, a2, Eigen::VectorXd::Zero(b.size())) +
                         evaluate_shape(m, Eigen::VectorXd::Zero(a1.size()), b) - 2.0 * mean;
  CHECK((whole - parts).cwiseAbs().maxCoeff() < 1e-6);
  p.beta.resize(3);
  CHECK_THROWS_AS(evaluate_mesh(m, p), DimensionError);
}

TEST_CASE("gaze coupling") {
  const double lim = 30.0 * kDeg;
  CHECK(gaze_to_blendshapes(Eigen::Matrix3d::Identity(), lim, lim) == EyeGazeWeights{});
  GazeAngles g;
  g.theta_h = 15.0 * kDeg;
  const EyeGazeWeights w = gaze_to_blendshapes(gaze_rotation(g), lim, lim, Eye::kRight);
  CHECK(w.look_in == doctest::Approx(0.5));
  CHECK(w.look_out == 0.0);
  const EyeGazeWeights wl = gaze_to_blendshapes(gaze_rotation(g), lim, lim, Eye::kLeft);
  CHECK(wl.look_out == doctest::Approx(0.5));
  g.theta_h = 45.0 * kDeg;
  CHECK(gaze_to_blendshapes(gaze_rotation(g), lim, lim).look_in == 1.0);
  EyeGazeWeights half;
  half.look_in = 0.5;
  CHECK(blendshapes_to_gaze(half, lim, lim).theta_h == doctest::Approx(15.0 * kDeg));
  CHECK(blendshapes_to_gaze(EyeGazeWeights{}, lim, lim).theta_h == 0.0);
  EyeGazeWeights both;
  both.look_in = both.look_out = 0.2;
  CHECK_THROWS(blendshapes_to_gaze(both, lim, lim));
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    GazeAngles r;
    r.theta_h = rng.uniform(-lim, lim);
    r.theta_v = rng.uniform(-lim, lim);
    const GazeAngles back = blendshapes_to_gaze(gaze_to_blendshapes(gaze_rotation(r), lim, lim), lim, lim);
    CHECK(std::abs(back.theta_h - r.theta_h) < 1e-6);
    CHECK(std::abs(back.theta_v - r.theta_v) < 1e-6);
  }
}

TEST_CASE("fuse_mouth and constraint_violation") {
  const FaceModel& m = rig();
  Rng rng(4);
  FaceParams p = random_params(m, rng);
  const std::vector<int> idx = default_mouth_indices(m);
  const FaceParams same = fuse_mouth(p, extract_mouth(p, idx), idx);
  CHECK(same.beta == p.beta);
  const FaceParams zero = fuse_mouth(p, Eigen::VectorXd::Zero(35), idx);
  const std::set<int> in(idx.begin(), idx.end());
  for (int j = 0; j < m.num_blendshapes(); ++j) {
    if (in.count(j)) CHECK(zero.beta[j] == 0.0);
    else CHECK(zero.beta[j] == p.beta[j]);
  }
  CHECK(zero.alpha == p.alpha);
  CHECK_THROWS(fuse_mouth(p, Eigen::VectorXd::Zero(34), idx));

  CHECK(constraint_violation(Eigen::VectorXd::Constant(5, 0.3)) == 0.0);
  CHECK(constraint_violation(Eigen::VectorXd::Constant(1, 1.5)) == doctest::Approx(0.5));
  Eigen::VectorXd b(2);
  b << -0.25, 0.5;
  CHECK(constraint_violation(b) == doctest::Approx(0.125));
}

TEST_CASE("model container round trip and corruption") {
  const FaceModel m = make_icosphere(2);
  const FaceModel back = decode_model(encode_model(m));
  CHECK(back == m);
  const FaceModel& r = rig();
  CHECK(decode_model(encode_model(r)) == r);
  std::vector<char> bytes = encode_model(m);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_model(bytes), FormatError);
  std::vector<char> cut = encode_model(m);
  cut.resize(cut.size() / 2);
  CHECK_THROWS_AS(decode_model(cut), FormatError);
}

TEST_CASE("mirror symmetry map") {
  Vertices v(4, 3);
  v << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0.5, 2, 1;
  CHECK(mirror_symmetry_map(v, 1e-6) == std::vector<int>{1, 0, 2, 3});
}
