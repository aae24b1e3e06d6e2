#include "facesync/face_model.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <set>

#include "facesync/common.hpp"

namespace facesync {

int FaceModel::blendshape_index(const std::string& name) const {
  const auto it = std::find(blendshape_names.begin(), blendshape_names.end(), name);
  return it == blendshape_names.end() ? -1 : static_cast<int>(it - blendshape_names.begin());
}

const Polyline* FaceModel::polyline(const std::string& name) const {
  for (const auto& p : polylines)
    if (p.name == name) return &p;
  return nullptr;
}

Vertices FaceModel::mean_vertices() const {
  const int n = num_vertices();
  Vertices v(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) v(i, c) = mean[3 * i + c];
  return v;
}

void FaceModel::validate() const {
  const int n = num_vertices();
  if (mean.size() % 3 != 0 || n == 0) throw FormatError("model: mean shape is empty or not xyz");
  if (identity.rows() != mean.size() || blendshapes.rows() != mean.size())
    throw FormatError("model: basis rows do not match vertex count");
  if (static_cast<int>(blendshape_names.size()) != num_blendshapes())
    throw FormatError("model: blendshape name count mismatch");
  for (const auto& t : triangles)
    for (int v : t)
      if (v < 0 || v >= n) throw FormatError("model: triangle index out of range");
  for (const auto* r : {&eyeball_right, &eyeball_left})
    if (r->begin < 0 || r->end > n || r->begin > r->end)
      throw FormatError("model: eyeball range out of bounds");
  for (const auto* ring : {&iris_right, &iris_left})
    for (int v : *ring)
      if (v < 0 || v >= n) throw FormatError("model: iris index out of range");
  if (static_cast<int>(symmetry.size()) != n) throw FormatError("model: symmetry map size mismatch");
  for (int i = 0; i < n; ++i) {
    const int j = symmetry[i];
    if (j < 0 || j >= n || symmetry[j] != i) throw FormatError("model: symmetry map is not an involution");
  }
  if (!landmarks.empty()) {
    if (static_cast<int>(landmarks.size()) != kNumLandmarks)
      throw FormatError("model: landmark embedding must have 78 entries");
    for (const auto& lm : landmarks) {
      if (lm.triangle < 0 || lm.triangle >= num_triangles())
        throw FormatError("model: landmark triangle out of range");
      if (std::abs(lm.bary[0] + lm.bary[1] + lm.bary[2] - 1.0) > 1e-6)
        throw FormatError("model: landmark barycentric weights do not sum to 1");
    }
  }
  for (const auto& p : polylines)
    for (int v : p.vertices)
      if (v < 0 || v >= n) throw FormatError("model: polyline index out of range");
}

bool FaceModel::operator==(const FaceModel& o) const {
  return mean.size() == o.mean.size() && mean == o.mean && identity.rows() == o.identity.rows() &&
         identity.cols() == o.identity.cols() && identity == o.identity &&
         blendshapes.rows() == o.blendshapes.rows() && blendshapes.cols() == o.blendshapes.cols() &&
         blendshapes == o.blendshapes && triangles == o.triangles &&
         blendshape_names == o.blendshape_names && eyeball_right == o.eyeball_right &&
         eyeball_left == o.eyeball_left && iris_right == o.iris_right && iris_left == o.iris_left &&
         symmetry == o.symmetry && landmarks == o.landmarks && polylines == o.polylines;
}

FaceParams FaceParams::neutral(const FaceModel& model) {
  FaceParams p;
  p.alpha = Eigen::VectorXd::Zero(model.num_identity());
  p.beta = Eigen::VectorXd::Zero(model.num_blendshapes());
  return p;
}

Vertices evaluate_shape(const FaceModel& model, const Eigen::VectorXd& alpha,
                        const Eigen::VectorXd& beta) {
  if (alpha.size() != model.num_identity())
    throw DimensionError("evaluate: alpha has " + std::to_string(alpha.size()) + " entries, model has " +
                         std::to_string(model.num_identity()));
  if (beta.size() != model.num_blendshapes())
    throw DimensionError("evaluate: beta has " + std::to_string(beta.size()) + " entries, model has " +
                         std::to_string(model.num_blendshapes()));
  const int n = model.num_vertices();
  Eigen::VectorXd flat = model.mean.cast<double>();
  for (int k = 0; k < alpha.size(); ++k)
    if (alpha[k] != 0.0) flat.noalias() += alpha[k] * model.identity.col(k).cast<double>();
  for (int k = 0; k < beta.size(); ++k)
    if (beta[k] != 0.0) flat.noalias() += beta[k] * model.blendshapes.col(k).cast<double>();
  Vertices v(n, 3);
  Eigen::Map<Eigen::VectorXd>(v.data(), 3 * n) = flat;
  return v;
}

Eigen::Vector3d range_centroid(const Vertices& v, const VertexRange& range) {
  if (range.size() <= 0) return Eigen::Vector3d::Zero();
  return v.middleRows(range.begin, range.size()).colwise().mean().transpose();
}

Vertices evaluate_mesh(const FaceModel& model, const FaceParams& params) {
  Vertices v = evaluate_shape(model, params.alpha, params.beta);
  const auto rotate_eye = [&](const VertexRange& range, const Vector6d& r6) {
    if (range.size() <= 0) return;
    const Eigen::Matrix3d rot = rot6d_to_matrix(r6);
    const Eigen::RowVector3d pivot = range_centroid(v, range).transpose();
    for (int i = range.begin; i < range.end; ++i)
      v.row(i) = (v.row(i) - pivot) * rot.transpose() + pivot;
  };
  rotate_eye(model.eyeball_right, params.rot_eye_right);
  rotate_eye(model.eyeball_left, params.rot_eye_left);

  const Eigen::Matrix3d head = rot6d_to_matrix(params.rot_head);
  const Eigen::RowVector3d t = params.trans_head.transpose();
  for (int i = 0; i < v.rows(); ++i) v.row(i) = v.row(i) * head.transpose() + t;
  return v;
}

Vertices landmark_points(const FaceModel& model, const Vertices& mesh) {
  Vertices out(static_cast<int>(model.landmarks.size()), 3);
  for (std::size_t l = 0; l < model.landmarks.size(); ++l) {
    const auto& lm = model.landmarks[l];
    const auto& tri = model.triangles[lm.triangle];
    out.row(l) = lm.bary[0] * mesh.row(tri[0]) + lm.bary[1] * mesh.row(tri[1]) +
                 lm.bary[2] * mesh.row(tri[2]);
  }
  return out;
}

// --- gaze --------------------------------------------------------------------

GazeAngles gaze_angles(const Eigen::Matrix3d& rot, double th_max, double tv_max) {
  if (!is_proper_rotation(rot, 1e-5)) throw DegenerateError("gaze: rotation is not proper");
  const Eigen::Vector3d d = rot.col(2);
  GazeAngles g;
  g.theta_h = std::atan2(d.x(), d.z());
  g.theta_v = std::atan2(d.y(), d.z());
  g.th_max = th_max;
  g.tv_max = tv_max;
  return g;
}

EyeGazeWeights gaze_to_blendshapes(const GazeAngles& gaze, Eye eye) {
  if (!(gaze.th_max > 0.0) || !(gaze.tv_max > 0.0)) throw Error("gaze: maxima must be positive");
  // The horizontal sign flips for the left eye so that "in" always means
  // towards the nose.
  const double norm_h = (eye == Eye::kRight ? 1.0 : -1.0) * gaze.theta_h / gaze.th_max;
  const double norm_v = gaze.theta_v / gaze.tv_max;
  EyeGazeWeights w;
  w.look_in = std::clamp(norm_h, 0.0, 1.0);
  w.look_out = -std::clamp(norm_h, -1.0, 0.0);
  w.look_up = std::clamp(norm_v, 0.0, 1.0);
  w.look_down = -std::clamp(norm_v, -1.0, 0.0);
  return w;
}

EyeGazeWeights gaze_to_blendshapes(const Eigen::Matrix3d& rot, double th_max, double tv_max,
                                   Eye eye) {
  return gaze_to_blendshapes(gaze_angles(rot, th_max, tv_max), eye);
}

GazeAngles blendshapes_to_gaze(const EyeGazeWeights& w, double th_max, double tv_max, Eye eye) {
  if (w.look_in != 0.0 && w.look_out != 0.0)
    throw Error("gaze: lookIn and lookOut are both nonzero");
  if (w.look_up != 0.0 && w.look_down != 0.0)
    throw Error("gaze: lookUp and lookDown are both nonzero");
  GazeAngles g;
  g.th_max = th_max;
  g.tv_max = tv_max;
  g.theta_h = (eye == Eye::kRight ? 1.0 : -1.0) * (w.look_in - w.look_out) * th_max;
  g.theta_v = (w.look_up - w.look_down) * tv_max;
  return g;
}

Eigen::Matrix3d gaze_rotation(const GazeAngles& gaze) {
  const Eigen::Vector3d d =
      Eigen::Vector3d(std::tan(gaze.theta_h), std::tan(gaze.theta_v), 1.0).normalized();
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  return Eigen::Quaterniond::FromTwoVectors(z, d).toRotationMatrix();
}

void couple_gaze_blendshapes(const FaceModel& model, FaceParams& params, double th_max,
                             double tv_max) {
  const auto write = [&](const Vector6d& r6, Eye eye, const char* suffix) {
    const EyeGazeWeights w = gaze_to_blendshapes(rot6d_to_matrix(r6), th_max, tv_max, eye);
    const std::pair<const char*, double> entries[] = {
        {"eyeLookIn", w.look_in}, {"eyeLookOut", w.look_out},
        {"eyeLookUp", w.look_up}, {"eyeLookDown", w.look_down}};
    for (const auto& [stem, value] : entries) {
      const int idx = model.blendshape_index(std::string(stem) + suffix);
      if (idx >= 0) params.beta[idx] = value;
    }
  };
  write(params.rot_eye_right, Eye::kRight, "_R");
  write(params.rot_eye_left, Eye::kLeft, "_L");
}

// --- mouth subset ------------------------------------------------------------

std::vector<int> default_mouth_indices(const FaceModel& model) {
  static const char* const kPrefixes[] = {"jaw", "mouth", "cheek", "nose"};
  std::vector<int> out;
  for (int i = 0; i < model.num_blendshapes(); ++i) {
    const std::string& name = model.blendshape_names[i];
    for (const char* p : kPrefixes)
      if (name.rfind(p, 0) == 0) {
        out.push_back(i);
        break;
      }
  }
  check_mouth_indices(out, model.num_blendshapes());
  return out;
}

std::vector<int> mouth_indices_from_names(const FaceModel& model,
                                          const std::vector<std::string>& names) {
  std::vector<int> out;
  out.reserve(names.size());
  for (const auto& n : names) {
    const int idx = model.blendshape_index(n);
    if (idx < 0) throw Error("mouth set: unknown blendshape '" + n + "'");
    out.push_back(idx);
  }
  check_mouth_indices(out, model.num_blendshapes());
  return out;
}

void check_mouth_indices(const std::vector<int>& indices, int num_blendshapes) {
  if (static_cast<int>(indices.size()) != kNumMouthBlendshapes)
    throw DimensionError("mouth set: expected 35 indices, got " + std::to_string(indices.size()));
  std::set<int> seen;
  for (int i : indices) {
    if (i < 0 || i >= num_blendshapes) throw DimensionError("mouth set: index out of range");
    if (!seen.insert(i).second) throw DimensionError("mouth set: duplicate index " + std::to_string(i));
  }
}

FaceParams fuse_mouth(const FaceParams& target, const Eigen::VectorXd& mouth_values,
                      const std::vector<int>& indices) {
  check_mouth_indices(indices, static_cast<int>(target.beta.size()));
  if (mouth_values.size() != static_cast<Eigen::Index>(indices.size()))
    throw DimensionError("fuse_mouth: value count does not match index set");
  FaceParams out = target;
  for (std::size_t k = 0; k < indices.size(); ++k) out.beta[indices[k]] = mouth_values[k];
  return out;
}

Eigen::VectorXd extract_mouth(const FaceParams& params, const std::vector<int>& indices) {
  Eigen::VectorXd out(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) out[k] = params.beta[indices[k]];
  return out;
}

double constraint_violation(const Eigen::VectorXd& beta) {
  if (beta.size() == 0) return 0.0;
  double sum = 0.0;
  for (double b : beta) sum += std::max(std::abs(b - 0.5), 0.5) - 0.5;
  return sum / static_cast<double>(beta.size());
}

}  // namespace facesync
