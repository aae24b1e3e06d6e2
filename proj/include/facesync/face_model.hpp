#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "facesync/rotation.hpp"

namespace facesync {

/// N x 3 vertex positions, one row per vertex.
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangle = std::array<int, 3>;

struct VertexRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
  bool contains(int v) const { return v >= begin && v < end; }
  bool operator==(const VertexRange&) const = default;
};

/// A landmark glued to the surface: point = sum_k bary[k] * v[tri[k]].
struct LandmarkBinding {
  int triangle = 0;
  std::array<double, 3> bary{1.0, 0.0, 0.0};
  bool operator==(const LandmarkBinding&) const = default;
};

/// Named vertex chain used for sketches and masks. `kind` is one of
/// "contour", "jawline" or "inner_lip".
struct Polyline {
  std::string name;
  std::string kind = "contour";
  bool closed = false;
  std::vector<int> vertices;
  bool operator==(const Polyline&) const = default;
};

inline constexpr int kNumLandmarks = 78;
inline constexpr int kNumFaceLandmarks = 68;
inline constexpr int kNumMouthBlendshapes = 35;

/// Linear FACS blendshape face model with two eyeball sub-meshes.
/// Immutable after construction; safe to share across threads.
struct FaceModel {
  Eigen::VectorXf mean;         // 3N, xyz interleaved
  Eigen::MatrixXf identity;     // 3N x n_identity
  Eigen::MatrixXf blendshapes;  // 3N x n_blendshapes
  std::vector<Triangle> triangles;
  std::vector<std::string> blendshape_names;
  VertexRange eyeball_right;
  VertexRange eyeball_left;
  std::vector<int> iris_right;
  std::vector<int> iris_left;
  std::vector<int> symmetry;  // mirror partner of each vertex
  std::vector<LandmarkBinding> landmarks;
  std::vector<Polyline> polylines;

  int num_vertices() const { return static_cast<int>(mean.size() / 3); }
  int num_identity() const { return static_cast<int>(identity.cols()); }
  int num_blendshapes() const { return static_cast<int>(blendshapes.cols()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }

  /// Index of a blendshape by name, or -1.
  int blendshape_index(const std::string& name) const;
  const Polyline* polyline(const std::string& name) const;
  bool is_eyeball_vertex(int v) const {
    return eyeball_right.contains(v) || eyeball_left.contains(v);
  }
  Vertices mean_vertices() const;

  /// Throws FormatError describing the first violated invariant.
  void validate() const;

  bool operator==(const FaceModel&) const;
};

/// Per-frame model state.
struct FaceParams {
  Eigen::VectorXd alpha;  // identity
  Eigen::VectorXd beta;   // blendshape weights, nominally in [0, 1]
  Vector6d rot_head = rot6d_identity();
  Eigen::Vector3d trans_head = Eigen::Vector3d::Zero();
  Vector6d rot_eye_right = rot6d_identity();
  Vector6d rot_eye_left = rot6d_identity();

  /// Zero identity/expression, identity pose.
  static FaceParams neutral(const FaceModel& model);
};

/// mean + identity * alpha + blendshapes * beta, before any rotation.
Vertices evaluate_shape(const FaceModel& model, const Eigen::VectorXd& alpha,
                        const Eigen::VectorXd& beta);

/// Full evaluation: shape, eyeballs rotated about their centroids, then the
/// rigid head transform. Throws DimensionError on size mismatch.
Vertices evaluate_mesh(const FaceModel& model, const FaceParams& params);

/// Centroid of a vertex range of an evaluated shape.
Eigen::Vector3d range_centroid(const Vertices& v, const VertexRange& range);

/// Points of the landmark embedding on an evaluated mesh (78 x 3).
Vertices landmark_points(const FaceModel& model, const Vertices& mesh);

// --- gaze coupling -------------------------------------------------------

enum class Eye { kRight, kLeft };

struct GazeAngles {
  double theta_h = 0.0;  // radians
  double theta_v = 0.0;
  double th_max = 30.0 * 3.14159265358979323846 / 180.0;
  double tv_max = 30.0 * 3.14159265358979323846 / 180.0;
};

/// Gaze blendshape weights of one eye.
struct EyeGazeWeights {
  double look_in = 0.0;
  double look_out = 0.0;
  double look_up = 0.0;
  double look_down = 0.0;
  bool operator==(const EyeGazeWeights&) const = default;
};

/// Horizontal/vertical angles of the gaze direction (third column of the
/// eyeball rotation): theta_h = atan2(d_x, d_z), theta_v = atan2(d_y, d_z).
/// Throws DegenerateError if `rot` is not a proper rotation.
GazeAngles gaze_angles(const Eigen::Matrix3d& rot, double th_max, double tv_max);

EyeGazeWeights gaze_to_blendshapes(const GazeAngles& gaze, Eye eye = Eye::kRight);
EyeGazeWeights gaze_to_blendshapes(const Eigen::Matrix3d& rot, double th_max, double tv_max,
                                   Eye eye = Eye::kRight);

/// Inverse mapping; throws Error when both members of an opposing pair are
/// nonzero.
GazeAngles blendshapes_to_gaze(const EyeGazeWeights& w, double th_max, double tv_max,
                               Eye eye = Eye::kRight);

/// A rotation whose gaze direction has the given angles (|angles| < 90 deg).
Eigen::Matrix3d gaze_rotation(const GazeAngles& gaze);

/// Writes eyeLook{In,Out,Up,Down}_{R,L} of `params.beta` from the decoded
/// eye rotations. Blendshapes missing from the model are skipped.
void couple_gaze_blendshapes(const FaceModel& model, FaceParams& params, double th_max,
                             double tv_max);

// --- mouth subset --------------------------------------------------------

/// Blendshape indices selected by name prefix (jaw, mouth, cheek, nose).
std::vector<int> default_mouth_indices(const FaceModel& model);

/// Resolves a user-supplied list of names; throws on unknown names.
std::vector<int> mouth_indices_from_names(const FaceModel& model,
                                          const std::vector<std::string>& names);

/// Throws unless `indices` holds exactly 35 distinct entries in [0, n).
void check_mouth_indices(const std::vector<int>& indices, int num_blendshapes);

/// Copy of `target` whose beta takes `mouth_values` at `indices`.
FaceParams fuse_mouth(const FaceParams& target, const Eigen::VectorXd& mouth_values,
                      const std::vector<int>& indices);

/// Mouth entries of beta in index-set order.
Eigen::VectorXd extract_mouth(const FaceParams& params, const std::vector<int>& indices);

/// mean(max(|beta - 0.5|, 0.5) - 0.5): zero exactly on [0, 1]^n.
double constraint_violation(const Eigen::VectorXd& beta);

}  // namespace facesync
