#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "facesync/camera.hpp"
#include "facesync/face_model.hpp"

namespace facesync {

/// Labels of one frame: 78 pixel positions (68 face + 10 iris) and their
/// visibility.
struct LandmarkFrame {
  int frame = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> points;
  std::vector<unsigned char> visible;

  int visible_count() const;
};

/// Per-frame labels at 25 fps.
using LandmarkTrack = std::vector<LandmarkFrame>;

/// JSON lines: {"frame": k, "points": [[x, y], ...78], "visible": [true, ...]}.
LandmarkTrack parse_landmarks_jsonl(const std::string& text);
std::string format_landmarks_jsonl(const LandmarkTrack& track);
LandmarkTrack load_landmarks(const std::string& path);
void save_landmarks(const LandmarkTrack& track, const std::string& path);

/// Projected landmark embedding of `params`; points outside the image or
/// behind the camera are flagged invisible.
LandmarkFrame render_landmarks(const FaceModel& model, const FaceParams& params, const ProjectiveCamera& camera,
                               int frame = 0);

// --- loss terms ----------------------------------------------------------

/// Mean squared pixel distance over visible landmarks. Throws Error when no
/// landmark is visible.
double landmark_loss(const FaceModel& model, const FaceParams& params, const LandmarkFrame& labels,
                     const ProjectiveCamera& camera);

/// |alpha|^2 + |beta|^2.
double regularizer(const FaceParams& params);

/// |alpha_1 - alpha_2|^2.
double identity_consistency(const Eigen::VectorXd& alpha_1, const Eigen::VectorXd& alpha_2);

/// Sum over consecutive frames of the squared differences of beta, head
/// translation and the decoded head and eye rotation matrices.
double param_smoothness(const std::vector<FaceParams>& sequence);

// --- sequence fitting ----------------------------------------------------

enum class Optimizer { kLevenbergMarquardt, kAdam };

struct FitConfig {
  double lambda_lm = 80.0;
  double lambda_reg = 0.025;
  double lambda_id = 0.025;  // unused with a shared alpha; kept for the record
  double lambda_constraint = 0.2;
  double lambda_smooth = 0.025;
  int iterations = 100;
  double step_size = 0.01;   // Adam learning rate
  double tolerance = 1e-10;  // relative decrease that counts as converged
  Optimizer optimizer = Optimizer::kLevenbergMarquardt;
  std::uint64_t seed = 0;
};

enum class LossTerm { kLandmark, kRegularizer, kConstraint, kSmoothness, kTotal };

/// Objective over a sequence with one shared alpha. Parameter vector:
/// [alpha | per frame: beta, rot_head (6), trans_head (3), rot_eye_right (6),
/// rot_eye_left (6)]. The total is
///   mean_f [lm * L_lm + reg * (|alpha|^2 + |beta_f|^2) + c * L_c(beta_f)]
///   + smooth * L_smooth / (F - 1).
class SequenceObjective {
 public:
  SequenceObjective(const FaceModel& model, const LandmarkTrack& track, const ProjectiveCamera& camera,
                    const FitConfig& config);

  int num_frames() const { return frames_; }
  int frame_size() const { return nb_ + 21; }
  int num_params() const { return na_ + frames_ * frame_size(); }
  int num_blendshapes() const { return nb_; }
  int num_identity() const { return na_; }
  /// Index of beta_j of frame f in the parameter vector.
  int beta_index(int f, int j) const { return na_ + f * frame_size() + j; }

  Eigen::VectorXd pack(const Eigen::VectorXd& alpha, const std::vector<FaceParams>& frames) const;
  std::vector<FaceParams> unpack(const Eigen::VectorXd& x) const;

  double value(const Eigen::VectorXd& x, LossTerm term = LossTerm::kTotal) const;
  /// Analytic gradient (the constraint contributes its one-sided slope,
  /// zero at the kinks).
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, LossTerm term = LossTerm::kTotal) const;

  /// Least-squares part (landmark, regularizer, smoothness): the sum of
  /// squared residuals equals the weighted value of those terms.
  void residuals(const Eigen::VectorXd& x, Eigen::VectorXd* r, Eigen::SparseMatrix<double>* J) const;

  /// Per-frame landmark loss and RMSE contributions.
  std::vector<double> frame_landmark_losses(const Eigen::VectorXd& x) const;

  /// Slope of the constraint term per out-of-range unit of one beta entry.
  double constraint_slope() const;

 private:
  struct Row {
    int eye = -1;  // -1 head, 0 right eyeball, 1 left eyeball
    Eigen::Vector3d mean;
    Eigen::MatrixXd A;  // 3 x identity
    Eigen::MatrixXd B;  // 3 x blendshapes
  };
  struct FrameJacobian;
  void frame_landmarks(const Eigen::VectorXd& x, int f, FrameJacobian* out, bool jacobian) const;
  int residual_rows() const;

  const FaceModel& model_;
  LandmarkTrack track_;
  ProjectiveCamera camera_;
  FitConfig config_;
  int frames_, na_, nb_;
  std::vector<Row> rows_;                     // unique landmark vertices
  std::vector<std::array<int, 3>> lm_rows_;   // per landmark, index into rows_
  std::vector<std::array<double, 3>> lm_bary_;
  std::vector<Row> centroid_;                 // right, left eyeball centroids
};

struct FitDiagnostics {
  std::vector<double> landmark;     // per frame L_lm (px^2)
  std::vector<double> regularizer;  // per frame |alpha|^2 + |beta|^2
  std::vector<double> constraint;   // per frame L_c
  double smoothness = 0.0;          // param_smoothness of the result
  double identity = 0.0;            // L_id, zero by construction
  double total = 0.0;
  double rmse = 0.0;                // landmark RMSE over all visible points (px)
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  std::vector<double> history;      // total loss after each accepted step
};

struct FitResult {
  Eigen::VectorXd alpha;
  std::vector<FaceParams> params;  // alpha is replicated into every frame
  FitDiagnostics diagnostics;
};

/// Minimizes the sequence objective from `init` (neutral when empty).
/// Never throws on non-convergence: the best iterate is returned with
/// diagnostics.converged = false; a non-finite loss sets diverged.
FitResult fit_sequence(const LandmarkTrack& track, const FaceModel& model, const ProjectiveCamera& camera,
                       const FitConfig& config, const std::vector<FaceParams>& init = {});

/// Max relative error between the analytic gradient of `term` and central
/// differences with step `epsilon`:
///   |a - n| / max(|a|, |n|, 1e-3 * max_i |a_i|).
double gradient_check(const SequenceObjective& objective, const Eigen::VectorXd& x, LossTerm term,
                      double epsilon = 1e-4);

/// Same check for identity_consistency at (alpha_1, alpha_2).
double gradient_check_identity(const Eigen::VectorXd& alpha_1, const Eigen::VectorXd& alpha_2,
                               double epsilon = 1e-4);

LossTerm loss_term_from_name(const std::string& name);

// --- params JSON ---------------------------------------------------------

nlohmann::json camera_to_json(const ProjectiveCamera& camera);
ProjectiveCamera camera_from_json(const nlohmann::json& j);

struct ParamsFile {
  ProjectiveCamera camera;
  Eigen::VectorXd alpha;
  std::vector<int> frame_ids;
  std::vector<FaceParams> frames;
  nlohmann::json diagnostics = nlohmann::json::object();
};

nlohmann::json params_to_json(const ParamsFile& file);
ParamsFile params_from_json(const nlohmann::json& j);
void save_params(const ParamsFile& file, const std::string& path);
ParamsFile load_params(const std::string& path);
nlohmann::json diagnostics_to_json(const FitDiagnostics& d);

}  // namespace facesync
