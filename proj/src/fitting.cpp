#include "facesync/fitting.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "container.hpp"
#include "facesync/common.hpp"

namespace facesync {

using nlohmann::json;

int LandmarkFrame::visible_count() const {
  return static_cast<int>(std::count_if(visible.begin(), visible.end(), [](unsigned char v) { return v != 0; }));
}

// --- landmark I/O ----------------------------------------------------------------

LandmarkTrack parse_landmarks_jsonl(const std::string& text) {
  LandmarkTrack track;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      LandmarkFrame f;
      f.frame = j.at("frame").get<int>();
      const auto& pts = j.at("points");
      if (pts.size() != static_cast<std::size_t>(kNumLandmarks))
        throw FormatError("landmarks line " + std::to_string(line_no) + ": expected 78 points");
      f.points.resize(kNumLandmarks, 2);
      for (int i = 0; i < kNumLandmarks; ++i) {
        f.points(i, 0) = pts[i].at(0).get<double>();
        f.points(i, 1) = pts[i].at(1).get<double>();
      }
      f.visible.assign(kNumLandmarks, 1);
      if (j.contains("visible")) {
        const auto& vis = j.at("visible");
        if (vis.size() != static_cast<std::size_t>(kNumLandmarks))
          throw FormatError("landmarks line " + std::to_string(line_no) + ": expected 78 visibility flags");
        for (int i = 0; i < kNumLandmarks; ++i) f.visible[i] = vis[i].get<bool>() ? 1 : 0;
      }
      track.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw FormatError("landmarks line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return track;
}

std::string format_landmarks_jsonl(const LandmarkTrack& track) {
  std::string out;
  for (const auto& f : track) {
    json pts = json::array();
    for (Eigen::Index i = 0; i < f.points.rows(); ++i) pts.push_back({f.points(i, 0), f.points(i, 1)});
    json vis = json::array();
    for (unsigned char v : f.visible) vis.push_back(v != 0);
    out += json{{"frame", f.frame}, {"points", pts}, {"visible", vis}}.dump();
    out += '\n';
  }
  return out;
}

LandmarkTrack load_landmarks(const std::string& path) {
  const std::vector<char> bytes = detail::read_file(path);
  return parse_landmarks_jsonl(std::string(bytes.begin(), bytes.end()));
}

void save_landmarks(const LandmarkTrack& track, const std::string& path) {
  const std::string text = format_landmarks_jsonl(track);
  detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

LandmarkFrame render_landmarks(const FaceModel& model, const FaceParams& params, const ProjectiveCamera& camera,
                               int frame) {
  const ScreenPoints s = project(landmark_points(model, evaluate_mesh(model, params)), camera);
  LandmarkFrame f;
  f.frame = frame;
  f.points = s.xyz.leftCols<2>();
  f.visible.resize(s.xyz.rows());
  for (Eigen::Index i = 0; i < s.xyz.rows(); ++i) {
    const double x = s.xyz(i, 0), y = s.xyz(i, 1);
    f.visible[i] = s.valid[i] && x >= 0.0 && y >= 0.0 && x <= camera.width && y <= camera.height;
  }
  return f;
}

// --- loss terms --------------------------------------------------------------------

double landmark_loss(const FaceModel& model, const FaceParams& params, const LandmarkFrame& labels,
                     const ProjectiveCamera& camera) {
  if (model.landmarks.empty()) throw Error("landmark_loss: model has no landmark embedding");
  if (labels.points.rows() != static_cast<Eigen::Index>(model.landmarks.size()))
    throw DimensionError("landmark_loss: label count does not match the embedding");
  const ScreenPoints s = project(landmark_points(model, evaluate_mesh(model, params)), camera);
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < s.xyz.rows(); ++i) {
    if (!labels.visible[i]) continue;
    sum += (s.xyz.row(i).head<2>() - labels.points.row(i)).squaredNorm();
    ++n;
  }
  if (n == 0) throw Error("landmark_loss: no visible landmarks");
  return sum / n;
}

double regularizer(const FaceParams& params) { return params.alpha.squaredNorm() + params.beta.squaredNorm(); }

double identity_consistency(const Eigen::VectorXd& a1, const Eigen::VectorXd& a2) {
  if (a1.size() != a2.size()) throw DimensionError("identity_consistency: size mismatch");
  return (a1 - a2).squaredNorm();
}

double param_smoothness(const std::vector<FaceParams>& seq) {
  double sum = 0.0;
  for (std::size_t f = 1; f < seq.size(); ++f) {
    const auto& a = seq[f - 1];
    const auto& b = seq[f];
    sum += (b.beta - a.beta).squaredNorm() + (b.trans_head - a.trans_head).squaredNorm();
    sum += (rot6d_to_matrix(b.rot_head) - rot6d_to_matrix(a.rot_head)).squaredNorm();
    sum += (rot6d_to_matrix(b.rot_eye_right) - rot6d_to_matrix(a.rot_eye_right)).squaredNorm();
    sum += (rot6d_to_matrix(b.rot_eye_left) - rot6d_to_matrix(a.rot_eye_left)).squaredNorm();
  }
  return sum;
}

// --- SequenceObjective -------------------------------------------------------------

struct SequenceObjective::FrameJacobian {
  Eigen::VectorXd r;   // 2 per visible landmark, unweighted pixel residuals
  Eigen::MatrixXd Ja;  // rows x na
  Eigen::MatrixXd Jt;  // rows x frame_size
};

namespace {

constexpr int kRh = 0, kT = 6, kRer = 9, kRel = 15;  // offsets after beta

Vector6d seg6(const Eigen::VectorXd& x, int at) { return x.segment<6>(at); }

void renormalize_rotations(Eigen::VectorXd& x, int na, int nb, int frames) {
  const int fs = nb + 21;
  for (int f = 0; f < frames; ++f)
    for (int off : {kRh, kRer, kRel}) {
      const int at = na + f * fs + nb + off;
      x.segment<6>(at) = matrix_to_rot6d(rot6d_to_matrix(seg6(x, at)));
    }
}

}  // namespace

SequenceObjective::SequenceObjective(const FaceModel& model, const LandmarkTrack& track,
                                     const ProjectiveCamera& camera, const FitConfig& config)
    : model_(model),
      track_(track),
      camera_(camera),
      config_(config),
      frames_(static_cast<int>(track.size())),
      na_(model.num_identity()),
      nb_(model.num_blendshapes()) {
  if (frames_ < 1) throw Error("fit: the landmark track is empty");
  if (static_cast<int>(model.landmarks.size()) != kNumLandmarks)
    throw Error("fit: model needs a 78-point landmark embedding");
  camera.validate();
  for (const auto& f : track) {
    if (f.points.rows() != kNumLandmarks || static_cast<int>(f.visible.size()) != kNumLandmarks)
      throw DimensionError("fit: every frame needs 78 landmarks");
    if (f.visible_count() == 0) throw Error("fit: frame " + std::to_string(f.frame) + " has no visible landmarks");
  }
  const auto make_row = [&](int v) {
    Row r;
    r.eye = model.eyeball_right.contains(v) ? 0 : model.eyeball_left.contains(v) ? 1 : -1;
    r.mean = model.mean.segment<3>(3 * v).cast<double>();
    r.A = model.identity.middleRows(3 * v, 3).cast<double>();
    r.B = model.blendshapes.middleRows(3 * v, 3).cast<double>();
    return r;
  };
  std::map<int, int> index;
  for (const auto& lm : model.landmarks) {
    std::array<int, 3> ids{};
    for (int k = 0; k < 3; ++k) {
      const int v = model.triangles[lm.triangle][k];
      auto it = index.find(v);
      if (it == index.end()) {
        it = index.emplace(v, static_cast<int>(rows_.size())).first;
        rows_.push_back(make_row(v));
      }
      ids[k] = it->second;
    }
    lm_rows_.push_back(ids);
    lm_bary_.push_back(lm.bary);
  }
  for (const VertexRange* range : {&model.eyeball_right, &model.eyeball_left}) {
    Row c;
    c.mean.setZero();
    c.A.setZero(3, na_);
    c.B.setZero(3, nb_);
    for (int v = range->begin; v < range->end; ++v) {
      const Row r = make_row(v);
      c.mean += r.mean;
      c.A += r.A;
      c.B += r.B;
    }
    if (range->size() > 0) {
      c.mean /= range->size();
      c.A /= range->size();
      c.B /= range->size();
    }
    centroid_.push_back(c);
  }
}

Eigen::VectorXd SequenceObjective::pack(const Eigen::VectorXd& alpha, const std::vector<FaceParams>& frames) const {
  if (alpha.size() != na_ || static_cast<int>(frames.size()) != frames_)
    throw DimensionError("fit: initial parameters do not match the model or track");
  Eigen::VectorXd x(num_params());
  x.head(na_) = alpha;
  for (int f = 0; f < frames_; ++f) {
    const auto& p = frames[f];
    if (p.beta.size() != nb_) throw DimensionError("fit: initial beta has the wrong size");
    const int at = na_ + f * frame_size();
    x.segment(at, nb_) = p.beta;
    x.segment<6>(at + nb_ + kRh) = p.rot_head;
    x.segment<3>(at + nb_ + kT) = p.trans_head;
    x.segment<6>(at + nb_ + kRer) = p.rot_eye_right;
    x.segment<6>(at + nb_ + kRel) = p.rot_eye_left;
  }
  return x;
}

std::vector<FaceParams> SequenceObjective::unpack(const Eigen::VectorXd& x) const {
  std::vector<FaceParams> out(frames_);
  for (int f = 0; f < frames_; ++f) {
    const int at = na_ + f * frame_size();
    FaceParams& p = out[f];
    p.alpha = x.head(na_);
    p.beta = x.segment(at, nb_);
    p.rot_head = x.segment<6>(at + nb_ + kRh);
    p.trans_head = x.segment<3>(at + nb_ + kT);
    p.rot_eye_right = x.segment<6>(at + nb_ + kRer);
    p.rot_eye_left = x.segment<6>(at + nb_ + kRel);
  }
  return out;
}

void SequenceObjective::frame_landmarks(const Eigen::VectorXd& x, int f, FrameJacobian* out, bool jac) const {
  const int fs = frame_size();
  const int at = na_ + f * fs;
  const Eigen::VectorXd alpha = x.head(na_);
  const Eigen::VectorXd beta = x.segment(at, nb_);
  Rot6dJacobian Jh, Je[2];
  const Eigen::Matrix3d Rh = rot6d_to_matrix(seg6(x, at + nb_ + kRh), &Jh);
  const Eigen::Vector3d t = x.segment<3>(at + nb_ + kT);
  const Eigen::Matrix3d Re[2] = {rot6d_to_matrix(seg6(x, at + nb_ + kRer), &Je[0]),
                                 rot6d_to_matrix(seg6(x, at + nb_ + kRel), &Je[1])};
  Eigen::Vector3d C[2];
  for (int e = 0; e < 2; ++e) C[e] = centroid_[e].mean + centroid_[e].A * alpha + centroid_[e].B * beta;

  const int nr = static_cast<int>(rows_.size());
  std::vector<Eigen::Vector3d> V(nr);
  std::vector<Eigen::MatrixXd> dV(jac ? nr : 0);  // 3 x (na + fs)
  for (int i = 0; i < nr; ++i) {
    const Row& row = rows_[i];
    const Eigen::Vector3d S = row.mean + row.A * alpha + row.B * beta;
    Eigen::Vector3d Sp = S;
    Eigen::Matrix<double, 3, 6> dSp_re = Eigen::Matrix<double, 3, 6>::Zero();
    if (row.eye >= 0) {
      const Eigen::Vector3d d = S - C[row.eye];
      Sp = Re[row.eye] * d + C[row.eye];
      if (jac)
        for (int j = 0; j < 3; ++j) dSp_re += d[j] * Je[row.eye].block<3, 6>(3 * j, 0);
    }
    V[i] = Rh * Sp + t;
    if (!jac) continue;
    Eigen::MatrixXd& D = dV[i];
    D.setZero(3, na_ + fs);
    if (row.eye >= 0) {
      const Row& c = centroid_[row.eye];
      D.leftCols(na_) = Rh * (Re[row.eye] * (row.A - c.A) + c.A);
      D.middleCols(na_, nb_) = Rh * (Re[row.eye] * (row.B - c.B) + c.B);
      D.middleCols<6>(na_ + nb_ + (row.eye == 0 ? kRer : kRel)) = Rh * dSp_re;
    } else {
      D.leftCols(na_) = Rh * row.A;
      D.middleCols(na_, nb_) = Rh * row.B;
    }
    Eigen::Matrix<double, 3, 6> dRh = Eigen::Matrix<double, 3, 6>::Zero();
    for (int j = 0; j < 3; ++j) dRh += Sp[j] * Jh.block<3, 6>(3 * j, 0);
    D.middleCols<6>(na_ + nb_ + kRh) = dRh;
    D.middleCols<3>(na_ + nb_ + kT) = Eigen::Matrix3d::Identity();
  }

  const LandmarkFrame& labels = track_[f];
  const int nvis = labels.visible_count();
  out->r.resize(2 * nvis);
  if (jac) {
    out->Ja.resize(2 * nvis, na_);
    out->Jt.resize(2 * nvis, fs);
  }
  int k = 0;
  for (int l = 0; l < kNumLandmarks; ++l) {
    if (!labels.visible[l]) continue;
    Eigen::Vector3d X = Eigen::Vector3d::Zero();
    for (int c = 0; c < 3; ++c) X += lm_bary_[l][c] * V[lm_rows_[l][c]];
    const Eigen::Vector3d P = camera_.rotation * X + camera_.translation;
    const double iz = 1.0 / P.z();
    out->r[2 * k] = camera_.focal * P.x() * iz + camera_.cx - labels.points(l, 0);
    out->r[2 * k + 1] = camera_.focal * P.y() * iz + camera_.cy - labels.points(l, 1);
    if (jac) {
      Eigen::Matrix<double, 2, 3> dU;
      dU << camera_.focal * iz, 0.0, -camera_.focal * P.x() * iz * iz, 0.0, camera_.focal * iz,
          -camera_.focal * P.y() * iz * iz;
      const Eigen::Matrix<double, 2, 3> dUX = dU * camera_.rotation;
      Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(3, na_ + fs);
      for (int c = 0; c < 3; ++c) dX += lm_bary_[l][c] * dV[lm_rows_[l][c]];
      const Eigen::MatrixXd J = dUX * dX;
      out->Ja.middleRows<2>(2 * k) = J.leftCols(na_);
      out->Jt.middleRows<2>(2 * k) = J.rightCols(fs);
    }
    ++k;
  }
}

int SequenceObjective::residual_rows() const {
  int n = 0;
  for (const auto& f : track_) n += 2 * f.visible_count();
  return n + na_ + frames_ * nb_ + (frames_ - 1) * (nb_ + 3 + 27);
}

double SequenceObjective::constraint_slope() const {
  return config_.lambda_constraint / (static_cast<double>(frames_) * std::max(1, nb_));
}

void SequenceObjective::residuals(const Eigen::VectorXd& x, Eigen::VectorXd* r,
                                  Eigen::SparseMatrix<double>* J) const {
  if (x.size() != num_params()) throw DimensionError("fit: parameter vector has the wrong size");
  const int fs = frame_size();
  const bool jac = J != nullptr;
  std::vector<FrameJacobian> fj(frames_);
  parallel_for(0, frames_, [&](std::size_t f) { frame_landmarks(x, static_cast<int>(f), &fj[f], jac); });

  r->setZero(residual_rows());
  std::vector<Eigen::Triplet<double>> trip;
  int row = 0;
  for (int f = 0; f < frames_; ++f) {
    const double w = std::sqrt(config_.lambda_lm / (frames_ * static_cast<double>(track_[f].visible_count())));
    const int n = static_cast<int>(fj[f].r.size());
    r->segment(row, n) = w * fj[f].r;
    if (jac) {
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < na_; ++c)
          if (fj[f].Ja(i, c) != 0.0) trip.emplace_back(row + i, c, w * fj[f].Ja(i, c));
        for (int c = 0; c < fs; ++c)
          if (fj[f].Jt(i, c) != 0.0) trip.emplace_back(row + i, na_ + f * fs + c, w * fj[f].Jt(i, c));
      }
    }
    row += n;
  }
  const double wa = std::sqrt(config_.lambda_reg);
  for (int i = 0; i < na_; ++i) {
    (*r)[row] = wa * x[i];
    if (jac) trip.emplace_back(row, i, wa);
    ++row;
  }
  const double wb = std::sqrt(config_.lambda_reg / frames_);
  for (int f = 0; f < frames_; ++f)
    for (int j = 0; j < nb_; ++j) {
      (*r)[row] = wb * x[na_ + f * fs + j];
      if (jac) trip.emplace_back(row, na_ + f * fs + j, wb);
      ++row;
    }
  if (frames_ > 1) {
    const double ws = std::sqrt(config_.lambda_smooth / (frames_ - 1));
    for (int f = 0; f + 1 < frames_; ++f) {
      const int a = na_ + f * fs, b = a + fs;
      for (int j = 0; j < nb_ + 9; ++j) {
        // beta block, then rotation-head slot is skipped below; translation uses its own offset
        if (j >= nb_ && j < nb_ + 6) continue;
        const int ja = a + j, jb = b + j;
        (*r)[row] = ws * (x[jb] - x[ja]);
        if (jac) {
          trip.emplace_back(row, jb, ws);
          trip.emplace_back(row, ja, -ws);
        }
        ++row;
      }
      for (int off : {kRh, kRer, kRel}) {
        Rot6dJacobian JA, JB;
        const Eigen::Matrix3d RA = rot6d_to_matrix(seg6(x, a + nb_ + off), &JA);
        const Eigen::Matrix3d RB = rot6d_to_matrix(seg6(x, b + nb_ + off), &JB);
        const Eigen::Matrix3d D = RB - RA;
        for (int c = 0; c < 9; ++c) {
          (*r)[row] = ws * D(c % 3, c / 3);
          if (jac)
            for (int k = 0; k < 6; ++k) {
              if (JB(c, k) != 0.0) trip.emplace_back(row, b + nb_ + off + k, ws * JB(c, k));
              if (JA(c, k) != 0.0) trip.emplace_back(row, a + nb_ + off + k, -ws * JA(c, k));
            }
          ++row;
        }
      }
    }
  }
  if (jac) {
    J->resize(r->size(), num_params());
    J->setFromTriplets(trip.begin(), trip.end());
  }
}

std::vector<double> SequenceObjective::frame_landmark_losses(const Eigen::VectorXd& x) const {
  std::vector<double> out(frames_);
  parallel_for(0, frames_, [&](std::size_t f) {
    FrameJacobian fj;
    frame_landmarks(x, static_cast<int>(f), &fj, false);
    out[f] = fj.r.squaredNorm() / track_[f].visible_count();
  });
  return out;
}

double SequenceObjective::value(const Eigen::VectorXd& x, LossTerm term) const {
  const int fs = frame_size();
  double total = 0.0;
  const bool all = term == LossTerm::kTotal;
  if (all || term == LossTerm::kLandmark) {
    double s = 0.0;
    for (double v : frame_landmark_losses(x)) s += v;
    total += config_.lambda_lm * s / frames_;
  }
  if (all || term == LossTerm::kRegularizer) {
    double s = 0.0;
    for (int f = 0; f < frames_; ++f) s += x.segment(na_ + f * fs, nb_).squaredNorm();
    total += config_.lambda_reg * (x.head(na_).squaredNorm() + s / frames_);
  }
  if (all || term == LossTerm::kConstraint) {
    double s = 0.0;
    for (int f = 0; f < frames_; ++f) s += constraint_violation(x.segment(na_ + f * fs, nb_));
    total += config_.lambda_constraint * s / frames_;
  }
  if ((all || term == LossTerm::kSmoothness) && frames_ > 1)
    total += config_.lambda_smooth * param_smoothness(unpack(x)) / (frames_ - 1);
  return total;
}

Eigen::VectorXd SequenceObjective::gradient(const Eigen::VectorXd& x, LossTerm term) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(num_params());
  const int fs = frame_size();
  if (term != LossTerm::kConstraint) {
    Eigen::VectorXd r;
    Eigen::SparseMatrix<double> J;
    residuals(x, &r, &J);
    // Keep only the rows of the requested term.
    int lm_rows = 0;
    for (const auto& f : track_) lm_rows += 2 * f.visible_count();
    const int reg_rows = na_ + frames_ * nb_;
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(r.size());
    if (term == LossTerm::kTotal) mask.setOnes();
    if (term == LossTerm::kLandmark) mask.head(lm_rows).setOnes();
    if (term == LossTerm::kRegularizer) mask.segment(lm_rows, reg_rows).setOnes();
    if (term == LossTerm::kSmoothness) mask.tail(r.size() - lm_rows - reg_rows).setOnes();
    g = 2.0 * (J.transpose() * r.cwiseProduct(mask));
  }
  if (term == LossTerm::kConstraint || term == LossTerm::kTotal) {
    const double k = constraint_slope();
    for (int f = 0; f < frames_; ++f)
      for (int j = 0; j < nb_; ++j) {
        const double b = x[na_ + f * fs + j];
        if (b > 1.0) g[na_ + f * fs + j] += k;
        if (b < 0.0) g[na_ + f * fs + j] -= k;
      }
  }
  return g;
}

// --- optimizers -------------------------------------------------------------------

namespace {

FitDiagnostics diagnose(const SequenceObjective& obj, const Eigen::VectorXd& x, const LandmarkTrack& track) {
  FitDiagnostics d;
  const auto params = obj.unpack(x);
  d.landmark = obj.frame_landmark_losses(x);
  double sq = 0.0;
  int n = 0;
  for (std::size_t f = 0; f < params.size(); ++f) {
    d.regularizer.push_back(regularizer(params[f]));
    d.constraint.push_back(constraint_violation(params[f].beta));
    sq += d.landmark[f] * track[f].visible_count();
    n += track[f].visible_count();
  }
  d.rmse = std::sqrt(sq / n);
  d.smoothness = param_smoothness(params);
  d.total = obj.value(x);
  return d;
}

Eigen::VectorXd fit_lm(const SequenceObjective& obj, Eigen::VectorXd x, const FitConfig& cfg, FitDiagnostics* d) {
  const int na = obj.num_identity(), nb = obj.num_blendshapes(), fs = obj.frame_size(), F = obj.num_frames();
  const int n = obj.num_params();
  const double kappa = obj.constraint_slope();
  double cost = obj.value(x);
  if (!std::isfinite(cost)) {
    d->diverged = true;
    return x;
  }
  double mu = 1e-4;
  int stalls = 0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  int it = 0;
  while (it < cfg.iterations) {
    Eigen::VectorXd r;
    Eigen::SparseMatrix<double> J;
    obj.residuals(x, &r, &J);
    const Eigen::VectorXd Jtr = J.transpose() * r;
    const Eigen::SparseMatrix<double> Jt = J.transpose();
    const Eigen::SparseMatrix<double> JtJ = Jt * J;

    // Bound handling for beta: pinned coordinates stay put, coordinates at
    // or beyond a bound that move outward carry the constraint slope.
    std::vector<unsigned char> pinned(n, 0), outward(n, 0);
    Eigen::VectorXd gh = Eigen::VectorXd::Zero(n);
    for (int f = 0; f < F; ++f)
      for (int j = 0; j < nb; ++j) {
        const int i = na + f * fs + j;
        const double b = x[i], g = 2.0 * Jtr[i];
        if (b == 0.0) {
          if (g >= 0.0 && g <= kappa) pinned[i] = 1;
          else if (g > kappa) outward[i] = 1, gh[i] = -kappa;
        } else if (b == 1.0) {
          if (g <= 0.0 && -g <= kappa) pinned[i] = 1;
          else if (-g > kappa) outward[i] = 1, gh[i] = kappa;
        } else if (b < 0.0) {
          gh[i] = -kappa;
        } else if (b > 1.0) {
          gh[i] = kappa;
        }
      }
    Eigen::VectorXd rhs = -(Jtr + 0.5 * gh);
    Eigen::VectorXd diag = JtJ.diagonal();
    for (int i = 0; i < n; ++i) diag[i] = std::max(diag[i], 1e-9);

    bool accepted = false;
    while (!accepted && it < cfg.iterations) {
      ++it;
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(JtJ.nonZeros() + n);
      for (int k = 0; k < JtJ.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator e(JtJ, k); e; ++e)
          if (!pinned[e.row()] && !pinned[e.col()]) trip.emplace_back(e.row(), e.col(), e.value());
      for (int i = 0; i < n; ++i) trip.emplace_back(i, i, pinned[i] ? 1.0 : mu * diag[i]);
      Eigen::SparseMatrix<double> A(n, n);
      A.setFromTriplets(trip.begin(), trip.end());
      Eigen::VectorXd b = rhs;
      for (int i = 0; i < n; ++i)
        if (pinned[i]) b[i] = 0.0;
      solver.compute(A);
      if (solver.info() != Eigen::Success) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(b);
      Eigen::VectorXd xn = x + delta;
      for (int f = 0; f < F; ++f)
        for (int j = 0; j < nb; ++j) {
          const int i = na + f * fs + j;
          if (pinned[i]) {
            xn[i] = x[i];
          } else if (outward[i]) {
            continue;
          } else if (x[i] >= 0.0 && x[i] <= 1.0) {
            xn[i] = std::clamp(xn[i], 0.0, 1.0);
          } else if (x[i] < 0.0) {
            xn[i] = std::min(xn[i], 0.0);
          } else {
            xn[i] = std::max(xn[i], 1.0);
          }
        }
      renormalize_rotations(xn, na, nb, F);
      const double cn = obj.value(xn);
      if (std::isfinite(cn) && cn < cost) {
        const double drop = cost - cn;
        x = xn;
        cost = cn;
        d->history.push_back(cost);
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        stalls = drop <= cfg.tolerance * (1.0 + cost) ? stalls + 1 : 0;
      } else {
        mu *= 4.0;
        if (mu > 1e12) break;
      }
    }
    if (!accepted || stalls >= 2) {
      d->converged = true;
      break;
    }
  }
  d->iterations = it;
  return x;
}

Eigen::VectorXd fit_adam(const SequenceObjective& obj, Eigen::VectorXd x, const FitConfig& cfg, FitDiagnostics* d) {
  const int n = obj.num_params();
  double cost = obj.value(x);
  if (!std::isfinite(cost)) {
    d->diverged = true;
    return x;
  }
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(n);
  double lr = cfg.step_size;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int t = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const Eigen::VectorXd g = obj.gradient(x);
    ++t;
    const Eigen::VectorXd m1 = b1 * m + (1 - b1) * g;
    const Eigen::VectorXd v1 = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const Eigen::VectorXd mh = m1 / (1 - std::pow(b1, t));
    const Eigen::VectorXd vh = v1 / (1 - std::pow(b2, t));
    Eigen::VectorXd xn = x - lr * mh.cwiseQuotient((vh.array().sqrt() + eps).matrix());
    renormalize_rotations(xn, obj.num_identity(), obj.num_blendshapes(), obj.num_frames());
    const double cn = obj.value(xn);
    d->iterations = it + 1;
    if (std::isfinite(cn) && cn <= cost) {
      const double drop = cost - cn;
      x = xn;
      m = m1;
      v = v1;
      cost = cn;
      d->history.push_back(cost);
      if (drop <= cfg.tolerance * (1.0 + cost) && drop > 0.0) {
        d->converged = true;
        break;
      }
    } else {
      lr *= 0.5;  // step halving on increase
      --t;
      if (lr < 1e-12) {
        d->converged = true;
        break;
      }
    }
  }
  return x;
}

}  // namespace

FitResult fit_sequence(const LandmarkTrack& track, const FaceModel& model, const ProjectiveCamera& camera,
                       const FitConfig& config, const std::vector<FaceParams>& init) {
  for (double w : {config.lambda_lm, config.lambda_reg, config.lambda_id, config.lambda_constraint,
                   config.lambda_smooth})
    if (!(w >= 0.0)) throw Error("fit: loss weights must be non-negative");
  SequenceObjective obj(model, track, camera, config);
  std::vector<FaceParams> start = init;
  if (start.empty()) start.assign(track.size(), FaceParams::neutral(model));
  Eigen::VectorXd x = obj.pack(start.front().alpha, start);
  renormalize_rotations(x, obj.num_identity(), obj.num_blendshapes(), obj.num_frames());

  FitDiagnostics run;
  x = config.optimizer == Optimizer::kAdam ? fit_adam(obj, x, config, &run) : fit_lm(obj, x, config, &run);

  FitResult out;
  out.alpha = x.head(obj.num_identity());
  out.params = obj.unpack(x);
  out.diagnostics = diagnose(obj, x, track);
  out.diagnostics.iterations = run.iterations;
  out.diagnostics.converged = run.converged;
  out.diagnostics.diverged = run.diverged || !std::isfinite(out.diagnostics.total);
  out.diagnostics.history = std::move(run.history);
  return out;
}

double gradient_check(const SequenceObjective& obj, const Eigen::VectorXd& x, LossTerm term, double eps) {
  const Eigen::VectorXd a = obj.gradient(x, term);
  Eigen::VectorXd num(a.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + eps;
    const double fp = obj.value(xp, term);
    xp[i] = x[i] - eps;
    const double fm = obj.value(xp, term);
    xp[i] = x[i];
    num[i] = (fp - fm) / (2.0 * eps);
  }
  const double scale = 1e-3 * a.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a[i]), std::abs(num[i]), scale, 1e-300});
    worst = std::max(worst, std::abs(a[i] - num[i]) / den);
  }
  return worst;
}

double gradient_check_identity(const Eigen::VectorXd& a1, const Eigen::VectorXd& a2, double eps) {
  const Eigen::VectorXd g = 2.0 * (a1 - a2);  // d/d alpha_1; d/d alpha_2 = -g
  double worst = 0.0;
  const double scale = 1e-3 * g.cwiseAbs().maxCoeff();
  Eigen::VectorXd p = a1;
  for (Eigen::Index i = 0; i < a1.size(); ++i) {
    p[i] = a1[i] + eps;
    const double fp = identity_consistency(p, a2);
    p[i] = a1[i] - eps;
    const double fm = identity_consistency(p, a2);
    p[i] = a1[i];
    const double num = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(g[i] - num) / std::max({std::abs(g[i]), std::abs(num), scale, 1e-300}));
  }
  return worst;
}

LossTerm loss_term_from_name(const std::string& name) {
  if (name == "landmark") return LossTerm::kLandmark;
  if (name == "regularizer") return LossTerm::kRegularizer;
  if (name == "constraint") return LossTerm::kConstraint;
  if (name == "smoothness") return LossTerm::kSmoothness;
  if (name == "total") return LossTerm::kTotal;
  throw Error("unknown loss term '" + name + "'");
}

// --- params JSON -------------------------------------------------------------------

namespace {

template <typename V>
json vec_json(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_from(const json& j) {
  if (j.size() != N) throw FormatError("params: expected " + std::to_string(N) + " values");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

json camera_to_json(const ProjectiveCamera& c) {
  json rot = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(i, k));
  return {{"focal", c.focal},   {"cx", c.cx},       {"cy", c.cy},
          {"width", c.width},   {"height", c.height}, {"rotation", rot},
          {"translation", vec_json(c.translation)}};
}

ProjectiveCamera camera_from_json(const json& j) {
  ProjectiveCamera c;
  try {
    c.focal = j.at("focal").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto& r = j.at("rotation");
    if (r.size() != 9) throw FormatError("camera: rotation needs 9 values");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[3 * i + k].get<double>();
    c.translation = fixed_from<3>(j.at("translation"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("camera: ") + e.what());
  }
  c.validate();
  return c;
}

json params_to_json(const ParamsFile& file) {
  json frames = json::array();
  for (std::size_t f = 0; f < file.frames.size(); ++f) {
    const auto& p = file.frames[f];
    frames.push_back({{"frame", f < file.frame_ids.size() ? file.frame_ids[f] : static_cast<int>(f)},
                      {"beta", vec_json(p.beta)},
                      {"rot_head", vec_json(p.rot_head)},
                      {"trans_head", vec_json(p.trans_head)},
                      {"rot_eye_right", vec_json(p.rot_eye_right)},
                      {"rot_eye_left", vec_json(p.rot_eye_left)}});
  }
  return {{"format", "facesync-params"}, {"version", 1},          {"camera", camera_to_json(file.camera)},
          {"alpha", vec_json(file.alpha)}, {"frames", frames}, {"diagnostics", file.diagnostics}};
}

ParamsFile params_from_json(const json& j) {
  ParamsFile file;
  try {
    file.camera = camera_from_json(j.at("camera"));
    file.alpha = vec_from(j.at("alpha"));
    for (const auto& fr : j.at("frames")) {
      FaceParams p;
      p.alpha = file.alpha;
      p.beta = vec_from(fr.at("beta"));
      p.rot_head = fixed_from<6>(fr.at("rot_head"));
      p.trans_head = fixed_from<3>(fr.at("trans_head"));
      p.rot_eye_right = fixed_from<6>(fr.at("rot_eye_right"));
      p.rot_eye_left = fixed_from<6>(fr.at("rot_eye_left"));
      file.frame_ids.push_back(fr.at("frame").get<int>());
      file.frames.push_back(std::move(p));
    }
    if (j.contains("diagnostics")) file.diagnostics = j.at("diagnostics");
  } catch (const json::exception& e) {
    throw FormatError(std::string("params: ") + e.what());
  }
  return file;
}

void save_params(const ParamsFile& file, const std::string& path) {
  const std::string text = params_to_json(file).dump(1);
  detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

ParamsFile load_params(const std::string& path) {
  const std::vector<char> bytes = detail::read_file(path);
  try {
    return params_from_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("params: ") + e.what());
  }
}

json diagnostics_to_json(const FitDiagnostics& d) {
  return {{"landmark", d.landmark},   {"regularizer", d.regularizer}, {"constraint", d.constraint},
          {"smoothness", d.smoothness}, {"identity", d.identity},     {"total", d.total},
          {"rmse", d.rmse},           {"iterations", d.iterations},   {"converged", d.converged},
          {"diverged", d.diverged},   {"history", d.history}};
}

}  // namespace facesync
