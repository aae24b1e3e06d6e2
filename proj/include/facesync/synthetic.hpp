#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "facesync/camera.hpp"
#include "facesync/common.hpp"
#include "facesync/face_model.hpp"
#include "facesync/image.hpp"
#include "facesync/raster.hpp"

namespace facesync {

/// Procedural stand-in for a FACS rig: an ellipsoidal head facing +z with
/// two eyeballs, 50 smooth identity fields and 55 named blendshapes with
/// compact support. Mirror-symmetric across x = 0.
struct SyntheticRigOptions {
  int head_lon = 128;  // even
  int head_lat = 96;
  int eye_lon = 24;    // even
  int eye_lat = 12;
};

FaceModel make_synthetic_rig(const SyntheticRigOptions& options = {});

/// The 55 blendshape names of the synthetic rig (ARKit-style FACS names
/// plus cheekRaiser_L/R).
const std::vector<std::string>& synthetic_blendshape_names();

/// Subdivided icosahedron with an identity symmetry map across x = 0, no
/// identity basis and a few symmetric blendshapes.
FaceModel make_icosphere(int subdivisions, double radius = 1.0);

/// Albedo of the synthetic rig at a mean-face coordinate.
Eigen::Vector3f synthetic_albedo(const Eigen::Vector3d& mean_coordinate);

/// RGB render: albedo of the visible surface over a smooth background.
Image render_synthetic(const FaceModel& model, const Vertices& posed, const ProjectiveCamera& camera);

/// Random parameters in the rig's natural range: beta ~ U[0, 1], moderate
/// identity, head pose and gaze.
FaceParams random_params(const FaceModel& model, Rng& rng, double pose_scale = 1.0);

/// Smooth sequence with one shared identity: random keyframes every
/// `key_spacing` frames, cosine-eased in between (rotations through their
/// matrices, re-orthonormalized).
std::vector<FaceParams> random_sequence(const FaceModel& model, Rng& rng, int frames, int key_spacing = 10,
                                        double pose_scale = 1.0);

}  // namespace facesync
