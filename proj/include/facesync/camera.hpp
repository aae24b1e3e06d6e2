#pragma once

#include <Eigen/Core>

#include "facesync/face_model.hpp"

namespace facesync {

/// Pinhole camera. Camera space: x right, y down, z forward (depth).
/// Pixel (col, row) has its center at (col + 0.5, row + 0.5); screen y grows
/// downward.
struct ProjectiveCamera {
  double focal = 1015.0;  // pixels
  double cx = 112.0;      // principal point, pixels
  double cy = 112.0;
  int width = 224;
  int height = 224;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Camera on the +z world axis looking at the origin, world y up.
  static ProjectiveCamera looking_at_origin(int width, int height, double focal, double distance);

  /// Fitting default: focal 1015 px at 224 x 224 (scaled with image size),
  /// placed 110 model units from the origin.
  static ProjectiveCamera fitting_default(int size = 224);

  /// Throws Error unless focal > 0 and the image is at least 1 x 1.
  void validate() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  /// Same camera with the principal point moved by (dx, dy) pixels.
  ProjectiveCamera shifted(double dx, double dy) const;

  bool operator==(const ProjectiveCamera&) const = default;
};

/// Screen coordinates (x, y in pixels) plus camera-space depth z; a point
/// with z <= 0 is behind the camera and flagged invalid.
struct ScreenPoints {
  Vertices xyz;
  std::vector<unsigned char> valid;
  bool all_valid() const;
};

ScreenPoints project(const Vertices& world, const ProjectiveCamera& camera);
Eigen::Vector3d project_point(const Eigen::Vector3d& world, const ProjectiveCamera& camera);

}  // namespace facesync
