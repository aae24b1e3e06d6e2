#include "facesync/camera.hpp"

#include <algorithm>

#include "facesync/common.hpp"

namespace facesync {

ProjectiveCamera ProjectiveCamera::looking_at_origin(int width, int height, double focal,
                                                     double distance) {
  ProjectiveCamera cam;
  cam.width = width;
  cam.height = height;
  cam.focal = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
  cam.translation = Eigen::Vector3d(0.0, 0.0, distance);
  return cam;
}

ProjectiveCamera ProjectiveCamera::fitting_default(int size) {
  return looking_at_origin(size, size, 1015.0 * size / 224.0, 110.0);
}

void ProjectiveCamera::validate() const {
  if (!(focal > 0.0)) throw Error("camera: focal length must be positive");
  if (width < 1 || height < 1) throw Error("camera: image size must be at least 1x1");
}

ProjectiveCamera ProjectiveCamera::shifted(double dx, double dy) const {
  ProjectiveCamera c = *this;
  c.cx += dx;
  c.cy += dy;
  return c;
}

bool ScreenPoints::all_valid() const {
  return std::all_of(valid.begin(), valid.end(), [](unsigned char v) { return v != 0; });
}

Eigen::Vector3d project_point(const Eigen::Vector3d& world, const ProjectiveCamera& camera) {
  const Eigen::Vector3d p = camera.to_camera(world);
  return {camera.focal * p.x() / p.z() + camera.cx, camera.focal * p.y() / p.z() + camera.cy, p.z()};
}

ScreenPoints project(const Vertices& world, const ProjectiveCamera& camera) {
  camera.validate();
  ScreenPoints out;
  out.xyz.resize(world.rows(), 3);
  out.valid.resize(world.rows());
  for (Eigen::Index i = 0; i < world.rows(); ++i) {
    const Eigen::Vector3d s = project_point(world.row(i).transpose(), camera);
    out.xyz.row(i) = s.transpose();
    out.valid[i] = s.z() > 0.0 ? 1 : 0;
  }
  return out;
}

}  // namespace facesync
