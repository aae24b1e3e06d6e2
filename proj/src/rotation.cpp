#include "facesync/rotation.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "facesync/common.hpp"

namespace facesync {

namespace {

constexpr double kDegenerate = 1e-8;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

}  // namespace

Eigen::Matrix3d rot6d_to_matrix(const Vector6d& r) { return rot6d_to_matrix(r, nullptr); }

Eigen::Matrix3d rot6d_to_matrix(const Vector6d& r, Rot6dJacobian* jacobian) {
  const Eigen::Vector3d a1 = r.head<3>();
  const Eigen::Vector3d a2 = r.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 > kDegenerate)) throw DegenerateError("rot6d: first column is zero");
  const Eigen::Vector3d b1 = a1 / n1;
  const double proj = b1.dot(a2);
  const Eigen::Vector3d u2 = a2 - proj * b1;
  const double n2 = u2.norm();
  if (!(n2 > kDegenerate * std::max(1.0, a2.norm())))
    throw DegenerateError("rot6d: columns are parallel");
  const Eigen::Vector3d b2 = u2 / n2;
  const Eigen::Vector3d b3 = b1.cross(b2);

  Eigen::Matrix3d rot;
  rot.col(0) = b1;
  rot.col(1) = b2;
  rot.col(2) = b3;

  if (jacobian) {
    const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
    const Eigen::Matrix3d db1_da1 = (I - b1 * b1.transpose()) / n1;
    // u2 = a2 - (b1.a2) b1
    const Eigen::Matrix3d du2_db1 = -(proj * I + b1 * a2.transpose());
    const Eigen::Matrix3d du2_da1 = du2_db1 * db1_da1;
    const Eigen::Matrix3d du2_da2 = I - b1 * b1.transpose();
    const Eigen::Matrix3d db2_du2 = (I - b2 * b2.transpose()) / n2;
    const Eigen::Matrix3d db2_da1 = db2_du2 * du2_da1;
    const Eigen::Matrix3d db2_da2 = db2_du2 * du2_da2;
    // b3 = b1 x b2 = -[b2]x b1 = [b1]x b2
    const Eigen::Matrix3d db3_da1 = -skew(b2) * db1_da1 + skew(b1) * db2_da1;
    const Eigen::Matrix3d db3_da2 = skew(b1) * db2_da2;

    jacobian->setZero();
    jacobian->block<3, 3>(0, 0) = db1_da1;
    jacobian->block<3, 3>(3, 0) = db2_da1;
    jacobian->block<3, 3>(3, 3) = db2_da2;
    jacobian->block<3, 3>(6, 0) = db3_da1;
    jacobian->block<3, 3>(6, 3) = db3_da2;
  }
  return rot;
}

Vector6d matrix_to_rot6d(const Eigen::Matrix3d& rot) {
  Vector6d r;
  r.head<3>() = rot.col(0);
  r.tail<3>() = rot.col(1);
  return r;
}

Vector6d rot6d_identity() {
  Vector6d r;
  r << 1, 0, 0, 0, 1, 0;
  return r;
}

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

bool is_proper_rotation(const Eigen::Matrix3d& rot, double tol) {
  if (!rot.allFinite()) return false;
  const double ortho = (rot.transpose() * rot - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rot.determinant() - 1.0) <= tol;
}

}  // namespace facesync
