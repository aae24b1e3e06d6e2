#pragma once

#include <Eigen/Core>

namespace facesync {

using Vector6d = Eigen::Matrix<double, 6, 1>;
/// d vec(R) / d r for the 6D rotation decoder; vec stacks columns
/// (rows 0-2 = column 0 of R, rows 3-5 = column 1, rows 6-8 = column 2).
using Rot6dJacobian = Eigen::Matrix<double, 9, 6>;

/// Decodes the continuous 6D representation (first two matrix columns,
/// not necessarily orthonormal) by Gram-Schmidt plus a cross product.
/// Throws DegenerateError when the two triples are (nearly) parallel or zero.
Eigen::Matrix3d rot6d_to_matrix(const Vector6d& r);

/// Same decoding, also returning the analytic Jacobian.
Eigen::Matrix3d rot6d_to_matrix(const Vector6d& r, Rot6dJacobian* jacobian);

/// Canonical 6D encoding of a rotation (its first two columns).
Vector6d matrix_to_rot6d(const Eigen::Matrix3d& rot);

/// Identity rotation in 6D form, (1,0,0, 0,1,0).
Vector6d rot6d_identity();

/// Rotation of `angle` radians about `axis` (Rodrigues).
Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle);

/// True if R^T R = I and det R = 1 within `tol`.
bool is_proper_rotation(const Eigen::Matrix3d& rot, double tol = 1e-5);

}  // namespace facesync
