#pragma once

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tsdf_mcl {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
using Quaternion = Eigen::Quaternion<Scalar>;

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar normalize_angle(Scalar angle) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  constexpr Scalar two_pi = 2 * pi;
  if (angle > -pi && angle <= pi) return angle;
  angle = std::fmod(angle, two_pi);
  if (angle <= -pi) angle += two_pi;
  if (angle > pi) angle -= two_pi;
  return angle;
}

/// Smallest signed difference a - b, wrapped into (-pi, pi].
template <typename Scalar>
Scalar angle_difference(Scalar a, Scalar b) {
  return normalize_angle(a - b);
}

/// Rotation for extrinsic X(roll) -> Y(pitch) -> Z(yaw), i.e. R = Rz * Ry * Rx.
template <typename Scalar>
Matrix3<Scalar> euler_to_rotation(Scalar roll, Scalar pitch, Scalar yaw) {
  const Scalar cr = std::cos(roll), sr = std::sin(roll);
  const Scalar cp = std::cos(pitch), sp = std::sin(pitch);
  const Scalar cy = std::cos(yaw), sy = std::sin(yaw);
  Matrix3<Scalar> r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp, cp * sr, cp * cr;
  return r;
}

/// Inverse of euler_to_rotation. Pitch lands in [-pi/2, pi/2]; the arcsine
/// argument is clamped so rounding near gimbal lock cannot produce NaN.
/// At gimbal lock roll is set to zero and the whole turn goes into yaw.
template <typename Scalar>
Vector3<Scalar> rotation_to_euler(const Matrix3<Scalar>& r) {
  const Scalar s = std::clamp(-r(2, 0), Scalar(-1), Scalar(1));
  const Scalar pitch = std::asin(s);
  if (std::hypot(r(2, 1), r(2, 2)) < Scalar(1e-9)) {
    return {Scalar(0), normalize_angle(pitch), normalize_angle(std::atan2(-r(0, 1), r(1, 1)))};
  }
  const Scalar roll = std::atan2(r(2, 1), r(2, 2));
  const Scalar yaw = std::atan2(r(1, 0), r(0, 0));
  return {normalize_angle(roll), normalize_angle(pitch), normalize_angle(yaw)};
}

template <typename Scalar>
Quaternion<Scalar> euler_to_quaternion(Scalar roll, Scalar pitch, Scalar yaw) {
  using AngleAxis = Eigen::AngleAxis<Scalar>;
  Quaternion<Scalar> q = AngleAxis(yaw, Vector3<Scalar>::UnitZ()) *
                         AngleAxis(pitch, Vector3<Scalar>::UnitY()) *
                         AngleAxis(roll, Vector3<Scalar>::UnitX());
  q.normalize();
  return q;
}

/// Returns (roll, pitch, yaw).
template <typename Scalar>
Vector3<Scalar> quaternion_to_euler(const Quaternion<Scalar>& q) {
  const Scalar w = q.w(), x = q.x(), y = q.y(), z = q.z();
  if (std::hypot(2 * (w * x + y * z), 1 - 2 * (x * x + y * y)) < Scalar(1e-9)) {
    return rotation_to_euler(q.toRotationMatrix());
  }
  const Scalar roll = std::atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y));
  const Scalar pitch = std::asin(std::clamp(2 * (w * y - z * x), Scalar(-1), Scalar(1)));
  const Scalar yaw = std::atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
  return {normalize_angle(roll), normalize_angle(pitch), normalize_angle(yaw)};
}

/// Six-DoF pose: position in meters plus roll/pitch/yaw in radians.
/// Angles are kept in (-pi, pi].
template <typename Scalar>
struct Pose6 {
  Scalar x{0}, y{0}, z{0};
  Scalar roll{0}, pitch{0}, yaw{0};

  Pose6() = default;
  Pose6(Scalar x_, Scalar y_, Scalar z_, Scalar roll_, Scalar pitch_, Scalar yaw_)
      : x(x_), y(y_), z(z_),
        roll(normalize_angle(roll_)),
        pitch(normalize_angle(pitch_)),
        yaw(normalize_angle(yaw_)) {}

  static Pose6 identity() { return {}; }

  static Pose6 from_rigid(const Matrix3<Scalar>& rotation, const Vector3<Scalar>& translation) {
    const Vector3<Scalar> rpy = rotation_to_euler(rotation);
    return {translation.x(), translation.y(), translation.z(), rpy.x(), rpy.y(), rpy.z()};
  }

  Vector3<Scalar> position() const { return {x, y, z}; }
  Matrix3<Scalar> rotation() const { return euler_to_rotation(roll, pitch, yaw); }
  Quaternion<Scalar> quaternion() const { return euler_to_quaternion(roll, pitch, yaw); }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = rotation();
    m.template topRightCorner<3, 1>() = position();
    return m;
  }

  template <typename Other>
  Pose6<Other> cast() const {
    return {Other(x), Other(y), Other(z), Other(roll), Other(pitch), Other(yaw)};
  }
};

using Pose6D = Pose6<double>;

/// a * b as rigid transforms (apply b first, then a).
template <typename Scalar>
Pose6<Scalar> compose(const Pose6<Scalar>& a, const Pose6<Scalar>& b) {
  const Matrix3<Scalar> ra = a.rotation();
  return Pose6<Scalar>::from_rigid(ra * b.rotation(), ra * b.position() + a.position());
}

template <typename Scalar>
Pose6<Scalar> inverse(const Pose6<Scalar>& p) {
  const Matrix3<Scalar> rt = p.rotation().transpose();
  return Pose6<Scalar>::from_rigid(rt, -(rt * p.position()));
}

template <typename Scalar, typename Derived>
Vector3<Scalar> transform_point(const Pose6<Scalar>& pose, const Eigen::MatrixBase<Derived>& p) {
  return pose.rotation() * p + pose.position();
}

/// Geodesic angle between two orientations, in [0, pi].
template <typename Scalar>
Scalar rotation_distance(const Pose6<Scalar>& a, const Pose6<Scalar>& b) {
  return a.quaternion().angularDistance(b.quaternion());
}

/// One trajectory sample: stamp (iteration index) plus pose.
struct StampedPose {
  double stamp{0};
  Pose6D pose;
};

using Trajectory = std::vector<StampedPose>;

/// Reads `t x y z roll pitch yaw` lines. Blank lines and `#` comments are skipped.
Trajectory read_trajectory(std::istream& in);
Trajectory load_trajectory(const std::string& path);
void write_trajectory(std::ostream& out, const Trajectory& trajectory);

}  // namespace tsdf_mcl
