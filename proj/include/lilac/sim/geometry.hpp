// Copyright 2026 The LILAC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace lilac::sim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Action = Eigen::Matrix<double, 6, 1>;

// Maps any angle into (-pi, pi].
inline double wrap_angle(double x) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double k = std::ceil((x - std::numbers::pi) / kTwoPi);
  double y = x - k * kTwoPi;
  if (y <= -std::numbers::pi) y += kTwoPi;
  return y;
}

inline Vec3 wrap_angles(const Vec3& v) { return {wrap_angle(v(0)), wrap_angle(v(1)), wrap_angle(v(2))}; }

// Orientation is (roll, pitch, yaw); rotation matrix R = Rz(yaw) Ry(pitch) Rx(roll).
inline Mat3 euler_to_matrix(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy(2), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy(1), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy(0), Vec3::UnitX()))
      .toRotationMatrix();
}

inline Vec3 matrix_to_euler(const Mat3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

}  // namespace lilac::sim
