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

// Flying-gripper desk world. Frame: +x away from the robot base, +y to the
// robot's left, +z up; meters and radians.

#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/nn/tensor.hpp"
#include "lilac/sim/geometry.hpp"

namespace lilac::sim {

// Per-tick motion limits (10 Hz control).
inline constexpr double kMaxPositionStep = 0.02;
inline constexpr double kMaxOrientationStep = 0.05;
inline constexpr double kGraspRadius = 0.02;

struct Workspace {
  Vec3 lo{0.2, -0.5, 0.0};
  Vec3 hi{0.9, 0.5, 0.6};

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
  bool operator==(const Workspace&) const = default;
};

struct ObjectState {
  Vec3 position = Vec3::Zero();
  Vec3 orientation = Vec3::Zero();
  bool graspable = true;
  bool operator==(const ObjectState&) const = default;
};

struct EnvState {
  Vec3 ee_position{0.5, 0.0, 0.35};
  Vec3 ee_orientation = Vec3::Zero();
  bool gripper_closed = false;
  std::optional<std::string> held_object;
  // Pose of the held object in the gripper frame, fixed at grasp time.
  Vec3 held_offset = Vec3::Zero();
  Mat3 held_rotation = Mat3::Identity();
  std::map<std::string, ObjectState> objects;
  Workspace workspace;

  const ObjectState& object(const std::string& id) const {
    auto it = objects.find(id);
    if (it == objects.end()) throw std::out_of_range("unknown object: " + id);
    return it->second;
  }
  bool operator==(const EnvState&) const = default;
};

// Shrinks the whole action uniformly until both the translational and the
// rotational parts are within their per-tick caps.
inline Action cap_action(const Action& a) {
  const double p = a.head<3>().norm();
  const double r = a.tail<3>().norm();
  double scale = 1.0;
  if (p > kMaxPositionStep) scale = std::min(scale, kMaxPositionStep / p);
  if (r > kMaxOrientationStep) scale = std::min(scale, kMaxOrientationStep / r);
  return a * scale;
}

inline void attach_held_pose(EnvState& s) {
  if (!s.held_object) return;
  ObjectState& obj = s.objects.at(*s.held_object);
  const Mat3 r_ee = euler_to_matrix(s.ee_orientation);
  obj.position = s.ee_position + r_ee * s.held_offset;
  obj.orientation = matrix_to_euler(r_ee * s.held_rotation);
}

// Nearest graspable object within kGraspRadius of the gripper, if any.
inline std::optional<std::string> graspable_near(const EnvState& s) {
  std::optional<std::string> best;
  double best_d = kGraspRadius;
  for (const auto& [id, obj] : s.objects) {
    if (!obj.graspable) continue;
    const double d = (obj.position - s.ee_position).norm();
    if (d <= best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

// Deterministic transition: capped pose delta, clip to the workspace, wrap
// angles, then the optional gripper toggle. Closing grasps the nearest
// graspable object within 2 cm; opening releases it where it is.
inline EnvState transition(const EnvState& s, const Action& a, bool toggle_gripper = false) {
  if (!a.allFinite()) throw nn::NumericError("transition: non-finite action");
  EnvState next = s;
  const Action capped = cap_action(a);
  next.ee_position = s.workspace.clamp(s.ee_position + capped.head<3>());
  next.ee_orientation = wrap_angles(s.ee_orientation + capped.tail<3>());
  attach_held_pose(next);
  if (toggle_gripper) {
    if (next.gripper_closed) {
      next.gripper_closed = false;
      next.held_object.reset();
    } else {
      next.gripper_closed = true;
      if (auto id = graspable_near(next)) {
        const ObjectState& obj = next.objects.at(*id);
        const Mat3 r_ee_t = euler_to_matrix(next.ee_orientation).transpose();
        next.held_object = *id;
        next.held_offset = r_ee_t * (obj.position - next.ee_position);
        next.held_rotation = r_ee_t * euler_to_matrix(obj.orientation);
      }
    }
  }
  return next;
}

// Pose as a 6-vector (x, y, z, roll, pitch, yaw).
inline Action ee_pose(const EnvState& s) {
  Action p;
  p << s.ee_position, s.ee_orientation;
  return p;
}

// Layout: [ee position (3), ee orientation (3), gripper (1), then the xyz of
// each object in `order`]. The order comes from the task, never from the map.
inline nn::Vector state_vector(const EnvState& s, const std::vector<std::string>& order) {
  nn::Vector v(7 + 3 * static_cast<Eigen::Index>(order.size()));
  v.head<6>() = ee_pose(s);
  v(6) = s.gripper_closed ? 1.0 : 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    v.segment<3>(7 + 3 * static_cast<Eigen::Index>(i)) = s.object(order[i]).position;
  }
  return v;
}

struct ParsedStateVector {
  Action pose;
  bool gripper_closed = false;
  std::map<std::string, Vec3> object_positions;
};

inline ParsedStateVector parse_state_vector(const nn::Vector& v, const std::vector<std::string>& order) {
  nn::require_rows(v, 7 + 3 * static_cast<Eigen::Index>(order.size()), "state vector");
  ParsedStateVector p;
  p.pose = v.head<6>();
  p.gripper_closed = v(6) != 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    p.object_positions[order[i]] = v.segment<3>(7 + 3 * static_cast<Eigen::Index>(i));
  }
  return p;
}

inline nn::Vector encode_state_vector(const ParsedStateVector& p, const std::vector<std::string>& order) {
  nn::Vector v(7 + 3 * static_cast<Eigen::Index>(order.size()));
  v.head<6>() = p.pose;
  v(6) = p.gripper_closed ? 1.0 : 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    v.segment<3>(7 + 3 * static_cast<Eigen::Index>(i)) = p.object_positions.at(order[i]);
  }
  return v;
}

// JSON forms. Doubles are written shortest-round-trip, so parse(dump(s)) == s.
inline nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v(0), v(1), v(2)}); }
inline Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const EnvState& s) {
  nlohmann::json objects = nlohmann::json::object();
  for (const auto& [id, o] : s.objects) {
    objects[id] = {{"position", vec_to_json(o.position)},
                   {"orientation", vec_to_json(o.orientation)},
                   {"graspable", o.graspable}};
  }
  nlohmann::json rot = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) rot.push_back(vec_to_json(s.held_rotation.row(i).transpose()));
  return {{"ee_position", vec_to_json(s.ee_position)},
          {"ee_orientation", vec_to_json(s.ee_orientation)},
          {"gripper_closed", s.gripper_closed},
          {"held_object", s.held_object ? nlohmann::json(*s.held_object) : nlohmann::json(nullptr)},
          {"held_offset", vec_to_json(s.held_offset)},
          {"held_rotation", rot},
          {"objects", objects},
          {"workspace", {{"lo", vec_to_json(s.workspace.lo)}, {"hi", vec_to_json(s.workspace.hi)}}}};
}

inline EnvState env_state_from_json(const nlohmann::json& j) {
  EnvState s;
  s.ee_position = vec_from_json(j.at("ee_position"));
  s.ee_orientation = vec_from_json(j.at("ee_orientation"));
  s.gripper_closed = j.at("gripper_closed").get<bool>();
  if (!j.at("held_object").is_null()) s.held_object = j.at("held_object").get<std::string>();
  s.held_offset = vec_from_json(j.at("held_offset"));
  const auto& rot = j.at("held_rotation");
  if (!rot.is_array() || rot.size() != 3) throw std::invalid_argument("held_rotation must be 3x3");
  for (int i = 0; i < 3; ++i) s.held_rotation.row(i) = vec_from_json(rot[i]).transpose();
  s.objects.clear();
  for (const auto& [id, o] : j.at("objects").items()) {
    s.objects[id] = {vec_from_json(o.at("position")), vec_from_json(o.at("orientation")),
                     o.at("graspable").get<bool>()};
  }
  s.workspace = {vec_from_json(j.at("workspace").at("lo")), vec_from_json(j.at("workspace").at("hi"))};
  if (s.held_object && !s.objects.count(*s.held_object)) {
    throw std::invalid_argument("held object not in scene: " + *s.held_object);
  }
  return s;
}

}  // namespace lilac::sim
