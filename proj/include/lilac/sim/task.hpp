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

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/nn/tensor.hpp"
#include "lilac/sim/env.hpp"

namespace lilac::sim {

enum class TaskId { kCleanTrash, kTransferPen, kOpenDrawer, kInsertBook, kWaterPlant };

inline constexpr std::array<TaskId, 5> kAllTasks = {TaskId::kCleanTrash, TaskId::kTransferPen,
                                                    TaskId::kOpenDrawer, TaskId::kInsertBook,
                                                    TaskId::kWaterPlant};

inline std::string to_string(TaskId id) {
  switch (id) {
    case TaskId::kCleanTrash: return "clean-trash";
    case TaskId::kTransferPen: return "transfer-pen";
    case TaskId::kOpenDrawer: return "open-drawer";
    case TaskId::kInsertBook: return "insert-book";
    case TaskId::kWaterPlant: return "water-plant";
  }
  return "?";
}

inline TaskId parse_task_id(const std::string& s) {
  for (TaskId id : kAllTasks) {
    if (to_string(id) == s) return id;
  }
  throw std::invalid_argument("unknown task: " + s);
}

inline constexpr std::array<const char*, 3> kAxisNames = {"roll", "pitch", "yaw"};

struct TargetRegion {
  Vec3 center = Vec3::Zero();
  double tolerance = 0.0;
  bool contains(const Vec3& p) const { return (p - center).norm() <= tolerance; }
  bool operator==(const TargetRegion&) const = default;
};

// Constraint on one Euler angle of the carried object.
struct OrientationConstraint {
  int axis = 2;  // 0 roll, 1 pitch, 2 yaw
  double target = 0.0;
  double tolerance = 0.05;
  double error(const Vec3& rpy) const { return wrap_angle(rpy(axis) - target); }
  bool satisfied(const Vec3& rpy) const { return std::abs(error(rpy)) <= tolerance; }
  bool operator==(const OrientationConstraint&) const = default;
};

struct SceneObject {
  std::string id;
  ObjectState state;
  bool operator==(const SceneObject&) const = default;
};

struct TaskSpec {
  TaskId id = TaskId::kCleanTrash;
  std::string source;
  TargetRegion target;
  std::optional<OrientationConstraint> orientation;
  // Completed on release inside the region; otherwise while held inside it.
  bool release_to_complete = true;
  std::vector<std::string> instructions;
  std::vector<SceneObject> objects;  // canonical order; also the state-vector order
  Vec3 home{0.5, 0.0, 0.35};
  double home_jitter = 0.02;
  double object_jitter = 0.03;
  Workspace workspace;

  std::vector<std::string> object_order() const {
    std::vector<std::string> order;
    for (const auto& o : objects) order.push_back(o.id);
    return order;
  }
  int state_dim() const { return 7 + 3 * static_cast<int>(objects.size()); }
  bool aligned(const Vec3& rpy) const { return !orientation || orientation->satisfied(rpy); }
  bool operator==(const TaskSpec&) const = default;
};

// The shared desk, in canonical order.
inline std::vector<SceneObject> desk_objects() {
  auto obj = [](std::string id, Vec3 p, bool graspable) {
    return SceneObject{std::move(id), ObjectState{p, Vec3::Zero(), graspable}};
  };
  return {obj("paper", {0.45, 0.20, 0.03}, true),        obj("trash_bin", {0.30, 0.40, 0.10}, false),
          obj("blue_marker", {0.70, -0.30, 0.02}, true), obj("tin_holder", {0.35, -0.35, 0.08}, false),
          obj("drawer_knob", {0.78, 0.0, 0.10}, true),   obj("book", {0.50, -0.10, 0.03}, true),
          obj("bookshelf", {0.80, -0.15, 0.35}, false),  obj("cup", {0.40, 0.10, 0.06}, true),
          obj("plant", {0.65, 0.30, 0.05}, false)};
}

inline TaskSpec builtin_task(TaskId id) {
  TaskSpec t;
  t.id = id;
  t.objects = desk_objects();
  switch (id) {
    case TaskId::kCleanTrash:
      t.source = "paper";
      t.target = {{0.30, 0.40, 0.15}, 0.06};
      t.instructions = {"throw the paper into the trash", "put the paper in the trash bin"};
      break;
    case TaskId::kTransferPen:
      t.source = "blue_marker";
      t.target = {{0.35, -0.35, 0.12}, 0.025};
      t.instructions = {"put the blue marker in the tin holder", "move the marker into the tin"};
      break;
    case TaskId::kOpenDrawer:
      t.source = "drawer_knob";
      t.target = {{0.63, 0.0, 0.10}, 0.015};
      t.instructions = {"open the bottom drawer", "pull the drawer open by the knob"};
      break;
    case TaskId::kInsertBook:
      t.source = "book";
      t.target = {{0.78, -0.15, 0.36}, 0.015};
      t.orientation = OrientationConstraint{2, 1.2, 0.05};
      t.instructions = {"pick up the book and insert it into the bookshelf", "put the book on the shelf"};
      break;
    case TaskId::kWaterPlant:
      t.source = "cup";
      t.target = {{0.65, 0.30, 0.20}, 0.03};
      t.orientation = OrientationConstraint{0, 1.0, 0.1};
      t.release_to_complete = false;
      t.instructions = {"water the plant with the cup", "pour the cup over the plant"};
      break;
  }
  return t;
}

inline void validate(const TaskSpec& t) {
  bool has_source = false;
  for (const auto& o : t.objects) {
    if (o.id == t.source) has_source = o.state.graspable;
    if (!t.workspace.contains(o.state.position)) throw std::invalid_argument("object outside workspace: " + o.id);
  }
  if (!has_source) throw std::invalid_argument("task source missing or not graspable: " + t.source);
  if (!t.workspace.contains(t.target.center)) throw std::invalid_argument("target region outside workspace");
  if (t.target.tolerance <= 0.0) throw std::invalid_argument("target tolerance must be positive");
  if (t.instructions.empty()) throw std::invalid_argument("task has no instructions");
}

// Seeded start: home and graspable objects jittered uniformly in x and y.
inline EnvState initial_state(const TaskSpec& t, std::uint64_t seed) {
  nn::Rng rng(seed);
  EnvState s;
  s.workspace = t.workspace;
  s.ee_position = t.home;
  for (int i = 0; i < 3; ++i) s.ee_position(i) += rng.uniform(-t.home_jitter, t.home_jitter);
  for (const auto& o : t.objects) {
    ObjectState st = o.state;
    if (st.graspable) {
      st.position(0) += rng.uniform(-t.object_jitter, t.object_jitter);
      st.position(1) += rng.uniform(-t.object_jitter, t.object_jitter);
    }
    s.objects[o.id] = st;
  }
  return s;
}

// ---- scene files ----------------------------------------------------------

inline nlohmann::json to_json(const TaskSpec& t) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : t.objects) {
    objects.push_back({{"id", o.id},
                       {"position", vec_to_json(o.state.position)},
                       {"orientation", vec_to_json(o.state.orientation)},
                       {"graspable", o.state.graspable}});
  }
  nlohmann::json orient = nullptr;
  if (t.orientation) {
    orient = {{"axis", kAxisNames[static_cast<std::size_t>(t.orientation->axis)]},
              {"target", t.orientation->target},
              {"tolerance", t.orientation->tolerance}};
  }
  return {{"version", 1},
          {"task", to_string(t.id)},
          {"workspace", {{"lo", vec_to_json(t.workspace.lo)}, {"hi", vec_to_json(t.workspace.hi)}}},
          {"home", vec_to_json(t.home)},
          {"home_jitter", t.home_jitter},
          {"object_jitter", t.object_jitter},
          {"objects", objects},
          {"source", t.source},
          {"target", {{"center", vec_to_json(t.target.center)}, {"tolerance", t.target.tolerance}}},
          {"orientation_constraint", orient},
          {"release_to_complete", t.release_to_complete},
          {"instructions", t.instructions}};
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported scene version");
  TaskSpec t;
  t.id = parse_task_id(j.at("task").get<std::string>());
  t.workspace = {vec_from_json(j.at("workspace").at("lo")), vec_from_json(j.at("workspace").at("hi"))};
  t.home = vec_from_json(j.at("home"));
  t.home_jitter = j.at("home_jitter").get<double>();
  t.object_jitter = j.at("object_jitter").get<double>();
  for (const auto& o : j.at("objects")) {
    t.objects.push_back({o.at("id").get<std::string>(),
                         {vec_from_json(o.at("position")), vec_from_json(o.at("orientation")),
                          o.at("graspable").get<bool>()}});
  }
  t.source = j.at("source").get<std::string>();
  t.target = {vec_from_json(j.at("target").at("center")), j.at("target").at("tolerance").get<double>()};
  const auto& orient = j.at("orientation_constraint");
  if (!orient.is_null()) {
    const auto axis = orient.at("axis").get<std::string>();
    int index = -1;
    for (int i = 0; i < 3; ++i) {
      if (axis == kAxisNames[static_cast<std::size_t>(i)]) index = i;
    }
    if (index < 0) throw std::invalid_argument("bad orientation axis: " + axis);
    t.orientation = OrientationConstraint{index, orient.at("target").get<double>(),
                                          orient.at("tolerance").get<double>()};
  }
  t.release_to_complete = j.at("release_to_complete").get<bool>();
  t.instructions = j.at("instructions").get<std::vector<std::string>>();
  validate(t);
  return t;
}

inline TaskSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path.string());
  return task_from_json(nlohmann::json::parse(in));
}

inline void save_scene(const TaskSpec& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene file " + path.string());
  out << to_json(t).dump(2) << '\n';
}

// ---- subtask scoring -------------------------------------------------------

inline constexpr double kReachRadius = 0.05;

struct SubtaskStatus {
  bool reached = false;
  bool grasped = false;
  bool transferred = false;
  bool completed = false;
  bool operator==(const SubtaskStatus&) const = default;
};

inline nlohmann::json to_json(const SubtaskStatus& s) {
  return {{"reached", s.reached}, {"grasped", s.grasped}, {"transferred", s.transferred},
          {"completed", s.completed}};
}

// Accumulates stage flags over consecutive states. Flags only ever turn on.
class SubtaskTracker {
 public:
  explicit SubtaskTracker(const TaskSpec& task) : task_(task) {}

  void observe(const EnvState& s) {
    const ObjectState& src = s.object(task_.source);
    const bool held_now = s.held_object == task_.source;
    const bool held_before = prev_held_;
    const bool placed = task_.target.contains(src.position) && task_.aligned(src.orientation);
    if ((s.ee_position - src.position).norm() <= kReachRadius) status_.reached = true;
    if (held_now) status_.grasped = true;
    // Motion is applied before the gripper toggle, so on a release tick the
    // object reached its final pose while still held.
    if ((held_now || held_before) && task_.target.contains(src.position)) status_.transferred = true;
    if (task_.release_to_complete) {
      if (held_before && !held_now && placed) status_.completed = true;
    } else if (held_now && placed) {
      status_.completed = true;
    }
    prev_held_ = held_now;
  }

  const SubtaskStatus& status() const { return status_; }

 private:
  TaskSpec task_;
  SubtaskStatus status_;
  bool prev_held_ = false;
};

inline SubtaskStatus subtask_status(const std::vector<EnvState>& trace, const TaskSpec& task) {
  if (trace.empty()) throw std::invalid_argument("subtask_status: empty trace");
  SubtaskTracker tracker(task);
  for (const auto& s : trace) tracker.observe(s);
  return tracker.status();
}

}  // namespace lilac::sim
