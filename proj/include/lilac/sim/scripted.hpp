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

// Scripted data sources: a waypoint-following demonstrator for each task
// and short correction segments cut from replayed demonstrations.

#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lilac/data/trajectory.hpp"
#include "lilac/nn/tensor.hpp"
#include "lilac/sim/env.hpp"
#include "lilac/sim/task.hpp"
#include "lilac/sim/templates.hpp"

namespace lilac::sim {

struct DemoResult {
  data::Trajectory trajectory;
  std::vector<EnvState> states;  // states[t] precedes step t; one extra final state
};

class ScriptFailure : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline std::uint64_t task_salt(TaskId id) { return 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(id) + 1); }

// Records (state, pose delta, gripper) for every transition it performs.
class Recorder {
 public:
  Recorder(const TaskSpec& task, EnvState start, std::uint64_t noise_seed, double pos_noise, double ori_noise)
      : task_(task), order_(task.object_order()), rng_(noise_seed), pos_noise_(pos_noise), ori_noise_(ori_noise) {
    states_.push_back(std::move(start));
  }

  const EnvState& state() const { return states_.back(); }

  void step(Action desired, bool toggle) {
    if (!toggle) {
      for (int i = 0; i < 3; ++i) desired(i) += rng_.normal() * pos_noise_;
      for (int i = 3; i < 6; ++i) desired(i) += rng_.normal() * ori_noise_;
    }
    const EnvState& s = states_.back();
    EnvState next = transition(s, desired, toggle);
    data::Step st;
    st.state = state_vector(s, order_);
    st.action = data::compute_action_deltas({ee_pose(s), ee_pose(next)}).front();
    st.gripper_closed = next.gripper_closed;
    steps_.push_back(std::move(st));
    states_.push_back(std::move(next));
  }

  // Steps along `error` (the remaining 6-DoF displacement) until both parts
  // are under tolerance.
  void drive(const std::function<Action(const EnvState&)>& error, double pos_tol, double ori_tol,
             const char* what, int max_ticks = 300) {
    for (int tick = 0;; ++tick) {
      const Action e = error(state());
      if (e.head<3>().norm() < pos_tol && e.tail<3>().norm() < ori_tol) return;
      if (tick >= max_ticks) {
        throw ScriptFailure(std::string("scripted demo for ") + to_string(task_.id) + " stuck at: " + what);
      }
      step(e, false);
    }
  }

  std::vector<data::Step> take_steps() { return std::move(steps_); }
  std::vector<EnvState> take_states() { return std::move(states_); }

 private:
  const TaskSpec& task_;
  std::vector<std::string> order_;
  nn::Rng rng_;
  double pos_noise_;
  double ori_noise_;
  std::vector<data::Step> steps_;
  std::vector<EnvState> states_;
};

inline Action ee_error(const EnvState& s, const Vec3& goal) {
  Action e;
  e.head<3>() = goal - s.ee_position;
  e.tail<3>() = wrap_angles(-s.ee_orientation);
  return e;
}

// Displacement that brings the carried object to `goal`, with the task's
// orientation constraint on the object and the other gripper angles at zero.
inline Action object_error(const EnvState& s, const TaskSpec& task, const Vec3& goal) {
  const ObjectState& obj = s.object(task.source);
  Action e;
  e.head<3>() = goal - obj.position;
  e.tail<3>() = wrap_angles(-s.ee_orientation);
  if (task.orientation) e(3 + task.orientation->axis) = -task.orientation->error(obj.orientation);
  return e;
}

}  // namespace detail

inline constexpr double kDemoPositionNoise = 0.001;
inline constexpr double kDemoOrientationNoise = 0.003;

inline DemoResult scripted_demo(const TaskSpec& task, std::uint64_t seed) {
  validate(task);
  const std::uint64_t mixed = seed ^ detail::task_salt(task.id);
  detail::Recorder rec(task, initial_state(task, mixed), mixed + 1, kDemoPositionNoise, kDemoOrientationNoise);
  const Vec3 src = rec.state().object(task.source).position;
  using detail::ee_error;
  using detail::object_error;

  if (task.id == TaskId::kOpenDrawer) {
    rec.drive([&](const EnvState& s) { return ee_error(s, src - Vec3(0.06, 0.0, 0.0)); }, 0.01, 0.02, "approach");
  } else {
    rec.drive([&](const EnvState& s) { return ee_error(s, src + Vec3(0.0, 0.0, 0.08)); }, 0.01, 0.02, "pre-grasp");
  }
  rec.drive([&](const EnvState& s) { return ee_error(s, s.object(task.source).position); }, 0.004, 0.02, "grasp");
  rec.step(Action::Zero(), true);
  if (rec.state().held_object != task.source) throw ScriptFailure("scripted grasp missed " + task.source);

  if (task.id != TaskId::kOpenDrawer) {
    const Vec3 here = rec.state().ee_position;
    const double lift_z = std::max(here.z() + 0.08, task.target.center.z() + 0.08);
    rec.drive([&](const EnvState& s) { return ee_error(s, {here.x(), here.y(), lift_z}); }, 0.01, 0.02, "lift");
    const Vec3 above = task.target.center + Vec3(0.0, 0.0, 0.06);
    rec.drive([&](const EnvState& s) { return object_error(s, task, above); }, 0.01, 0.02, "transfer");
  }
  rec.drive([&](const EnvState& s) { return object_error(s, task, task.target.center); }, 0.004, 0.01, "place");
  if (task.release_to_complete) rec.step(Action::Zero(), true);

  DemoResult out;
  out.trajectory.task = to_string(task.id);
  out.trajectory.kind = data::TrajectoryKind::kFullTask;
  out.trajectory.utterance = task.instructions[seed % task.instructions.size()];
  out.trajectory.seed = seed;
  out.trajectory.steps = rec.take_steps();
  out.states = rec.take_states();
  if (!subtask_status(out.states, task).completed) {
    throw ScriptFailure("scripted demo for " + to_string(task.id) + " did not complete");
  }
  return out;
}

// Reapplies a trajectory's actions and gripper changes from `start`.
inline std::vector<EnvState> replay_trajectory(const EnvState& start, const data::Trajectory& traj) {
  std::vector<EnvState> states = {start};
  for (const auto& step : traj.steps) {
    const EnvState& s = states.back();
    states.push_back(transition(s, step.action, step.gripper_closed != s.gripper_closed));
  }
  return states;
}

inline constexpr int kCorrectionSegmentTicks = 8;
inline constexpr double kCorrectionPositionStep = 0.015;
inline constexpr double kCorrectionOrientationStep = 0.04;

// Realizes one correction template from `start`: a pure signed-axis motion
// for directional templates, a straight line toward the object (stopping at
// grasp range) for referential ones.
inline data::Trajectory correction_segment(const TaskSpec& task, const EnvState& start,
                                           const CorrectionTemplate& tpl, int ticks = kCorrectionSegmentTicks) {
  const auto order = task.object_order();
  data::Trajectory traj;
  traj.task = to_string(task.id);
  traj.kind = data::TrajectoryKind::kCorrection;
  traj.utterance = tpl.utterance;
  EnvState s = start;
  for (int t = 0; t < ticks; ++t) {
    Action a = Action::Zero();
    if (tpl.kind == CorrectionKind::kDirectional) {
      a(tpl.axis) = tpl.sign * tpl.scale * (tpl.axis < 3 ? kCorrectionPositionStep : kCorrectionOrientationStep);
    } else {
      const Vec3 delta = s.object(tpl.object).position - s.ee_position;
      const double remaining = delta.norm() - kGraspRadius;
      if (remaining <= 1e-6) break;
      a.head<3>() = delta.normalized() * std::min(kCorrectionPositionStep, remaining);
    }
    EnvState next = transition(s, a, false);
    data::Step st;
    st.state = state_vector(s, order);
    st.action = data::compute_action_deltas({ee_pose(s), ee_pose(next)}).front();
    st.gripper_closed = next.gripper_closed;
    traj.steps.push_back(std::move(st));
    s = std::move(next);
  }
  return traj;
}

// A referential template is usable at `s` if its object is not in hand and
// the gripper is not already next to it.
inline bool template_applicable(const CorrectionTemplate& tpl, const EnvState& s) {
  if (tpl.kind == CorrectionKind::kDirectional) return true;
  if (s.held_object == tpl.object) return false;
  return (s.object(tpl.object).position - s.ee_position).norm() > 0.05;
}

// Replays `demo` and cuts `count` segments at random intermediate states,
// each with a random template.
inline std::vector<data::Trajectory> scripted_corrections(const TaskSpec& task, const DemoResult& demo,
                                                          std::uint64_t seed, int count) {
  nn::Rng rng(seed);
  const auto& templates = correction_templates();
  std::vector<data::Trajectory> out;
  while (static_cast<int>(out.size()) < count) {
    const std::size_t tick = 1 + rng.index(demo.states.size() - 2);
    const auto& tpl = templates[rng.index(templates.size())];
    if (!template_applicable(tpl, demo.states[tick])) continue;
    auto seg = correction_segment(task, demo.states[tick], tpl);
    seg.seed = seed;
    out.push_back(std::move(seg));
  }
  return out;
}

struct DatasetSpec {
  int demos_per_task = 10;
  int corrections_per_template = 2;
  std::uint64_t seed = 0;
};

// Full-task demos (seeds seed..seed+N-1 for every task) followed by
// `corrections_per_template` segments for every template, each cut from a
// randomly chosen demo at a random replayed state.
inline data::Dataset generate_dataset(const DatasetSpec& spec) {
  data::Dataset out;
  std::vector<std::pair<TaskSpec, DemoResult>> demos;
  for (TaskId id : kAllTasks) {
    const TaskSpec task = builtin_task(id);
    for (int d = 0; d < spec.demos_per_task; ++d) {
      auto demo = scripted_demo(task, spec.seed + static_cast<std::uint64_t>(d));
      out.push_back(demo.trajectory);
      demo.states = replay_trajectory(demo.states.front(), demo.trajectory);
      demos.emplace_back(task, std::move(demo));
    }
  }
  nn::Rng rng(spec.seed ^ 0xc0ffeeULL);
  for (const auto& tpl : correction_templates()) {
    for (int r = 0; r < spec.corrections_per_template;) {
      const auto& [task, demo] = demos[rng.index(demos.size())];
      const std::size_t tick = 1 + rng.index(demo.states.size() - 2);
      if (!template_applicable(tpl, demo.states[tick])) continue;
      auto seg = correction_segment(task, demo.states[tick], tpl);
      seg.seed = demo.trajectory.seed;
      out.push_back(std::move(seg));
      ++r;
    }
  }
  return out;
}

}  // namespace lilac::sim
