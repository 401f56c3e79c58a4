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

// Scripted users for automated evaluation.
//
// The user of a latent-action policy looks one tick ahead: it tries every
// latent input on a fixed grid and keeps the one that most shrinks the
// distance to the current waypoint (the source object until it is held,
// then the target region, plus a weighted orientation term when the task
// constrains one axis). When that distance stops shrinking for a while, a
// LILAC user pushes the correction template whose direction best matches
// the remaining displacement and pops it once it stops helping or the
// instruction would make progress again. The imitation policy runs open
// loop. All users close the gripper within grasp range of the source and
// open it once the object sits in the target region, aligned.

#pragma once

#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/eval/policy.hpp"
#include "lilac/session/session.hpp"
#include "lilac/sim/env.hpp"
#include "lilac/sim/scripted.hpp"
#include "lilac/sim/task.hpp"
#include "lilac/sim/templates.hpp"

namespace lilac::eval {

struct RolloutOptions {
  int max_ticks = 600;
  int directions = 17;
  std::vector<double> magnitudes{1.0, 0.25};
  bool include_zero = true;
  double progress_threshold = 0.001;  // m of waypoint distance per tick
  int stall_ticks = 10;
  int correction_stall_ticks = 3;
  double orientation_weight = 0.2;  // m per rad
  bool corrections = true;          // honored for lilac only
};

struct RolloutResult {
  sim::SubtaskStatus status;
  session::EpisodeLog log;
  long ticks = 0;
  int corrections_pushed = 0;
};

// Rollout starting states never coincide with the demonstration seeds.
inline std::uint64_t rollout_env_seed(sim::TaskId task, std::uint64_t seed) {
  return (seed + 0x10000ULL) ^ sim::detail::task_salt(task) ^ 0xe7a1ULL;
}

inline std::vector<nn::Vector> latent_grid(const RolloutOptions& o, int latent_dim) {
  std::vector<nn::Vector> grid;
  if (o.include_zero) grid.push_back(nn::Vector::Zero(latent_dim));
  if (latent_dim != 2) {
    // Axis-aligned fallback for other latent sizes.
    for (double m : o.magnitudes) {
      for (int i = 0; i < latent_dim; ++i) {
        for (double sign : {1.0, -1.0}) {
          nn::Vector z = nn::Vector::Zero(latent_dim);
          z(i) = sign * m;
          grid.push_back(z);
        }
      }
    }
    return grid;
  }
  for (double m : o.magnitudes) {
    for (int k = 0; k < o.directions; ++k) {
      const double th = 2.0 * std::numbers::pi * k / o.directions;
      grid.push_back((nn::Vector(2) << m * std::cos(th), m * std::sin(th)).finished());
    }
  }
  return grid;
}

// Distance to the next waypoint and the displacement that would close it.
struct Waypoint {
  double distance = 0.0;
  sim::Action needed = sim::Action::Zero();
};

inline Waypoint waypoint(const sim::TaskSpec& task, const sim::EnvState& s, double orientation_weight) {
  Waypoint w;
  const sim::ObjectState& src = s.object(task.source);
  if (s.held_object != task.source) {
    w.needed.head<3>() = src.position - s.ee_position;
    w.distance = w.needed.head<3>().norm();
    return w;
  }
  w.needed.head<3>() = task.target.center - src.position;
  w.distance = w.needed.head<3>().norm();
  if (task.orientation) {
    const double err = task.orientation->error(src.orientation);
    w.needed(3 + task.orientation->axis) = -err * orientation_weight;
    w.distance += orientation_weight * std::abs(err);
  }
  return w;
}

// The scripted gripper: grasp when in range, release once placed.
inline bool gripper_toggle(const sim::TaskSpec& task, const sim::EnvState& s) {
  const sim::ObjectState& src = s.object(task.source);
  if (!s.gripper_closed) return (src.position - s.ee_position).norm() <= sim::kGraspRadius;
  if (s.held_object != task.source) return true;  // closed on nothing
  return task.release_to_complete && task.target.contains(src.position) && task.aligned(src.orientation);
}

namespace detail {

struct Choice {
  nn::Vector z;
  double distance = 0.0;
};

inline Choice best_latent(const session::ControlSession& session, const std::optional<model::ControlBases>& bases,
                          const std::vector<nn::Vector>& grid, const sim::TaskSpec& task, double orientation_weight) {
  Choice best{grid.front(), std::numeric_limits<double>::infinity()};
  for (const auto& z : grid) {
    const sim::EnvState next = sim::transition(session.env(), session.preview_action(z, bases));
    const double d = waypoint(task, next, orientation_weight).distance;
    if (d < best.distance - 1e-12) best = {z, d};
  }
  return best;
}

inline const sim::CorrectionTemplate* pick_correction(const sim::TaskSpec& task, const sim::EnvState& s,
                                                      const std::set<std::string>& tried, double orientation_weight) {
  const sim::Action needed = waypoint(task, s, orientation_weight).needed;
  if (needed.norm() < 1e-9) return nullptr;
  const sim::CorrectionTemplate* best = nullptr;
  double best_cos = 0.0;
  for (const auto& tpl : sim::correction_templates()) {
    if (tried.count(tpl.utterance) || !sim::template_applicable(tpl, s)) continue;
    const auto dir = sim::template_direction(tpl, s);
    if (!dir) continue;
    const double c = dir->dot(needed) / needed.norm();
    if (c > best_cos) {
      best_cos = c;
      best = &tpl;
    }
  }
  return best;
}

}  // namespace detail

inline RolloutResult rollout_latent(const Policy& policy, const sim::TaskSpec& task, std::uint64_t seed,
                                    const RolloutOptions& o = {}) {
  const std::string instruction = task.instructions[seed % task.instructions.size()];
  session::ControlContext ctx = policy.control;
  ctx.object_order = task.object_order();
  session::ControlSession session(ctx, instruction, sim::initial_state(task, rollout_env_seed(task.id, seed)));
  session.log().annotate("task", sim::to_string(task.id));
  session.log().annotate("seed", seed);
  const auto grid = latent_grid(o, ctx.model->config().latent_dim);
  const bool may_correct = o.corrections && policy.kind == PolicyKind::kLilac;

  sim::SubtaskTracker tracker(task);
  tracker.observe(session.env());
  RolloutResult out;
  int stalled = 0;
  int correction_stalled = 0;
  double correction_gain = 0.0;
  std::set<std::string> tried;
  double prev = waypoint(task, session.env(), o.orientation_weight).distance;
  bool prev_held = session.env().held_object.has_value();

  const session::ResolvedUtterance instruction_resolved = session.active();
  while (session.tick_count() < o.max_ticks && !tracker.status().completed) {
    const bool toggle = gripper_toggle(task, session.env());

    // While a correction is active, hand control back as soon as the
    // instruction alone would make progress and do at least as well.
    if (may_correct && session.stack().depth() > 0 && !toggle) {
      const auto with_correction = detail::best_latent(session, session.current_bases(), grid, task, o.orientation_weight);
      std::optional<model::ControlBases> instr;
      try {
        instr = ctx.model->control_bases(session.state_vector(), instruction_resolved.embedding,
                                         instruction_resolved.alpha);
      } catch (const model::DegenerateBasesError&) {
      }
      if (instr) {
        const auto with_instruction = detail::best_latent(session, instr, grid, task, o.orientation_weight);
        if (prev - with_instruction.distance >= o.progress_threshold &&
            with_instruction.distance <= with_correction.distance) {
          session.pop_correction();
          stalled = 0;
          tried.clear();
        }
      }
    }

    nn::Vector z = nn::Vector::Zero(ctx.model->config().latent_dim);
    if (!toggle) z = detail::best_latent(session, session.current_bases(), grid, task, o.orientation_weight).z;

    session.tick(z, toggle);
    tracker.observe(session.env());
    const bool held = session.env().held_object.has_value();
    const double now = waypoint(task, session.env(), o.orientation_weight).distance;
    // A grasp or release changes the waypoint; progress restarts from there.
    const double gain = held == prev_held ? prev - now : o.progress_threshold;
    prev = now;
    prev_held = held;

    if (session.stack().depth() > 0) {
      correction_gain += std::max(gain, 0.0);
      correction_stalled = gain < o.progress_threshold ? correction_stalled + 1 : 0;
      if (correction_stalled >= o.correction_stall_ticks) {
        if (correction_gain < o.progress_threshold) tried.insert(session.stack().active());
        session.pop_correction();
        stalled = 0;
        correction_stalled = 0;
      }
      continue;
    }

    if (gain >= o.progress_threshold) {
      stalled = 0;
      tried.clear();
      continue;
    }
    if (++stalled < o.stall_ticks || !may_correct) continue;
    if (const auto* tpl = detail::pick_correction(task, session.env(), tried, o.orientation_weight)) {
      session.push_correction(tpl->utterance);
      ++out.corrections_pushed;
      correction_gain = 0.0;
      correction_stalled = 0;
    }
    stalled = 0;
  }
  session.finish();
  out.status = tracker.status();
  out.ticks = session.tick_count();
  out.log = session.log();
  return out;
}

// Open loop: the policy sees the last `history` states and the instruction.
inline RolloutResult rollout_imitation(const Policy& policy, const sim::TaskSpec& task, std::uint64_t seed,
                                       const RolloutOptions& o = {}) {
  const baselines::ImitationPolicy& net = *policy.imitation;
  const std::string instruction = task.instructions[seed % task.instructions.size()];
  const nn::Vector embedding = policy.embedder->embed(instruction).vector;
  const auto order = task.object_order();
  sim::EnvState env = sim::initial_state(task, rollout_env_seed(task.id, seed));

  RolloutResult out;
  out.log.begin("imitation", instruction, env, order);
  out.log.annotate("task", sim::to_string(task.id));
  out.log.annotate("seed", seed);
  sim::SubtaskTracker tracker(task);
  tracker.observe(env);
  std::vector<nn::Vector> history;
  const int window = net.config().history;
  long tick = 0;
  while (tick < o.max_ticks && !tracker.status().completed) {
    const nn::Vector s = sim::state_vector(env, order);
    history.push_back(s);
    if (static_cast<int>(history.size()) > window) history.erase(history.begin());
    nn::Matrix h(s.size(), static_cast<Eigen::Index>(history.size()));
    for (std::size_t i = 0; i < history.size(); ++i) h.col(static_cast<Eigen::Index>(i)) = history[i];
    const nn::Vector raw = net.predict(h, embedding);
    sim::Action a = raw.allFinite() ? sim::cap_action(sim::Action(raw)) : sim::Action::Zero();
    const bool toggle = gripper_toggle(task, env);
    if (toggle) a.setZero();
    env = sim::transition(env, a, toggle);
    out.log.tick(tick, s, instruction, 1, nn::Vector(), a, toggle);
    tracker.observe(env);
    ++tick;
  }
  out.log.end(env, tick);
  out.status = tracker.status();
  out.ticks = tick;
  return out;
}

inline RolloutResult scripted_user_rollout(const Policy& policy, const sim::TaskSpec& task, std::uint64_t seed,
                                           const RolloutOptions& o = {}) {
  return policy.kind == PolicyKind::kImitation ? rollout_imitation(policy, task, seed, o)
                                               : rollout_latent(policy, task, seed, o);
}

// Fraction of episodes reaching each stage.
struct StageRates {
  double reached = 0.0;
  double grasped = 0.0;
  double transferred = 0.0;
  double completed = 0.0;
  int episodes = 0;

  void add(const sim::SubtaskStatus& s) {
    reached += s.reached;
    grasped += s.grasped;
    transferred += s.transferred;
    completed += s.completed;
    ++episodes;
  }
  StageRates mean() const {
    StageRates r = *this;
    if (episodes == 0) return r;
    const double n = episodes;
    r.reached /= n;
    r.grasped /= n;
    r.transferred /= n;
    r.completed /= n;
    return r;
  }
};

inline nlohmann::json to_json(const StageRates& r) {
  return {{"reached", r.reached},
          {"grasped", r.grasped},
          {"transferred", r.transferred},
          {"completed", r.completed},
          {"episodes", r.episodes}};
}

}  // namespace lilac::eval
