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

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/nn/tensor.hpp"
#include "lilac/sim/geometry.hpp"
#include "lilac/util/hash.hpp"

namespace lilac::data {

using nn::Vector;
using sim::Action;

enum class TrajectoryKind { kFullTask, kCorrection };

inline std::string to_string(TrajectoryKind k) {
  return k == TrajectoryKind::kFullTask ? "full-task" : "correction-segment";
}

inline TrajectoryKind parse_trajectory_kind(const std::string& s) {
  if (s == "full-task") return TrajectoryKind::kFullTask;
  if (s == "correction-segment") return TrajectoryKind::kCorrection;
  throw std::invalid_argument("unknown trajectory kind: " + s);
}

struct Step {
  Vector state;
  Action action = Action::Zero();
  bool gripper_closed = false;  // gripper after this step's transition
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::string task;
  TrajectoryKind kind = TrajectoryKind::kFullTask;
  std::string utterance;
  std::optional<int> alpha;
  std::uint64_t seed = 0;
  std::vector<Step> steps;
  bool operator==(const Trajectory&) const = default;
};

using Dataset = std::vector<Trajectory>;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// a_t = pose_{t+1} - pose_t, with the three angle components wrapped.
inline std::vector<Action> compute_action_deltas(const std::vector<Action>& poses) {
  if (poses.size() < 2) throw std::invalid_argument("compute_action_deltas needs at least two poses");
  std::vector<Action> out;
  out.reserve(poses.size() - 1);
  for (std::size_t t = 0; t + 1 < poses.size(); ++t) {
    Action a = poses[t + 1] - poses[t];
    for (int i = 3; i < 6; ++i) a(i) = sim::wrap_angle(a(i));
    out.push_back(a);
  }
  return out;
}

inline nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"s", std::vector<double>(s.state.data(), s.state.data() + s.state.size())},
                     {"a", std::vector<double>(s.action.data(), s.action.data() + 6)},
                     {"g", s.gripper_closed ? 1 : 0}});
  }
  return {{"task", t.task},
          {"kind", to_string(t.kind)},
          {"utterance", t.utterance},
          {"alpha", t.alpha ? nlohmann::json(*t.alpha) : nlohmann::json(nullptr)},
          {"seed", t.seed},
          {"steps", steps}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.task = j.at("task").get<std::string>();
  t.kind = parse_trajectory_kind(j.at("kind").get<std::string>());
  t.utterance = j.at("utterance").get<std::string>();
  if (!j.at("alpha").is_null()) {
    const int a = j.at("alpha").get<int>();
    if (a != 0 && a != 1) throw DatasetError("alpha must be 0 or 1");
    t.alpha = a;
  }
  t.seed = j.at("seed").get<std::uint64_t>();
  std::optional<Eigen::Index> dim;
  for (const auto& js : j.at("steps")) {
    const auto s = js.at("s").get<std::vector<double>>();
    const auto a = js.at("a").get<std::vector<double>>();
    if (a.size() != 6) throw DatasetError("action must have 6 entries");
    if (dim && static_cast<Eigen::Index>(s.size()) != *dim) throw DatasetError("inconsistent state size");
    dim = static_cast<Eigen::Index>(s.size());
    Step step;
    step.state = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
    step.action = Eigen::Map<const Action>(a.data());
    step.gripper_closed = js.at("g").get<int>() != 0;
    t.steps.push_back(std::move(step));
  }
  if (t.steps.empty()) throw DatasetError("trajectory has no steps");
  return t;
}

// One trajectory per line.
inline std::string serialize_dataset(const Dataset& d) {
  std::string out;
  for (const auto& t : d) {
    out += to_json(t).dump();
    out += '\n';
  }
  return out;
}

inline Dataset parse_dataset(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      d.push_back(trajectory_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DatasetError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset " + path.string());
  out << serialize_dataset(d);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

// Content hash recorded in checkpoints so policies can be matched to data.
inline std::string dataset_hash(const Dataset& d) { return util::hex64(util::fnv1a(serialize_dataset(d))); }

inline std::size_t step_count(const Dataset& d) {
  std::size_t n = 0;
  for (const auto& t : d) n += t.steps.size();
  return n;
}

}  // namespace lilac::data
