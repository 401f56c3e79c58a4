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

// Episode logs are JSON lines: one header, then tick and event records in
// the order they happened, then an end record holding the final state.
//
//   {"type":"header","version":1,"policy":..,"instruction":..,"initial_state":{..},"meta":{..}}
//   {"type":"event","event":"push"|"pop"|"pop-empty","utterance":..,"tick":n}
//   {"type":"tick","tick":n,"state":[..],"utterance":..,"alpha":0|1,"z":[..],"a":[..],"gripper":bool}
//   {"type":"end","ticks":n,"final_state":{..}}
//
// "state" is the state vector before the action. Replaying the logged
// actions from the initial state reproduces every state bit for bit.

#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/nn/tensor.hpp"
#include "lilac/sim/env.hpp"

namespace lilac::session {

class LogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json vector_to_json(const nn::Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline nn::Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  nn::Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

class EpisodeLog {
 public:
  void begin(const std::string& policy, const std::string& instruction, const sim::EnvState& initial,
             const std::vector<std::string>& object_order) {
    lines_.clear();
    lines_.push_back({{"type", "header"},
                      {"version", 1},
                      {"policy", policy},
                      {"instruction", instruction},
                      {"object_order", object_order},
                      {"initial_state", sim::to_json(initial)},
                      {"meta", nlohmann::json::object()}});
  }

  void annotate(const std::string& key, nlohmann::json value) {
    if (lines_.empty()) throw LogError("annotate before begin");
    lines_.front()["meta"][key] = std::move(value);
  }

  void event(const std::string& kind, const std::string& utterance, long tick) {
    lines_.push_back({{"type", "event"}, {"event", kind}, {"utterance", utterance}, {"tick", tick}});
  }

  void tick(long tick, const nn::Vector& state, const std::string& utterance, int alpha, const nn::Vector& z,
            const sim::Action& a, bool gripper) {
    lines_.push_back({{"type", "tick"},
                      {"tick", tick},
                      {"state", vector_to_json(state)},
                      {"utterance", utterance},
                      {"alpha", alpha},
                      {"z", vector_to_json(z)},
                      {"a", vector_to_json(a)},
                      {"gripper", gripper}});
  }

  void end(const sim::EnvState& final_state, long ticks) {
    if (!lines_.empty() && lines_.back().value("type", "") == "end") lines_.pop_back();
    lines_.push_back({{"type", "end"}, {"ticks", ticks}, {"final_state", sim::to_json(final_state)}});
  }

  const std::vector<nlohmann::json>& lines() const { return lines_; }

  std::string serialize() const {
    std::string out;
    for (const auto& l : lines_) out += l.dump() + "\n";
    return out;
  }

  static EpisodeLog parse(const std::string& text) {
    EpisodeLog log;
    std::istringstream in(text);
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        log.lines_.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw LogError("episode log line " + std::to_string(n) + ": " + e.what());
      }
    }
    if (log.lines_.empty() || log.lines_.front().value("type", "") != "header") {
      throw LogError("episode log does not start with a header");
    }
    if (log.lines_.front().value("version", 0) != 1) throw LogError("unsupported episode log version");
    return log;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LogError("cannot write " + path);
    out << serialize();
  }

  static EpisodeLog load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LogError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

 private:
  std::vector<nlohmann::json> lines_;
};

struct ReplayResult {
  sim::EnvState final_state;
  long ticks = 0;
  bool states_match = true;  // every logged pre-action state reproduced
  bool final_matches = true;  // equals the logged end state (true when there is none)
  long first_mismatch = -1;
};

// Re-applies logged actions and gripper toggles from the initial state. Needs
// no model: the log holds the actions that were actually applied.
inline ReplayResult replay(const EpisodeLog& log) {
  const auto& lines = log.lines();
  if (lines.empty()) throw LogError("empty episode log");
  ReplayResult r;
  r.final_state = sim::env_state_from_json(lines.front().at("initial_state"));
  const auto order = lines.front().at("object_order").get<std::vector<std::string>>();
  for (const auto& l : lines) {
    const std::string type = l.value("type", "");
    if (type == "tick") {
      const nn::Vector logged = vector_from_json(l.at("state"));
      if (r.states_match && logged != sim::state_vector(r.final_state, order)) {
        r.states_match = false;
        r.first_mismatch = l.at("tick").get<long>();
      }
      const nn::Vector a = vector_from_json(l.at("a"));
      if (a.size() != 6) throw LogError("tick record action must have 6 entries");
      r.final_state = sim::transition(r.final_state, sim::Action(a), l.at("gripper").get<bool>());
      ++r.ticks;
    } else if (type == "end") {
      r.final_matches = sim::env_state_from_json(l.at("final_state")) == r.final_state;
    }
  }
  return r;
}

}  // namespace lilac::session
