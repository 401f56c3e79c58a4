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

// Frame sources drive one connection: they take validated inbound messages
// at any time and emit outbound messages once per tick.

#pragma once

#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "lilac/eval/policy.hpp"
#include "lilac/service/wire.hpp"
#include "lilac/session/episode_log.hpp"
#include "lilac/session/session.hpp"
#include "lilac/sim/task.hpp"

namespace lilac::service {

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::vector<WireMessage> start() = 0;
  // Inbound messages are queued and applied at the next tick boundary.
  virtual void enqueue(WireMessage m) = 0;
  virtual std::vector<WireMessage> step() = 0;
  virtual bool finished() const = 0;
  // Outbound sequence numbers, shared with frames the transport adds.
  virtual std::uint64_t next_seq() = 0;
  virtual const std::string& id() const = 0;
};

struct LiveOptions {
  std::uint64_t seed = 0;
  std::optional<std::string> instruction;  // default: the scene's first
  long max_ticks = 0;                      // 0 = until completed or closed
  std::optional<std::filesystem::path> record_dir;
};

inline nlohmann::json stack_json(const session::CorrectionStack& s) {
  nlohmann::json out = nlohmann::json::array({s.instruction()});
  for (const auto& c : s.corrections()) out.push_back(c);
  return out;
}

class LiveSession final : public FrameSource {
 public:
  LiveSession(eval::Policy policy, sim::TaskSpec task, std::string id, LiveOptions options = {})
      : policy_(std::move(policy)), task_(std::move(task)), id_(std::move(id)), options_(std::move(options)) {
    if (policy_.kind == eval::PolicyKind::kImitation) {
      throw std::invalid_argument("live sessions need a latent-action policy (lila or lilac)");
    }
    policy_.control.object_order = task_.object_order();
  }

  std::vector<WireMessage> start() override {
    const std::string instruction = options_.instruction.value_or(task_.instructions.front());
    session_.emplace(policy_.control, instruction, sim::initial_state(task_, options_.seed));
    session_->log().annotate("task", sim::to_string(task_.id));
    session_->log().annotate("session", id_);
    tracker_.emplace(task_);
    tracker_->observe(session_->env());
    z_ = nn::Vector::Zero(policy_.control.model->config().latent_dim);
    finished_ = false;
    WireMessage m = make(MessageKind::kSessionStart);
    m.payload = {{"task", sim::to_string(task_.id)},
                 {"scene", sim::to_json(task_)},
                 {"policy", eval::to_string(policy_.kind)},
                 {"instruction", instruction},
                 {"seed", options_.seed},
                 {"tick_hz", 10},
                 {"state", sim::to_json(session_->env())},
                 {"active_utterance", session_->stack().active()},
                 {"alpha", session_->active().alpha},
                 {"stack", stack_json(session_->stack())}};
    return {m};
  }

  void enqueue(WireMessage m) override { inbox_.push_back(std::move(m)); }

  std::vector<WireMessage> step() override {
    std::vector<WireMessage> out;
    if (finished_ || !session_) return out;
    nlohmann::json events = nlohmann::json::array();
    bool toggle = false;
    while (!inbox_.empty()) {
      WireMessage m = std::move(inbox_.front());
      inbox_.pop_front();
      switch (m.kind) {
        case MessageKind::kLatentInput:
          z_ = (nn::Vector(2) << m.payload["z"][0].get<double>(), m.payload["z"][1].get<double>()).finished();
          break;
        case MessageKind::kCorrectionPush: {
          const auto u = m.payload.at("utterance").get<std::string>();
          try {
            session_->push_correction(u);
            events.push_back({{"kind", "correction_push"}, {"utterance", u}, {"applied", true}});
          } catch (const std::invalid_argument& e) {
            out.push_back(error_message(id_, seq_.next(), "bad_utterance", e.what(), m.seq));
          }
          break;
        }
        case MessageKind::kCorrectionPop:
          events.push_back({{"kind", "correction_pop"}, {"applied", session_->pop_correction()}});
          break;
        case MessageKind::kGripperToggle:
          toggle = !toggle;  // two toggles inside one tick cancel
          events.push_back({{"kind", "gripper_toggle"}});
          break;
        case MessageKind::kSessionStart:
          end(out, "restarted");
          if (m.payload.contains("instruction")) options_.instruction = m.payload["instruction"].get<std::string>();
          if (m.payload.contains("seed")) options_.seed = m.payload["seed"].get<std::uint64_t>();
          inbox_.clear();
          for (auto& s : start()) out.push_back(std::move(s));
          return out;
        case MessageKind::kSessionEnd:
          end(out, "client");
          return out;
        default:
          out.push_back(error_message(id_, seq_.next(), "bad_direction",
                                      std::string(to_string(m.kind)) + " is server-to-client only", m.seq));
      }
    }

    const auto r = session_->tick(z_, toggle);
    WireMessage u = make(MessageKind::kStateUpdate);
    u.payload = {{"tick", session_->tick_count()},
                 {"state", sim::to_json(session_->env())},
                 {"active_utterance", session_->stack().active()},
                 {"alpha", session_->active().alpha},
                 {"stack", stack_json(session_->stack())},
                 {"z", session::vector_to_json(session::ControlSession::clamp_latent(z_))},
                 {"action", session::vector_to_json(r.action)},
                 {"degenerate", r.degenerate},
                 {"events", events}};
    out.push_back(std::move(u));

    const sim::SubtaskStatus before = tracker_->status();
    tracker_->observe(session_->env());
    if (!(tracker_->status() == before)) {
      WireMessage s = make(MessageKind::kSubtaskUpdate);
      s.payload = {{"status", sim::to_json(tracker_->status())}};
      out.push_back(std::move(s));
    }
    if (tracker_->status().completed) {
      end(out, "completed");
    } else if (options_.max_ticks > 0 && session_->tick_count() >= options_.max_ticks) {
      end(out, "tick_limit");
    }
    return out;
  }

  // Ends the session (idempotent), e.g. when the connection drops.
  void close(std::vector<WireMessage>& out, const std::string& reason) { end(out, reason); }

  bool finished() const override { return finished_; }
  const session::ControlSession& session() const { return *session_; }
  const std::string& id() const override { return id_; }
  std::uint64_t next_seq() override { return seq_.next(); }

 private:
  WireMessage make(MessageKind k) {
    WireMessage m;
    m.kind = k;
    m.seq = seq_.next();
    m.session = id_;
    return m;
  }

  void end(std::vector<WireMessage>& out, const std::string& reason) {
    if (finished_ || !session_) return;
    finished_ = true;
    session_->finish();
    WireMessage m = make(MessageKind::kSessionEnd);
    m.payload = {{"reason", reason}, {"ticks", session_->tick_count()}, {"status", sim::to_json(tracker_->status())}};
    if (options_.record_dir) {
      std::filesystem::create_directories(*options_.record_dir);
      const auto path = *options_.record_dir / (id_ + "-" + std::to_string(++recordings_) + ".jsonl");
      session_->log().save(path.string());
      m.payload["log"] = path.string();
    }
    out.push_back(std::move(m));
  }

  eval::Policy policy_;
  sim::TaskSpec task_;
  std::string id_;
  LiveOptions options_;
  std::optional<session::ControlSession> session_;
  std::optional<sim::SubtaskTracker> tracker_;
  std::deque<WireMessage> inbox_;
  nn::Vector z_;
  Sequencer seq_;
  bool finished_ = false;
  int recordings_ = 0;
};

// Re-broadcasts a recorded episode: one state_update per logged tick, then
// session_end. A log cut off mid-file ends cleanly with reason "truncated".
class ReplaySource final : public FrameSource {
 public:
  ReplaySource(const std::string& log_text, std::string id) : id_(std::move(id)) {
    std::istringstream in(log_text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        lines_.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception&) {
        truncated_ = true;
        break;
      }
    }
    if (lines_.empty() || lines_.front().value("type", "") != "header") {
      throw session::LogError("episode log does not start with a header");
    }
    bool has_end = false;
    for (const auto& l : lines_) has_end = has_end || l.value("type", "") == "end";
    truncated_ = truncated_ || !has_end;
    state_ = sim::env_state_from_json(lines_.front().at("initial_state"));
  }

  std::vector<WireMessage> start() override {
    const auto& h = lines_.front();
    WireMessage m = make(MessageKind::kSessionStart);
    m.payload = {{"replay", true},
                 {"policy", h.value("policy", "")},
                 {"instruction", h.value("instruction", "")},
                 {"meta", h.value("meta", nlohmann::json::object())},
                 {"tick_hz", 10},
                 {"state", sim::to_json(state_)}};
    cursor_ = 1;
    return {m};
  }

  void enqueue(WireMessage) override {}

  std::vector<WireMessage> step() override {
    std::vector<WireMessage> out;
    if (finished_) return out;
    nlohmann::json stack = nlohmann::json::array({lines_.front().value("instruction", "")});
    while (cursor_ < lines_.size()) {
      const auto& l = lines_[cursor_++];
      const std::string type = l.value("type", "");
      if (type == "event") {
        const std::string ev = l.value("event", "");
        if (ev == "push") stack_.push_back(l.at("utterance").get<std::string>());
        if (ev == "pop" && !stack_.empty()) stack_.pop_back();
        continue;
      }
      if (type != "tick") continue;
      const nn::Vector a = session::vector_from_json(l.at("a"));
      state_ = sim::transition(state_, sim::Action(a), l.at("gripper").get<bool>());
      for (const auto& c : stack_) stack.push_back(c);
      WireMessage u = make(MessageKind::kStateUpdate);
      u.payload = {{"tick", l.at("tick").get<long>() + 1},
                   {"state", sim::to_json(state_)},
                   {"active_utterance", l.at("utterance")},
                   {"alpha", l.at("alpha")},
                   {"stack", stack},
                   {"z", l.at("z")},
                   {"action", l.at("a")},
                   {"degenerate", false},
                   {"events", nlohmann::json::array()}};
      out.push_back(std::move(u));
      return out;
    }
    finished_ = true;
    WireMessage m = make(MessageKind::kSessionEnd);
    m.payload = {{"reason", truncated_ ? "truncated" : "replay_complete"}};
    out.push_back(std::move(m));
    return out;
  }

  bool finished() const override { return finished_; }
  bool truncated() const { return truncated_; }
  const std::string& id() const override { return id_; }
  std::uint64_t next_seq() override { return seq_.next(); }

 private:
  WireMessage make(MessageKind k) {
    WireMessage m;
    m.kind = k;
    m.seq = seq_.next();
    m.session = id_;
    return m;
  }

  std::string id_;
  std::vector<nlohmann::json> lines_;
  std::vector<std::string> stack_;
  sim::EnvState state_;
  std::size_t cursor_ = 1;
  Sequencer seq_;
  bool truncated_ = false;
  bool finished_ = false;
};

}  // namespace lilac::service
