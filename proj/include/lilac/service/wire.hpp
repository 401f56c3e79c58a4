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

// Wire messages are JSON text frames:
//   {"v": 1, "kind": "<kind>", "seq": <uint>, "session": "<id>", "payload": {...}}
// Field-by-field payload schemas live in docs/wire_protocol.md; check_payload
// enforces them on decode.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace lilac::service {

inline constexpr int kWireVersion = 1;

enum class MessageKind {
  kSessionStart,
  kStateUpdate,
  kLatentInput,
  kCorrectionPush,
  kCorrectionPop,
  kGripperToggle,
  kSubtaskUpdate,
  kSessionEnd,
  kError,
};

inline constexpr std::array<MessageKind, 9> kAllKinds = {
    MessageKind::kSessionStart,  MessageKind::kStateUpdate,   MessageKind::kLatentInput,
    MessageKind::kCorrectionPush, MessageKind::kCorrectionPop, MessageKind::kGripperToggle,
    MessageKind::kSubtaskUpdate, MessageKind::kSessionEnd,    MessageKind::kError};

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kSessionStart:
      return "session_start";
    case MessageKind::kStateUpdate:
      return "state_update";
    case MessageKind::kLatentInput:
      return "latent_input";
    case MessageKind::kCorrectionPush:
      return "correction_push";
    case MessageKind::kCorrectionPop:
      return "correction_pop";
    case MessageKind::kGripperToggle:
      return "gripper_toggle";
    case MessageKind::kSubtaskUpdate:
      return "subtask_update";
    case MessageKind::kSessionEnd:
      return "session_end";
    case MessageKind::kError:
      return "error";
  }
  return "?";
}

class WireError : public std::runtime_error {
 public:
  WireError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

inline MessageKind parse_kind(const std::string& s) {
  for (MessageKind k : kAllKinds) {
    if (s == to_string(k)) return k;
  }
  throw WireError("unknown_kind", "unknown message kind '" + s + "'");
}

struct WireMessage {
  MessageKind kind = MessageKind::kError;
  std::uint64_t seq = 0;
  std::string session;
  nlohmann::json payload = nlohmann::json::object();
  bool operator==(const WireMessage&) const = default;
};

// Which side may send each kind.
inline bool client_may_send(MessageKind k) {
  return k == MessageKind::kLatentInput || k == MessageKind::kCorrectionPush || k == MessageKind::kCorrectionPop ||
         k == MessageKind::kGripperToggle || k == MessageKind::kSessionStart || k == MessageKind::kSessionEnd;
}

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw WireError("bad_payload", what);
}

inline void require_field(const nlohmann::json& p, const char* key, nlohmann::json::value_t type, const char* kind) {
  require(p.contains(key), std::string(kind) + ": missing '" + key + "'");
  const auto t = p.at(key).type();
  const bool numeric = type == nlohmann::json::value_t::number_float &&
                       (t == nlohmann::json::value_t::number_integer || t == nlohmann::json::value_t::number_unsigned);
  const bool unsigned_ok =
      type == nlohmann::json::value_t::number_integer && t == nlohmann::json::value_t::number_unsigned;
  require(t == type || numeric || unsigned_ok, std::string(kind) + ": '" + key + "' has the wrong type");
}

inline void require_number_array(const nlohmann::json& p, const char* key, std::size_t n, const char* kind) {
  require(p.contains(key) && p.at(key).is_array(), std::string(kind) + ": '" + key + "' must be an array");
  if (n) require(p.at(key).size() == n, std::string(kind) + ": '" + key + "' must have " + std::to_string(n) + " entries");
  for (const auto& v : p.at(key)) require(v.is_number(), std::string(kind) + ": '" + key + "' must hold numbers");
}

}  // namespace detail

// Validates the payload of a decoded message against its kind's schema.
inline void check_payload(MessageKind kind, const nlohmann::json& p) {
  using detail::require;
  using detail::require_field;
  using V = nlohmann::json::value_t;
  const char* k = to_string(kind);
  require(p.is_object(), std::string(k) + ": payload must be an object");
  switch (kind) {
    case MessageKind::kLatentInput: {
      detail::require_number_array(p, "z", 2, k);
      for (const auto& v : p.at("z")) {
        const double x = v.get<double>();
        require(std::isfinite(x) && x >= -1.0 && x <= 1.0, "latent_input: z entries must lie in [-1, 1]");
      }
      break;
    }
    case MessageKind::kCorrectionPush:
      require_field(p, "utterance", V::string, k);
      require(!p.at("utterance").get<std::string>().empty(), "correction_push: empty utterance");
      break;
    case MessageKind::kCorrectionPop:
    case MessageKind::kGripperToggle:
      break;
    case MessageKind::kSessionStart:
      // From a client every field is optional (restart with overrides);
      // from the server the full snapshot is present.
      if (p.contains("instruction")) require_field(p, "instruction", V::string, k);
      if (p.contains("seed")) require_field(p, "seed", V::number_integer, k);
      if (p.contains("state")) require_field(p, "state", V::object, k);
      break;
    case MessageKind::kStateUpdate:
      require_field(p, "tick", V::number_integer, k);
      require_field(p, "state", V::object, k);
      require_field(p, "active_utterance", V::string, k);
      require_field(p, "alpha", V::number_integer, k);
      require_field(p, "stack", V::array, k);
      detail::require_number_array(p, "z", 0, k);
      detail::require_number_array(p, "action", 6, k);
      break;
    case MessageKind::kSubtaskUpdate:
      require_field(p, "status", V::object, k);
      for (const char* stage : {"reached", "grasped", "transferred", "completed"}) {
        require_field(p.at("status"), stage, V::boolean, k);
      }
      break;
    case MessageKind::kSessionEnd:
      require_field(p, "reason", V::string, k);
      break;
    case MessageKind::kError:
      require_field(p, "code", V::string, k);
      require_field(p, "message", V::string, k);
      break;
  }
}

inline nlohmann::json to_json(const WireMessage& m) {
  return {{"v", kWireVersion}, {"kind", to_string(m.kind)}, {"seq", m.seq}, {"session", m.session},
          {"payload", m.payload}};
}

inline std::string encode(const WireMessage& m) { return to_json(m).dump(); }

inline WireMessage decode(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw WireError("bad_json", std::string("frame is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw WireError("bad_frame", "frame must be a JSON object");
  if (!j.contains("v") || !j.at("v").is_number_integer() || j.at("v").get<int>() != kWireVersion) {
    throw WireError("bad_version", "unsupported or missing protocol version");
  }
  for (const char* key : {"kind", "session"}) {
    if (!j.contains(key) || !j.at(key).is_string()) throw WireError("bad_frame", std::string("missing '") + key + "'");
  }
  if (!j.contains("seq") || !j.at("seq").is_number_unsigned()) {
    throw WireError("bad_frame", "'seq' must be a non-negative integer");
  }
  WireMessage m;
  m.kind = parse_kind(j.at("kind").get<std::string>());
  m.seq = j.at("seq").get<std::uint64_t>();
  m.session = j.at("session").get<std::string>();
  m.payload = j.contains("payload") ? j.at("payload") : nlohmann::json::object();
  check_payload(m.kind, m.payload);
  return m;
}

// Stamps outbound messages and checks inbound ordering for one direction.
class Sequencer {
 public:
  std::uint64_t next() { return ++last_; }

  // Inbound frames must carry strictly increasing sequence numbers.
  void accept(std::uint64_t seq) {
    if (seen_ && seq <= last_) {
      throw WireError("bad_seq", "sequence number " + std::to_string(seq) + " not above " + std::to_string(last_));
    }
    seen_ = true;
    last_ = seq;
  }

 private:
  std::uint64_t last_ = 0;
  bool seen_ = false;
};

inline WireMessage error_message(const std::string& session, std::uint64_t seq, const std::string& code,
                                 const std::string& message, std::optional<std::uint64_t> ref_seq = std::nullopt) {
  WireMessage m;
  m.kind = MessageKind::kError;
  m.seq = seq;
  m.session = session;
  m.payload = {{"code", code}, {"message", message}};
  if (ref_seq) m.payload["ref_seq"] = *ref_seq;
  return m;
}

}  // namespace lilac::service
