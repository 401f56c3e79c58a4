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

#include <string>

#include <nlohmann/json.hpp>

#include "lilac/nn/tensor.hpp"
#include "lilac/service/wire.hpp"

// Random wire payloads for round-trip properties.

namespace lilac::testing {

using service::MessageKind;

inline nlohmann::json random_value(nn::Rng& rng, int depth);

inline std::string random_text(nn::Rng& rng) {
  static const std::string alphabet = "abcdefghij klmnop\"\\/\n\t0123456789{}[]";
  std::string s;
  const auto n = 1 + rng.index(12);
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.index(alphabet.size())];
  if (rng.uniform() < 0.2) s += "\u00e9t\u00e9 \u2192 \U0001F916";
  return s;
}

inline nlohmann::json random_object(nn::Rng& rng, int depth) {
  nlohmann::json o = nlohmann::json::object();
  const auto n = rng.index(4);
  for (std::size_t i = 0; i < n; ++i) o["k" + std::to_string(rng.index(100))] = random_value(rng, depth + 1);
  return o;
}

inline nlohmann::json random_value(nn::Rng& rng, int depth) {
  switch (depth > 2 ? rng.index(4) : rng.index(6)) {
    case 0:
      return rng.uniform(-1e6, 1e6);
    case 1:
      return static_cast<std::int64_t>(rng.index(1000000)) - 500000;
    case 2:
      return rng.uniform() < 0.5;
    case 3:
      return random_text(rng);
    case 4: {
      nlohmann::json a = nlohmann::json::array();
      const auto n = rng.index(4);
      for (std::size_t i = 0; i < n; ++i) a.push_back(random_value(rng, depth + 1));
      return a;
    }
    default:
      return random_object(rng, depth);
  }
}

inline nlohmann::json random_numbers(nn::Rng& rng, std::size_t n, double lo, double hi) {
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) a.push_back(rng.uniform(lo, hi));
  return a;
}

// A schema-valid payload for `kind`, with random extra fields.
inline nlohmann::json random_payload(MessageKind kind, nn::Rng& rng) {
  nlohmann::json p = random_object(rng, 1);
  switch (kind) {
    case MessageKind::kLatentInput:
      p["z"] = random_numbers(rng, 2, -1.0, 1.0);
      break;
    case MessageKind::kCorrectionPush:
      p["utterance"] = random_text(rng);
      break;
    case MessageKind::kSessionStart:
      p["instruction"] = random_text(rng);
      p["seed"] = rng.index(1000);
      p["state"] = random_object(rng, 1);
      break;
    case MessageKind::kStateUpdate:
      p["tick"] = rng.index(100000);
      p["state"] = random_object(rng, 1);
      p["active_utterance"] = random_text(rng);
      p["alpha"] = static_cast<int>(rng.index(2));
      p["stack"] = nlohmann::json::array({random_text(rng)});
      p["z"] = random_numbers(rng, 2, -1.0, 1.0);
      p["action"] = random_numbers(rng, 6, -0.05, 0.05);
      break;
    case MessageKind::kSubtaskUpdate:
      p["status"] = {{"reached", rng.uniform() < 0.5},
                     {"grasped", rng.uniform() < 0.5},
                     {"transferred", rng.uniform() < 0.5},
                     {"completed", rng.uniform() < 0.5}};
      break;
    case MessageKind::kSessionEnd:
      p["reason"] = random_text(rng);
      break;
    case MessageKind::kError:
      p["code"] = random_text(rng);
      p["message"] = random_text(rng);
      break;
    default:
      break;
  }
  return p;
}

inline service::WireMessage random_message(MessageKind kind, nn::Rng& rng) {
  service::WireMessage m;
  m.kind = kind;
  m.seq = rng.next_u64() >> 1;
  m.session = random_text(rng);
  m.payload = random_payload(kind, rng);
  return m;
}

}  // namespace lilac::testing
