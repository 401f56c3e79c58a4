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

// The one table of correction utterances. Directional entries are in the
// fixed world frame (+x forward, +y left, +z up; +roll = roll left,
// +pitch = tilt down, +yaw = counterclockwise seen from above). Both data
// generation and the scripted evaluation user read from here.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lilac/sim/env.hpp"

namespace lilac::sim {

enum class CorrectionKind { kDirectional, kReferential };

struct CorrectionTemplate {
  std::string utterance;
  CorrectionKind kind = CorrectionKind::kDirectional;
  int axis = 0;         // directional: index into the 6-DoF action
  double sign = 1.0;    // directional
  double scale = 1.0;   // directional: "a little bit" halves the step
  std::string object;   // referential target
};

inline const std::vector<CorrectionTemplate>& correction_templates() {
  static const std::vector<CorrectionTemplate> table = [] {
    using K = CorrectionKind;
    std::vector<CorrectionTemplate> t = {
        {"to the left", K::kDirectional, 1, +1.0, 1.0, ""},
        {"go left", K::kDirectional, 1, +1.0, 1.0, ""},
        {"to the right", K::kDirectional, 1, -1.0, 1.0, ""},
        {"go right", K::kDirectional, 1, -1.0, 1.0, ""},
        {"move forward", K::kDirectional, 0, +1.0, 1.0, ""},
        {"move back", K::kDirectional, 0, -1.0, 1.0, ""},
        {"go up", K::kDirectional, 2, +1.0, 1.0, ""},
        {"move down", K::kDirectional, 2, -1.0, 1.0, ""},
        {"roll left", K::kDirectional, 3, +1.0, 1.0, ""},
        {"roll right", K::kDirectional, 3, -1.0, 1.0, ""},
        {"tilt down", K::kDirectional, 4, +1.0, 1.0, ""},
        {"tilt down a little bit", K::kDirectional, 4, +1.0, 0.5, ""},
        {"tilt up", K::kDirectional, 4, -1.0, 1.0, ""},
        {"rotate counterclockwise", K::kDirectional, 5, +1.0, 1.0, ""},
        {"rotate clockwise", K::kDirectional, 5, -1.0, 1.0, ""},
    };
    const std::vector<std::pair<std::string, std::string>> referents = {
        {"paper", "towards the paper"},
        {"trash_bin", "towards the trash bin"},
        {"blue_marker", "towards the blue marker"},
        {"tin_holder", "towards the tin holder"},
        {"drawer_knob", "move down towards the knob on the drawer"},
        {"book", "towards the book"},
        {"bookshelf", "towards the bookshelf"},
        {"cup", "towards the cup"},
        {"plant", "towards the plant"},
    };
    for (const auto& [object, text] : referents) t.push_back({text, K::kReferential, 0, 1.0, 1.0, object});
    return t;
  }();
  return table;
}

inline const CorrectionTemplate* find_template(const std::string& utterance) {
  for (const auto& t : correction_templates()) {
    if (t.utterance == utterance) return &t;
  }
  return nullptr;
}

// Unit 6-DoF direction a template asks for at state `s`. Referential
// templates point from the gripper to the named object; nullopt when the
// gripper is already on top of it.
inline std::optional<Action> template_direction(const CorrectionTemplate& t, const EnvState& s) {
  Action d = Action::Zero();
  if (t.kind == CorrectionKind::kDirectional) {
    d(t.axis) = t.sign;
    return d;
  }
  const Vec3 delta = s.object(t.object).position - s.ee_position;
  if (delta.norm() < 1e-9) return std::nullopt;
  d.head<3>() = delta.normalized();
  return d;
}

}  // namespace lilac::sim
