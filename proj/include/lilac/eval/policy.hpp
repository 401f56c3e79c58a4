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

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lilac/baselines/imitation.hpp"
#include "lilac/language/embedding.hpp"
#include "lilac/language/gating.hpp"
#include "lilac/language/index.hpp"
#include "lilac/model/lilac_model.hpp"
#include "lilac/nn/checkpoint.hpp"
#include "lilac/session/session.hpp"

namespace lilac::eval {

enum class PolicyKind { kImitation, kLila, kLilac };

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kImitation:
      return "imitation";
    case PolicyKind::kLila:
      return "lila";
    case PolicyKind::kLilac:
      return "lilac";
  }
  return "?";
}

inline PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "imitation") return PolicyKind::kImitation;
  if (s == "lila") return PolicyKind::kLila;
  if (s == "lilac") return PolicyKind::kLilac;
  throw std::invalid_argument("unknown policy '" + s + "' (expected imitation, lila or lilac)");
}

// A loaded policy ready for rollouts or serving.
struct Policy {
  PolicyKind kind = PolicyKind::kLilac;
  session::ControlContext control;  // lila, lilac
  std::shared_ptr<const baselines::ImitationPolicy> imitation;
  std::shared_ptr<const language::Embedder> embedder;
};

// Rebuilds the exemplar index from the table stored in a checkpoint header.
inline std::shared_ptr<language::ExemplarIndex> index_from_checkpoint(const nn::Checkpoint& c,
                                                                       const language::Embedder& embedder) {
  if (!c.header.contains("exemplars")) throw nn::CheckpointError("checkpoint has no exemplar table");
  std::vector<language::Exemplar> entries;
  for (const auto& e : c.header.at("exemplars")) {
    language::Exemplar x;
    x.id = static_cast<int>(entries.size());
    x.text = e.at("text").get<std::string>();
    x.embedding = embedder.embed(x.text);
    x.alpha = e.at("alpha").is_null() ? 1 : e.at("alpha").get<int>();
    entries.push_back(std::move(x));
  }
  return std::make_shared<language::ExemplarIndex>(std::move(entries));
}

inline Policy make_policy(const nn::Checkpoint& c, std::shared_ptr<const language::Embedder> embedder,
                          std::shared_ptr<language::GatingOracle> oracle, const std::vector<std::string>& object_order) {
  Policy p;
  p.kind = parse_policy_kind(c.header.value("policy", ""));
  p.embedder = embedder;
  if (p.kind == PolicyKind::kImitation) {
    auto m = std::make_shared<baselines::ImitationPolicy>(baselines::ImitationPolicy::from_checkpoint(c));
    m->set_training(false);
    p.imitation = m;
    return p;
  }
  auto m = std::make_shared<model::LilacModel>(model::LilacModel::from_checkpoint(c));
  m->set_training(false);
  p.control.model = m;
  p.control.index = index_from_checkpoint(c, *embedder);
  p.control.embedder = embedder;
  p.control.oracle = p.kind == PolicyKind::kLilac ? std::move(oracle) : nullptr;
  p.control.object_order = object_order;
  p.control.policy = to_string(p.kind);
  p.control.force_alpha_one = p.kind == PolicyKind::kLila;
  return p;
}

}  // namespace lilac::eval
