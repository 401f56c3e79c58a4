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
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "lilac/language/embedding.hpp"
#include "lilac/language/gating.hpp"
#include "lilac/language/index.hpp"
#include "lilac/model/gram_schmidt.hpp"
#include "lilac/model/lilac_model.hpp"
#include "lilac/session/episode_log.hpp"
#include "lilac/sim/env.hpp"

namespace lilac::session {

using nn::Vector;

class CorrectionStack {
 public:
  explicit CorrectionStack(std::string instruction) : instruction_(std::move(instruction)) {
    if (language::normalize_text(instruction_).empty()) throw std::invalid_argument("empty instruction");
  }

  void push(std::string correction) {
    if (language::normalize_text(correction).empty()) throw std::invalid_argument("empty correction");
    corrections_.push_back(std::move(correction));
  }

  // False (and no change) when only the instruction is left.
  bool pop() {
    if (corrections_.empty()) return false;
    corrections_.pop_back();
    return true;
  }

  const std::string& active() const { return corrections_.empty() ? instruction_ : corrections_.back(); }
  const std::string& instruction() const { return instruction_; }
  const std::vector<std::string>& corrections() const { return corrections_; }
  std::size_t depth() const { return corrections_.size(); }
  bool operator==(const CorrectionStack&) const = default;

 private:
  std::string instruction_;
  std::vector<std::string> corrections_;
};

// Everything a session reads but never writes, plus the gating oracle
// (which only appends to its cache).
struct ControlContext {
  std::shared_ptr<const model::LilacModel> model;
  std::shared_ptr<const language::ExemplarIndex> index;
  std::shared_ptr<const language::Embedder> embedder;
  std::shared_ptr<language::GatingOracle> oracle;
  std::vector<std::string> object_order;
  std::string policy = "lilac";
  // LILA: gate fixed open, no oracle.
  bool force_alpha_one = false;

  void check() const {
    if (!model || !index || !embedder || (!oracle && !force_alpha_one)) {
      throw std::logic_error("control context incomplete: model, index and embedder must be loaded");
    }
    if (index->empty()) throw std::logic_error("control context has an empty exemplar index");
  }
};

struct SessionOptions {
  double action_scale = 0.05;  // a = scale * B z, then capped per tick
  int degenerate_grace_ticks = 5;
};

struct ResolvedUtterance {
  std::string text;
  int exemplar_id = -1;
  std::string exemplar_text;
  Vector embedding;  // the exemplar's, never the raw query's
  int alpha = 1;
};

struct TickResult {
  sim::Action action = sim::Action::Zero();
  bool degenerate = false;  // bases could not be built this tick
};

class ControlSession {
 public:
  ControlSession(ControlContext ctx, const std::string& instruction, sim::EnvState env, SessionOptions options = {})
      : ctx_(std::move(ctx)), stack_(instruction), env_(std::move(env)), options_(options) {
    ctx_.check();
    log_.begin(ctx_.policy, instruction, env_, ctx_.object_order);
    activate();
  }

  // Retrieval and gating for the active utterance. Called once per
  // activation (start, push, pop), never per tick.
  ResolvedUtterance resolve(const std::string& text) const {
    ResolvedUtterance r;
    r.text = text;
    const auto hit = ctx_.index->retrieve_nearest(ctx_.embedder->embed(text));
    r.exemplar_id = hit.id;
    r.exemplar_text = ctx_.index->entries()[static_cast<std::size_t>(index_of(hit.id))].text;
    r.embedding = hit.embedding->vector;
    if (!ctx_.index->contains(r.embedding)) throw std::logic_error("retrieved embedding missing from index");
    if (ctx_.force_alpha_one) {
      r.alpha = 1;
    } else {
      ++oracle_calls_;
      r.alpha = ctx_.oracle->gate_alpha(stack_.instruction(), stack_.corrections());
    }
    return r;
  }

  void push_correction(const std::string& correction) {
    stack_.push(correction);
    log_.event("push", correction, tick_);
    activate();
  }

  bool pop_correction() {
    if (!stack_.pop()) {
      log_.event("pop-empty", stack_.active(), tick_);
      return false;
    }
    log_.event("pop", stack_.active(), tick_);
    activate();
    return true;
  }

  // Bases for the current state and active utterance (what tick() would use).
  std::optional<model::ControlBases> current_bases() const {
    if (active_.alpha == 0) return cached_;
    try {
      return ctx_.model->control_bases(state_vector(), active_.embedding, 1.0);
    } catch (const model::DegenerateBasesError&) {
      return std::nullopt;
    }
  }

  // The action tick(z) would apply, without advancing anything.
  sim::Action preview_action(const Vector& z, const std::optional<model::ControlBases>& bases) const {
    if (!bases) return sim::Action::Zero();
    return sim::cap_action(options_.action_scale * model::decode(*bases, clamp_latent(z)));
  }

  TickResult tick(const Vector& z, bool toggle_gripper = false) {
    if (z.size() != ctx_.model->config().latent_dim) throw nn::ShapeError("tick: latent has wrong size");
    if (!z.allFinite()) throw nn::NumericError("tick: non-finite latent");
    const Vector zc = clamp_latent(z);
    TickResult out;
    std::optional<model::ControlBases> bases = current_bases();
    if (bases) {
      last_valid_ = bases;
      degenerate_run_ = 0;
    } else {
      out.degenerate = true;
      ++degenerate_run_;
      spdlog::warn("tick {}: degenerate control bases for '{}'", tick_, stack_.active());
      if (degenerate_run_ <= options_.degenerate_grace_ticks) bases = last_valid_;
    }
    out.action = preview_action(zc, bases);
    const Vector before = state_vector();
    env_ = sim::transition(env_, out.action, toggle_gripper);
    log_.tick(tick_, before, stack_.active(), active_.alpha, zc, out.action, toggle_gripper);
    ++tick_;
    return out;
  }

  void finish() { log_.end(env_, tick_); }

  const CorrectionStack& stack() const { return stack_; }
  const ResolvedUtterance& active() const { return active_; }
  const sim::EnvState& env() const { return env_; }
  const std::optional<model::ControlBases>& cached_bases() const { return cached_; }
  long tick_count() const { return tick_; }
  long oracle_calls() const { return oracle_calls_; }
  const EpisodeLog& log() const { return log_; }
  EpisodeLog& log() { return log_; }
  const ControlContext& context() const { return ctx_; }
  Vector state_vector() const { return sim::state_vector(env_, ctx_.object_order); }

  static Vector clamp_latent(const Vector& z) { return z.cwiseMax(-1.0).cwiseMin(1.0); }

 private:
  long index_of(int id) const {
    const auto& entries = ctx_.index->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].id == id) return static_cast<long>(i);
    }
    throw std::logic_error("exemplar id not in index");
  }

  void activate() {
    active_ = resolve(stack_.active());
    try {
      cached_ = ctx_.model->control_bases(state_vector(), active_.embedding, active_.alpha);
      last_valid_ = cached_;
    } catch (const model::DegenerateBasesError& e) {
      spdlog::warn("degenerate control bases on activation of '{}': {}", stack_.active(), e.what());
      cached_.reset();
    }
  }

  ControlContext ctx_;
  CorrectionStack stack_;
  sim::EnvState env_;
  SessionOptions options_;
  ResolvedUtterance active_;
  std::optional<model::ControlBases> cached_;
  std::optional<model::ControlBases> last_valid_;
  int degenerate_run_ = 0;
  long tick_ = 0;
  mutable long oracle_calls_ = 0;
  EpisodeLog log_;
};

}  // namespace lilac::session
