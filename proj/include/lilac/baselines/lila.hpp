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

// LILA: the LILAC network with the gate fixed open (alpha = 1), so the state
// encoder always feeds the control space and the learned bias never does.

#pragma once

#include "lilac/data/train.hpp"
#include "lilac/model/gram_schmidt.hpp"
#include "lilac/model/lilac_model.hpp"

namespace lilac::baselines {

inline model::ControlBases lila_bases(const model::LilacModel& m, const nn::Vector& state,
                                      const nn::Vector& embedding) {
  return m.control_bases(state, embedding, 1.0);
}

inline nn::Vector lila_forward(const model::LilacModel& m, const nn::Vector& state, const nn::Vector& embedding,
                               const nn::Vector& z) {
  return model::decode(lila_bases(m, state, embedding), z);
}

inline data::LilacLearner make_lila_learner(const data::Dataset& d, const model::LilacConfig& config,
                                            std::uint64_t seed, const language::Embedder& embedder) {
  return data::LilacLearner(d, config, seed, embedder, /*force_alpha_one=*/true);
}

}  // namespace lilac::baselines
