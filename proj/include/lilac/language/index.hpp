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

#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "lilac/language/embedding.hpp"
#include "lilac/language/gating.hpp"
#include "lilac/nn/tensor.hpp"

namespace lilac::language {

using nn::Matrix;

struct Exemplar {
  int id = 0;
  std::string text;
  UtteranceEmbedding embedding;
  int alpha = 0;
};

struct Retrieval {
  int id = 0;
  const UtteranceEmbedding* embedding = nullptr;
  int alpha = 0;
  double similarity = 0.0;
};

class EmptyIndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nearest-neighbor lookup over unit-norm exemplar embeddings. Entries are
// kept as columns of one matrix so a query is scored with a single product.
// Not mutated after construction; concurrent retrieve() calls are safe.
class ExemplarIndex {
 public:
  ExemplarIndex() = default;

  explicit ExemplarIndex(std::vector<Exemplar> entries) : entries_(std::move(entries)) {
    std::unordered_set<int> ids;
    for (const auto& e : entries_) {
      if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate exemplar id");
      if (e.alpha != 0 && e.alpha != 1) throw std::invalid_argument("exemplar alpha must be 0 or 1");
    }
    if (entries_.empty()) return;
    const Eigen::Index dim = entries_.front().embedding.vector.size();
    stacked_.resize(dim, static_cast<Eigen::Index>(entries_.size()));
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      nn::require_rows(entries_[i].embedding.vector, dim, "exemplar embedding");
      stacked_.col(static_cast<Eigen::Index>(i)) = entries_[i].embedding.vector;
    }
  }

  const std::vector<Exemplar>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Highest cosine similarity wins; equal scores resolve to the lowest id.
  Retrieval retrieve_nearest(const UtteranceEmbedding& query) const {
    if (entries_.empty()) throw EmptyIndexError("retrieve_nearest on empty index");
    nn::require_rows(query.vector, stacked_.rows(), "query embedding");
    const double qn = query.vector.norm();
    if (qn == 0.0) throw EmbeddingError("zero query embedding");
    const Vector scores = stacked_.transpose() * (query.vector / qn);
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      const double s = scores(static_cast<Eigen::Index>(i));
      const double b = scores(static_cast<Eigen::Index>(best));
      if (s > b || (s == b && entries_[i].id < entries_[best].id)) best = i;
    }
    const auto& e = entries_[best];
    return {e.id, &e.embedding, e.alpha, scores(static_cast<Eigen::Index>(best))};
  }

  // True when `v` is bit-identical to some stored exemplar embedding.
  bool contains(const Vector& v) const {
    for (const auto& e : entries_) {
      if (e.embedding.vector.size() == v.size() && e.embedding.vector == v) return true;
    }
    return false;
  }

  const Exemplar* find_text(const std::string& text) const {
    for (const auto& e : entries_) {
      if (e.text == text) return &e;
    }
    return nullptr;
  }

 private:
  std::vector<Exemplar> entries_;
  Matrix stacked_;
};

// Embeds and labels each distinct utterance, in order of first appearance.
// Repeated utterances share one exemplar.
inline ExemplarIndex build_index(const std::vector<std::string>& utterances, const Embedder& embedder,
                                 GatingOracle& oracle) {
  if (utterances.empty()) throw std::invalid_argument("build_index: no utterances");
  std::vector<Exemplar> entries;
  std::unordered_set<std::string> seen;
  for (const auto& u : utterances) {
    if (!seen.insert(u).second) continue;
    Exemplar e;
    e.id = static_cast<int>(entries.size());
    e.text = u;
    e.embedding = embedder.embed(u);
    e.alpha = oracle.gate_alpha(u, {});
    entries.push_back(std::move(e));
  }
  return ExemplarIndex(std::move(entries));
}

}  // namespace lilac::language
