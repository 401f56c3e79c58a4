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

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lilac/util/http.hpp"
#include "lilac/nn/tensor.hpp"
#include "lilac/util/hash.hpp"

namespace lilac::language {

using nn::Vector;

inline constexpr int kDefaultEmbeddingDim = 128;

struct UtteranceEmbedding {
  Vector vector;
  std::string source_text;
};

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using util::fnv1a;
using util::hex64;

// Lowercase, map every non-alphanumeric byte to a space, collapse runs of
// spaces and trim. "No, to the LEFT!" -> "no to the left".
inline std::string normalize_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const std::string norm = normalize_text(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    tokens.push_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual UtteranceEmbedding embed(const std::string& text) const = 0;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;
};

// Bag of hashed features over the normalized text: every character n-gram of
// the space-padded string plus every whole word. Each feature adds +/-1 to
// one bucket (sign from a second hash), and the result is unit-normalized.
class HashedNgramEmbedder final : public Embedder {
 public:
  explicit HashedNgramEmbedder(int dim = kDefaultEmbeddingDim, int ngram = 3)
      : dim_(dim), ngram_(ngram) {
    if (dim < 1 || ngram < 1) throw std::invalid_argument("HashedNgramEmbedder: bad parameters");
  }

  UtteranceEmbedding embed(const std::string& text) const override {
    const std::string norm = normalize_text(text);
    if (norm.empty()) throw EmbeddingError("cannot embed empty utterance");
    Vector v = Vector::Zero(dim_);
    const std::string padded = " " + norm + " ";
    const auto n = static_cast<std::size_t>(ngram_);
    for (std::size_t i = 0; i + n <= padded.size(); ++i) add_feature(v, "c:" + padded.substr(i, n));
    for (const auto& word : tokenize(norm)) add_feature(v, "w:" + word);
    const double norm2 = v.norm();
    if (norm2 == 0.0) throw EmbeddingError("embedding collapsed to zero for: " + text);
    return {v / norm2, text};
  }

  int dim() const override { return dim_; }
  std::string name() const override {
    return "hashed-ngram(dim=" + std::to_string(dim_) + ",n=" + std::to_string(ngram_) + ")";
  }

 private:
  void add_feature(Vector& v, const std::string& feature) const {
    const std::uint64_t h = fnv1a(feature);
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
    v(bucket) += ((h >> 63) != 0U) ? -1.0 : 1.0;
  }

  int dim_;
  int ngram_;
};

// Optional remote sentence-embedding service.
//   POST <endpoint>  {"text": "..."}  ->  {"embedding": [f64, ...]}
// Any transport or schema failure falls back to the local embedder, which must
// have the same dimension.
class ServiceEmbedder final : public Embedder {
 public:
  ServiceEmbedder(std::string base_url, std::string path,
                  std::shared_ptr<const Embedder> fallback)
      : base_url_(std::move(base_url)), path_(std::move(path)), fallback_(std::move(fallback)) {}

  UtteranceEmbedding embed(const std::string& text) const override {
    if (normalize_text(text).empty()) throw EmbeddingError("cannot embed empty utterance");
    try {
      httplib::Client client(base_url_);
      client.set_connection_timeout(2);
      client.set_read_timeout(5);
      const nlohmann::json body = {{"text", text}};
      auto res = client.Post(path_, body.dump(), "application/json");
      if (!res || res->status != 200) throw EmbeddingError("embedding service unavailable");
      const auto reply = nlohmann::json::parse(res->body);
      const auto values = reply.at("embedding").get<std::vector<double>>();
      if (static_cast<int>(values.size()) != dim()) throw EmbeddingError("embedding dim mismatch");
      Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
      if (!v.allFinite() || v.norm() == 0.0) throw EmbeddingError("degenerate service embedding");
      return {v / v.norm(), text};
    } catch (const std::exception& e) {
      spdlog::warn("embedding service failed ({}), using {}", e.what(), fallback_->name());
      return fallback_->embed(text);
    }
  }

  int dim() const override { return fallback_->dim(); }
  std::string name() const override { return "service(" + base_url_ + path_ + ")"; }

 private:
  std::string base_url_;
  std::string path_;
  std::shared_ptr<const Embedder> fallback_;
};

}  // namespace lilac::language
