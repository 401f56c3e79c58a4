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

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lilac/util/http.hpp"
#include "lilac/language/embedding.hpp"

namespace lilac::language {

enum class GatingBackend { kHeuristic, kCache, kLlmService };

inline std::string to_string(GatingBackend b) {
  switch (b) {
    case GatingBackend::kHeuristic: return "heuristic";
    case GatingBackend::kCache: return "cache";
    case GatingBackend::kLlmService: return "llm-service";
  }
  return "?";
}

inline GatingBackend parse_gating_backend(const std::string& s) {
  if (s == "heuristic") return GatingBackend::kHeuristic;
  if (s == "cache") return GatingBackend::kCache;
  if (s == "llm-service") return GatingBackend::kLlmService;
  throw std::invalid_argument("unknown gating backend: " + s);
}

inline constexpr std::array<std::string_view, 10> kObjectLexicon = {
    "book", "shelf", "drawer", "cup", "plant", "marker", "tin", "trash", "paper", "knob"};

namespace detail {

// Word, plural, or a lexicon word immediately followed by another
// ("bookshelf").
inline bool is_lexicon_token(std::string_view token, int depth = 0) {
  for (auto word : kObjectLexicon) {
    if (token == word) return true;
    if (token.size() > word.size() && token.substr(0, word.size()) == word) {
      const auto rest = token.substr(word.size());
      if (rest == "s" || rest == "es") return true;
      if (depth == 0 && is_lexicon_token(rest, 1)) return true;
    }
  }
  return false;
}

}  // namespace detail

// 1 if the utterance names any object from the desk lexicon, else 0.
inline int heuristic_alpha(std::string_view utterance) {
  for (const auto& token : tokenize(utterance)) {
    if (detail::is_lexicon_token(token)) return 1;
  }
  return 0;
}

// Pulls a label out of a free-form model reply: the first standalone 0 or 1.
inline std::optional<int> normalize_alpha_reply(std::string_view reply) {
  for (const auto& token : tokenize(reply)) {
    if (token == "0") return 0;
    if (token == "1") return 1;
  }
  return std::nullopt;
}

inline std::string utterance_hash(std::string_view utterance) { return hex64(fnv1a(utterance)); }

// Append-only label store, one record per line: hash \t utterance \t alpha.
// Existing labels are never overwritten; writes go through one mutex.
class AlphaCache {
 public:
  AlphaCache() = default;
  explicit AlphaCache(std::filesystem::path path) : path_(std::move(path)) { load(); }

  std::optional<int> lookup(const std::string& utterance) const {
    std::lock_guard lock(mu_);
    auto it = labels_.find(utterance);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }

  // Returns the stored label, which is the existing one if already present.
  int insert(const std::string& utterance, int alpha) {
    if (alpha != 0 && alpha != 1) throw std::invalid_argument("alpha must be 0 or 1");
    if (utterance.find_first_of("\t\n") != std::string::npos) {
      throw std::invalid_argument("utterance contains tab or newline");
    }
    std::lock_guard lock(mu_);
    auto [it, inserted] = labels_.emplace(utterance, alpha);
    if (!inserted) return it->second;
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app | std::ios::binary);
      if (!out) throw std::runtime_error("cannot append to alpha cache " + path_.string());
      out << utterance_hash(utterance) << '\t' << utterance << '\t' << alpha << '\n';
    }
    return alpha;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return labels_.size();
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = line.rfind('\t');
      if (t1 == std::string::npos || t1 == t2) {
        throw std::runtime_error(path_.string() + ":" + std::to_string(lineno) + ": malformed cache record");
      }
      const std::string hash = line.substr(0, t1);
      const std::string utterance = line.substr(t1 + 1, t2 - t1 - 1);
      const std::string label = line.substr(t2 + 1);
      if (hash != utterance_hash(utterance) || (label != "0" && label != "1")) {
        throw std::runtime_error(path_.string() + ":" + std::to_string(lineno) + ": corrupt cache record");
      }
      labels_.emplace(utterance, label == "1" ? 1 : 0);
    }
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, int> labels_;
};

struct LlmServiceConfig {
  std::string base_url;                // e.g. http://127.0.0.1:8080
  std::string path = "/v1/gate";
  std::string api_key;
  std::string prompt_template;         // contains {utterance}
  std::string prompt_version = "v1";
  int timeout_seconds = 10;

  // LILAC_GATING_ENDPOINT (full URL), LILAC_GATING_API_KEY and
  // LILAC_GATING_PROMPT (prompt file). Returns nullopt when no endpoint is set.
  static std::optional<LlmServiceConfig> from_environment(const std::filesystem::path& default_prompt) {
    const char* endpoint = std::getenv("LILAC_GATING_ENDPOINT");
    if (endpoint == nullptr || *endpoint == '\0') return std::nullopt;
    LlmServiceConfig cfg;
    std::string url = endpoint;
    const auto scheme = url.find("://");
    const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
      cfg.path = url.substr(slash);
      url = url.substr(0, slash);
    }
    cfg.base_url = url;
    if (const char* key = std::getenv("LILAC_GATING_API_KEY")) cfg.api_key = key;
    const char* prompt_env = std::getenv("LILAC_GATING_PROMPT");
    cfg.prompt_template = read_prompt(prompt_env != nullptr ? std::filesystem::path(prompt_env) : default_prompt);
    return cfg;
  }

  static std::string read_prompt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read gating prompt " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

// Request:  POST <path>  {"prompt": str, "utterance": str, "prompt_version": str}
//           Authorization: Bearer <key> when a key is configured.
// Response: {"alpha": 0|1} or {"text": str}; text is normalized to 0/1.
class LlmGatingClient {
 public:
  explicit LlmGatingClient(LlmServiceConfig config) : config_(std::move(config)) {}

  std::string render_prompt(const std::string& utterance) const {
    std::string prompt = config_.prompt_template;
    const std::string key = "{utterance}";
    for (auto pos = prompt.find(key); pos != std::string::npos; pos = prompt.find(key, pos + utterance.size())) {
      prompt.replace(pos, key.size(), utterance);
    }
    return prompt;
  }

  // Throws on transport errors or replies that do not normalize to 0/1.
  int query(const std::string& utterance) const {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
    const nlohmann::json body = {{"prompt", render_prompt(utterance)},
                                 {"utterance", utterance},
                                 {"prompt_version", config_.prompt_version}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw std::runtime_error("gating service unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("gating service status " + std::to_string(res->status));
    const auto reply = nlohmann::json::parse(res->body);
    std::optional<int> alpha;
    if (reply.contains("alpha")) {
      const auto& a = reply.at("alpha");
      if (a.is_number_integer()) alpha = normalize_alpha_reply(std::to_string(a.get<int>()));
      else if (a.is_string()) alpha = normalize_alpha_reply(a.get<std::string>());
    } else if (reply.contains("text")) {
      alpha = normalize_alpha_reply(reply.at("text").get<std::string>());
    }
    if (!alpha) throw std::runtime_error("gating service reply has no 0/1 label: " + res->body);
    return *alpha;
  }

  const LlmServiceConfig& config() const { return config_; }

 private:
  LlmServiceConfig config_;
};

// Resolves alpha for the active utterance: cache first, then the LLM service
// when the backend is llm-service, else the lexicon heuristic. Every computed
// label is persisted to the cache when one is attached.
class GatingOracle {
 public:
  explicit GatingOracle(GatingBackend backend = GatingBackend::kHeuristic,
                        std::shared_ptr<AlphaCache> cache = nullptr,
                        std::optional<LlmServiceConfig> llm = std::nullopt)
      : backend_(backend), cache_(std::move(cache)) {
    if (llm) llm_.emplace(std::move(*llm));
    if (backend_ == GatingBackend::kLlmService && !llm_) {
      spdlog::warn("llm-service gating backend selected without an endpoint; using heuristic labels");
    }
  }

  int gate_alpha(const std::string& instruction, const std::vector<std::string>& corrections) {
    return alpha_for(corrections.empty() ? instruction : corrections.back());
  }

  int alpha_for(const std::string& utterance) {
    ++calls_;
    if (cache_) {
      if (auto hit = cache_->lookup(utterance)) return *hit;
    }
    int alpha = 0;
    if (backend_ == GatingBackend::kLlmService && llm_) {
      try {
        ++external_calls_;
        alpha = llm_->query(utterance);
      } catch (const std::exception& e) {
        spdlog::warn("gating service failed for '{}' ({}); using heuristic", utterance, e.what());
        ++fallbacks_;
        alpha = heuristic_alpha(utterance);
      }
    } else {
      alpha = heuristic_alpha(utterance);
    }
    if (cache_) alpha = cache_->insert(utterance, alpha);
    return alpha;
  }

  GatingBackend backend() const { return backend_; }
  long calls() const { return calls_; }
  long external_calls() const { return external_calls_; }
  long fallbacks() const { return fallbacks_; }
  const std::shared_ptr<AlphaCache>& cache() const { return cache_; }

 private:
  GatingBackend backend_;
  std::shared_ptr<AlphaCache> cache_;
  std::optional<LlmGatingClient> llm_;
  std::atomic<long> calls_{0};
  std::atomic<long> external_calls_{0};
  std::atomic<long> fallbacks_{0};
};

}  // namespace lilac::language
