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

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "lilac/util/http.hpp"
#include "lilac/language/embedding.hpp"
#include "lilac/language/gating.hpp"
#include "lilac/language/index.hpp"
#include "support/random.hpp"

namespace lilac::language {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "lilac_language_test";
  fs::create_directories(dir);
  auto p = dir / name;
  fs::remove(p);
  return p;
}

// Independent feature extraction for the hashed embedder: collects the raw
// feature strings by hand and accumulates signed counts.
Vector oracle_embedding(const std::string& normalized, int dim) {
  std::vector<std::string> features;
  const std::string padded = " " + normalized + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    features.push_back("c:" + std::string{padded[i], padded[i + 1], padded[i + 2]});
  }
  std::string word;
  for (char c : normalized + " ") {
    if (c == ' ') {
      if (!word.empty()) features.push_back("w:" + word);
      word.clear();
    } else {
      word += c;
    }
  }
  Vector v = Vector::Zero(dim);
  for (const auto& f : features) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : f) h = (h ^ c) * 1099511628211ULL;
    v(static_cast<Eigen::Index>(h % dim)) += (h >> 63) ? -1.0 : 1.0;
  }
  return v / v.norm();
}

TEST(NormalizeText, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(normalize_text("No, to the LEFT!"), "no to the left");
  EXPECT_EQ(normalize_text("  tilt   down\ta little-bit "), "tilt down a little bit");
  EXPECT_EQ(normalize_text("?!"), "");
}

TEST(Embedding, MatchesIndependentFeatureOracle) {
  HashedNgramEmbedder embedder;
  for (const std::string text : {"go left", "pick up the book and insert it into the bookshelf", "a"}) {
    const auto e = embedder.embed(text);
    EXPECT_EQ(e.source_text, text);
    EXPECT_LT((e.vector - oracle_embedding(normalize_text(text), 128)).norm(), 1e-15) << text;
  }
}

TEST(Embedding, DeterministicAndUnitNorm) {
  HashedNgramEmbedder embedder;
  const auto a = embedder.embed("tilt down a little bit");
  const auto b = embedder.embed("tilt down a little bit");
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_NEAR(a.vector.norm(), 1.0, 1e-9);
}

TEST(Embedding, PunctuationVariantIsClose) {
  HashedNgramEmbedder embedder;
  const double cos = embedder.embed("to the left").vector.dot(embedder.embed("to the left!").vector);
  EXPECT_GE(cos, 0.9);
  // Small spelling variation still lands close with trigrams.
  const double typo = embedder.embed("move towards the book").vector.dot(
      embedder.embed("move toward the book").vector);
  EXPECT_GE(typo, 0.8);
}

TEST(Embedding, EmptyTextRejected) {
  HashedNgramEmbedder embedder;
  EXPECT_THROW(embedder.embed(""), EmbeddingError);
  EXPECT_THROW(embedder.embed(" ... "), EmbeddingError);
}

TEST(Embedding, ServiceFallsBackWhenUnreachable) {
  auto local = std::make_shared<HashedNgramEmbedder>();
  ServiceEmbedder svc("http://127.0.0.1:1", "/embed", local);
  EXPECT_EQ(svc.embed("go left").vector, local->embed("go left").vector);
}

TEST(Embedding, ServiceUsesRemoteVector) {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request&, httplib::Response& res) {
    std::vector<double> v(128, 0.0);
    v[3] = 2.0;
    res.set_content(nlohmann::json{{"embedding", v}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  ServiceEmbedder svc("http://127.0.0.1:" + std::to_string(port), "/embed",
                      std::make_shared<HashedNgramEmbedder>());
  const auto e = svc.embed("anything");
  server.stop();
  t.join();
  EXPECT_EQ(e.vector(3), 1.0);
  EXPECT_EQ(e.vector.norm(), 1.0);
}

ExemplarIndex make_index(const std::vector<std::string>& texts) {
  HashedNgramEmbedder embedder;
  GatingOracle oracle;
  return build_index(texts, embedder, oracle);
}

TEST(ExemplarIndex, ExactMatchReturnsThatExemplar) {
  const auto index = make_index({"go left", "go right", "tilt up", "open the bottom drawer"});
  for (const auto& e : index.entries()) {
    const auto r = index.retrieve_nearest(e.embedding);
    EXPECT_EQ(r.id, e.id);
    EXPECT_NEAR(r.similarity, 1.0, 1e-12);
    EXPECT_EQ(r.embedding->vector, e.embedding.vector);
  }
}

TEST(ExemplarIndex, TieGoesToLowestId) {
  Vector a = Vector::Zero(4);
  a(0) = 1.0;
  Vector b = Vector::Zero(4);
  b(1) = 1.0;
  std::vector<Exemplar> entries = {{7, "x", {a, "x"}, 0}, {2, "y", {b, "y"}, 1}, {5, "z", {a, "z"}, 1}};
  ExemplarIndex index(entries);
  Vector q = (a + b).normalized();
  EXPECT_EQ(index.retrieve_nearest({q, "q"}).id, 2);
  EXPECT_EQ(index.retrieve_nearest({a, "q"}).id, 5);
}

TEST(ExemplarIndex, MatchesLinearScanOnRandomQueries) {
  nn::Rng rng(31);
  std::vector<Exemplar> entries;
  for (int i = 0; i < 60; ++i) {
    Vector v = testing::random_vector(16, rng).normalized();
    entries.push_back({i, "e" + std::to_string(i), {v, ""}, i % 2});
  }
  ExemplarIndex index(entries);
  for (int q = 0; q < 500; ++q) {
    Vector query = testing::random_vector(16, rng);
    int best = -1;
    double best_score = -2.0;
    for (const auto& e : entries) {
      double dot = 0.0;
      for (int k = 0; k < 16; ++k) dot += e.embedding.vector(k) * query(k);
      const double cos = dot / (e.embedding.vector.norm() * query.norm());
      if (cos > best_score + 1e-12) {
        best_score = cos;
        best = e.id;
      }
    }
    const auto r = index.retrieve_nearest({query, ""});
    EXPECT_EQ(r.id, best);
    EXPECT_NEAR(r.similarity, best_score, 1e-12);
  }
}

TEST(ExemplarIndex, EmptyIndexRejected) {
  ExemplarIndex index;
  EXPECT_THROW(index.retrieve_nearest({Vector::Ones(4), ""}), EmptyIndexError);
}

TEST(ExemplarIndex, DuplicateIdsRejected) {
  std::vector<Exemplar> entries = {{1, "a", {Vector::Ones(2), "a"}, 0}, {1, "b", {Vector::Ones(2), "b"}, 0}};
  EXPECT_THROW(ExemplarIndex{entries}, std::invalid_argument);
}

TEST(BuildIndex, SequentialIdsAndLabels) {
  const auto index = make_index({"go left", "water the plant with the cup", "tilt down a little bit"});
  ASSERT_EQ(index.size(), 3U);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(index.entries()[i].id, i);
  EXPECT_EQ(index.entries()[0].alpha, 0);
  EXPECT_EQ(index.entries()[1].alpha, 1);
  EXPECT_EQ(index.entries()[2].alpha, 0);
}

TEST(BuildIndex, RebuildIsIdentical) {
  const std::vector<std::string> texts = {"go up", "towards the cup", "go up", "roll left"};
  const auto a = make_index(texts);
  const auto b = make_index(texts);
  ASSERT_EQ(a.size(), 3U);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.entries()[i].text, b.entries()[i].text);
    EXPECT_EQ(a.entries()[i].embedding.vector, b.entries()[i].embedding.vector);
    EXPECT_EQ(a.entries()[i].alpha, b.entries()[i].alpha);
  }
}

TEST(BuildIndex, EmptyDatasetRejected) { EXPECT_THROW(make_index({}), std::invalid_argument); }

TEST(GateAlpha, ReferenceUtterances) {
  GatingOracle oracle;
  EXPECT_EQ(oracle.gate_alpha("pick up the book and insert it into the bookshelf", {}), 1);
  EXPECT_EQ(oracle.gate_alpha("tilt down a little bit", {}), 0);
  EXPECT_EQ(oracle.gate_alpha("go left", {}), 0);
}

TEST(GateAlpha, UsesTopOfStack) {
  GatingOracle oracle;
  EXPECT_EQ(oracle.gate_alpha("open the bottom drawer", {"go left"}), 0);
  EXPECT_EQ(oracle.gate_alpha("go left", {"go up", "towards the knob"}), 1);
}

TEST(Heuristic, LexiconMatching) {
  EXPECT_EQ(heuristic_alpha("towards the bookshelf"), 1);
  EXPECT_EQ(heuristic_alpha("grab the cups"), 1);
  EXPECT_EQ(heuristic_alpha("Trash!"), 1);
  EXPECT_EQ(heuristic_alpha("continue tilting"), 0);
  EXPECT_EQ(heuristic_alpha("rotate counterclockwise"), 0);
  EXPECT_EQ(heuristic_alpha("no, the blue!"), 0);
}

TEST(Heuristic, ReplyNormalization) {
  EXPECT_EQ(normalize_alpha_reply(" 1\n"), 1);
  EXPECT_EQ(normalize_alpha_reply("label: 0"), 0);
  EXPECT_EQ(normalize_alpha_reply("10"), std::nullopt);
  EXPECT_EQ(normalize_alpha_reply("yes"), std::nullopt);
}

TEST(AlphaCache, PersistsRecordsAndReloads) {
  const auto path = temp_path("cache_persist.tsv");
  {
    AlphaCache cache(path);
    EXPECT_EQ(cache.insert("go left", 0), 0);
    EXPECT_EQ(cache.insert("towards the cup", 1), 1);
    EXPECT_EQ(cache.insert("go left", 1), 0);  // immutable once written
  }
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, utterance_hash("go left") + "\tgo left\t0");
  AlphaCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 2U);
  EXPECT_EQ(reloaded.lookup("towards the cup"), 1);
  EXPECT_EQ(reloaded.lookup("unknown"), std::nullopt);
}

TEST(AlphaCache, CorruptRecordRejected) {
  const auto path = temp_path("cache_corrupt.tsv");
  std::ofstream(path) << "deadbeef\tgo left\t0\n";
  EXPECT_THROW(AlphaCache{path}, std::runtime_error);
}

// Local stand-in for the gating service. Counts requests and labels anything
// mentioning "cup" as 1, everything else as 0, as free text.
struct MockGatingServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  std::string last_auth;
  std::string last_prompt;
  bool fail = false;

  MockGatingServer() {
    server.Post("/v1/gate", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      last_auth = req.get_header_value("Authorization");
      if (fail) {
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      last_prompt = body.at("prompt").get<std::string>();
      const auto u = body.at("utterance").get<std::string>();
      res.set_content(nlohmann::json{{"text", u.find("cup") != std::string::npos ? " 1" : "0\n"}}.dump(),
                      "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockGatingServer() {
    server.stop();
    thread.join();
  }
  LlmServiceConfig config() const {
    LlmServiceConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key = "test-key";
    cfg.prompt_template = "label this: {utterance}";
    return cfg;
  }
};

TEST(LlmGating, QueriesServiceAndNormalizes) {
  MockGatingServer mock;
  GatingOracle oracle(GatingBackend::kLlmService, nullptr, mock.config());
  EXPECT_EQ(oracle.alpha_for("lift the cup"), 1);
  EXPECT_EQ(oracle.alpha_for("lift the book"), 0);  // service disagrees with the lexicon
  EXPECT_EQ(mock.requests.load(), 2);
  EXPECT_EQ(oracle.external_calls(), 2);
  EXPECT_EQ(mock.last_auth, "Bearer test-key");
  EXPECT_EQ(mock.last_prompt, "label this: lift the book");
}

TEST(LlmGating, FailureFallsBackToHeuristic) {
  MockGatingServer mock;
  mock.fail = true;
  GatingOracle oracle(GatingBackend::kLlmService, nullptr, mock.config());
  EXPECT_EQ(oracle.alpha_for("lift the book"), 1);
  EXPECT_EQ(oracle.alpha_for("go up"), 0);
  EXPECT_EQ(oracle.fallbacks(), 2);
}

TEST(LlmGating, WarmCacheIssuesNoExternalCalls) {
  MockGatingServer mock;
  const auto path = temp_path("cache_warm.tsv");
  const std::vector<std::string> utterances = {"lift the cup", "go left", "towards the cup", "tilt up"};
  {
    GatingOracle cold(GatingBackend::kLlmService, std::make_shared<AlphaCache>(path), mock.config());
    for (const auto& u : utterances) cold.alpha_for(u);
    EXPECT_EQ(cold.external_calls(), 4);
  }
  GatingOracle warm(GatingBackend::kLlmService, std::make_shared<AlphaCache>(path), mock.config());
  for (const auto& u : utterances) warm.alpha_for(u);
  EXPECT_EQ(warm.external_calls(), 0);
  EXPECT_EQ(mock.requests.load(), 4);
}

TEST(LlmGating, ConfigFromEnvironment) {
  const auto prompt = temp_path("prompt.txt");
  std::ofstream(prompt) << "p {utterance}";
  ::setenv("LILAC_GATING_ENDPOINT", "http://localhost:9000/api/label", 1);
  ::setenv("LILAC_GATING_API_KEY", "k", 1);
  ::unsetenv("LILAC_GATING_PROMPT");
  const auto cfg = LlmServiceConfig::from_environment(prompt);
  ::unsetenv("LILAC_GATING_ENDPOINT");
  ::unsetenv("LILAC_GATING_API_KEY");
  ASSERT_TRUE(cfg.has_value());
  EXPECT_EQ(cfg->base_url, "http://localhost:9000");
  EXPECT_EQ(cfg->path, "/api/label");
  EXPECT_EQ(cfg->api_key, "k");
  EXPECT_EQ(cfg->prompt_template, "p {utterance}");
  EXPECT_FALSE(LlmServiceConfig::from_environment(prompt).has_value());
}

TEST(LlmGating, BundledPromptHasPlaceholder) {
  const auto text = LlmServiceConfig::read_prompt(fs::path(LILAC_SOURCE_DIR) / "data/gating_prompt_v1.txt");
  EXPECT_NE(text.find("{utterance}"), std::string::npos);
}

}  // namespace
}  // namespace lilac::language
