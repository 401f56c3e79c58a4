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

// Language-conditioned behavior cloning over a short state history:
//   tokens  = StateMlp(BatchNorm(s_{t-H+1..t}))
//   h_hist  = MeanPool(Attention x2(tokens + positions))
//   h_fused = Gamma(h_lang) * h_hist + Beta(h_lang),  h_lang = LangMlp(e)
//   a       = Head(h_fused)
// Runs open loop: no latent input from the user.

#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/data/train.hpp"
#include "lilac/data/trajectory.hpp"
#include "lilac/language/embedding.hpp"
#include "lilac/nn/attention.hpp"
#include "lilac/nn/checkpoint.hpp"
#include "lilac/nn/layers.hpp"
#include "lilac/nn/tensor.hpp"

namespace lilac::baselines {

using nn::Matrix;
using nn::Vector;

struct ImitationConfig {
  int state_dim = 34;
  int hidden_dim = 128;
  int action_dim = 6;
  int language_dim = 128;
  int history = 10;  // 1 s at 10 Hz

  void validate() const {
    if (state_dim < 1 || hidden_dim < 1 || action_dim < 1 || language_dim < 1 || history < 1) {
      throw std::invalid_argument("ImitationConfig: all sizes must be positive");
    }
  }
  bool operator==(const ImitationConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ImitationConfig& c) {
  j = {{"state_dim", c.state_dim},       {"hidden_dim", c.hidden_dim}, {"action_dim", c.action_dim},
       {"language_dim", c.language_dim}, {"history", c.history}};
}
inline void from_json(const nlohmann::json& j, ImitationConfig& c) {
  j.at("state_dim").get_to(c.state_dim);
  j.at("hidden_dim").get_to(c.hidden_dim);
  j.at("action_dim").get_to(c.action_dim);
  j.at("language_dim").get_to(c.language_dim);
  j.at("history").get_to(c.history);
}

// One batch: histories packed side by side (state_dim x total tokens).
struct ImitationBatch {
  nn::PackedSequences histories;
  Matrix embeddings;  // language_dim x B
  Matrix actions;     // action_dim x B
};

class ImitationPolicy {
 public:
  ImitationPolicy() = default;
  ImitationPolicy(const ImitationConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const int m = config.hidden_dim;
    state_norm = nn::BatchNorm("imitation.state_norm", config.state_dim);
    state_encoder = nn::Mlp("imitation.state_encoder", config.state_dim, m, m);
    history_encoder = nn::AttentionEncoder("imitation.history", m, true);
    language_encoder = nn::Mlp("imitation.language_encoder", config.language_dim, m, m);
    film_gamma = nn::Mlp("imitation.film_gamma", m, m, m);
    film_beta = nn::Mlp("imitation.film_beta", m, m, m);
    head = nn::Mlp("imitation.head", m, m, config.action_dim);
    nn::Rng rng(seed);
    state_encoder.init(rng);
    history_encoder.init(rng);
    language_encoder.init(rng);
    film_gamma.init(rng);
    film_beta.init(rng);
    head.init(rng);
    film_gamma.fc2.bias.value.setOnes();
  }

  const ImitationConfig& config() const { return config_; }

  // history: state_dim x L, oldest first, 1 <= L <= history.
  Vector predict(const Matrix& history, const Vector& embedding) const {
    if (history.cols() < 1) throw nn::ShapeError("imitation: empty history");
    if (history.cols() > config_.history) throw nn::ShapeError("imitation: history longer than window");
    nn::require_rows(history, config_.state_dim, "imitation history");
    nn::require_rows(embedding, config_.language_dim, "imitation embedding");
    const Matrix tokens = state_encoder.infer(state_norm.infer(history));
    const Matrix pooled = history_encoder.infer({tokens, {history.cols()}});
    const Matrix h_lang = language_encoder.infer(embedding);
    const Matrix fused = film_gamma.infer(h_lang).cwiseProduct(pooled) + film_beta.infer(h_lang);
    return head.infer(fused).col(0);
  }

  void set_training(bool training) {
    state_norm.mode = training ? nn::BatchNorm::Mode::kTrain : nn::BatchNorm::Mode::kEval;
  }

  // Mean squared error over action dims and samples; adds gradients when
  // `accumulate`.
  double loss(const ImitationBatch& b, bool accumulate = true) {
    const auto n = b.histories.count();
    if (n == 0) throw std::invalid_argument("imitation: empty batch");
    for (auto len : b.histories.lengths) {
      if (len < 1 || len > config_.history) throw nn::ShapeError("imitation: bad history length");
    }
    if (b.embeddings.cols() != n || b.actions.cols() != n) throw nn::ShapeError("imitation: batch sizes differ");
    Tape tape;
    const Matrix normed = state_norm.forward(b.histories.tokens, tape.norm);
    const Matrix tokens = state_encoder.forward(normed, tape.state);
    const Matrix pooled = history_encoder.forward({tokens, b.histories.lengths}, tape.history);
    const Matrix h_lang = language_encoder.forward(b.embeddings, tape.language);
    const Matrix gamma = film_gamma.forward(h_lang, tape.gamma);
    const Matrix beta = film_beta.forward(h_lang, tape.beta);
    const Matrix fused = gamma.cwiseProduct(pooled) + beta;
    const Matrix pred = head.forward(fused, tape.head);
    const double value = nn::mse(pred, b.actions);
    if (!std::isfinite(value)) throw nn::NumericError("imitation loss is not finite");
    if (!accumulate) return value;

    const Matrix dfused = head.backward(tape.head, nn::mse_grad(pred, b.actions));
    Matrix dlang = film_gamma.backward(tape.gamma, dfused.cwiseProduct(pooled));
    dlang += film_beta.backward(tape.beta, dfused);
    language_encoder.backward(tape.language, dlang);
    const Matrix dtokens = history_encoder.backward(tape.history, b.histories.lengths, dfused.cwiseProduct(gamma));
    state_norm.backward(tape.norm, state_encoder.backward(tape.state, dtokens));
    return value;
  }

  nn::ParamList parameters() {
    nn::ParamList out;
    state_norm.collect(out);
    state_encoder.collect(out);
    history_encoder.collect(out);
    language_encoder.collect(out);
    film_gamma.collect(out);
    film_beta.collect(out);
    head.collect(out);
    return out;
  }
  nn::ConstParamList parameters() const {
    nn::ConstParamList out;
    state_norm.collect(out);
    state_encoder.collect(out);
    history_encoder.collect(out);
    language_encoder.collect(out);
    film_gamma.collect(out);
    film_beta.collect(out);
    head.collect(out);
    return out;
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint c;
    c.header["policy"] = "imitation";
    c.header["config"] = config_;
    c.header["readout"] = "mean-pool";
    c.tensors = nn::capture(parameters());
    return c;
  }

  static ImitationPolicy from_checkpoint(const nn::Checkpoint& c) {
    if (c.header.value("policy", "") != "imitation") throw nn::CheckpointError("not an imitation checkpoint");
    ImitationPolicy p(c.header.at("config").get<ImitationConfig>(), 0);
    nn::restore(c, p.parameters());
    return p;
  }

  nn::BatchNorm state_norm;
  nn::Mlp state_encoder;
  nn::AttentionEncoder history_encoder;
  nn::Mlp language_encoder;
  nn::Mlp film_gamma;
  nn::Mlp film_beta;
  nn::Mlp head;

 private:
  struct Tape {
    nn::BatchNorm::Tape norm;
    nn::Mlp::Tape state, language, gamma, beta, head;
    nn::AttentionEncoder::Tape history;
  };

  ImitationConfig config_;
};

// The window of states ending at `step` (inclusive), oldest first.
inline Matrix history_window(const data::Trajectory& t, std::size_t step, int window) {
  const std::size_t first = step + 1 >= static_cast<std::size_t>(window) ? step + 1 - window : 0;
  Matrix h(t.steps[step].state.size(), static_cast<Eigen::Index>(step + 1 - first));
  for (std::size_t i = first; i <= step; ++i) h.col(static_cast<Eigen::Index>(i - first)) = t.steps[i].state;
  return h;
}

class ImitationLearner final : public data::Learner {
 public:
  ImitationLearner(const data::Dataset& d, const ImitationConfig& config, std::uint64_t seed,
                   const language::Embedder& embedder)
      : data_(d), policy_(config, seed) {
    std::map<std::string, Vector> cache;
    for (const auto& t : d) {
      auto it = cache.find(t.utterance);
      if (it == cache.end()) it = cache.emplace(t.utterance, embedder.embed(t.utterance).vector).first;
      embeddings_.push_back(it->second);
    }
    exemplars_ = data::exemplar_table(d);
  }

  double batch_loss(const std::vector<data::StepRef>& refs, bool accumulate) override {
    const auto& cfg = policy_.config();
    ImitationBatch b;
    std::vector<Matrix> windows;
    Eigen::Index total = 0;
    for (const auto& r : refs) {
      windows.push_back(history_window(data_[r.trajectory], r.step, cfg.history));
      b.histories.lengths.push_back(windows.back().cols());
      total += windows.back().cols();
    }
    b.histories.tokens.resize(cfg.state_dim, total);
    b.embeddings.resize(cfg.language_dim, static_cast<Eigen::Index>(refs.size()));
    b.actions.resize(cfg.action_dim, static_cast<Eigen::Index>(refs.size()));
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      b.histories.tokens.middleCols(offset, windows[i].cols()) = windows[i];
      offset += windows[i].cols();
      b.embeddings.col(static_cast<Eigen::Index>(i)) = embeddings_[refs[i].trajectory];
      b.actions.col(static_cast<Eigen::Index>(i)) = data_[refs[i].trajectory].steps[refs[i].step].action;
    }
    return policy_.loss(b, accumulate);
  }

  nn::ParamList parameters() override { return policy_.parameters(); }
  void set_training(bool training) override { policy_.set_training(training); }
  nn::Checkpoint checkpoint() const override {
    nn::Checkpoint c = policy_.to_checkpoint();
    c.header["exemplars"] = exemplars_;
    return c;
  }
  ImitationPolicy& policy() { return policy_; }

 private:
  const data::Dataset& data_;
  ImitationPolicy policy_;
  std::vector<Vector> embeddings_;
  nlohmann::json exemplars_;
};

}  // namespace lilac::baselines
