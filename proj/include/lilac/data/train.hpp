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

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lilac/data/trajectory.hpp"
#include "lilac/language/embedding.hpp"
#include "lilac/language/gating.hpp"
#include "lilac/model/lilac_model.hpp"
#include "lilac/nn/adamw.hpp"
#include "lilac/nn/checkpoint.hpp"
#include "lilac/nn/tensor.hpp"

namespace lilac::data {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 512;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  int val_holdout = 5;
  std::uint64_t seed = 0;
  int hidden_dim = 128;

  void validate() const {
    if (epochs <= 0 || batch_size <= 1 || learning_rate <= 0.0 || weight_decay < 0.0 || val_holdout <= 0 ||
        hidden_dim <= 0) {
      throw std::invalid_argument("TrainConfig: values must be positive (batch_size >= 2)");
    }
  }
  bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay}, {"val_holdout", c.val_holdout}, {"seed", c.seed},
       {"hidden_dim", c.hidden_dim}};
}

// Missing keys keep their defaults so a config file may list only overrides.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("weight_decay")) j.at("weight_decay").get_to(c.weight_decay);
  if (j.contains("val_holdout")) j.at("val_holdout").get_to(c.val_holdout);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("hidden_dim")) j.at("hidden_dim").get_to(c.hidden_dim);
  c.validate();
}

// Labels every trajectory through the oracle (cache-first, so relabeling a
// labeled dataset with a warm cache is a no-op).
inline void preprocess_alphas(Dataset& d, language::GatingOracle& oracle) {
  for (auto& t : d) t.alpha = oracle.gate_alpha(t.utterance, {});
}

inline void require_labeled(const Dataset& d) {
  for (const auto& t : d) {
    if (!t.alpha) throw DatasetError("trajectory '" + t.utterance + "' has no alpha label; run label-alphas");
  }
}

struct Split {
  std::vector<std::size_t> train;  // trajectory indices
  std::vector<std::size_t> val;
};

// Holds out `val_holdout` whole trajectories chosen by a seeded shuffle.
inline Split split(const Dataset& d, int val_holdout, std::uint64_t seed) {
  if (val_holdout <= 0 || d.size() <= static_cast<std::size_t>(val_holdout)) {
    throw DatasetError("dataset of " + std::to_string(d.size()) + " trajectories too small to hold out " +
                       std::to_string(val_holdout));
  }
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  nn::Rng rng(seed ^ 0x5eedULL);
  rng.shuffle(idx);
  Split s;
  s.val.assign(idx.begin(), idx.begin() + val_holdout);
  s.train.assign(idx.begin() + val_holdout, idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

struct StepRef {
  std::size_t trajectory = 0;
  std::size_t step = 0;
  bool operator==(const StepRef&) const = default;
};

inline std::vector<StepRef> step_refs(const Dataset& d, const std::vector<std::size_t>& trajectories) {
  std::vector<StepRef> refs;
  for (std::size_t t : trajectories) {
    for (std::size_t s = 0; s < d[t].steps.size(); ++s) refs.push_back({t, s});
  }
  return refs;
}

// What the generic loop needs from a policy.
class Learner {
 public:
  virtual ~Learner() = default;
  // Mean loss over `refs`; with `accumulate`, adds its gradient to params.
  virtual double batch_loss(const std::vector<StepRef>& refs, bool accumulate) = 0;
  virtual nn::ParamList parameters() = 0;
  virtual void set_training(bool training) = 0;
  virtual nn::Checkpoint checkpoint() const = 0;
};

struct TrainResult {
  std::vector<double> train_loss;  // mean over the epoch's batches, weighted by size
  std::vector<double> val_loss;    // eval mode, after the epoch
  int best_epoch = -1;             // 0-based
  double best_val_loss = std::numeric_limits<double>::infinity();
  nn::Checkpoint best;
  std::string dataset_hash;
};

using BatchObserver = std::function<void(int epoch, const std::vector<StepRef>& batch)>;

// Step-level minibatch AdamW. Each epoch is one pass over every training
// step in a seeded shuffle. A trailing batch of one sample is dropped since
// batch norm needs two. The checkpoint with the lowest validation loss is kept.
inline TrainResult train(const Dataset& d, const TrainConfig& config, Learner& learner,
                         const BatchObserver& observer = {}) {
  config.validate();
  require_labeled(d);
  const Split sp = split(d, config.val_holdout, config.seed);
  std::vector<StepRef> train_refs = step_refs(d, sp.train);
  const std::vector<StepRef> val_refs = step_refs(d, sp.val);

  nn::AdamWOptions opts;
  opts.lr = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  nn::AdamW optimizer(learner.parameters(), opts);
  nn::Rng rng(config.seed ^ 0xba7c4ULL);

  TrainResult result;
  result.dataset_hash = dataset_hash(d);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train_refs);
    learner.set_training(true);
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_refs.size(); start += bs) {
      const std::size_t end = std::min(start + bs, train_refs.size());
      if (end - start < 2) break;
      std::vector<StepRef> batch(train_refs.begin() + static_cast<long>(start),
                                 train_refs.begin() + static_cast<long>(end));
      if (observer) observer(epoch, batch);
      optimizer.zero_grad();
      double loss = 0.0;
      try {
        loss = learner.batch_loss(batch, true);
        if (!std::isfinite(loss)) throw nn::NumericError("loss is " + std::to_string(loss));
        optimizer.step();
      } catch (const nn::NumericError& e) {
        throw nn::NumericError("training aborted at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                               std::to_string(start) + ": " + e.what());
      }
      weighted += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    learner.set_training(false);
    const double val = learner.batch_loss(val_refs, false);
    if (!std::isfinite(val)) throw nn::NumericError("validation loss not finite at epoch " + std::to_string(epoch + 1));
    result.train_loss.push_back(weighted / static_cast<double>(seen));
    result.val_loss.push_back(val);
    spdlog::info("epoch {:3d}  train {:.6e}  val {:.6e}", epoch + 1, result.train_loss.back(), val);
    if (val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      result.best = learner.checkpoint();
    }
  }
  result.best.header["dataset_hash"] = result.dataset_hash;
  result.best.header["train_config"] = config;
  result.best.header["best_epoch"] = result.best_epoch + 1;
  result.best.header["train_loss"] = result.train_loss;
  result.best.header["val_loss"] = result.val_loss;
  return result;
}

// Distinct utterances of the dataset with their labels, in first-seen order.
// Stored in checkpoints so a served policy can rebuild its exemplar index.
inline nlohmann::json exemplar_table(const Dataset& d) {
  nlohmann::json out = nlohmann::json::array();
  std::map<std::string, bool> seen;
  for (const auto& t : d) {
    if (seen.emplace(t.utterance, true).second) {
      out.push_back({{"text", t.utterance}, {"alpha", t.alpha ? nlohmann::json(*t.alpha) : nlohmann::json(nullptr)}});
    }
  }
  return out;
}

// LILAC, or LILA when `force_alpha_one` (state always used, bias inert).
class LilacLearner final : public Learner {
 public:
  LilacLearner(const Dataset& d, const model::LilacConfig& config, std::uint64_t seed,
               const language::Embedder& embedder, bool force_alpha_one = false)
      : data_(d), model_(config, seed), lila_(force_alpha_one) {
    if (embedder.dim() != config.language_dim) throw nn::ShapeError("embedder dim differs from language_dim");
    std::map<std::string, Vector> cache;
    for (const auto& t : d) {
      auto it = cache.find(t.utterance);
      if (it == cache.end()) it = cache.emplace(t.utterance, embedder.embed(t.utterance).vector).first;
      embeddings_.push_back(it->second);
      alphas_.push_back(force_alpha_one ? 1.0 : static_cast<double>(t.alpha.value_or(-1)));
    }
    exemplars_ = exemplar_table(d);
  }

  double batch_loss(const std::vector<StepRef>& refs, bool accumulate) override {
    const auto& cfg = model_.config();
    const auto n = static_cast<Eigen::Index>(refs.size());
    model::ReconstructionBatch b;
    b.states.resize(cfg.state_dim, n);
    b.embeddings.resize(cfg.language_dim, n);
    b.alphas.resize(n);
    b.actions.resize(cfg.action_dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = refs[static_cast<std::size_t>(i)];
      const Step& st = data_[r.trajectory].steps[r.step];
      b.states.col(i) = st.state;
      b.embeddings.col(i) = embeddings_[r.trajectory];
      b.alphas(i) = alphas_[r.trajectory];
      b.actions.col(i) = st.action;
    }
    return model_.reconstruction_loss(b, accumulate).loss;
  }

  nn::ParamList parameters() override { return model_.parameters(); }
  void set_training(bool training) override { model_.set_training(training); }

  nn::Checkpoint checkpoint() const override {
    nn::Checkpoint c = model_.to_checkpoint(lila_ ? "lila" : "lilac");
    c.header["exemplars"] = exemplars_;
    return c;
  }

  model::LilacModel& model() { return model_; }

 private:
  const Dataset& data_;
  model::LilacModel model_;
  bool lila_;
  std::vector<Vector> embeddings_;
  std::vector<double> alphas_;
  nlohmann::json exemplars_;
};

}  // namespace lilac::data
