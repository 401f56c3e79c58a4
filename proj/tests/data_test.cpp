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

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "lilac/data/train.hpp"
#include "lilac/data/trajectory.hpp"
#include "lilac/nn/checkpoint.hpp"
#include "lilac/sim/scripted.hpp"

namespace lilac::data {
namespace {

Dataset small_dataset() {
  sim::DatasetSpec spec;
  spec.demos_per_task = 2;
  spec.corrections_per_template = 1;
  Dataset d = sim::generate_dataset(spec);
  language::GatingOracle oracle;
  preprocess_alphas(d, oracle);
  return d;
}

const Dataset& shared_small() {
  static const Dataset d = small_dataset();
  return d;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 64;
  c.val_holdout = 3;
  return c;
}

Action pose(double x, double y, double z, double r, double p, double yw) {
  return (Action() << x, y, z, r, p, yw).finished();
}

TEST(ActionDeltas, YawWrapsAcrossPi) {
  const auto d = compute_action_deltas({pose(0, 0, 0, 0, 0, 3.1), pose(0, 0, 0, 0, 0, -3.1)});
  ASSERT_EQ(d.size(), 1u);
  // Going from 3.1 to -3.1 is a short positive turn through pi.
  EXPECT_NEAR(d[0](5), 2.0 * std::numbers::pi - 6.2, 1e-12);
  EXPECT_NEAR(d[0](5), 0.0832, 1e-4);
}

TEST(ActionDeltas, PositionsTelescope) {
  nn::Rng rng(4);
  std::vector<Action> poses;
  for (int i = 0; i < 30; ++i) {
    poses.push_back(pose(rng.uniform(0, 1), rng.uniform(-1, 1), rng.uniform(0, 1), rng.uniform(-0.2, 0.2),
                         rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)));
  }
  const auto deltas = compute_action_deltas(poses);
  ASSERT_EQ(deltas.size(), 29u);
  Action sum = Action::Zero();
  for (const auto& a : deltas) sum += a;
  EXPECT_TRUE(sum.isApprox(poses.back() - poses.front(), 1e-12));
}

TEST(ActionDeltas, NeedsTwoPoses) {
  EXPECT_THROW(compute_action_deltas({pose(0, 0, 0, 0, 0, 0)}), std::invalid_argument);
}

TEST(DatasetFormat, RoundTripIsByteIdentical) {
  const Dataset& d = shared_small();
  const std::string text = serialize_dataset(d);
  const Dataset parsed = parse_dataset(text);
  EXPECT_EQ(parsed, d);
  EXPECT_EQ(serialize_dataset(parsed), text);
  EXPECT_EQ(dataset_hash(parsed), dataset_hash(d));
}

TEST(DatasetFormat, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "lilac_data_test.jsonl";
  save_dataset(shared_small(), path);
  EXPECT_EQ(load_dataset(path), shared_small());
  std::filesystem::remove(path);
}

TEST(DatasetFormat, RejectsMalformedRecords) {
  EXPECT_THROW(parse_dataset("{\"task\":1}\n"), DatasetError);
  EXPECT_THROW(parse_dataset("not json\n"), DatasetError);
  Dataset d = shared_small();
  nlohmann::json j = to_json(d.front());
  j["alpha"] = 2;
  EXPECT_THROW(parse_dataset(j.dump() + "\n"), DatasetError);
}

TEST(Labels, PreprocessIsIdempotent) {
  Dataset d = shared_small();
  for (auto& t : d) t.alpha.reset();
  language::GatingOracle oracle;
  preprocess_alphas(d, oracle);
  const Dataset once = d;
  preprocess_alphas(d, oracle);
  EXPECT_EQ(d, once);
  for (const auto& t : d) {
    const int expected = t.kind == TrajectoryKind::kFullTask ? 1 : language::heuristic_alpha(t.utterance);
    EXPECT_EQ(*t.alpha, expected) << t.utterance;
  }
}

TEST(Labels, TrainingRejectsUnlabeledData) {
  Dataset d = shared_small();
  d[3].alpha.reset();
  language::HashedNgramEmbedder emb;
  LilacLearner learner(d, {}, 0, emb);
  EXPECT_THROW(train(d, quick_config(), learner), DatasetError);
}

TEST(Split, DisjointCompleteAndSeeded) {
  const Dataset& d = shared_small();
  const Split a = split(d, 5, 1);
  const Split b = split(d, 5, 1);
  const Split c = split(d, 5, 2);
  EXPECT_EQ(a.val, b.val);
  EXPECT_NE(a.val, c.val);
  EXPECT_EQ(a.val.size(), 5u);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto v : a.val) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), d.size());
  EXPECT_THROW(split(d, static_cast<int>(d.size()), 0), DatasetError);
}

TEST(TrainConfigJson, MissingKeysKeepDefaults) {
  const auto c = nlohmann::json::parse(R"({"epochs": 7})").get<TrainConfig>();
  TrainConfig expected;
  expected.epochs = 7;
  EXPECT_EQ(c, expected);
  EXPECT_EQ(nlohmann::json(expected).get<TrainConfig>(), expected);
  EXPECT_THROW(nlohmann::json::parse(R"({"batch_size": 1})").get<TrainConfig>(), std::invalid_argument);
}

TEST(Train, ValidationTrajectoriesNeverReachTheOptimizer) {
  const Dataset& d = shared_small();
  const TrainConfig cfg = quick_config();
  const Split sp = split(d, cfg.val_holdout, cfg.seed);
  const std::set<std::size_t> val(sp.val.begin(), sp.val.end());
  language::HashedNgramEmbedder emb;
  LilacLearner learner(d, {}, 0, emb);
  std::size_t seen = 0;
  train(d, cfg, learner, [&](int, const std::vector<StepRef>& batch) {
    for (const auto& r : batch) {
      EXPECT_EQ(val.count(r.trajectory), 0u);
      ++seen;
    }
  });
  const auto train_steps = step_refs(d, sp.train).size();
  // Every epoch sees every training step, minus at most one dropped sample.
  EXPECT_GE(seen, cfg.epochs * (train_steps - 1));
  EXPECT_LE(seen, cfg.epochs * train_steps);
}

TEST(Train, DeterministicPerSeed) {
  const Dataset& d = shared_small();
  language::HashedNgramEmbedder emb;
  LilacLearner a(d, {}, 0, emb);
  LilacLearner b(d, {}, 0, emb);
  const auto ra = train(d, quick_config(), a);
  const auto rb = train(d, quick_config(), b);
  EXPECT_EQ(ra.train_loss, rb.train_loss);
  EXPECT_EQ(ra.val_loss, rb.val_loss);
  EXPECT_EQ(nn::serialize(ra.best), nn::serialize(rb.best));
}

TEST(Train, BestCheckpointHasLowestValidationLoss) {
  const Dataset& d = shared_small();
  language::HashedNgramEmbedder emb;
  LilacLearner learner(d, {}, 0, emb);
  const auto r = train(d, quick_config(), learner);
  ASSERT_EQ(r.val_loss.size(), 4u);
  EXPECT_LE(r.best_val_loss, r.val_loss.back());
  EXPECT_EQ(r.best_val_loss, *std::min_element(r.val_loss.begin(), r.val_loss.end()));
  for (double v : r.train_loss) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(r.best.header.at("dataset_hash"), dataset_hash(d));
  EXPECT_EQ(r.best.header.at("best_epoch").get<int>(), r.best_epoch + 1);
  EXPECT_EQ(r.best.header.at("policy"), "lilac");
  EXPECT_EQ(r.best.header.at("train_config").get<TrainConfig>(), quick_config());
  EXPECT_EQ(r.best.header.at("exemplars").size(), exemplar_table(d).size());

  // The stored checkpoint reproduces the best validation loss.
  LilacLearner restored(d, {}, 0, emb);
  nn::restore(r.best, restored.parameters());
  restored.set_training(false);
  const Split sp = split(d, quick_config().val_holdout, quick_config().seed);
  EXPECT_DOUBLE_EQ(restored.batch_loss(step_refs(d, sp.val), false), r.best_val_loss);
}

class NanLearner final : public Learner {
 public:
  double batch_loss(const std::vector<StepRef>&, bool accumulate) override {
    return accumulate && ++calls_ == 3 ? std::nan("") : 1.0;
  }
  nn::ParamList parameters() override { return {&p_}; }
  void set_training(bool) override {}
  nn::Checkpoint checkpoint() const override { return {}; }

 private:
  nn::Param p_{"p", 1, 1};
  int calls_ = 0;
};

TEST(Train, NonFiniteLossAbortsWithContext) {
  NanLearner learner;
  try {
    train(shared_small(), quick_config(), learner);
    FAIL() << "expected NumericError";
  } catch (const nn::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(ExemplarTable, FirstSeenOrderWithLabels) {
  const auto table = exemplar_table(shared_small());
  std::set<std::string> texts;
  for (const auto& e : table) {
    EXPECT_TRUE(texts.insert(e.at("text").get<std::string>()).second);
    EXPECT_TRUE(e.at("alpha") == 0 || e.at("alpha") == 1);
  }
  EXPECT_EQ(table.front().at("text"), shared_small().front().utterance);
}

}  // namespace
}  // namespace lilac::data
