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

// Acceptance run: trains all three policies on the bundled dataset and checks
// every primary criterion at its stated tolerance. Prints one PASS/FAIL line
// per criterion; exits non-zero if any fails.
//
//   acceptance [--only name[,name...]] [--keep-checkpoints dir] [--report file]

#include "lilac/util/http.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lilac/baselines/imitation.hpp"
#include "lilac/baselines/lila.hpp"
#include "lilac/data/train.hpp"
#include "lilac/eval/rollout.hpp"
#include "lilac/service/server.hpp"
#include "lilac/sim/scripted.hpp"
#include "support/gradcheck.hpp"
#include "support/random.hpp"
#include "support/wire_random.hpp"

namespace fs = std::filesystem;
using namespace lilac;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool bit_equal(const nn::Matrix& a, const nn::Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- shared state -------------------------------------------------------------

struct Fixture {
  std::string dataset_text;
  data::Dataset dataset;
  std::shared_ptr<language::HashedNgramEmbedder> embedder = std::make_shared<language::HashedNgramEmbedder>();
  std::optional<nn::Checkpoint> lilac, lila, imitation;
  std::vector<session::EpisodeLog> episode_logs;

  const nn::Checkpoint& need(const std::optional<nn::Checkpoint>& c, const char* what) const {
    if (!c) throw std::runtime_error(std::string("no trained ") + what + " checkpoint (training failed)");
    return *c;
  }

  model::LilacModel trained_lilac() const {
    model::LilacModel m = model::LilacModel::from_checkpoint(need(lilac, "lilac"));
    m.set_training(false);
    return m;
  }

  std::vector<std::string> corrections() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& t : dataset) {
      if (t.kind == data::TrajectoryKind::kCorrection && seen.insert(t.utterance).second) {
        out.push_back(t.utterance);
      }
    }
    return out;
  }
};

// Environment-shaped states: a random task layout with the gripper and the
// objects jittered, so vectors stay in the trained range but all differ.
nn::Vector random_state(nn::Rng& rng) {
  const auto task = sim::builtin_task(sim::kAllTasks[rng.index(sim::kAllTasks.size())]);
  sim::EnvState s = sim::initial_state(task, rng.next_u64());
  for (int i = 0; i < 3; ++i) {
    s.ee_position(i) += rng.uniform(-0.15, 0.15);
    s.ee_orientation(i) = rng.uniform(-1.0, 1.0);
  }
  for (auto& [id, o] : s.objects) {
    for (int i = 0; i < 3; ++i) o.position(i) += rng.uniform(-0.05, 0.05);
  }
  s.gripper_closed = rng.uniform() < 0.3;
  return sim::state_vector(s, task.object_order());
}

// ---- criteria -------------------------------------------------------------------

Verdict alpha_labels(Fixture& f) {
  std::vector<std::pair<std::string, int>> cases = {{"tilt down a little bit", 0}, {"go left", 0}};
  for (auto id : sim::kAllTasks) {
    for (const auto& i : sim::builtin_task(id).instructions) cases.emplace_back(i, 1);
  }
  std::string detail;
  bool pass = true;
  auto check = [&](language::GatingOracle& oracle, const char* name) {
    int wrong = 0;
    for (const auto& [u, expected] : cases) {
      const int got = oracle.alpha_for(u);
      if (got != expected) {
        ++wrong;
        detail += fmt::format(" [{}: '{}' -> {}]", name, u, got);
      }
    }
    pass = pass && wrong == 0;
    return wrong;
  };
  language::GatingOracle heuristic;
  const int wrong_h = check(heuristic, "heuristic");
  detail = fmt::format("heuristic {}/{} correct", cases.size() - static_cast<std::size_t>(wrong_h), cases.size()) + detail;

  // Labels stored in the bundled dataset must agree.
  for (const auto& t : f.dataset) {
    for (const auto& [u, expected] : cases) {
      if (t.utterance == u && t.alpha != expected) {
        pass = false;
        detail += fmt::format(" [dataset: '{}' stored {}]", u, t.alpha.value_or(-1));
      }
    }
  }

  auto llm = language::LlmServiceConfig::from_environment(fs::path(LILAC_SOURCE_DIR) / "data/gating_prompt_v1.txt");
  if (llm) {
    language::GatingOracle service(language::GatingBackend::kLlmService, nullptr, llm);
    const int wrong_s = check(service, "llm-service");
    detail += fmt::format("; llm-service {}/{} correct, {} fallbacks", cases.size() - static_cast<std::size_t>(wrong_s),
                          cases.size(), service.fallbacks());
    pass = pass && service.fallbacks() == 0;
  } else {
    detail += "; llm-service not configured (LILAC_GATING_ENDPOINT unset)";
  }
  return {pass, detail};
}

// Linear-scan oracle: cosine against every exemplar, ties to the lower id.
std::pair<int, double> scan_nearest(const language::ExemplarIndex& index, const nn::Vector& q) {
  int best = -1;
  double best_sim = -2.0;
  for (const auto& e : index.entries()) {
    double dot = 0.0, qq = 0.0, ee = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      dot += q(i) * e.embedding.vector(i);
      qq += q(i) * q(i);
      ee += e.embedding.vector(i) * e.embedding.vector(i);
    }
    const double sim = dot / (std::sqrt(qq) * std::sqrt(ee));
    if (sim > best_sim + 1e-12 || (std::abs(sim - best_sim) <= 1e-12 && e.id < best)) {
      best = e.id;
      best_sim = sim;
    }
  }
  return {best, best_sim};
}

Verdict retrieval(Fixture& f) {
  language::GatingOracle oracle;
  std::vector<std::string> utterances;
  for (const auto& t : f.dataset) utterances.push_back(t.utterance);
  const auto index = language::build_index(utterances, *f.embedder, oracle);

  std::vector<std::string> words;
  for (const auto& u : utterances) {
    for (const auto& w : language::tokenize(u)) words.push_back(w);
  }
  nn::Rng rng(1000);
  int mismatches = 0;
  double worst_gap = 0.0;
  for (int q = 0; q < 1000; ++q) {
    nn::Vector v;
    if (q % 2 == 0) {
      std::string text;
      const auto n = 1 + rng.index(6);
      for (std::size_t i = 0; i < n; ++i) text += words[rng.index(words.size())] + " ";
      v = f.embedder->embed(text).vector;
    } else {
      v = testing::random_vector(f.embedder->dim(), rng);
    }
    const auto got = index.retrieve_nearest({v, ""});
    const auto [want_id, want_sim] = scan_nearest(index, v);
    worst_gap = std::max(worst_gap, std::abs(got.similarity - want_sim));
    if (got.id != want_id && std::abs(got.similarity - want_sim) > 1e-12) ++mismatches;
  }
  int exact_bad = 0;
  double exact_worst = 0.0;
  for (const auto& e : index.entries()) {
    const auto r = index.retrieve_nearest(f.embedder->embed(e.text));
    exact_worst = std::max(exact_worst, std::abs(r.similarity - 1.0));
    if (r.id != e.id || std::abs(r.similarity - 1.0) > 1e-12) ++exact_bad;
  }
  return {mismatches == 0 && exact_bad == 0,
          fmt::format("1000 queries vs linear scan: {} mismatches (max similarity gap {:.1e}); {} exact-match queries, "
                      "max |sim-1| {:.1e}",
                      mismatches, worst_gap, index.size(), exact_worst)};
}

Verdict gradients(Fixture&) {
  const auto t0 = Clock::now();
  nn::Rng rng(77);
  const model::LilacConfig mc{.state_dim = 5, .hidden_dim = 8, .action_dim = 6, .latent_dim = 2, .language_dim = 6};
  auto lilac_batch = [&](bool lila) {
    model::ReconstructionBatch b;
    b.states = testing::random_matrix(mc.state_dim, 6, rng, 2.0);
    b.embeddings = testing::random_matrix(mc.language_dim, 6, rng);
    b.alphas = nn::Vector(6);
    for (Eigen::Index i = 0; i < 6; ++i) b.alphas(i) = lila ? 1.0 : static_cast<double>(i % 2);
    b.actions = testing::random_matrix(mc.action_dim, 6, rng);
    return b;
  };
  std::string detail;
  bool pass = true;
  for (const bool lila : {false, true}) {
    model::LilacModel m(mc, lila ? 2 : 1);
    const auto b = lilac_batch(lila);
    for (nn::Param* p : m.parameters()) p->zero_grad();
    m.reconstruction_loss(b);
    const auto r = nn::finite_difference_check(m.parameters(), [&] { return m.reconstruction_loss(b, false).loss; });
    pass = pass && r.max_rel_error <= 1e-4;
    detail += fmt::format("{} {} params max rel {:.1e} ({}); ", lila ? "lila" : "lilac", r.checked, r.max_rel_error,
                          r.worst_param);
  }
  baselines::ImitationConfig ic;
  ic.state_dim = 5;
  ic.hidden_dim = 8;
  ic.action_dim = 6;
  ic.language_dim = 6;
  ic.history = 3;
  baselines::ImitationPolicy p(ic, 3);
  baselines::ImitationBatch b;
  b.histories.lengths = {3, 1, 2, 3};
  b.histories.tokens = testing::random_matrix(ic.state_dim, 9, rng);
  b.embeddings = testing::random_matrix(ic.language_dim, 4, rng);
  b.actions = testing::random_matrix(ic.action_dim, 4, rng);
  for (nn::Param* q : p.parameters()) q->zero_grad();
  p.loss(b);
  const auto r = nn::finite_difference_check(p.parameters(), [&] { return p.loss(b, false); });
  pass = pass && r.max_rel_error <= 1e-4;
  const double secs = seconds_since(t0);
  detail += fmt::format("imitation {} params max rel {:.1e} ({}); width 8; {:.1f} s", r.checked, r.max_rel_error,
                        r.worst_param, secs);
  return {pass && secs < 300.0, detail};
}

Verdict training(Fixture& f, const std::string& keep_dir) {
  const data::TrainConfig tc;  // 50 epochs, batch 512, lr 1e-3, wd 1e-2, 5 held out
  const auto t0 = Clock::now();
  data::LilacLearner first(f.dataset, {}, 0, *f.embedder);
  const auto a = data::train(f.dataset, tc, first);
  const double secs = seconds_since(t0);
  data::LilacLearner second(f.dataset, {}, 0, *f.embedder);
  const auto b = data::train(f.dataset, tc, second);
  f.lilac = a.best;

  bool finite = true;
  for (const auto* curve : {&a.train_loss, &a.val_loss, &b.train_loss, &b.val_loss}) {
    for (double x : *curve) finite = finite && std::isfinite(x);
  }
  const bool deterministic = a.train_loss == b.train_loss && a.val_loss == b.val_loss &&
                             nn::serialize(a.best) == nn::serialize(b.best);
  const double ratio = a.train_loss.back() / a.train_loss.front();

  // The baselines share the recipe; their checkpoints feed the comparison.
  auto lila = baselines::make_lila_learner(f.dataset, {}, 0, *f.embedder);
  f.lila = data::train(f.dataset, tc, lila).best;
  baselines::ImitationLearner imitation(f.dataset, {}, 0, *f.embedder);
  f.imitation = data::train(f.dataset, tc, imitation).best;
  if (!keep_dir.empty()) {
    fs::create_directories(keep_dir);
    nn::save_checkpoint(*f.lilac, (fs::path(keep_dir) / "lilac.ckpt").string());
    nn::save_checkpoint(*f.lila, (fs::path(keep_dir) / "lila.ckpt").string());
    nn::save_checkpoint(*f.imitation, (fs::path(keep_dir) / "imitation.ckpt").string());
  }
  return {deterministic && finite && ratio <= 0.2 && secs < 900.0,
          fmt::format("{} epochs; deterministic {}; finite {}; train MSE {:.3e} -> {:.3e}, ratio {:.3f} (<= 0.2); "
                      "best val epoch {}; {:.1f} s per run",
                      tc.epochs, deterministic, finite, a.train_loss.front(), a.train_loss.back(), ratio,
                      a.best_epoch + 1, secs)};
}

Verdict orthonormality(Fixture& f) {
  const auto t0 = Clock::now();
  const model::LilacModel m = f.trained_lilac();
  std::vector<std::string> utterances;
  for (const auto& t : f.dataset) utterances.push_back(t.utterance);
  std::vector<std::string> words;
  for (const auto& u : utterances) {
    for (const auto& w : language::tokenize(u)) words.push_back(w);
  }
  nn::Rng rng(10000);
  double worst_gram = 0.0, worst_norm = 0.0;
  int degenerate = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const nn::Vector s = i % 4 == 3 ? testing::random_vector(m.config().state_dim, rng, 2.0) : random_state(rng);
    std::string u = utterances[rng.index(utterances.size())];
    if (i % 3 == 2) {  // novel phrasing
      u.clear();
      for (std::size_t k = 0, w = 1 + rng.index(6); k < w; ++k) u += words[rng.index(words.size())] + " ";
    }
    const double alpha = static_cast<double>(rng.index(2));
    try {
      const nn::Matrix B = m.control_bases(s, f.embedder->embed(u).vector, alpha).basis;
      const nn::Matrix gram = B.transpose() * B;
      worst_gram = std::max(worst_gram, (gram - nn::Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff());
      const nn::Vector z = testing::random_vector(m.config().latent_dim, rng);
      worst_norm = std::max(worst_norm, std::abs(model::decode({B}, z).norm() - z.norm()));
    } catch (const model::DegenerateBasesError&) {
      ++degenerate;
    }
  }
  const double secs = seconds_since(t0);
  return {degenerate == 0 && worst_gram <= 1e-6 && worst_norm <= 1e-9 && secs < 60.0,
          fmt::format("{} triples on the trained checkpoint: max|B^T B - I| {:.1e} (<= 1e-6), max norm error {:.1e} "
                      "(<= 1e-9), {} degenerate; {:.1f} s",
                      n, worst_gram, worst_norm, degenerate, secs)};
}

Verdict gating_independence(Fixture& f) {
  const model::LilacModel m = f.trained_lilac();
  const auto corrections = f.corrections();
  nn::Rng rng(100);
  std::vector<nn::Vector> states;
  std::set<std::vector<double>> distinct;
  while (states.size() < 100) {
    nn::Vector s = random_state(rng);
    if (distinct.insert(std::vector<double>(s.data(), s.data() + s.size())).second) states.push_back(std::move(s));
  }
  int unequal = 0;
  for (const auto& u : corrections) {
    const nn::Vector e = f.embedder->embed(u).vector;
    const nn::Matrix ref = m.control_bases(states.front(), e, 0.0).basis;
    for (std::size_t i = 1; i < states.size(); ++i) {
      if (!bit_equal(m.control_bases(states[i], e, 0.0).basis, ref)) {
        ++unequal;
        break;
      }
    }
  }
  // Sanity: the gate is what removes the state dependence.
  int state_dependent = 0;
  for (const auto& u : corrections) {
    const nn::Vector e = f.embedder->embed(u).vector;
    state_dependent += !bit_equal(m.control_bases(states[0], e, 1.0).basis, m.control_bases(states[1], e, 1.0).basis);
  }
  return {unequal == 0 && !corrections.empty(),
          fmt::format("{} correction utterances x {} distinct states at alpha=0: {} with differing bases; with alpha=1 "
                      "{} of {} differ",
                      corrections.size(), states.size(), unequal, state_dependent, corrections.size())};
}

Verdict lifo(Fixture& f) {
  const auto corrections = f.corrections();
  nn::Rng rng(1001);
  int axiom_failures = 0;
  long ops = 0;
  for (int c = 0; c < 1000; ++c) {
    session::CorrectionStack stack("base instruction");
    std::vector<std::string> ref;
    const auto len = 1 + rng.index(40);
    for (std::size_t k = 0; k < len; ++k, ++ops) {
      if (rng.uniform() < 0.55) {
        const auto& u = corrections[rng.index(corrections.size())];
        stack.push(u);
        ref.push_back(u);
      } else {
        const bool popped = stack.pop();
        if (popped != !ref.empty()) ++axiom_failures;
        if (!ref.empty()) ref.pop_back();
      }
      const std::string top = ref.empty() ? "base instruction" : ref.back();
      if (stack.active() != top || stack.depth() != ref.size() || stack.corrections() != ref) ++axiom_failures;
    }
  }

  // push^n pop^n at a fixed state restores the bases bit for bit.
  const auto task = sim::builtin_task(sim::TaskId::kInsertBook);
  const eval::Policy p = eval::make_policy(f.need(f.lilac, "lilac"), f.embedder,
                                           std::make_shared<language::GatingOracle>(), task.object_order());
  int restore_failures = 0;
  for (int c = 0; c < 1000; ++c) {
    session::ControlSession s(p.control, task.instructions[static_cast<std::size_t>(c) % task.instructions.size()],
                              sim::initial_state(task, static_cast<std::uint64_t>(c)));
    const auto before = s.current_bases();
    const auto n = 1 + rng.index(8);
    for (std::size_t k = 0; k < n; ++k) s.push_correction(corrections[rng.index(corrections.size())]);
    for (std::size_t k = 0; k < n; ++k) s.pop_correction();
    const auto after = s.current_bases();
    if (!before || !after || !bit_equal(before->basis, after->basis) || s.stack().depth() != 0) ++restore_failures;
  }
  return {axiom_failures == 0 && restore_failures == 0,
          fmt::format("1000 random sequences ({} ops) vs reference stack: {} violations; 1000 push^n pop^n cases: {} "
                      "bases not restored",
                      ops, axiom_failures, restore_failures)};
}

Verdict policy_ordering(Fixture& f) {
  const auto t0 = Clock::now();
  const int seeds = 20;
  auto oracle = std::make_shared<language::GatingOracle>();
  std::map<std::string, eval::StageRates> rates;
  for (const auto* c : {&f.imitation, &f.lila, &f.lilac}) {
    const auto& ckpt = f.need(*c, "policy");
    const std::string name = ckpt.header.at("policy").get<std::string>();
    for (auto id : sim::kAllTasks) {
      const auto task = sim::builtin_task(id);
      const eval::Policy p = eval::make_policy(ckpt, f.embedder, oracle, task.object_order());
      for (int s = 0; s < seeds; ++s) {
        auto r = eval::scripted_user_rollout(p, task, static_cast<std::uint64_t>(s));
        rates[name].add(r.status);
        f.episode_logs.push_back(std::move(r.log));
      }
    }
  }
  const auto im = rates["imitation"].mean(), la = rates["lila"].mean(), lc = rates["lilac"].mean();
  const bool ordered = lc.grasped >= la.grasped && la.grasped >= im.grasped && lc.transferred >= la.transferred &&
                       la.transferred >= im.transferred && lc.completed >= la.completed &&
                       la.completed >= im.completed && lc.completed > im.completed;
  const double secs = seconds_since(t0);
  return {ordered && secs < 1800.0,
          fmt::format("{} seeds x 5 tasks, lilac/lila/imitation: grasp {:.2f}/{:.2f}/{:.2f}, transfer "
                      "{:.2f}/{:.2f}/{:.2f}, complete {:.2f}/{:.2f}/{:.2f}; {:.0f} s",
                      seeds, lc.grasped, la.grasped, im.grasped, lc.transferred, la.transferred, im.transferred,
                      lc.completed, la.completed, im.completed, secs)};
}

Verdict round_trips(Fixture& f) {
  std::string detail;
  bool pass = true;
  // Checkpoints: bytes -> object -> bytes, and through a file.
  const auto tmp = fs::temp_directory_path() / "lilac_acceptance";
  fs::create_directories(tmp);
  int ckpt_ok = 0;
  for (const auto* c : {&f.lilac, &f.lila, &f.imitation}) {
    const auto& ckpt = f.need(*c, "policy");
    const std::string bytes = nn::serialize(ckpt);
    const auto path = (tmp / "rt.ckpt").string();
    nn::save_checkpoint(ckpt, path);
    const bool ok = nn::serialize(nn::deserialize(bytes)) == bytes && read_file(path) == bytes &&
                    nn::serialize(nn::load_checkpoint(path)) == bytes;
    ckpt_ok += ok;
  }
  pass = pass && ckpt_ok == 3;
  detail += fmt::format("checkpoints {}/3 byte-identical", ckpt_ok);

  // Dataset: the bundled file re-serializes to itself.
  const bool ds_ok = data::serialize_dataset(data::parse_dataset(f.dataset_text)) == f.dataset_text;
  pass = pass && ds_ok;
  detail += fmt::format("; dataset {}", ds_ok ? "byte-identical" : "DIFFERS");

  // Episode logs from the comparison: replay reproduces the final state.
  int replay_ok = 0, text_ok = 0;
  for (const auto& log : f.episode_logs) {
    const std::string text = log.serialize();
    const auto parsed = session::EpisodeLog::parse(text);
    text_ok += parsed.serialize() == text;
    const auto r = session::replay(parsed);
    replay_ok += r.states_match && r.final_matches;
  }
  const auto n = f.episode_logs.size();
  pass = pass && n > 0 && replay_ok == static_cast<int>(n) && text_ok == static_cast<int>(n);
  detail += fmt::format("; episode logs {}/{} replay bit-exact, {}/{} re-serialize identically", replay_ok, n, text_ok,
                        n);
  fs::remove_all(tmp);
  return {pass, detail};
}

Verdict wire_protocol(Fixture& f) {
  nn::Rng rng(4242);
  int round_trips = 0, failures = 0;
  for (auto kind : service::kAllKinds) {
    for (int i = 0; i < 500; ++i, ++round_trips) {
      const auto m = testing::random_message(kind, rng);
      const std::string text = service::encode(m);
      const auto back = service::decode(text);
      if (!(back == m) || service::encode(back) != text) ++failures;
    }
  }

  const auto task = sim::builtin_task(sim::TaskId::kInsertBook);
  const eval::Policy p = eval::make_policy(f.need(f.lilac, "lilac"), f.embedder,
                                           std::make_shared<language::GatingOracle>(), task.object_order());
  service::Server server({}, [&](const std::string& id) {
    return std::make_unique<service::LiveSession>(p, task, id);
  });
  server.start();
  service::Client client("127.0.0.1", server.port());
  const auto start = client.receive();
  if (!start || start->kind != service::MessageKind::kSessionStart) return {false, "no session_start on connect"};
  int updates = 0;
  const auto t0 = Clock::now();
  while (seconds_since(t0) < 10.0) {
    const auto m = client.receive();
    if (!m) break;
    updates += m->kind == service::MessageKind::kStateUpdate;
  }
  const double secs = seconds_since(t0);
  client.close();
  server.stop();
  const double hz = updates / secs;
  return {failures == 0 && std::abs(hz - 10.0) <= 1.0,
          fmt::format("{} randomized messages over {} kinds: {} round-trip failures; {} state_update frames in "
                      "{:.2f} s = {:.2f} Hz (10 +/- 10%)",
                      round_trips, service::kAllKinds.size(), failures, updates, secs, hz)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  std::set<std::string> only;
  std::string keep_dir;
  std::string report_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string name; std::getline(ss, name, ',');) only.insert(name);
    } else if (arg == "--keep-checkpoints" && i + 1 < argc) {
      keep_dir = argv[++i];
    } else if (arg == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only name,...] [--keep-checkpoints dir] [--report file]\n";
      return 2;
    }
  }

  Fixture f;
  const auto path = fs::path(LILAC_SOURCE_DIR) / "data/demos.jsonl";
  f.dataset_text = read_file(path);
  f.dataset = data::parse_dataset(f.dataset_text);
  data::require_labeled(f.dataset);

  // Order matters: training produces the checkpoints later criteria use.
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"alpha-labels", [&] { return alpha_labels(f); }},
      {"retrieval", [&] { return retrieval(f); }},
      {"gradients", [&] { return gradients(f); }},
      {"training", [&] { return training(f, keep_dir); }},
      {"orthonormality", [&] { return orthonormality(f); }},
      {"gating-independence", [&] { return gating_independence(f); }},
      {"lifo", [&] { return lifo(f); }},
      {"policy-ordering", [&] { return policy_ordering(f); }},
      {"round-trips", [&] { return round_trips(f); }},
      {"wire-protocol", [&] { return wire_protocol(f); }},
  };
  // Criteria that consume trained checkpoints or the comparison's episode logs.
  const std::map<std::string, std::vector<std::string>> depends = {
      {"orthonormality", {"training"}},    {"gating-independence", {"training"}}, {"lifo", {"training"}},
      {"policy-ordering", {"training"}},     {"round-trips", {"training", "policy-ordering"}},
      {"wire-protocol", {"training"}}};
  std::set<std::string> selected = only;
  for (const auto& name : only) {
    if (auto it = depends.find(name); it != depends.end()) selected.insert(it->second.begin(), it->second.end());
  }

  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (report) report << line << '\n' << std::flush;
  };

  int failed = 0, ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !selected.count(name)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    ++ran;
    failed += !v.pass;
    emit(fmt::format("{} {:<20} {}  [{:.1f} s]", v.pass ? "PASS" : "FAIL", name, v.detail, seconds_since(t0)));
  }
  emit(fmt::format("{} of {} criteria passed", ran - failed, ran));
  return failed == 0 ? 0 : 1;
}
