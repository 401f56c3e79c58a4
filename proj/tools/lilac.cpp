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

// lilac: dataset generation, labeling, training, evaluation and serving.

#include "lilac/util/http.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "lilac/baselines/imitation.hpp"
#include "lilac/baselines/lila.hpp"
#include "lilac/data/train.hpp"
#include "lilac/eval/rollout.hpp"
#include "lilac/service/server.hpp"
#include "lilac/sim/scripted.hpp"

namespace fs = std::filesystem;
using namespace lilac;

namespace {

struct LanguageOptions {
  std::string backend = "heuristic";
  std::string cache;
  std::string embedding_url;
};

void add_language_options(CLI::App* cmd, LanguageOptions& o) {
  cmd->add_option("--backend", o.backend, "gating backend: heuristic, cache or llm-service")
      ->check(CLI::IsMember({"heuristic", "cache", "llm-service"}));
  cmd->add_option("--cache", o.cache, "alpha label cache file (created if missing)");
  cmd->add_option("--embedding-url", o.embedding_url,
                  "sentence-embedding service, e.g. http://127.0.0.1:8081/embed; falls back to the hashed embedder");
}

std::shared_ptr<language::GatingOracle> make_oracle(const LanguageOptions& o) {
  const auto backend = language::parse_gating_backend(o.backend);
  std::shared_ptr<language::AlphaCache> cache;
  if (!o.cache.empty()) cache = std::make_shared<language::AlphaCache>(o.cache);
  if (backend == language::GatingBackend::kCache && !cache) throw CLI::ValidationError("--backend cache needs --cache");
  std::optional<language::LlmServiceConfig> llm;
  if (backend == language::GatingBackend::kLlmService) {
    llm = language::LlmServiceConfig::from_environment(fs::path(LILAC_SOURCE_DIR) / "data/gating_prompt_v1.txt");
  }
  return std::make_shared<language::GatingOracle>(backend, cache, llm);
}

std::shared_ptr<const language::Embedder> make_embedder(const LanguageOptions& o) {
  auto local = std::make_shared<language::HashedNgramEmbedder>();
  if (o.embedding_url.empty()) return local;
  const auto scheme = o.embedding_url.find("://");
  const auto slash = o.embedding_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash == std::string::npos) return std::make_shared<language::ServiceEmbedder>(o.embedding_url, "/", local);
  return std::make_shared<language::ServiceEmbedder>(o.embedding_url.substr(0, slash), o.embedding_url.substr(slash),
                                                     local);
}

sim::TaskSpec resolve_scene(const std::string& scene) {
  for (auto id : sim::kAllTasks) {
    if (scene == sim::to_string(id)) return sim::builtin_task(id);
  }
  return sim::load_scene(scene);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string out = "data/demos.jsonl";
  std::vector<std::string> tasks;
  int demos = 10;
  int corrections = 2;
  std::uint64_t seed = 0;
};

int gen_data(const GenDataArgs& a) {
  sim::DatasetSpec spec;
  spec.demos_per_task = a.demos;
  spec.corrections_per_template = a.corrections;
  spec.seed = a.seed;
  data::Dataset d = sim::generate_dataset(spec);
  if (!a.tasks.empty()) {
    const std::set<std::string> keep(a.tasks.begin(), a.tasks.end());
    std::erase_if(d, [&](const data::Trajectory& t) { return !keep.count(t.task); });
  }
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  data::save_dataset(d, a.out);
  std::cout << fmt::format("wrote {} trajectories ({} steps) to {}  hash {}\n", d.size(), data::step_count(d), a.out,
                           data::dataset_hash(d));
  return 0;
}

// ---- label-alphas -----------------------------------------------------------

struct LabelArgs {
  std::string in = "data/demos.jsonl";
  std::string out;
  LanguageOptions lang;
};

int label_alphas(const LabelArgs& a) {
  data::Dataset d = data::load_dataset(a.in);
  auto oracle = make_oracle(a.lang);
  data::preprocess_alphas(d, *oracle);
  const std::string out = a.out.empty() ? a.in : a.out;
  data::save_dataset(d, out);
  std::map<int, int> counts;
  for (const auto& e : data::exemplar_table(d)) ++counts[e.at("alpha").get<int>()];
  std::cout << fmt::format("labeled {} trajectories with {} ({} oracle calls, {} external, {} fallbacks)\n", d.size(),
                           a.lang.backend, oracle->calls(), oracle->external_calls(), oracle->fallbacks());
  std::cout << fmt::format("distinct utterances: {} with alpha=1, {} with alpha=0\n", counts[1], counts[0]);
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data = "data/demos.jsonl";
  std::string config;
  std::string policy = "lilac";
  std::string out;
  std::uint64_t init_seed = 0;
  std::string curves;
  LanguageOptions lang;
};

int train(const TrainArgs& a) {
  data::TrainConfig tc;
  if (!a.config.empty()) tc = nlohmann::json::parse(read_file(a.config)).get<data::TrainConfig>();
  const data::Dataset d = data::load_dataset(a.data);
  const auto embedder = make_embedder(a.lang);
  const auto kind = eval::parse_policy_kind(a.policy);

  std::unique_ptr<data::Learner> learner;
  if (kind == eval::PolicyKind::kImitation) {
    baselines::ImitationConfig ic;
    ic.hidden_dim = tc.hidden_dim;
    learner = std::make_unique<baselines::ImitationLearner>(d, ic, a.init_seed, *embedder);
  } else {
    model::LilacConfig mc;
    mc.hidden_dim = tc.hidden_dim;
    learner = std::make_unique<data::LilacLearner>(d, mc, a.init_seed, *embedder,
                                                   kind == eval::PolicyKind::kLila);
  }
  const auto t0 = std::chrono::steady_clock::now();
  data::TrainResult r = data::train(d, tc, *learner);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.best.header["embedder"] = embedder->name();
  r.best.header["init_seed"] = a.init_seed;
  const std::string out = a.out.empty() ? "checkpoints/" + a.policy + ".ckpt" : a.out;
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  nn::save_checkpoint(r.best, out);
  if (!a.curves.empty()) {
    std::ofstream c(a.curves);
    c << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
      c << fmt::format("{},{:.9e},{:.9e}\n", e + 1, r.train_loss[e], r.val_loss[e]);
    }
  }
  std::cout << fmt::format("{}: {} epochs in {:.1f} s; train loss {:.4e} -> {:.4e} (ratio {:.3f}); best val {:.4e} at "
                           "epoch {}\nwrote {}\n",
                           a.policy, tc.epochs, secs, r.train_loss.front(), r.train_loss.back(),
                           r.train_loss.back() / r.train_loss.front(), r.best_val_loss, r.best_epoch + 1, out);
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string policy;
  int seeds = 20;
  std::vector<std::string> tasks;
  int max_ticks = 600;
  bool no_corrections = false;
  std::string out;
  std::string log_dir;
  LanguageOptions lang;
};

int evaluate(const EvalArgs& a) {
  std::vector<nn::Checkpoint> ckpts;
  for (const auto& path : a.checkpoints) ckpts.push_back(nn::load_checkpoint(path));
  std::set<std::string> hashes;
  for (const auto& c : ckpts) hashes.insert(c.header.value("dataset_hash", std::string("<none>")));
  if (hashes.size() > 1) {
    throw std::runtime_error("checkpoints were trained on different datasets; compare like with like");
  }
  if (!a.policy.empty()) {
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
      if (ckpts[i].header.value("policy", std::string()) != a.policy) {
        throw std::runtime_error(a.checkpoints[i] + " holds a " + ckpts[i].header.value("policy", std::string("?")) +
                                 " policy, not " + a.policy);
      }
    }
  }
  std::vector<sim::TaskSpec> tasks;
  if (a.tasks.empty()) {
    for (auto id : sim::kAllTasks) tasks.push_back(sim::builtin_task(id));
  } else {
    for (const auto& t : a.tasks) tasks.push_back(resolve_scene(t));
  }
  eval::RolloutOptions ro;
  ro.max_ticks = a.max_ticks;
  ro.corrections = !a.no_corrections;
  const auto embedder = make_embedder(a.lang);
  auto oracle = make_oracle(a.lang);

  nlohmann::json report = {{"seeds", a.seeds}, {"dataset_hash", *hashes.begin()}, {"policies", nlohmann::json::object()}};
  std::cout << fmt::format("{:<10} {:<13} {:>8} {:>8} {:>11} {:>10}\n", "policy", "task", "reached", "grasped",
                           "transferred", "completed");
  for (const auto& c : ckpts) {
    const std::string name = c.header.value("policy", std::string("?"));
    eval::StageRates overall;
    nlohmann::json per_task = nlohmann::json::object();
    for (const auto& task : tasks) {
      const eval::Policy p = eval::make_policy(c, embedder, oracle, task.object_order());
      eval::StageRates rates;
      for (int s = 0; s < a.seeds; ++s) {
        const auto r = eval::scripted_user_rollout(p, task, static_cast<std::uint64_t>(s), ro);
        rates.add(r.status);
        overall.add(r.status);
        if (!a.log_dir.empty()) {
          fs::create_directories(a.log_dir);
          r.log.save((fs::path(a.log_dir) / fmt::format("{}-{}-{}.jsonl", name, sim::to_string(task.id), s)).string());
        }
      }
      const auto m = rates.mean();
      per_task[sim::to_string(task.id)] = eval::to_json(m);
      std::cout << fmt::format("{:<10} {:<13} {:>8.2f} {:>8.2f} {:>11.2f} {:>10.2f}\n", name,
                               sim::to_string(task.id), m.reached, m.grasped, m.transferred, m.completed);
    }
    const auto m = overall.mean();
    std::cout << fmt::format("{:<10} {:<13} {:>8.2f} {:>8.2f} {:>11.2f} {:>10.2f}\n", name, "mean", m.reached,
                             m.grasped, m.transferred, m.completed);
    report["policies"][name] = {{"tasks", per_task}, {"mean", eval::to_json(m)}};
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    out << report.dump(2) << '\n';
  }
  return 0;
}

// ---- serve / replay ---------------------------------------------------------

struct ServeArgs {
  std::string checkpoint;
  std::string scene = "insert-book";
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  std::string record_dir;
  std::string static_dir;
  std::string instruction;
  std::uint64_t seed = 0;
  long max_ticks = 0;
  LanguageOptions lang;
};

int serve(const ServeArgs& a) {
  const nn::Checkpoint c = nn::load_checkpoint(a.checkpoint);
  const sim::TaskSpec task = resolve_scene(a.scene);
  const eval::Policy policy = eval::make_policy(c, make_embedder(a.lang), make_oracle(a.lang), task.object_order());
  if (policy.kind == eval::PolicyKind::kImitation) {
    throw std::runtime_error("serve needs a lila or lilac checkpoint; imitation has no latent control");
  }
  service::LiveOptions lo;
  lo.seed = a.seed;
  lo.max_ticks = a.max_ticks;
  if (!a.instruction.empty()) lo.instruction = a.instruction;
  if (!a.record_dir.empty()) lo.record_dir = a.record_dir;
  service::ServerConfig cfg;
  cfg.address = a.address;
  cfg.port = a.port;
  if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;
  service::Server server(cfg, [&](const std::string& id) {
    return std::make_unique<service::LiveSession>(policy, task, id, lo);
  });
  spdlog::info("serving {} ({}) on ws://{}:{}/", sim::to_string(task.id), eval::to_string(policy.kind), a.address,
               server.port());
  server.run();
  return 0;
}

struct ReplayArgs {
  std::string log;
  bool verify = false;
  std::string address = "127.0.0.1";
  unsigned short port = 8766;
  double speed = 1.0;
};

int replay(const ReplayArgs& a) {
  const std::string text = read_file(a.log);
  if (a.verify) {
    const auto r = session::replay(session::EpisodeLog::parse(text));
    std::cout << fmt::format("{} ticks; states match: {}; final state matches: {}\n", r.ticks, r.states_match,
                             r.final_matches);
    if (!r.states_match) std::cout << fmt::format("first mismatch at tick {}\n", r.first_mismatch);
    return r.states_match && r.final_matches ? 0 : 1;
  }
  if (!(a.speed > 0.0)) throw CLI::ValidationError("--speed must be positive");
  service::ReplaySource probe(text, "probe");  // fail fast on a corrupt log
  if (probe.truncated()) spdlog::warn("{} is truncated; replay will end early", a.log);
  service::ServerConfig cfg;
  cfg.address = a.address;
  cfg.port = a.port;
  cfg.tick_hz = 10.0 * a.speed;
  service::Server server(cfg, [&](const std::string& id) { return std::make_unique<service::ReplaySource>(text, id); });
  spdlog::info("replaying {} at {}x on ws://{}:{}/", a.log, a.speed, a.address, server.port());
  server.run();
  return 0;
}

int write_scenes(const std::string& dir) {
  fs::create_directories(dir);
  for (auto id : sim::kAllTasks) {
    const auto path = fs::path(dir) / (std::string(sim::to_string(id)) + ".json");
    sim::save_scene(sim::builtin_task(id), path);
    std::cout << path.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LILAC: language-conditioned shared-autonomy control"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate scripted demonstrations and correction segments");
  gen_cmd->add_option("--out", gen.out, "dataset file (JSON lines)");
  gen_cmd->add_option("--task", gen.tasks, "keep only these tasks (repeatable; default all)");
  gen_cmd->add_option("--demos", gen.demos, "full-task demos per task")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--corrections", gen.corrections, "segments per correction template")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed, "generation seed");

  LabelArgs label;
  auto* label_cmd = app.add_subcommand("label-alphas", "label every utterance with its gating alpha");
  label_cmd->add_option("--in", label.in, "dataset file");
  label_cmd->add_option("--out", label.out, "output file (default: overwrite --in)");
  add_language_options(label_cmd, label.lang);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a policy on a labeled dataset");
  train_cmd->add_option("--data", tr.data, "labeled dataset file");
  train_cmd->add_option("--config", tr.config, "JSON file with TrainConfig overrides");
  train_cmd->add_option("--policy", tr.policy, "lilac, lila or imitation")
      ->check(CLI::IsMember({"lilac", "lila", "imitation"}));
  train_cmd->add_option("--out", tr.out, "checkpoint path (default checkpoints/<policy>.ckpt)");
  train_cmd->add_option("--init-seed", tr.init_seed, "weight initialization seed");
  train_cmd->add_option("--curves", tr.curves, "write per-epoch losses as CSV");
  add_language_options(train_cmd, tr.lang);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "scripted-user evaluation of one or more checkpoints");
  eval_cmd->add_option("--checkpoint", ev.checkpoints, "checkpoint file (repeatable)")->required();
  eval_cmd->add_option("--policy", ev.policy, "require every checkpoint to hold this policy");
  eval_cmd->add_option("--seeds", ev.seeds, "episodes per task")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--task", ev.tasks, "task name or scene file (repeatable; default all)");
  eval_cmd->add_option("--max-ticks", ev.max_ticks, "episode length limit")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--no-corrections", ev.no_corrections, "scripted user never pushes corrections");
  eval_cmd->add_option("--out", ev.out, "write the results as JSON");
  eval_cmd->add_option("--log-dir", ev.log_dir, "save every episode log here");
  add_language_options(eval_cmd, ev.lang);

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "run the 10 Hz WebSocket control service");
  serve_cmd->add_option("--checkpoint", sv.checkpoint, "lila or lilac checkpoint")->required();
  serve_cmd->add_option("--scene", sv.scene, "task name or scene file");
  serve_cmd->add_option("--address", sv.address, "listen address");
  serve_cmd->add_option("--port", sv.port, "listen port (0 picks a free one)");
  serve_cmd->add_option("--record-dir", sv.record_dir, "save each finished episode log here");
  serve_cmd->add_option("--static-dir", sv.static_dir, "serve files from this directory over HTTP");
  serve_cmd->add_option("--instruction", sv.instruction, "base instruction (default: the scene's first)");
  serve_cmd->add_option("--seed", sv.seed, "scene randomization seed");
  serve_cmd->add_option("--max-ticks", sv.max_ticks, "end sessions after this many ticks (0 = no limit)");
  add_language_options(serve_cmd, sv.lang);

  ReplayArgs rp;
  auto* replay_cmd = app.add_subcommand("replay", "verify or re-broadcast a recorded episode");
  replay_cmd->add_option("--log", rp.log, "episode log (JSON lines)")->required();
  replay_cmd->add_flag("--verify", rp.verify, "re-simulate and compare states instead of serving");
  replay_cmd->add_option("--address", rp.address, "listen address");
  replay_cmd->add_option("--port", rp.port, "listen port");
  replay_cmd->add_option("--speed", rp.speed, "playback speed multiplier");

  std::string scene_dir = "scenes";
  auto* scenes_cmd = app.add_subcommand("write-scenes", "write the built-in task scenes as JSON");
  scenes_cmd->add_option("--dir", scene_dir, "output directory");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*label_cmd) return label_alphas(label);
    if (*train_cmd) return train(tr);
    if (*eval_cmd) return evaluate(ev);
    if (*serve_cmd) return serve(sv);
    if (*replay_cmd) return replay(rp);
    if (*scenes_cmd) return write_scenes(scene_dir);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
