#pragma once

// Training-data pipeline: build a fixed dataset of (prompt, batch) tuples by
// running the meta-loop repeatedly; score candidate prompts by replaying a
// tuple's exact task batch under a frozen actor; normalize rewards into
// group-relative advantages; export scored groups for an external trainer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ictforge/actors.hpp"
#include "ictforge/common.hpp"
#include "ictforge/core.hpp"
#include "ictforge/ict.hpp"
#include "ictforge/metaenv.hpp"
#include "ictforge/reflectors.hpp"

namespace ictforge::traindata {

// -------------------------------------------------------------------------
// Dataset tuples
// -------------------------------------------------------------------------

struct DatasetTuple {
  std::string loop_id;
  unsigned turn_index = 0;             // i in 1..N
  core::SystemPrompt sp;               // sp_i
  core::MetaObservation obs;           // obs_i, collected under sp_i
  std::vector<core::Task> batch_tasks; // the k tasks of turn i

  bool operator==(const DatasetTuple&) const = default;
};

inline void validate(const DatasetTuple& tuple) {
  if (tuple.obs.produced_under != tuple.sp.prompt_id)
    throw ContractViolation("dataset tuple: obs was not produced under its prompt");
  if (tuple.batch_tasks != tuple.obs.batch_tasks)
    throw ContractViolation("dataset tuple: batch_tasks must mirror obs.batch_tasks");
}

inline nlohmann::json tuple_to_json(const DatasetTuple& tuple) {
  nlohmann::json j;
  j["schema_version"] = core::kSchemaVersion;
  j["loop_id"] = tuple.loop_id;
  j["turn"] = tuple.turn_index;
  j["prompt"] = tuple.sp;
  j["observation"] = tuple.obs;
  j["tasks"] = tuple.batch_tasks;
  return j;
}

inline DatasetTuple tuple_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != core::kSchemaVersion)
    throw SchemaVersionError(core::kSchemaVersion, version);
  DatasetTuple tuple;
  tuple.loop_id = j.at("loop_id").get<std::string>();
  tuple.turn_index = j.at("turn").get<unsigned>();
  tuple.sp = j.at("prompt").get<core::SystemPrompt>();
  tuple.obs = j.at("observation").get<core::MetaObservation>();
  tuple.batch_tasks = j.at("tasks").get<std::vector<core::Task>>();
  validate(tuple);
  return tuple;
}

// -------------------------------------------------------------------------
// Dataset creation: r independent meta-loop runs of N turns each
// -------------------------------------------------------------------------

struct DatasetConfig {
  unsigned loops = 1;                  // r
  unsigned turns = 1;                  // N
  metaenv::MetaEnvConfig meta;         // template; master_seed is re-derived per loop
  std::string initial_prompt;
  std::string dataset_id = "dataset";
  nlohmann::json config_snapshot;
};

struct DatasetBuildReport {
  std::vector<DatasetTuple> tuples;
  unsigned failed_loops = 0;
  std::vector<std::string> loop_errors;
};

/// Factory so each loop can get a fresh reflector (rule reflectors are
/// stateless, but LLM reflectors may hold per-loop context).
using ReflectorFactory = std::function<std::unique_ptr<reflectors::Reflector>()>;

inline DatasetBuildReport build_dataset(const DatasetConfig& cfg,
                                        const ReflectorFactory& make_reflector) {
  if (cfg.loops == 0) throw ConfigError("dataset: loops must be >= 1");
  if (cfg.turns == 0) throw ConfigError("dataset: turns must be >= 1");
  for (const envkit::FamilyPtr& f : cfg.meta.families) {
    if (!f->replayable())
      throw ConfigError("dataset: family " + f->family_id() +
                        " does not support seeded replay; Eq.-4 scoring would be meaningless");
  }

  DatasetBuildReport report;
  for (unsigned loop = 0; loop < cfg.loops; ++loop) {
    ict::ICTConfig run_cfg;
    run_cfg.meta = cfg.meta;
    run_cfg.meta.master_seed = stream_draw(cfg.meta.master_seed, loop);
    run_cfg.turns = cfg.turns;
    run_cfg.initial_prompt = cfg.initial_prompt;
    run_cfg.run_id = cfg.dataset_id + "/loop-" + std::to_string(loop);
    run_cfg.config_snapshot = cfg.config_snapshot;
    try {
      std::unique_ptr<reflectors::Reflector> reflector = make_reflector();
      const core::ICTRunRecord record = ict::run_ict(run_cfg, *reflector);
      for (const core::TurnEntry& t : record.turns) {
        if (t.turn_index == 0) continue;  // (sp_0, obs_0) stays out of the dataset
        DatasetTuple tuple;
        tuple.loop_id = run_cfg.run_id;
        tuple.turn_index = t.turn_index;
        tuple.sp = t.prompt;
        tuple.obs = t.obs;
        tuple.batch_tasks = t.obs.batch_tasks;
        validate(tuple);
        report.tuples.push_back(std::move(tuple));
      }
    } catch (const std::exception& e) {
      ++report.failed_loops;
      report.loop_errors.push_back(run_cfg.run_id + ": " + e.what());
    }
  }
  return report;
}

/// One tuple per line; every line also carries the effective config.
inline std::size_t write_dataset_jsonl(const std::vector<DatasetTuple>& tuples,
                                       const std::string& path,
                                       const nlohmann::json& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const DatasetTuple& tuple : tuples) {
    nlohmann::json line = tuple_to_json(tuple);
    line["config"] = config;
    out << line.dump() << "\n";
  }
  return tuples.size();
}

inline std::vector<DatasetTuple> read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  std::vector<DatasetTuple> tuples;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    tuples.push_back(tuple_from_json(nlohmann::json::parse(line)));
  }
  return tuples;
}

// -------------------------------------------------------------------------
// Replay scoring: mean reward over a tuple's exact task batch
// -------------------------------------------------------------------------

struct ReplayScore {
  double mean_reward = 0.0;        // (1/k) * sum of per-task rewards
  std::vector<double> per_task;
  std::vector<bool> task_failed;   // infrastructure failure markers
};

/// Re-run the tuple's batch under `candidate` with the frozen actor. The
/// actor configuration is taken by value and never mutated.
inline ReplayScore replay_score(const core::SystemPrompt& candidate,
                                const DatasetTuple& tuple,
                                const actors::ActorConfig& actor,
                                const std::vector<envkit::FamilyPtr>& families,
                                unsigned max_parallel = 1,
                                gateway::ChatBackend* backend = nullptr) {
  validate(tuple);
  const std::vector<core::Trajectory> trajs = metaenv::run_batch(
      tuple.batch_tasks, candidate, actor, families, max_parallel, backend);

  ReplayScore score;
  score.per_task.reserve(trajs.size());
  for (const core::Trajectory& t : trajs) {
    score.per_task.push_back(t.error.has_value() ? 0.0 : t.total_reward);
    score.task_failed.push_back(t.error.has_value());
  }
  const double sum = std::accumulate(score.per_task.begin(), score.per_task.end(), 0.0);
  score.mean_reward = sum / static_cast<double>(score.per_task.size());
  return score;
}

// -------------------------------------------------------------------------
// Group-relative advantages
// -------------------------------------------------------------------------

/// A_g = (r_g - mean) / std_pop, with the degenerate all-equal group
/// (including all-zero) mapping to exact zeros.
inline std::vector<double> group_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2)
    throw ConfigError("group_advantages: needs a group of at least 2");

  const bool all_equal =
      std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
  if (all_equal) return std::vector<double>(rewards.size(), 0.0);

  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double std_pop = std::sqrt(var);
  if (std_pop == 0.0) return std::vector<double>(rewards.size(), 0.0);

  std::vector<double> advantages;
  advantages.reserve(rewards.size());
  for (double r : rewards) advantages.push_back((r - mean) / std_pop);
  return advantages;
}

// -------------------------------------------------------------------------
// Candidate groups
// -------------------------------------------------------------------------

struct CandidateScoreGroup {
  std::string loop_id;                        // source tuple reference
  unsigned turn_index = 0;
  reflectors::ReflectionRequest request;      // context the candidates answered
  std::vector<std::string> responses;         // raw reflector outputs, unparsed
  std::vector<core::SystemPrompt> candidates;
  std::vector<std::vector<double>> rewards;   // G x k
  std::vector<double> mean_rewards;           // Eq. 4 row means
  std::vector<double> advantages;
};

/// Sample G candidates from the reflector for the tuple's context, replay
/// each against the tuple's batch, and normalize the means into advantages.
inline CandidateScoreGroup score_group(const DatasetTuple& tuple,
                                       reflectors::Reflector& reflector, unsigned group_size,
                                       const actors::ActorConfig& actor,
                                       const std::vector<envkit::FamilyPtr>& families,
                                       unsigned max_parallel = 1,
                                       gateway::ChatBackend* backend = nullptr) {
  if (group_size < 2) throw ConfigError("score_group: group size must be >= 2");
  validate(tuple);

  CandidateScoreGroup group;
  group.loop_id = tuple.loop_id;
  group.turn_index = tuple.turn_index;
  group.request = reflectors::render_reflection_request(tuple.sp, tuple.obs);

  for (unsigned g = 0; g < group_size; ++g) {
    const reflectors::Reflection refl = reflector.reflect(tuple.sp, tuple.obs);
    const core::SystemPrompt candidate = core::make_system_prompt(
        refl.improved_prompt.text, reflector.origin(), tuple.turn_index,
        tuple.loop_id + "/g" + std::to_string(g));
    const ReplayScore score =
        replay_score(candidate, tuple, actor, families, max_parallel, backend);
    group.responses.push_back(refl.raw_response);
    group.candidates.push_back(candidate);
    group.rewards.push_back(score.per_task);
    group.mean_rewards.push_back(score.mean_reward);
  }
  group.advantages = group_advantages(group.mean_rewards);
  return group;
}

// -------------------------------------------------------------------------
// Export for the external trainer
// -------------------------------------------------------------------------

inline nlohmann::json group_to_json(const CandidateScoreGroup& group) {
  nlohmann::json j;
  j["schema_version"] = core::kSchemaVersion;
  j["source"] = {{"loop_id", group.loop_id}, {"turn", group.turn_index}};
  j["request"] = {{"system", group.request.system_text}, {"user", group.request.user_text}};
  j["candidates"] = nlohmann::json::array();
  for (std::size_t g = 0; g < group.candidates.size(); ++g) {
    j["candidates"].push_back({{"response_text", group.responses[g]},
                               {"per_task_rewards", group.rewards[g]},
                               {"mean_reward", group.mean_rewards[g]},
                               {"advantage", group.advantages[g]}});
  }
  return j;
}

inline CandidateScoreGroup group_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != core::kSchemaVersion)
    throw SchemaVersionError(core::kSchemaVersion, version);
  CandidateScoreGroup group;
  group.loop_id = j.at("source").at("loop_id").get<std::string>();
  group.turn_index = j.at("source").at("turn").get<unsigned>();
  group.request.system_text = j.at("request").at("system").get<std::string>();
  group.request.user_text = j.at("request").at("user").get<std::string>();
  for (const nlohmann::json& c : j.at("candidates")) {
    group.responses.push_back(c.at("response_text").get<std::string>());
    group.rewards.push_back(c.at("per_task_rewards").get<std::vector<double>>());
    group.mean_rewards.push_back(c.at("mean_reward").get<double>());
    group.advantages.push_back(c.at("advantage").get<double>());
  }
  return group;
}

/// One line per group. The config snapshot rides along on every line so the
/// trainer can recover hyperparameter provenance.
inline std::size_t export_training_records(const std::vector<CandidateScoreGroup>& groups,
                                           const std::string& path,
                                           const nlohmann::json& config) {
  if (groups.empty())
    throw ConfigError("export_training_records: at least one group is required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  for (const CandidateScoreGroup& group : groups) {
    nlohmann::json line = group_to_json(group);
    line["config"] = config;
    out << line.dump() << "\n";
  }
  return groups.size();
}

inline std::vector<CandidateScoreGroup> read_training_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  std::vector<CandidateScoreGroup> groups;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    groups.push_back(group_from_json(nlohmann::json::parse(line)));
  }
  return groups;
}

}  // namespace ictforge::traindata
