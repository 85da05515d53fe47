#pragma once

// Core data model: tasks, trajectories, system prompts, meta-observations and
// run records, plus their canonical text rendering and JSON persistence.
//
// Everything here is a plain value type. Objects are immutable by convention
// once finalized (builders below are the single-writer phase) and can be
// shared freely across rollout workers.

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ictforge/common.hpp"

namespace ictforge::core {

using json = nlohmann::json;

/// Current on-disk schema for run records and datasets.
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class Split { train, validation };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "validation"; }

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  throw ConfigError("unknown split: " + s);
}

/// A seeded instance of a task family. (family_id, instance_seed) uniquely
/// determines the instance; params carry the family-specific expansion so a
/// task can be re-instantiated without the generator.
struct Task {
  std::string family_id;
  std::uint64_t instance_seed = 0;
  Split split = Split::train;
  std::map<std::string, std::string> params;

  bool operator==(const Task&) const = default;
};

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Step {
  std::string observation;                    // what the actor saw before acting
  std::vector<std::string> available_actions; // as offered at emission time
  std::optional<std::string> thought;
  std::string action;
  double step_reward = 0.0;

  bool operator==(const Step&) const = default;
};

struct Trajectory {
  Task task;
  std::vector<Step> steps;
  bool success = false;
  double total_reward = 0.0;
  bool truncated = false;                 // step limit reached
  std::optional<std::string> error;       // infrastructure failure annotation

  bool operator==(const Trajectory&) const = default;
};

/// Success under the family's threshold. Truncated or errored episodes are
/// never successful.
inline bool trajectory_is_success(const Trajectory& traj, double success_threshold = 1.0) {
  return !traj.truncated && !traj.error.has_value() && traj.total_reward >= success_threshold;
}

/// Single-writer assembly of a Trajectory; finalize() seals the value.
class TrajectoryBuilder {
 public:
  explicit TrajectoryBuilder(Task task) { traj_.task = std::move(task); }

  void add_step(Step step) { traj_.steps.push_back(std::move(step)); }

  std::size_t step_count() const { return traj_.steps.size(); }

  Trajectory finalize(bool truncated, double success_threshold = 1.0,
                      std::optional<std::string> error = std::nullopt) {
    traj_.truncated = truncated;
    traj_.error = std::move(error);
    traj_.total_reward = 0.0;
    for (const Step& s : traj_.steps) traj_.total_reward += s.step_reward;
    traj_.success = trajectory_is_success(traj_, success_threshold);
    return traj_;
  }

 private:
  Trajectory traj_;
};

/// Canonical multi-line rendering of one episode: the exact layout embedded
/// in the reflection request. Deterministic for equal inputs; no trailing
/// newline.
inline std::string trajectory_pretty_print(const Trajectory& traj) {
  std::ostringstream out;
  out << "Success: " << (traj.success ? "Yes" : "No") << "\n";
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const Step& s = traj.steps[i];
    out << "\n--- Step " << (i + 1) << " ---\n";
    out << "Observation: " << s.observation << "\n";
    out << "Action: " << s.action << "\n";
  }
  out << "\n";
  if (traj.truncated && !traj.success) out << "Step limit reached.\n";
  out << "Total reward: " << format_reward(traj.total_reward);
  return out.str();
}

// ---------------------------------------------------------------------------
// System prompts
// ---------------------------------------------------------------------------

enum class PromptOrigin { initial, reflector, rule };

inline std::string to_string(PromptOrigin o) {
  switch (o) {
    case PromptOrigin::initial: return "initial";
    case PromptOrigin::reflector: return "reflector";
    case PromptOrigin::rule: return "rule";
  }
  return "initial";
}

inline PromptOrigin prompt_origin_from_string(const std::string& s) {
  if (s == "initial") return PromptOrigin::initial;
  if (s == "reflector") return PromptOrigin::reflector;
  if (s == "rule") return PromptOrigin::rule;
  throw ConfigError("unknown prompt origin: " + s);
}

/// Versioned prompt text with provenance. Text is whitespace-normalized at
/// construction; prompt ids are unique within a run.
struct SystemPrompt {
  std::string text;
  std::string prompt_id;
  PromptOrigin origin = PromptOrigin::initial;
  unsigned turn_index = 0;
  std::string run_id;

  bool operator==(const SystemPrompt&) const = default;
};

inline SystemPrompt make_system_prompt(std::string text, PromptOrigin origin,
                                       unsigned turn_index, std::string run_id,
                                       std::string prompt_id = {}) {
  SystemPrompt sp;
  sp.text = trim(std::move(text));
  sp.origin = origin;
  sp.turn_index = turn_index;
  sp.run_id = std::move(run_id);
  sp.prompt_id = prompt_id.empty() ? sp.run_id + "/sp" + std::to_string(turn_index)
                                   : std::move(prompt_id);
  return sp;
}

// ---------------------------------------------------------------------------
// Meta-observations
// ---------------------------------------------------------------------------

/// Ordered batch of k trajectories with their task references, all collected
/// under one prompt.
struct MetaObservation {
  std::vector<Trajectory> trajectories;
  std::vector<Task> batch_tasks;
  std::string produced_under;  // prompt_id

  std::size_t batch_size() const { return trajectories.size(); }

  bool operator==(const MetaObservation&) const = default;
};

inline MetaObservation make_meta_observation(std::vector<Trajectory> trajectories,
                                             std::vector<Task> batch_tasks,
                                             std::string produced_under) {
  if (trajectories.size() != batch_tasks.size())
    throw ContractViolation("meta-observation: trajectory/task count mismatch");
  for (std::size_t j = 0; j < trajectories.size(); ++j) {
    if (!(trajectories[j].task == batch_tasks[j]))
      throw ContractViolation("meta-observation: trajectories[" + std::to_string(j) +
                              "].task differs from batch_tasks[" + std::to_string(j) + "]");
  }
  MetaObservation obs;
  obs.trajectories = std::move(trajectories);
  obs.batch_tasks = std::move(batch_tasks);
  obs.produced_under = std::move(produced_under);
  return obs;
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

/// One meta-turn. Entry 0 holds the initial prompt and obs_0; its validation
/// fields are present only when the run evaluated the initial prompt for
/// reporting. Entries 1..N are the reflected turns.
struct TurnEntry {
  unsigned turn_index = 0;
  SystemPrompt prompt;
  MetaObservation obs;
  std::optional<double> validation_score;
  std::optional<double> validation_success_rate;

  bool operator==(const TurnEntry&) const = default;
};

struct ICTRunRecord {
  std::string run_id;
  json config;                   // effective config snapshot
  std::vector<TurnEntry> turns;  // contiguous from 0
  std::string best_prompt_id;
  double best_score = 0.0;

  bool operator==(const ICTRunRecord&) const = default;
};

/// Recompute (best_prompt_id, best_score) from the reflected turns with the
/// strict-improvement, earliest-turn-wins rule. The initial prompt never
/// seeds the best score; it is returned only when no turn exceeds zero.
inline std::pair<std::string, double> recompute_best(const ICTRunRecord& record) {
  std::string best_id = record.turns.empty() ? std::string{} : record.turns.front().prompt.prompt_id;
  double best = 0.0;
  for (const TurnEntry& t : record.turns) {
    if (t.turn_index == 0 || !t.validation_score.has_value()) continue;
    if (*t.validation_score > best) {
      best = *t.validation_score;
      best_id = t.prompt.prompt_id;
    }
  }
  return {best_id, best};
}

/// Structural validity: contiguous turn indices and consistent best fields.
inline void validate_record(const ICTRunRecord& record) {
  for (std::size_t i = 0; i < record.turns.size(); ++i) {
    if (record.turns[i].turn_index != i)
      throw ContractViolation("run record: turns not contiguous from 0");
  }
  const auto [best_id, best] = recompute_best(record);
  if (best != record.best_score || best_id != record.best_prompt_id)
    throw ContractViolation("run record: best fields inconsistent with turns");
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline void to_json(json& j, const Task& t) {
  j = json{{"family_id", t.family_id},
           {"instance_seed", t.instance_seed},
           {"split", to_string(t.split)},
           {"params", t.params}};
}

inline void from_json(const json& j, Task& t) {
  j.at("family_id").get_to(t.family_id);
  j.at("instance_seed").get_to(t.instance_seed);
  t.split = split_from_string(j.at("split").get<std::string>());
  j.at("params").get_to(t.params);
}

inline void to_json(json& j, const Step& s) {
  j = json{{"observation", s.observation},
           {"available_actions", s.available_actions},
           {"action", s.action},
           {"step_reward", s.step_reward}};
  j["thought"] = s.thought.has_value() ? json(*s.thought) : json(nullptr);
}

inline void from_json(const json& j, Step& s) {
  j.at("observation").get_to(s.observation);
  j.at("available_actions").get_to(s.available_actions);
  j.at("action").get_to(s.action);
  j.at("step_reward").get_to(s.step_reward);
  if (j.contains("thought") && !j.at("thought").is_null())
    s.thought = j.at("thought").get<std::string>();
  else
    s.thought.reset();
}

inline void to_json(json& j, const Trajectory& t) {
  j = json{{"task", t.task},
           {"steps", t.steps},
           {"success", t.success},
           {"total_reward", t.total_reward},
           {"truncated", t.truncated}};
  j["error"] = t.error.has_value() ? json(*t.error) : json(nullptr);
}

inline void from_json(const json& j, Trajectory& t) {
  j.at("task").get_to(t.task);
  j.at("steps").get_to(t.steps);
  j.at("success").get_to(t.success);
  j.at("total_reward").get_to(t.total_reward);
  j.at("truncated").get_to(t.truncated);
  if (j.contains("error") && !j.at("error").is_null())
    t.error = j.at("error").get<std::string>();
  else
    t.error.reset();
}

inline void to_json(json& j, const SystemPrompt& p) {
  j = json{{"text", p.text},
           {"prompt_id", p.prompt_id},
           {"origin", to_string(p.origin)},
           {"turn_index", p.turn_index},
           {"run_id", p.run_id}};
}

inline void from_json(const json& j, SystemPrompt& p) {
  j.at("text").get_to(p.text);
  j.at("prompt_id").get_to(p.prompt_id);
  p.origin = prompt_origin_from_string(j.at("origin").get<std::string>());
  j.at("turn_index").get_to(p.turn_index);
  j.at("run_id").get_to(p.run_id);
}

inline void to_json(json& j, const MetaObservation& o) {
  j = json{{"trajectories", o.trajectories},
           {"batch_tasks", o.batch_tasks},
           {"produced_under", o.produced_under}};
}

inline void from_json(const json& j, MetaObservation& o) {
  j.at("trajectories").get_to(o.trajectories);
  j.at("batch_tasks").get_to(o.batch_tasks);
  j.at("produced_under").get_to(o.produced_under);
}

inline void to_json(json& j, const TurnEntry& t) {
  j = json{{"turn", t.turn_index}, {"prompt", t.prompt}, {"observation", t.obs}};
  j["validation_score"] =
      t.validation_score.has_value() ? json(*t.validation_score) : json(nullptr);
  j["validation_success_rate"] =
      t.validation_success_rate.has_value() ? json(*t.validation_success_rate) : json(nullptr);
}

inline void from_json(const json& j, TurnEntry& t) {
  j.at("turn").get_to(t.turn_index);
  j.at("prompt").get_to(t.prompt);
  j.at("observation").get_to(t.obs);
  t.validation_score.reset();
  t.validation_success_rate.reset();
  if (j.contains("validation_score") && !j.at("validation_score").is_null())
    t.validation_score = j.at("validation_score").get<double>();
  if (j.contains("validation_success_rate") && !j.at("validation_success_rate").is_null())
    t.validation_success_rate = j.at("validation_success_rate").get<double>();
}

/// Full run-record document, including the schema version gate.
inline json record_to_json(const ICTRunRecord& record) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["run_id"] = record.run_id;
  j["config"] = record.config;
  j["turns"] = record.turns;
  j["best_prompt_id"] = record.best_prompt_id;
  j["best_score"] = record.best_score;
  return j;
}

inline ICTRunRecord record_from_json(const json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion) throw SchemaVersionError(kSchemaVersion, version);
  ICTRunRecord record;
  j.at("run_id").get_to(record.run_id);
  record.config = j.at("config");
  j.at("turns").get_to(record.turns);
  j.at("best_prompt_id").get_to(record.best_prompt_id);
  j.at("best_score").get_to(record.best_score);
  return record;
}

/// Serialize-then-deserialize; used to check persistence is lossless.
inline ICTRunRecord record_round_trip(const ICTRunRecord& record) {
  return record_from_json(json::parse(record_to_json(record).dump()));
}

/// The deterministic region of a persisted record: volatile fields (wall-clock
/// stamps, timing) removed, keys emitted in sorted order. Two runs with equal
/// config and deterministic components produce byte-identical regions.
inline std::string run_record_canonical(json doc) {
  doc.erase("generated_at");
  if (doc.contains("info")) doc.at("info").erase("elapsed_ms");
  return doc.dump(2);
}

}  // namespace ictforge::core
