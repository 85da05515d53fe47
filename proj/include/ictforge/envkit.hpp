#pragma once

// Environment abstraction: episodic single-owner environments spawned from
// shared, read-only task families. Families own the seeded task generator,
// the train/validation split ranges, and the curated action vocabulary.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ictforge/common.hpp"
#include "ictforge/core.hpp"

namespace ictforge::envkit {

// Task identity and split vocabulary come from the core schema.
using core::Split;
using core::Task;

/// Standard episodic step result. truncated implies done.
struct StepOutcome {
  std::string observation;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
};

inline constexpr unsigned kDefaultStepLimit = 25;
inline constexpr unsigned kValidationSeedCount = 32;

/// Half-open seed interval [lo, hi).
struct SeedRange {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
  bool contains(std::uint64_t seed) const { return seed >= lo && seed < hi; }
  std::uint64_t size() const { return hi - lo; }
};

/// One live episode. Single-owner, single-threaded; no step is accepted after
/// the episode reaches a terminal state.
class Environment {
 public:
  virtual ~Environment() = default;

  const Task& task() const { return task_; }
  unsigned step_count() const { return step_count_; }
  unsigned step_limit() const { return step_limit_; }
  bool terminal() const { return terminal_; }

  StepOutcome step(const std::string& action) {
    if (terminal_) throw ContractViolation("env: step after terminal");
    StepOutcome outcome = apply(action);
    ++step_count_;
    if (!outcome.done && step_count_ >= step_limit_) {
      outcome.truncated = true;
      outcome.done = true;
    }
    if (outcome.truncated) outcome.done = true;
    terminal_ = outcome.done;
    return outcome;
  }

  virtual std::vector<std::string> available_actions() const = 0;

  /// Deep copy of the live episode; used by search-based tooling.
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Compact encoding of the mutable state, for deduplication and debugging.
  virtual std::string state_signature() const = 0;

 protected:
  Environment(Task task, unsigned step_limit)
      : task_(std::move(task)), step_limit_(step_limit) {}
  Environment(const Environment&) = default;

  /// Family transition; the base class handles step accounting and the limit.
  virtual StepOutcome apply(const std::string& action) = 0;

 private:
  Task task_;
  unsigned step_limit_ = kDefaultStepLimit;
  unsigned step_count_ = 0;
  bool terminal_ = false;
};

struct ResetResult {
  std::unique_ptr<Environment> env;
  std::string observation;
};

enum class MetaSplit { meta_train, meta_test };

/// A parameterized generator of similar task instances. Stateless and safe to
/// share across concurrent episode spawns.
class TaskFamily {
 public:
  virtual ~TaskFamily() = default;

  virtual const std::string& family_id() const = 0;
  virtual std::string description() const = 0;
  virtual double success_threshold() const { return 1.0; }
  virtual std::vector<std::string> curated_actions() const = 0;

  /// Which side of the partition-by-type this family belongs to.
  virtual MetaSplit meta_split() const = 0;

  /// Grid-style families prepend "Task: play {family}" to the actor's user
  /// message; house-style families do not.
  virtual bool grid_style() const = 0;

  /// Whether a recorded task can be re-instantiated to replay its episode.
  virtual bool replayable() const { return true; }

  virtual SeedRange seed_range(Split split) const {
    return split == Split::train ? SeedRange{0, 1'000'000}
                                 : SeedRange{1'000'000, 1'000'000 + kValidationSeedCount};
  }

  /// Deterministic instantiation; rejects seeds outside the split's range.
  Task make_task(std::uint64_t seed, Split split) const {
    const SeedRange range = seed_range(split);
    if (!range.contains(seed))
      throw SeedRangeError(family_id() + ": seed " + std::to_string(seed) +
                           " outside " + to_string(split) + " range [" +
                           std::to_string(range.lo) + ", " + std::to_string(range.hi) + ")");
    Task task;
    task.family_id = family_id();
    task.instance_seed = seed;
    task.split = split;
    task.params = generate_params(seed);
    return task;
  }

  /// The fixed held-out set: every validation-range seed, in seed order.
  std::vector<Task> validation_tasks() const {
    const SeedRange range = seed_range(Split::validation);
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(range.size()));
    for (std::uint64_t s = range.lo; s < range.hi; ++s)
      tasks.push_back(make_task(s, Split::validation));
    return tasks;
  }

  /// Start an episode. The task must belong to this family.
  virtual ResetResult reset(const Task& task, unsigned step_limit = kDefaultStepLimit) const = 0;

 protected:
  void require_own_task(const Task& task) const {
    if (task.family_id != family_id())
      throw ContractViolation("task family mismatch: env family " + family_id() +
                              ", task family " + task.family_id);
  }

  /// Pure map seed -> family-specific params.
  virtual std::map<std::string, std::string> generate_params(std::uint64_t seed) const = 0;
};

using FamilyPtr = std::shared_ptr<const TaskFamily>;

/// Family-set prefix of an id like "verbgrid-read".
inline std::string family_set_of(const std::string& family_id) {
  const std::size_t dash = family_id.find('-');
  return dash == std::string::npos ? family_id : family_id.substr(0, dash);
}

}  // namespace ictforge::envkit
