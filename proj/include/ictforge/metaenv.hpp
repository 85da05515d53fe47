#pragma once

// The meta-environment: actions are system prompts, observations are rollout
// batches. meta_reset collects the first batch under the starting prompt;
// each meta_step draws a fresh, never-reused batch of train tasks and rolls
// them out under the given prompt; evaluate_on_validation scores a prompt on
// the fixed held-out task list.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ictforge/actors.hpp"
#include "ictforge/common.hpp"
#include "ictforge/core.hpp"
#include "ictforge/envkit.hpp"
#include "ictforge/gateway.hpp"

namespace ictforge::metaenv {

struct MetaEnvConfig {
  std::vector<envkit::FamilyPtr> families;   // batch tasks are drawn from these
  unsigned k = 3;                            // batch size
  std::vector<core::Task> validation_tasks;  // fixed, ordered, reused every call
  actors::ActorConfig actor;
  std::uint64_t master_seed = 0;
  unsigned max_parallel = 1;
  gateway::ChatBackend* backend = nullptr;   // required for LLM actors
};

inline void validate(const MetaEnvConfig& cfg) {
  if (cfg.families.empty()) throw ConfigError("metaenv: at least one family is required");
  if (cfg.k == 0) throw ConfigError("metaenv: k must be >= 1");
  if (cfg.max_parallel == 0) throw ConfigError("metaenv: max_parallel must be >= 1");
  actors::validate(cfg.actor);
  for (const core::Task& t : cfg.validation_tasks) {
    for (const envkit::FamilyPtr& f : cfg.families) {
      if (f->family_id() == t.family_id &&
          f->seed_range(core::Split::train).contains(t.instance_seed))
        throw ConfigError("metaenv: validation task " + t.family_id + "#" +
                          std::to_string(t.instance_seed) + " overlaps the train seed range");
    }
  }
}

struct MetaStepResult {
  core::MetaObservation obs;
  double batch_mean_reward = 0.0;  // mean of per-episode reward clipped to [0,1]
  bool done = false;               // horizon control belongs to the caller
  nlohmann::json info;
};

/// Run one episode per task, in task order, with at most `max_parallel`
/// episodes in flight. Any exception inside an episode becomes a failed
/// trajectory carrying the error text, so one bad rollout cannot sink a
/// batch. Output depends only on (tasks, sp, actor), not on the parallelism.
inline std::vector<core::Trajectory> run_batch(const std::vector<core::Task>& tasks,
                                               const core::SystemPrompt& sp,
                                               const actors::ActorConfig& actor,
                                               const std::vector<envkit::FamilyPtr>& families,
                                               unsigned max_parallel = 1,
                                               gateway::ChatBackend* backend = nullptr) {
  if (tasks.empty()) throw ContractViolation("run_batch: tasks must be non-empty");

  const auto resolve = [&](const std::string& id) -> const envkit::TaskFamily& {
    for (const envkit::FamilyPtr& f : families)
      if (f->family_id() == id) return *f;
    throw ConfigError("run_batch: no family registered for task family " + id);
  };

  std::vector<core::Trajectory> out(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= tasks.size()) return;
      try {
        out[j] = actors::run_episode(actor, resolve(tasks[j].family_id), tasks[j], sp, backend);
      } catch (const std::exception& e) {
        core::TrajectoryBuilder failed(tasks[j]);
        out[j] = failed.finalize(false, 1.0, std::string("rollout failed: ") + e.what());
      }
    }
  };

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(max_parallel, tasks.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return out;
}

class MetaEnv {
 public:
  explicit MetaEnv(MetaEnvConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

  const MetaEnvConfig& config() const { return cfg_; }

  /// Every train task issued so far, in issue order (audit surface for the
  /// freshness invariant).
  const std::vector<core::Task>& issued_tasks() const { return issued_; }

  /// Collect obs_0: the first batch, rolled out under the starting prompt.
  std::pair<core::MetaObservation, nlohmann::json> meta_reset(const core::SystemPrompt& sp0) {
    MetaStepResult r = roll(sp0);
    return {std::move(r.obs), std::move(r.info)};
  }

  /// Draw a fresh batch (never reusing a train task within this MetaEnv's
  /// lifetime) and roll it out under `sp`.
  MetaStepResult meta_step(const core::SystemPrompt& sp) {
    if (trim(sp.text).empty()) throw ContractViolation("meta_step: prompt must be non-empty");
    return roll(sp);
  }

  /// Score `sp` on the fixed validation list: (sum of rewards, success rate).
  std::pair<double, double> evaluate_on_validation(const core::SystemPrompt& sp) {
    if (cfg_.validation_tasks.empty())
      throw ConfigError("metaenv: validation task list is empty");
    const std::vector<core::Trajectory> trajs = run_batch(
        cfg_.validation_tasks, sp, cfg_.actor, cfg_.families, cfg_.max_parallel, cfg_.backend);
    double score_sum = 0.0;
    std::size_t successes = 0;
    for (const core::Trajectory& t : trajs) {
      score_sum += t.total_reward;
      if (t.success) ++successes;
    }
    return {score_sum, static_cast<double>(successes) / static_cast<double>(trajs.size())};
  }

 private:
  MetaStepResult roll(const core::SystemPrompt& sp) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<core::Task> batch = sample_batch();
    const std::vector<core::Trajectory> trajs =
        run_batch(batch, sp, cfg_.actor, cfg_.families, cfg_.max_parallel, cfg_.backend);

    MetaStepResult result;
    double mean = 0.0;
    result.info["per_task_rewards"] = nlohmann::json::array();
    for (const core::Trajectory& t : trajs) {
      result.info["per_task_rewards"].push_back(t.total_reward);
      mean += std::clamp(t.total_reward, 0.0, 1.0);
    }
    result.batch_mean_reward = mean / static_cast<double>(trajs.size());
    result.obs = core::make_meta_observation(trajs, batch, sp.prompt_id);
    result.info["elapsed_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                              start)
            .count();
    return result;
  }

  /// k fresh tasks via the counter-based seed stream: each draw picks a
  /// family, then a seed within its train range; duplicates (within this
  /// run's history) are redrawn.
  std::vector<core::Task> sample_batch() {
    std::vector<core::Task> batch;
    batch.reserve(cfg_.k);
    for (unsigned j = 0; j < cfg_.k; ++j) {
      for (;;) {
        const std::uint64_t pick = stream_draw(cfg_.master_seed, draw_index_++);
        const envkit::TaskFamily& family = *cfg_.families[pick % cfg_.families.size()];
        const envkit::SeedRange range = family.seed_range(core::Split::train);
        const std::uint64_t seed =
            range.lo + stream_draw(cfg_.master_seed, draw_index_++) % range.size();
        if (!issued_keys_.insert(family.family_id() + "#" + std::to_string(seed)).second)
          continue;  // already used in this run — redraw
        batch.push_back(family.make_task(seed, core::Split::train));
        issued_.push_back(batch.back());
        break;
      }
    }
    return batch;
  }

  MetaEnvConfig cfg_;
  std::uint64_t draw_index_ = 0;
  std::set<std::string> issued_keys_;
  std::vector<core::Task> issued_;
};

}  // namespace ictforge::metaenv
