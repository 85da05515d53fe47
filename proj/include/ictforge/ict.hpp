#pragma once

// The full meta-loop driver. One run executes:
//   sp* <- sp_0, score* <- 0
//   obs_0 <- meta_reset(sp_0)
//   for i = 1..N:
//     sp_i <- reflect(sp_{i-1}, obs_{i-1})
//     (score_i, rate_i) <- evaluate_on_validation(sp_i)
//     if score_i > score*: (sp*, score*) <- (sp_i, score_i)   [strict >]
//     obs_i <- meta_step(sp_i)
// and returns a record holding every turn plus the winning prompt. The last
// observation obs_N is recorded but never reflected upon.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ictforge/common.hpp"
#include "ictforge/core.hpp"
#include "ictforge/metaenv.hpp"
#include "ictforge/reflectors.hpp"

namespace ictforge::ict {

struct ICTConfig {
  metaenv::MetaEnvConfig meta;
  unsigned turns = 10;           // N
  std::string initial_prompt;    // sp_0 text
  bool eval_initial = false;     // score sp_0 for reporting only
  std::string run_id = "run";
  nlohmann::json config_snapshot;  // embedded into the record verbatim
};

inline void validate(const ICTConfig& cfg) {
  if (cfg.turns == 0) throw ConfigError("ict: turns must be >= 1");
  if (trim(cfg.initial_prompt).empty())
    throw ConfigError("ict: initial prompt must be non-empty");
  if (cfg.run_id.empty()) throw ConfigError("ict: run_id must be non-empty");
  metaenv::validate(cfg.meta);
}

/// Minimal default snapshot when the caller does not supply one.
inline nlohmann::json default_config_snapshot(const ICTConfig& cfg) {
  nlohmann::json j;
  j["k"] = cfg.meta.k;
  j["turns"] = cfg.turns;
  j["master_seed"] = cfg.meta.master_seed;
  j["eval_initial"] = cfg.eval_initial;
  j["actor"] = cfg.meta.actor.kind == actors::ActorKind::scripted ? "scripted" : "llm";
  j["families"] = nlohmann::json::array();
  for (const envkit::FamilyPtr& f : cfg.meta.families) j["families"].push_back(f->family_id());
  return j;
}

inline core::ICTRunRecord run_ict(const ICTConfig& cfg, reflectors::Reflector& reflector) {
  validate(cfg);
  metaenv::MetaEnv env(cfg.meta);

  core::ICTRunRecord record;
  record.run_id = cfg.run_id;
  record.config = cfg.config_snapshot.is_null() ? default_config_snapshot(cfg)
                                                : cfg.config_snapshot;

  core::SystemPrompt sp =
      core::make_system_prompt(cfg.initial_prompt, core::PromptOrigin::initial, 0, cfg.run_id);
  auto [obs, info] = env.meta_reset(sp);

  core::TurnEntry turn0;
  turn0.turn_index = 0;
  turn0.prompt = sp;
  if (cfg.eval_initial) {
    // Reporting only: the best tracker still starts from score 0.
    const auto [score0, rate0] = env.evaluate_on_validation(sp);
    turn0.validation_score = score0;
    turn0.validation_success_rate = rate0;
  }
  turn0.obs = obs;
  record.turns.push_back(turn0);

  record.best_prompt_id = sp.prompt_id;
  record.best_score = 0.0;

  for (unsigned i = 1; i <= cfg.turns; ++i) {
    const reflectors::Reflection refl = reflector.reflect(sp, obs);
    sp = core::make_system_prompt(refl.improved_prompt.text, reflector.origin(), i, cfg.run_id);

    const auto [score, rate] = env.evaluate_on_validation(sp);
    if (score > record.best_score) {  // strict: earliest turn wins ties
      record.best_score = score;
      record.best_prompt_id = sp.prompt_id;
    }

    metaenv::MetaStepResult step = env.meta_step(sp);
    obs = std::move(step.obs);

    core::TurnEntry entry;
    entry.turn_index = i;
    entry.prompt = sp;
    entry.obs = obs;
    entry.validation_score = score;
    entry.validation_success_rate = rate;
    record.turns.push_back(std::move(entry));
  }

  core::validate_record(record);
  return record;
}

/// Recover (sp*, score*) from a record.
inline std::pair<core::SystemPrompt, double> best_prompt(const core::ICTRunRecord& record) {
  core::validate_record(record);
  for (const core::TurnEntry& t : record.turns)
    if (t.prompt.prompt_id == record.best_prompt_id) return {t.prompt, record.best_score};
  throw ContractViolation("record best_prompt_id not present in turns");
}

// -------------------------------------------------------------------------
// Per-turn statistics (the plotting interface)
// -------------------------------------------------------------------------

struct TurnStat {
  unsigned turn_index = 0;
  double val_score = 0.0;
  double val_rate = 0.0;
  double best_so_far = 0.0;  // running max of val_rate
};

/// One row per evaluated turn; best_so_far is non-decreasing by construction.
inline std::vector<TurnStat> turn_stats(const core::ICTRunRecord& record) {
  std::vector<TurnStat> stats;
  double best = 0.0;
  for (const core::TurnEntry& t : record.turns) {
    if (!t.validation_score.has_value()) continue;
    best = std::max(best, t.validation_success_rate.value_or(0.0));
    stats.push_back({t.turn_index, *t.validation_score,
                     t.validation_success_rate.value_or(0.0), best});
  }
  return stats;
}

inline std::string format_stat_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

/// CSV with a leading config comment so every artifact carries the settings
/// that produced it.
inline std::string turn_stats_csv(const core::ICTRunRecord& record) {
  std::string csv = "# config: " + record.config.dump() + "\n";
  csv += "turn,val_score,val_rate,best_so_far\n";
  for (const TurnStat& s : turn_stats(record)) {
    csv += std::to_string(s.turn_index) + "," + format_stat_number(s.val_score) + "," +
           format_stat_number(s.val_rate) + "," + format_stat_number(s.best_so_far) + "\n";
  }
  return csv;
}

inline void write_turn_stats_csv(const core::ICTRunRecord& record, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << turn_stats_csv(record);
}

}  // namespace ictforge::ict
