#pragma once

// Reflectors: turn (previous prompt, observed trajectory batch) into an
// improved prompt. The request and response formats are fixed canonical
// assets; parsing is total — anything unparseable falls back to the
// previous prompt so the outer loop never stalls. A deterministic rule-based
// reflector provides an LLM-free stand-in for closed-loop tests.

#include <algorithm>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ictforge/common.hpp"
#include "ictforge/core.hpp"
#include "ictforge/envkit.hpp"
#include "ictforge/gateway.hpp"

namespace ictforge::reflectors {

// -------------------------------------------------------------------------
// Canonical prompt assets
// -------------------------------------------------------------------------

inline constexpr const char* kReflectorSystemPrompt =
    "You are an expert at analysing game-playing trajectories and improving agent "
    "instructions.\n"
    "\n"
    "You will be given one or more episodes in which an agent attempts to complete a task "
    "guided by a system prompt. Your goal is to learn from these episodes to improve the "
    "agent's performance on future tasks.\n"
    "\n"
    "Your job is to:\n"
    "1. Identify what went well and what went wrong in the agent's behaviour.\n"
    "2. Diagnose how the current system prompt contributed to those outcomes.\n"
    "3. Write an improved system prompt that addresses the identified weaknesses to improve "
    "the agent's performance in future episodes.\n"
    "\n"
    "Respond in EXACTLY this format --- no additional text outside these two sections:\n"
    "\n"
    "ANALYSIS:\n"
    "[Describe what succeeded, what failed, how the system prompt contributed to those "
    "outcomes, and what specific changes the improved prompt should make.]\n"
    "\n"
    "IMPROVED PROMPT:\n"
    "[The full improved system prompt, written to be used directly without modification.]";

struct ReflectionRequest {
  std::string system_text;
  std::string user_text;
  friend bool operator==(const ReflectionRequest&, const ReflectionRequest&) = default;
};

/// Render the full request for one reflection: the canonical system prompt
/// plus a user message embedding the previous prompt and every episode of the
/// batch. Pure function of its inputs.
inline ReflectionRequest render_reflection_request(const core::SystemPrompt& prev,
                                                   const core::MetaObservation& obs) {
  std::ostringstream user;
  user << "## System Prompt Used\n\n" << prev.text << "\n\n## Episode Trajectories\n";
  for (std::size_t i = 0; i < obs.trajectories.size(); ++i) {
    user << "\n=== Episode " << (i + 1) << " ===\n";
    user << core::trajectory_pretty_print(obs.trajectories[i]) << "\n\n";
  }
  user << "\nAnalyse the trajectories and provide an improved system prompt.";
  return {kReflectorSystemPrompt, user.str()};
}

// -------------------------------------------------------------------------
// Response parsing
// -------------------------------------------------------------------------

struct Reflection {
  std::string analysis;
  core::SystemPrompt improved_prompt;
  std::string raw_response;
  bool parse_ok = false;
};

namespace detail {

/// Position/length of the last improved-prompt marker, accepting both the
/// section style ("IMPROVED PROMPT:") and the banner style
/// ("=== IMPROVED PROMPT ===").
inline std::pair<std::size_t, std::size_t> find_improved_marker(const std::string& text) {
  static const std::string banner = "=== IMPROVED PROMPT ===";
  static const std::string section = "IMPROVED PROMPT:";
  const std::size_t banner_pos = text.rfind(banner);
  const std::size_t section_pos = text.rfind(section);
  if (banner_pos != std::string::npos &&
      (section_pos == std::string::npos || banner_pos + 4 >= section_pos))
    return {banner_pos, banner.size()};
  if (section_pos != std::string::npos) return {section_pos, section.size()};
  return {std::string::npos, 0};
}

}  // namespace detail

/// Total parse of a reflector reply. On any failure the fallback prompt is
/// returned verbatim with parse_ok=false; callers re-stamp identities.
inline Reflection parse_reflection(const std::string& response,
                                   const core::SystemPrompt& fallback) {
  Reflection out;
  out.raw_response = response;

  const auto [marker_pos, marker_len] = detail::find_improved_marker(response);
  std::string improved;
  if (marker_pos != std::string::npos)
    improved = trim(response.substr(marker_pos + marker_len));
  if (improved.empty()) {
    out.improved_prompt = fallback;
    out.parse_ok = false;
    out.analysis = trim(response);
    return out;
  }

  std::string analysis_region = response.substr(0, marker_pos);
  const std::size_t analysis_pos = analysis_region.find("ANALYSIS:");
  if (analysis_pos != std::string::npos)
    analysis_region = analysis_region.substr(analysis_pos + 9);
  out.analysis = trim(analysis_region);
  out.improved_prompt =
      core::make_system_prompt(improved, core::PromptOrigin::reflector, 0, "parsed");
  out.parse_ok = true;
  return out;
}

// -------------------------------------------------------------------------
// Reflector interface
// -------------------------------------------------------------------------

class Reflector {
 public:
  virtual ~Reflector() = default;
  virtual Reflection reflect(const core::SystemPrompt& prev,
                             const core::MetaObservation& obs) = 0;
  /// What kind of prompt this reflector produces, for provenance stamping.
  virtual core::PromptOrigin origin() const = 0;
};

// -------------------------------------------------------------------------
// Rule-based reflector
// -------------------------------------------------------------------------

struct Rule {
  std::string id;
  std::function<bool(const core::MetaObservation&)> predicate;  // pure
  std::string phrase;  // appended on its own line when the predicate fires
};

using RuleTable = std::vector<Rule>;

/// Append each fired rule's phrase to the prompt unless already present.
/// Idempotent at the text level: a phrase is added at most once.
inline Reflection rule_reflect(const RuleTable& rules, const core::SystemPrompt& prev,
                               const core::MetaObservation& obs) {
  std::string text = prev.text;
  std::vector<std::string> fired;
  for (const Rule& rule : rules) {
    if (!rule.predicate(obs)) continue;
    fired.push_back(rule.id);
    if (find_ci(text, rule.phrase) != std::string::npos) continue;
    text += "\n" + rule.phrase;
  }

  Reflection out;
  out.analysis = fired.empty() ? "No rules fired." : "Fired rules: " + join(fired, ", ");
  out.improved_prompt = core::make_system_prompt(text, core::PromptOrigin::rule, 0, "rule");
  out.raw_response =
      "ANALYSIS:\n" + out.analysis + "\n\nIMPROVED PROMPT:\n" + text;
  out.parse_ok = true;
  return out;
}

class RuleReflector final : public Reflector {
 public:
  explicit RuleReflector(RuleTable rules) : rules_(std::move(rules)) {}

  Reflection reflect(const core::SystemPrompt& prev,
                     const core::MetaObservation& obs) override {
    return rule_reflect(rules_, prev, obs);
  }

  core::PromptOrigin origin() const override { return core::PromptOrigin::rule; }

 private:
  RuleTable rules_;
};

// -------------------------------------------------------------------------
// Stock rule tables for the built-in families
// -------------------------------------------------------------------------

namespace detail {

inline bool any_failed(const core::MetaObservation& obs,
                       const std::function<bool(const core::Trajectory&)>& pred) {
  for (const core::Trajectory& t : obs.trajectories)
    if (!t.success && pred(t)) return true;
  return false;
}

inline bool has_action(const core::Trajectory& t, const std::string& action) {
  for (const core::Step& s : t.steps)
    if (s.action == action) return true;
  return false;
}

inline bool any_observation_contains(const core::Trajectory& t, const std::string& needle) {
  for (const core::Step& s : t.steps)
    if (find_ci(s.observation, needle) != std::string::npos) return true;
  return false;
}

}  // namespace detail

/// Rules matched to one built-in family. The phrases are chosen so the
/// scripted actor's directive parser picks them up, closing the loop.
inline RuleTable default_rules_for(const envkit::TaskFamily& family) {
  RuleTable rules;
  const std::string set = envkit::family_set_of(family.family_id());
  const std::string fid = family.family_id();

  if (set == "verbgrid") {
    const std::string verb = fid.substr(fid.find('-') + 1);
    if (verb != "navigate" && verb != "dark") {
      const std::string label = verb == "puton" ? "put it on" : verb + " it";
      rules.push_back(
          {fid + "/apply-verb",
           [](const core::MetaObservation& obs) {
             return detail::any_failed(obs, [](const core::Trajectory& t) {
               return detail::has_action(t, "pickup");
             });
           },
           "After picking up an item, " + label + "."});
    }
    rules.push_back(
        {fid + "/coverage",
         [](const core::MetaObservation& obs) {
           return detail::any_failed(obs, [](const core::Trajectory& t) {
             return !detail::has_action(t, "pickup");
           });
         },
         "Explore systematically and avoid backtracking over tiles you have already seen."});
  } else if (set == "housetext") {
    rules.push_back(
        {fid + "/open-closed",
         [](const core::MetaObservation& obs) {
           return detail::any_failed(obs, [](const core::Trajectory& t) {
             return detail::any_observation_contains(t, "is closed");
           });
         },
         "Remember to open closed receptacles and search inside them."});
    rules.push_back(
        {fid + "/check-fridge",
         [](const core::MetaObservation& obs) {
           return detail::any_failed(obs, [](const core::Trajectory& t) {
             return !detail::any_observation_contains(t, "arrive at fridge");
           });
         },
         "When searching for items, consider locations such as the fridge."});
  }
  return rules;
}

/// Union table over several families, deduplicated by rule id.
inline RuleTable default_rules_for(const std::vector<envkit::FamilyPtr>& families) {
  RuleTable table;
  for (const envkit::FamilyPtr& f : families) {
    for (Rule& r : default_rules_for(*f)) {
      const bool dup = std::any_of(table.begin(), table.end(),
                                   [&](const Rule& t) { return t.id == r.id; });
      if (!dup) table.push_back(std::move(r));
    }
  }
  return table;
}

// -------------------------------------------------------------------------
// LLM reflector
// -------------------------------------------------------------------------

class LlmReflector final : public Reflector {
 public:
  LlmReflector(gateway::ChatBackend& backend, gateway::ChatOptions options)
      : backend_(&backend), options_(std::move(options)) {}

  /// One chat call per reflection; transport failures (after the gateway's
  /// own retries) degrade to the fallback prompt.
  Reflection reflect(const core::SystemPrompt& prev,
                     const core::MetaObservation& obs) override {
    const ReflectionRequest request = render_reflection_request(prev, obs);
    std::string response;
    try {
      response = backend_->complete(
          {{"system", request.system_text}, {"user", request.user_text}}, options_);
    } catch (const gateway::GatewayError&) {
      Reflection out;
      out.improved_prompt = prev;
      out.parse_ok = false;
      out.analysis = "reflector endpoint unavailable; keeping previous prompt";
      return out;
    }
    return parse_reflection(response, prev);
  }

  core::PromptOrigin origin() const override { return core::PromptOrigin::reflector; }

 private:
  gateway::ChatBackend* backend_;
  gateway::ChatOptions options_;
};

}  // namespace ictforge::reflectors
