#pragma once

// Actors: run one ReAct episode under a given system prompt. Two kinds are
// provided — an LLM-backed actor that talks to a chat endpoint, and a
// deterministic scripted actor whose behavior is influenced by the prompt
// only through a closed registry of directive phrases. The scripted actor
// makes the whole reflection loop verifiable without any model in the loop.

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ictforge/common.hpp"
#include "ictforge/core.hpp"
#include "ictforge/envkit.hpp"
#include "ictforge/gateway.hpp"
#include "ictforge/housetext.hpp"
#include "ictforge/verbgrid.hpp"

namespace ictforge::actors {

// -------------------------------------------------------------------------
// Configuration and default prompts
// -------------------------------------------------------------------------

enum class ActorKind { scripted, llm };

struct LlmSettings {
  std::string model = "default";
  double temperature = 0.7;
  int max_tokens = 512;
};

struct ActorConfig {
  ActorKind kind = ActorKind::scripted;
  std::optional<LlmSettings> llm;
  unsigned step_limit = envkit::kDefaultStepLimit;
};

inline void validate(const ActorConfig& config) {
  if (config.kind == ActorKind::llm && !config.llm.has_value())
    throw ConfigError("actor: kind=llm requires llm settings");
  if (config.step_limit == 0) throw ConfigError("actor: step_limit must be >= 1");
}

inline constexpr const char* kReactFormatBlock =
    "You must use the ReACT (Reasoning and Acting) approach:\n"
    "1. THINK about what you observe and what you should do next\n"
    "2. Take an ACTION from the available actions\n"
    "3. Observe the result and repeat\n"
    "\n"
    "Format your responses EXACTLY as follows:\n"
    "Thought: [your reasoning about the current situation and what to do]\n"
    "Action: [exact action from the available actions list]";

/// The stock starting prompt for a family set ("verbgrid", "housetext", or
/// anything else for the generic fallback).
inline std::string default_actor_prompt(const std::string& family_set) {
  if (family_set == "verbgrid") {
    return std::string(
               "You are an intelligent agent playing a text-based grid exploration game.\n"
               "You are placed in an ASCII-based grid world in which your character is "
               "represented by the \"@\" symbol. Explore the grid world and find your goal.\n"
               "\n") +
           kReactFormatBlock;
  }
  if (family_set == "housetext") {
    return std::string(
               "You are an intelligent agent playing a text-based game where you control a "
               "robot in a household environment.\n"
               "\n"
               "Your goal is to complete tasks by interacting with objects in the "
               "environment.\n"
               "\n") +
           kReactFormatBlock;
  }
  return std::string(
             "You are an intelligent agent playing a text-based game.\n"
             "\n"
             "Your goal is to complete tasks by choosing actions from the available actions "
             "list.\n"
             "\n") +
         kReactFormatBlock;
}

// -------------------------------------------------------------------------
// ReAct message plumbing
// -------------------------------------------------------------------------

/// Per-step user message. Grid-style families carry a task header.
inline std::string render_actor_user_message(const std::string& observation,
                                             const std::vector<std::string>& available,
                                             bool grid_style,
                                             const std::string& task_label) {
  std::string msg;
  if (grid_style) msg += "Task: play " + task_label + "\n";
  msg += observation;
  msg += "\n\nAvailable actions:\n";
  msg += join(available, ", ");
  msg += "\n\nWhat is your next thought and action?";
  return msg;
}

struct ReactReply {
  std::optional<std::string> thought;
  std::string action;
};

/// Extract (thought, action) from a model reply. The last "Action:" marker
/// wins; the thought is taken from the last "Thought:" marker before it. A
/// reply without any "Action:" marker is treated as a bare action.
inline ReactReply parse_react(const std::string& response) {
  const std::string body = trim(response);
  if (body.empty()) throw ParseError("actor reply is empty");

  const std::size_t action_pos = body.rfind("Action:");
  if (action_pos == std::string::npos) return {std::nullopt, body};

  ReactReply reply;
  reply.action = trim(body.substr(action_pos + 7));
  const std::size_t thought_pos = body.rfind("Thought:", action_pos);
  if (thought_pos != std::string::npos) {
    const std::size_t start = thought_pos + 8;
    reply.thought = trim(body.substr(start, action_pos - start));
  }
  return reply;
}

/// Map a model-proposed action onto the available list: exact match after
/// trimming, then case-insensitive; otherwise the candidate passes through
/// unchanged and the environment rejects it.
inline std::string match_action(const std::string& candidate,
                                const std::vector<std::string>& available) {
  const std::string trimmed = trim(candidate);
  for (const std::string& a : available)
    if (a == trimmed) return a;
  const std::string folded = to_lower(trimmed);
  for (const std::string& a : available)
    if (to_lower(a) == folded) return a;
  return candidate;
}

// -------------------------------------------------------------------------
// Directives: the closed vocabulary through which prompt text influences the
// scripted actor
// -------------------------------------------------------------------------

struct Directive {
  std::string token;                  // canonical, e.g. "apply-verb:read"
  std::vector<std::string> triggers;  // matched case-insensitively
};

using DirectiveRegistry = std::vector<Directive>;

inline const DirectiveRegistry& verbgrid_directive_registry() {
  static const DirectiveRegistry registry = {
      {"apply-verb:read", {"read it", "read the scroll", "try reading"}},
      {"apply-verb:eat", {"eat it", "eat the apple", "try eating"}},
      {"apply-verb:puton", {"put it on", "put on the amulet"}},
      {"apply-verb:zap", {"zap it", "zap the wand", "try zapping"}},
      {"apply-verb:wield", {"wield it", "wield the dagger"}},
      {"apply-verb:wear", {"wear it", "wear the cloak"}},
      {"avoid-revisit", {"avoid revisit", "do not revisit", "avoid backtracking"}},
  };
  return registry;
}

inline const DirectiveRegistry& housetext_directive_registry() {
  static const DirectiveRegistry registry = {
      {"open-before-search",
       {"open closed", "open each", "opening closed", "open cabinets and drawers",
        "open containers"}},
      {"check:fridge", {"such as the fridge", "check the fridge", "look in the fridge"}},
      {"avoid-revisit", {"avoid revisit", "do not revisit", "already searched"}},
  };
  return registry;
}

inline const DirectiveRegistry& directive_registry_for(const std::string& family_set) {
  if (family_set == "verbgrid") return verbgrid_directive_registry();
  if (family_set == "housetext") return housetext_directive_registry();
  static const DirectiveRegistry empty;
  return empty;
}

struct DirectiveSet {
  std::vector<std::string> tokens;  // first-occurrence order, no duplicates

  bool contains(const std::string& token) const {
    return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
  }
  friend bool operator==(const DirectiveSet&, const DirectiveSet&) = default;
};

/// Scan a prompt for registered trigger phrases. Tokens come back ordered by
/// the position of their first trigger hit in the text.
inline DirectiveSet parse_directives(const core::SystemPrompt& sp,
                                     const DirectiveRegistry& registry) {
  std::vector<std::pair<std::size_t, std::string>> hits;
  for (const Directive& d : registry) {
    std::size_t best = std::string::npos;
    for (const std::string& trigger : d.triggers) {
      const std::size_t pos = find_ci(sp.text, trigger);
      if (pos != std::string::npos && (best == std::string::npos || pos < best)) best = pos;
    }
    if (best != std::string::npos) hits.emplace_back(best, d.token);
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  DirectiveSet set;
  for (auto& [pos, token] : hits)
    if (!set.contains(token)) set.tokens.push_back(token);
  return set;
}

inline DirectiveSet parse_directives(const core::SystemPrompt& sp,
                                     const std::string& family_set) {
  return parse_directives(sp, directive_registry_for(family_set));
}

// -------------------------------------------------------------------------
// Scripted policies
// -------------------------------------------------------------------------

/// Grid policy: walk toward the known point of interest, pick it up when
/// co-located, and otherwise sweep toward the nearest unvisited tile. Verbs
/// fire only when an apply-verb directive names them; each is tried once.
class VerbgridPolicy {
 public:
  explicit VerbgridPolicy(DirectiveSet directives) : directives_(std::move(directives)) {}

  std::string decide(const envkit::verbgrid::VerbgridEnv& env) {
    using envkit::verbgrid::Pos;
    using envkit::verbgrid::kCompass;
    const auto& s = env.state();
    visited_.insert(index(s.agent));

    // In the dark variant the item is only knowable when adjacent; remember
    // it once seen.
    if (!s.item_taken) {
      if (!s.dark || envkit::verbgrid::chebyshev(s.agent, s.item) <= 1) known_item_ = s.item;
    }

    if (s.holding) {
      for (const std::string& token : directives_.tokens) {
        if (token.rfind("apply-verb:", 0) != 0) continue;
        const std::string verb = token.substr(11);
        if (verbs_tried_.insert(verb).second) return verb;
      }
      // No (remaining) directive tells us what to do with the item.
      return explore(env);
    }

    if (known_item_ && !s.item_taken && s.agent == *known_item_ && !env.spec().verb.empty())
      return "pickup";

    if (known_item_ && !s.item_taken) return step_toward(env, *known_item_);
    return explore(env);
  }

 private:
  static int index(envkit::verbgrid::Pos p) { return p.r * envkit::verbgrid::kGridSize + p.c; }

  std::string explore(const envkit::verbgrid::VerbgridEnv& env) {
    using envkit::verbgrid::Pos;
    using envkit::verbgrid::kGridSize;
    const Pos agent = env.state().agent;
    std::optional<Pos> target;
    int best = 0;
    for (int r = 0; r < kGridSize; ++r) {
      for (int c = 0; c < kGridSize; ++c) {
        const Pos p{r, c};
        if (visited_.count(index(p)) > 0) continue;
        const int d = envkit::verbgrid::chebyshev(agent, p);
        if (!target || d < best) {
          target = p;
          best = d;
        }
      }
    }
    if (!target) return env.available_actions().front();
    return step_toward(env, *target);
  }

  /// One king-move toward `target`. On an empty grid the eight-direction
  /// shortest-path distance equals the Chebyshev distance, so any neighbor
  /// that lowers it is on a shortest path. Ties resolve in compass order;
  /// with avoid-revisit, unvisited neighbors win first.
  std::string step_toward(const envkit::verbgrid::VerbgridEnv& env,
                          envkit::verbgrid::Pos target) {
    using envkit::verbgrid::Pos;
    const Pos agent = env.state().agent;
    const int current = envkit::verbgrid::chebyshev(agent, target);
    const bool avoid = directives_.contains("avoid-revisit");
    const envkit::verbgrid::Compass* fallback = nullptr;
    for (int pass = 0; pass < (avoid ? 2 : 1); ++pass) {
      for (const auto& d : envkit::verbgrid::kCompass) {
        const Pos next{agent.r + d.dr, agent.c + d.dc};
        if (!envkit::verbgrid::in_bounds(next)) continue;
        if (envkit::verbgrid::chebyshev(next, target) >= current) continue;
        if (avoid && pass == 0 && visited_.count(index(next)) > 0) continue;
        return std::string("step ") + d.name;
      }
    }
    (void)fallback;
    return env.available_actions().front();
  }

  DirectiveSet directives_;
  std::set<int> visited_;
  std::optional<envkit::verbgrid::Pos> known_item_;
  std::set<std::string> verbs_tried_;
};

/// Household policy: search receptacles in floor-plan order, remember what
/// it has seen, and run the fetch/process/deliver pipeline once it holds the
/// target object. Closed receptacles are opened only under a directive;
/// appliances needed for processing are always opened.
class HousetextPolicy {
 public:
  explicit HousetextPolicy(DirectiveSet directives) : directives_(std::move(directives)) {}

  std::string decide(const envkit::housetext::HousetextEnv& env) {
    namespace ht = envkit::housetext;
    const ht::HousetextGoal& goal = env.goal();
    const std::string& at = env.at();

    observe(env);

    if (const ht::HouseObject* held = env.holding(); held != nullptr) {
      const std::string app = ht::appliance_for(goal.kind);
      if (!app.empty() && !processed(*held, goal.kind)) {
        if (at != app) return "go to " + app;
        if (needs_opening(env, app)) return "open " + app;
        return ht::process_verb(goal.kind) + " " + held->name + " with " + app;
      }
      if (goal.kind == ht::Kind::examine) {
        if (at != "desklamp 1") return "go to desklamp 1";
        return "use desklamp 1";
      }
      if (at != goal.target) return "go to " + goal.target;
      if (needs_opening(env, goal.target)) return "open " + goal.target;
      return "put " + held->name + " in/on " + at;
    }

    // Take a needed instance if one is in front of us.
    for (const ht::HouseObject* o : env.visible_here()) {
      if (o->type != goal.object_type) continue;
      if (counts_toward_goal(*o, goal)) continue;  // already delivered
      return "take " + o->name + " from " + at;
    }

    // Head straight for a remembered sighting.
    for (const auto& [name, loc] : seen_objects_) {
      if (name.rfind(goal.object_type + " ", 0) != 0) continue;
      if (loc == goal.target && goal.kind != ht::Kind::examine) continue;
      if (loc != at) return "go to " + loc;
    }

    // At a closed receptacle: open it only when a directive says to bother.
    const ht::Receptacle* here = ht::find_receptacle(at);
    if (here != nullptr && here->closable && !env.is_open(at)) {
      const bool open_all = directives_.contains("open-before-search");
      const bool open_fridge = directives_.contains("check:fridge") && at == "fridge 1";
      if (open_all || open_fridge) return "open " + at;
      searched_.insert(at);  // give up on this one
    }

    for (const std::string& recep : search_order()) {
      if (searched_.count(recep) > 0 || recep == at) continue;
      return "go to " + recep;
    }
    return "look";
  }

 private:
  void observe(const envkit::housetext::HousetextEnv& env) {
    namespace ht = envkit::housetext;
    const ht::Receptacle* here = ht::find_receptacle(env.at());
    if (here == nullptr) return;
    if (here->closable && !env.is_open(here->id)) return;  // contents hidden
    searched_.insert(here->id);
    const std::vector<const ht::HouseObject*> seen = env.visible_here();
    for (const ht::HouseObject* o : seen) seen_objects_[o->name] = here->id;
    // Anything we remembered here but no longer see has moved.
    for (auto it = seen_objects_.begin(); it != seen_objects_.end();) {
      const bool stale = it->second == here->id &&
                         std::none_of(seen.begin(), seen.end(),
                                      [&](const ht::HouseObject* o) { return o->name == it->first; });
      it = stale ? seen_objects_.erase(it) : ++it;
    }
  }

  static bool processed(const envkit::housetext::HouseObject& o,
                        envkit::housetext::Kind kind) {
    using envkit::housetext::Kind;
    switch (kind) {
      case Kind::clean: return o.cleaned;
      case Kind::heat: return o.hot;
      case Kind::cool: return o.cool;
      default: return true;
    }
  }

  static bool counts_toward_goal(const envkit::housetext::HouseObject& o,
                                 const envkit::housetext::HousetextGoal& goal) {
    return goal.kind != envkit::housetext::Kind::examine && o.loc == goal.target &&
           processed(o, goal.kind);
  }

  static bool needs_opening(const envkit::housetext::HousetextEnv& env,
                            const std::string& recep) {
    const auto* r = envkit::housetext::find_receptacle(recep);
    return r != nullptr && r->closable && !env.is_open(recep);
  }

  std::vector<std::string> search_order() const {
    std::vector<std::string> order;
    if (directives_.contains("check:fridge")) order.push_back("fridge 1");
    for (const auto& r : envkit::housetext::floor_plan())
      if (std::find(order.begin(), order.end(), r.id) == order.end()) order.push_back(r.id);
    return order;
  }

  DirectiveSet directives_;
  std::set<std::string> searched_;
  std::map<std::string, std::string> seen_objects_;  // object name -> receptacle
};

// -------------------------------------------------------------------------
// Episode runner
// -------------------------------------------------------------------------

namespace detail {

/// Chooses the scripted action for whatever environment we were handed.
/// Families outside the built-in sets fall back to the first available
/// action, which keeps bridge smoke tests total.
class ScriptedChooser {
 public:
  ScriptedChooser(const core::SystemPrompt& sp, const std::string& family_set)
      : verbgrid_(parse_directives(sp, family_set)),
        housetext_(parse_directives(sp, family_set)) {}

  std::string choose(const envkit::Environment& env) {
    if (const auto* grid = dynamic_cast<const envkit::verbgrid::VerbgridEnv*>(&env))
      return verbgrid_.decide(*grid);
    if (const auto* house = dynamic_cast<const envkit::housetext::HousetextEnv*>(&env))
      return housetext_.decide(*house);
    return env.available_actions().front();
  }

 private:
  VerbgridPolicy verbgrid_;
  HousetextPolicy housetext_;
};

}  // namespace detail

inline constexpr unsigned kMalformedReplyRetries = 2;

/// Run exactly one attempt at `task` under `sp`. LLM endpoint failure does
/// not abort the batch: the partial trajectory comes back finalized with an
/// error annotation and counts as unsuccessful.
inline core::Trajectory run_episode(const ActorConfig& config,
                                    const envkit::TaskFamily& family, const core::Task& task,
                                    const core::SystemPrompt& sp,
                                    gateway::ChatBackend* backend = nullptr) {
  validate(config);
  if (config.kind == ActorKind::llm && backend == nullptr)
    throw ConfigError("actor: kind=llm requires a chat backend");
  // Dispatch on this pointer below: non-null exactly when the LLM path is on.
  gateway::ChatBackend* const chat = config.kind == ActorKind::llm ? backend : nullptr;

  envkit::ResetResult reset = family.reset(task, config.step_limit);
  envkit::Environment& env = *reset.env;

  core::TrajectoryBuilder builder(task);
  detail::ScriptedChooser scripted(sp, envkit::family_set_of(task.family_id));
  std::vector<gateway::ChatMessage> messages;
  if (chat != nullptr) messages.push_back({"system", sp.text});

  std::string observation = reset.observation;
  bool truncated = false;
  std::optional<std::string> error;

  while (!env.terminal()) {
    const std::vector<std::string> available = env.available_actions();
    std::optional<std::string> thought;
    std::string action;

    if (chat == nullptr) {
      action = scripted.choose(env);
    } else {
      const std::string user_msg = render_actor_user_message(
          observation, available, family.grid_style(), family.family_id());
      messages.push_back({"user", user_msg});
      gateway::ChatOptions options;
      options.model = config.llm->model;
      options.temperature = config.llm->temperature;
      options.max_tokens = config.llm->max_tokens;

      std::string raw;
      bool parsed = false;
      try {
        for (unsigned attempt = 0; attempt <= kMalformedReplyRetries && !parsed; ++attempt) {
          raw = chat->complete(messages, options);
          try {
            ReactReply reply = parse_react(raw);
            if (!reply.action.empty()) {
              thought = reply.thought;
              action = match_action(reply.action, available);
              parsed = true;
            }
          } catch (const ParseError&) {
            // malformed; loop for another attempt
          }
        }
      } catch (const gateway::GatewayError& e) {
        error = std::string("gateway: ") + e.what();
        break;
      }
      if (!parsed) action = trim(raw);  // give the raw text to the env
      messages.push_back({"assistant", raw});
    }

    const envkit::StepOutcome outcome = env.step(action);
    builder.add_step(core::Step{observation, available, thought, action, outcome.reward});
    truncated = outcome.truncated;
    observation = outcome.observation;
  }

  return builder.finalize(truncated, family.success_threshold(), error);
}

}  // namespace ictforge::actors
