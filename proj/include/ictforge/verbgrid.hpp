#pragma once

// verbgrid: a set of 5x5 ASCII grid families. Each task places the agent and
// one point of interest on the grid. Movement families succeed by reaching
// the goal tile; verb families require picking an item up and then applying
// the one verb the family cares about. The "dark" variant limits visibility
// to the tiles adjacent to the agent.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ictforge/common.hpp"
#include "ictforge/envkit.hpp"

namespace ictforge::envkit::verbgrid {

inline constexpr int kGridSize = 5;

struct Pos {
  int r = 0;
  int c = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
};

inline bool in_bounds(Pos p) {
  return p.r >= 0 && p.r < kGridSize && p.c >= 0 && p.c < kGridSize;
}

inline int chebyshev(Pos a, Pos b) {
  return std::max(std::abs(a.r - b.r), std::abs(a.c - b.c));
}

/// The eight compass directions, in curated-action order.
struct Compass {
  const char* name;
  int dr;
  int dc;
};

inline constexpr Compass kCompass[8] = {
    {"n", -1, 0}, {"s", 1, 0},  {"e", 0, 1},  {"w", 0, -1},
    {"ne", -1, 1}, {"nw", -1, -1}, {"se", 1, 1}, {"sw", 1, -1},
};

inline const Compass* find_direction(const std::string& name) {
  for (const Compass& d : kCompass)
    if (name == d.name) return &d;
  return nullptr;
}

/// Static description of one family's mechanics.
struct VerbgridSpec {
  std::string name;        // "navigate", "read", ...
  char glyph = '>';        // how the point of interest renders
  std::string item_name;   // "stairs", "scroll", ...
  std::string verb;        // empty for movement families
  std::string verb_label;  // display form, e.g. "put on" for puton
  bool dark = false;
  MetaSplit split = MetaSplit::meta_train;
};

inline const std::vector<VerbgridSpec>& verbgrid_specs() {
  static const std::vector<VerbgridSpec> specs = {
      {"navigate", '>', "stairs", "", "", false, MetaSplit::meta_train},
      {"eat", '%', "apple", "eat", "eat", false, MetaSplit::meta_train},
      {"wield", '(', "dagger", "wield", "wield", false, MetaSplit::meta_train},
      {"wear", '[', "cloak", "wear", "wear", false, MetaSplit::meta_train},
      {"puton", '"', "amulet", "puton", "put on", false, MetaSplit::meta_test},
      {"zap", '/', "wand", "zap", "zap", false, MetaSplit::meta_test},
      {"read", '?', "scroll", "read", "read", false, MetaSplit::meta_test},
      {"dark", '>', "stairs", "", "", true, MetaSplit::meta_test},
  };
  return specs;
}

/// Mutable episode state, exposed for rendering and for search tooling.
struct GridState {
  Pos agent;
  Pos item;
  char item_glyph = '>';
  bool item_taken = false;  // item removed from the floor
  bool holding = false;     // item in hand
  bool dark = false;
};

/// Five lines of kGridSize characters joined by '\n'. The agent renders as
/// '@' and covers the item glyph when both share a tile. In dark mode every
/// tile farther than one king-move from the agent renders as a blank.
inline std::string render_grid(const GridState& s) {
  std::string out;
  for (int r = 0; r < kGridSize; ++r) {
    if (r > 0) out += '\n';
    for (int c = 0; c < kGridSize; ++c) {
      const Pos p{r, c};
      char glyph = '.';
      if (!s.item_taken && p == s.item) glyph = s.item_glyph;
      if (p == s.agent) glyph = '@';
      if (s.dark && chebyshev(p, s.agent) > 1) glyph = ' ';
      out += glyph;
    }
  }
  return out;
}

/// Curated action labels shared by every verbgrid family, in a fixed order:
/// single steps, eight-direction runs, then the verb and pickup actions.
inline const std::vector<std::string>& curated_grid_actions() {
  static const std::vector<std::string> actions = [] {
    std::vector<std::string> a;
    for (const Compass& d : kCompass) a.push_back(std::string("step ") + d.name);
    for (const Compass& d : kCompass) a.push_back(std::string("run ") + d.name);
    for (const char* verb : {"read", "eat", "puton", "zap", "wield", "wear"})
      a.push_back(verb);
    a.push_back("pickup");
    return a;
  }();
  return actions;
}

class VerbgridEnv final : public Environment {
 public:
  VerbgridEnv(Task task, unsigned step_limit, const VerbgridSpec& spec, GridState state)
      : Environment(std::move(task), step_limit), spec_(&spec), state_(state) {}

  std::vector<std::string> available_actions() const override {
    return curated_grid_actions();
  }

  std::unique_ptr<Environment> clone() const override {
    return std::unique_ptr<Environment>(new VerbgridEnv(*this));
  }

  std::string state_signature() const override {
    std::string sig = "a" + std::to_string(state_.agent.r) + "," + std::to_string(state_.agent.c);
    sig += ";i" + std::to_string(state_.item.r) + "," + std::to_string(state_.item.c);
    sig += state_.item_taken ? ";t1" : ";t0";
    sig += state_.holding ? ";h1" : ";h0";
    return sig;
  }

  const GridState& state() const { return state_; }
  const VerbgridSpec& spec() const { return *spec_; }

  std::string initial_observation() const {
    return "Hello Agent, welcome to the grid world! Explore and reach your goal.\n\n" +
           render_grid(state_);
  }

 private:
  StepOutcome apply(const std::string& action) override {
    const auto& curated = curated_grid_actions();
    if (std::find(curated.begin(), curated.end(), action) == curated.end())
      return {"Invalid action.", 0.0, false, false};

    if (action.rfind("step ", 0) == 0) return move(action.substr(5), /*run=*/false);
    if (action.rfind("run ", 0) == 0) return move(action.substr(4), /*run=*/true);
    if (action == "pickup") return pickup();
    return apply_verb(action);
  }

  StepOutcome move(const std::string& dir_name, bool run) {
    const Compass* dir = find_direction(dir_name);
    int moved = 0;
    for (;;) {
      const Pos next{state_.agent.r + dir->dr, state_.agent.c + dir->dc};
      if (!in_bounds(next)) break;
      state_.agent = next;
      ++moved;
      if (goal_reached()) {
        return {"You reach the " + spec_->item_name + ". Task complete!", 1.0, true, false};
      }
      // A run stops at walls and on top of anything interesting.
      if (!run || (!state_.item_taken && state_.agent == state_.item)) break;
    }
    if (moved == 0) return {"You cannot go that way.\n\n" + render_grid(state_), 0.0, false, false};
    return {render_grid(state_), 0.0, false, false};
  }

  bool goal_reached() const {
    return spec_->verb.empty() && state_.agent == state_.item;
  }

  StepOutcome pickup() {
    if (spec_->verb.empty() || state_.item_taken || !(state_.agent == state_.item))
      return {"There is nothing here to pick up.\n\n" + render_grid(state_), 0.0, false, false};
    state_.item_taken = true;
    state_.holding = true;
    return {"You pick up the " + spec_->item_name + ".\n\n" + render_grid(state_), 0.0, false,
            false};
  }

  StepOutcome apply_verb(const std::string& verb) {
    if (!state_.holding) {
      const std::string label = verb == "puton" ? "put on" : verb;
      return {"You have nothing to " + label + ".\n\n" + render_grid(state_), 0.0, false, false};
    }
    if (verb == spec_->verb) {
      return {"You " + spec_->verb_label + " the " + spec_->item_name + ". Task complete!", 1.0,
              true, false};
    }
    return {"Nothing happens.\n\n" + render_grid(state_), 0.0, false, false};
  }

  const VerbgridSpec* spec_;
  GridState state_;
};

class VerbgridFamily final : public TaskFamily {
 public:
  explicit VerbgridFamily(const VerbgridSpec& spec)
      : spec_(&spec), id_("verbgrid-" + spec.name) {}

  const std::string& family_id() const override { return id_; }

  std::string description() const override {
    if (spec_->verb.empty()) {
      std::string d = "Reach the stairs on a 5x5 grid";
      if (spec_->dark) d += " with visibility limited to adjacent tiles";
      return d + ".";
    }
    return "Find the " + spec_->item_name + " on a 5x5 grid, pick it up, and " +
           spec_->verb_label + " it.";
  }

  std::vector<std::string> curated_actions() const override { return curated_grid_actions(); }
  MetaSplit meta_split() const override { return spec_->split; }
  bool grid_style() const override { return true; }

  ResetResult reset(const Task& task, unsigned step_limit) const override {
    require_own_task(task);
    GridState state;
    state.agent = {param_int(task, "agent_r"), param_int(task, "agent_c")};
    state.item = {param_int(task, "item_r"), param_int(task, "item_c")};
    state.item_glyph = spec_->glyph;
    state.dark = spec_->dark;
    auto env = std::make_unique<VerbgridEnv>(task, step_limit, *spec_, state);
    std::string obs = env->initial_observation();
    return {std::move(env), std::move(obs)};
  }

 protected:
  std::map<std::string, std::string> generate_params(std::uint64_t seed) const override {
    SeededRng rng(splitmix64(seed) ^ fnv1a64(id_));
    const auto cell = [](std::uint64_t n) { return Pos{static_cast<int>(n / kGridSize),
                                                       static_cast<int>(n % kGridSize)}; };
    const Pos agent = cell(rng.below(kGridSize * kGridSize));
    Pos item = agent;
    while (item == agent) item = cell(rng.below(kGridSize * kGridSize));
    return {
        {"agent_r", std::to_string(agent.r)},
        {"agent_c", std::to_string(agent.c)},
        {"item_r", std::to_string(item.r)},
        {"item_c", std::to_string(item.c)},
    };
  }

 private:
  static int param_int(const Task& task, const std::string& key) {
    const auto it = task.params.find(key);
    if (it == task.params.end())
      throw ConfigError("verbgrid task missing param: " + key);
    return std::stoi(it->second);
  }

  const VerbgridSpec* spec_;
  std::string id_;
};

inline std::vector<FamilyPtr> make_verbgrid_families() {
  std::vector<FamilyPtr> families;
  for (const VerbgridSpec& spec : verbgrid_specs())
    families.push_back(std::make_shared<VerbgridFamily>(spec));
  return families;
}

}  // namespace ictforge::envkit::verbgrid
