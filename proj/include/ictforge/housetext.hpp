#pragma once

// housetext: text-adventure households with a fixed floor plan of named
// receptacles. Each task hides a target object (plus distractors) and asks
// the agent to deliver it somewhere, optionally after processing it at an
// appliance (cleaning, heating, cooling) or showing it to the desk lamp.
// Actions are contextual: the available list depends on where the agent is
// and what is visible there.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ictforge/common.hpp"
#include "ictforge/envkit.hpp"

namespace ictforge::envkit::housetext {

// -------------------------------------------------------------------------
// Floor plan
// -------------------------------------------------------------------------

struct Receptacle {
  std::string id;       // "cabinet 1"
  bool closable = false;  // has a door that starts closed
  bool surface = false;   // contents rendered "On the ..." instead of "In the ..."
};

inline const std::vector<Receptacle>& floor_plan() {
  static const std::vector<Receptacle> plan = {
      {"cabinet 1", true, false},   {"cabinet 2", true, false},
      {"countertop 1", false, true}, {"desklamp 1", false, true},
      {"drawer 1", true, false},    {"fridge 1", true, false},
      {"garbagecan 1", false, false}, {"microwave 1", true, false},
      {"sidetable 1", false, true}, {"sinkbasin 1", false, false},
  };
  return plan;
}

inline const Receptacle* find_receptacle(const std::string& id) {
  for (const Receptacle& r : floor_plan())
    if (r.id == id) return &r;
  return nullptr;
}

/// Receptacles a target object may spawn in.
inline const std::vector<std::string>& spawn_sites() {
  static const std::vector<std::string> sites = {
      "cabinet 1", "cabinet 2", "drawer 1", "countertop 1", "sidetable 1", "fridge 1",
  };
  return sites;
}

/// Receptacles a delivery task may point at.
inline const std::vector<std::string>& delivery_sites() {
  static const std::vector<std::string> sites = {"sidetable 1", "countertop 1"};
  return sites;
}

inline const std::vector<std::string>& target_object_types() {
  static const std::vector<std::string> types = {
      "spoon", "mug", "apple", "potato", "plate", "book", "cup", "egg",
  };
  return types;
}

inline const std::vector<std::string>& distractor_object_types() {
  static const std::vector<std::string> types = {
      "peppershaker", "fork", "sponge", "candle",
  };
  return types;
}

// -------------------------------------------------------------------------
// Task kinds
// -------------------------------------------------------------------------

enum class Kind { pick_and_place, examine, clean, heat, cool, pick_two };

struct HousetextSpec {
  std::string name;  // "pick_and_place", ...
  Kind kind = Kind::pick_and_place;
  MetaSplit split = MetaSplit::meta_train;
};

inline const std::vector<HousetextSpec>& housetext_specs() {
  static const std::vector<HousetextSpec> specs = {
      {"pick_and_place", Kind::pick_and_place, MetaSplit::meta_train},
      {"examine", Kind::examine, MetaSplit::meta_train},
      {"clean", Kind::clean, MetaSplit::meta_train},
      {"heat", Kind::heat, MetaSplit::meta_train},
      {"cool", Kind::cool, MetaSplit::meta_test},
      {"pick_two", Kind::pick_two, MetaSplit::meta_test},
  };
  return specs;
}

/// The appliance that performs a processing verb, or "" for non-processing kinds.
inline std::string appliance_for(Kind kind) {
  switch (kind) {
    case Kind::clean: return "sinkbasin 1";
    case Kind::heat: return "microwave 1";
    case Kind::cool: return "fridge 1";
    default: return "";
  }
}

inline std::string process_verb(Kind kind) {
  switch (kind) {
    case Kind::clean: return "clean";
    case Kind::heat: return "heat";
    case Kind::cool: return "cool";
    default: return "";
  }
}

// -------------------------------------------------------------------------
// Episode state
// -------------------------------------------------------------------------

inline constexpr const char* kInventory = "inventory";
inline constexpr const char* kMiddle = "middle";

struct HouseObject {
  std::string name;  // "spoon 1"
  std::string type;  // "spoon"
  std::string loc;   // receptacle id or kInventory
  bool cleaned = false;
  bool hot = false;
  bool cool = false;
};

struct HouseState {
  std::string at = kMiddle;         // current location
  std::set<std::string> open;       // open closable receptacles
  std::vector<HouseObject> objects;
};

/// Everything the scripted policy is allowed to know about a task up front.
struct HousetextGoal {
  Kind kind = Kind::pick_and_place;
  std::string object_type;  // what to fetch
  std::string target;       // delivery receptacle ("desklamp 1" for examine)
  unsigned count = 1;       // instances required at the target
};

// -------------------------------------------------------------------------
// Rendering helpers
// -------------------------------------------------------------------------

inline std::string room_description() {
  std::string s = "You are in the middle of a room. Looking quickly around you, you see";
  const auto& plan = floor_plan();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i == 0) s += " a ";
    else if (i + 1 == plan.size()) s += ", and a ";
    else s += ", a ";
    s += plan[i].id;
  }
  return s + ".";
}

inline std::string task_sentence(const HousetextGoal& goal) {
  // Tasks name the receptacle class ("sidetable"), not the instance.
  const std::string place = goal.target.substr(0, goal.target.find(' '));
  switch (goal.kind) {
    case Kind::pick_and_place: return "put a " + goal.object_type + " in " + place;
    case Kind::examine: return "examine the " + goal.object_type + " under the desklamp";
    case Kind::clean: return "put a clean " + goal.object_type + " in " + place;
    case Kind::heat: return "put a hot " + goal.object_type + " in " + place;
    case Kind::cool: return "put a cool " + goal.object_type + " in " + place;
    case Kind::pick_two: return "put two " + goal.object_type + " in " + place;
  }
  return "";
}

// -------------------------------------------------------------------------
// Environment
// -------------------------------------------------------------------------

class HousetextEnv final : public Environment {
 public:
  HousetextEnv(Task task, unsigned step_limit, HousetextGoal goal, HouseState state)
      : Environment(std::move(task), step_limit),
        goal_(std::move(goal)),
        state_(std::move(state)) {}

  std::vector<std::string> available_actions() const override {
    std::vector<std::string> actions = {"inventory", "look"};
    const Receptacle* here = find_receptacle(state_.at);
    for (const Receptacle& r : floor_plan())
      if (r.id != state_.at) actions.push_back("go to " + r.id);
    if (here != nullptr) {
      actions.push_back("examine " + here->id);
      if (here->closable)
        actions.push_back((is_open(here->id) ? "close " : "open ") + here->id);
      const HouseObject* held = holding();
      if (held == nullptr) {
        for (const HouseObject* o : visible_here())
          actions.push_back("take " + o->name + " from " + here->id);
      } else {
        if (!here->closable || is_open(here->id))
          actions.push_back("put " + held->name + " in/on " + here->id);
        if (state_.at == "sinkbasin 1")
          actions.push_back("clean " + held->name + " with sinkbasin 1");
        if (state_.at == "microwave 1" && is_open("microwave 1"))
          actions.push_back("heat " + held->name + " with microwave 1");
        if (state_.at == "fridge 1" && is_open("fridge 1"))
          actions.push_back("cool " + held->name + " with fridge 1");
      }
      if (state_.at == "desklamp 1") actions.push_back("use desklamp 1");
    }
    std::sort(actions.begin(), actions.end());
    return actions;
  }

  std::unique_ptr<Environment> clone() const override {
    return std::unique_ptr<Environment>(new HousetextEnv(*this));
  }

  std::string state_signature() const override {
    std::string sig = "at=" + state_.at + ";open=";
    for (const std::string& r : state_.open) sig += r + ",";
    sig += ";obj=";
    for (const HouseObject& o : state_.objects) {
      sig += o.name + "@" + o.loc;
      if (o.cleaned) sig += "+c";
      if (o.hot) sig += "+h";
      if (o.cool) sig += "+k";
      sig += "|";
    }
    return sig;
  }

  std::string initial_observation() const {
    return room_description() + "\nYour task is to: " + task_sentence(goal_) + ".";
  }

  // Observable accessors for scripted policies: location, door state, what is
  // currently in hand, and what is visible at the current location.
  const HousetextGoal& goal() const { return goal_; }
  const std::string& at() const { return state_.at; }
  bool is_open(const std::string& recep) const { return state_.open.count(recep) > 0; }
  const HouseObject* holding() const {
    for (const HouseObject& o : state_.objects)
      if (o.loc == kInventory) return &o;
    return nullptr;
  }
  std::vector<const HouseObject*> visible_here() const {
    std::vector<const HouseObject*> out;
    const Receptacle* here = find_receptacle(state_.at);
    if (here == nullptr) return out;
    if (here->closable && !is_open(here->id)) return out;
    for (const HouseObject& o : state_.objects)
      if (o.loc == here->id) out.push_back(&o);
    return out;
  }

 private:
  StepOutcome apply(const std::string& action) override {
    const auto actions = available_actions();
    if (std::find(actions.begin(), actions.end(), action) == actions.end())
      return {"Invalid action.", 0.0, false, false};

    if (action == "look") return note(describe_location());
    if (action == "inventory") {
      const HouseObject* held = holding();
      return note(held != nullptr ? "You are carrying: a " + held->name + "."
                                  : "You are not carrying anything.");
    }
    if (action.rfind("go to ", 0) == 0) {
      state_.at = action.substr(6);
      return note("You arrive at " + state_.at + ". " + describe_location());
    }
    if (action.rfind("open ", 0) == 0) {
      state_.open.insert(state_.at);
      return note("You open the " + state_.at + ". The " + state_.at + " is open. " +
                  contents_sentence("In it"));
    }
    if (action.rfind("close ", 0) == 0) {
      state_.open.erase(state_.at);
      return note("You close the " + state_.at + ".");
    }
    if (action.rfind("examine ", 0) == 0) return note(describe_location());
    if (action.rfind("take ", 0) == 0) return take(action);
    if (action.rfind("put ", 0) == 0) return put();
    if (action.rfind("clean ", 0) == 0) return process(Kind::clean);
    if (action.rfind("heat ", 0) == 0) return process(Kind::heat);
    if (action.rfind("cool ", 0) == 0) return process(Kind::cool);
    if (action == "use desklamp 1") return use_lamp();
    return {"Invalid action.", 0.0, false, false};
  }

  static StepOutcome note(std::string text) { return {std::move(text), 0.0, false, false}; }

  StepOutcome take(const std::string& action) {
    // "take {name} from {recep}"
    const std::size_t from = action.rfind(" from ");
    const std::string name = action.substr(5, from - 5);
    for (HouseObject& o : state_.objects) {
      if (o.name == name && o.loc == state_.at) {
        o.loc = kInventory;
        return note("You pick up the " + name + " from the " + state_.at + ".");
      }
    }
    return {"Invalid action.", 0.0, false, false};
  }

  StepOutcome put() {
    HouseObject* held = mutable_holding();
    held->loc = state_.at;
    StepOutcome out = note("You put the " + held->name + " in/on the " + state_.at + ".");
    if (goal_satisfied()) {
      out.reward = 1.0;
      out.done = true;
    }
    return out;
  }

  StepOutcome process(Kind kind) {
    HouseObject* held = mutable_holding();
    switch (kind) {
      case Kind::clean: held->cleaned = true; break;
      case Kind::heat: held->hot = true; held->cool = false; break;
      case Kind::cool: held->cool = true; held->hot = false; break;
      default: break;
    }
    return note("You " + process_verb(kind) + " the " + held->name + " using the " +
                appliance_for(kind) + ".");
  }

  StepOutcome use_lamp() {
    StepOutcome out = note("You turn on the desklamp 1.");
    if (goal_.kind == Kind::examine) {
      const HouseObject* held = holding();
      if (held != nullptr && held->type == goal_.object_type) {
        out.reward = 1.0;
        out.done = true;
      }
    }
    return out;
  }

  bool goal_satisfied() const {
    unsigned delivered = 0;
    for (const HouseObject& o : state_.objects) {
      if (o.type != goal_.object_type || o.loc != goal_.target) continue;
      switch (goal_.kind) {
        case Kind::clean: if (!o.cleaned) continue; break;
        case Kind::heat: if (!o.hot) continue; break;
        case Kind::cool: if (!o.cool) continue; break;
        default: break;
      }
      ++delivered;
    }
    return goal_.kind != Kind::examine && delivered >= goal_.count;
  }

  HouseObject* mutable_holding() {
    for (HouseObject& o : state_.objects)
      if (o.loc == kInventory) return &o;
    throw ContractViolation("housetext: action requires a held object");
  }

  std::string describe_location() const {
    const Receptacle* here = find_receptacle(state_.at);
    if (here == nullptr) return room_description();
    if (here->closable && !is_open(here->id)) return "The " + here->id + " is closed.";
    return contents_sentence((here->surface ? "On the " : "In the ") + here->id);
  }

  /// "{prefix}, you see a mug 1, and a fork 1." / "{prefix}, you see nothing."
  std::string contents_sentence(const std::string& prefix) const {
    std::vector<const HouseObject*> seen = visible_here();
    if (seen.empty()) return prefix + ", you see nothing.";
    std::string s = prefix + ", you see";
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (i == 0) s += " a ";
      else if (i + 1 == seen.size()) s += ", and a ";
      else s += ", a ";
      s += seen[i]->name;
    }
    return s + ".";
  }

  HousetextGoal goal_;
  HouseState state_;
};

// -------------------------------------------------------------------------
// Family
// -------------------------------------------------------------------------

class HousetextFamily final : public TaskFamily {
 public:
  explicit HousetextFamily(const HousetextSpec& spec)
      : spec_(&spec), id_("housetext-" + spec.name) {}

  const std::string& family_id() const override { return id_; }

  std::string description() const override {
    return "Household delivery task: " + task_sentence(HousetextGoal{
               spec_->kind, "{object}", "{target} 1", spec_->kind == Kind::pick_two ? 2u : 1u}) +
           ".";
  }

  /// The location-independent action vocabulary. Object-directed actions
  /// (take/put/clean/heat/cool) are instantiated per state by the episode.
  std::vector<std::string> curated_actions() const override {
    std::vector<std::string> actions = {"inventory", "look", "use desklamp 1"};
    for (const Receptacle& r : floor_plan()) {
      actions.push_back("go to " + r.id);
      actions.push_back("examine " + r.id);
      if (r.closable) {
        actions.push_back("open " + r.id);
        actions.push_back("close " + r.id);
      }
    }
    return actions;
  }

  MetaSplit meta_split() const override { return spec_->split; }
  bool grid_style() const override { return false; }

  ResetResult reset(const Task& task, unsigned step_limit) const override {
    require_own_task(task);
    HousetextGoal goal;
    goal.kind = spec_->kind;
    goal.object_type = param(task, "object");
    goal.target = param(task, "target");
    goal.count = spec_->kind == Kind::pick_two ? 2 : 1;

    HouseState state;
    state.objects.push_back({goal.object_type + " 1", goal.object_type,
                             param(task, "object_loc")});
    if (spec_->kind == Kind::pick_two)
      state.objects.push_back({goal.object_type + " 2", goal.object_type,
                               param(task, "object2_loc")});
    state.objects.push_back({param(task, "d1") + " 1", param(task, "d1"),
                             param(task, "d1_loc")});
    state.objects.push_back({param(task, "d2") + " 1", param(task, "d2"),
                             param(task, "d2_loc")});

    auto env = std::make_unique<HousetextEnv>(task, step_limit, goal, std::move(state));
    std::string obs = env->initial_observation();
    return {std::move(env), std::move(obs)};
  }

 protected:
  std::map<std::string, std::string> generate_params(std::uint64_t seed) const override {
    SeededRng rng(splitmix64(seed) ^ fnv1a64(id_));
    std::map<std::string, std::string> p;
    p["object"] = rng.pick(target_object_types());
    p["object_loc"] = rng.pick(spawn_sites());
    if (spec_->kind == Kind::pick_two) p["object2_loc"] = rng.pick(spawn_sites());
    p["target"] = spec_->kind == Kind::examine ? "desklamp 1" : rng.pick(delivery_sites());
    p["d1"] = rng.pick(distractor_object_types());
    p["d1_loc"] = rng.pick(spawn_sites());
    std::string d2 = rng.pick(distractor_object_types());
    while (d2 == p["d1"]) d2 = rng.pick(distractor_object_types());
    p["d2"] = d2;
    p["d2_loc"] = rng.pick(spawn_sites());
    return p;
  }

 private:
  static std::string param(const Task& task, const std::string& key) {
    const auto it = task.params.find(key);
    if (it == task.params.end())
      throw ConfigError("housetext task missing param: " + key);
    return it->second;
  }

  const HousetextSpec* spec_;
  std::string id_;
};

inline std::vector<FamilyPtr> make_housetext_families() {
  std::vector<FamilyPtr> families;
  for (const HousetextSpec& spec : housetext_specs())
    families.push_back(std::make_shared<HousetextFamily>(spec));
  return families;
}

}  // namespace ictforge::envkit::housetext
