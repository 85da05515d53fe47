#pragma once

// Wire bridge: exposes a remote environment server as a TaskFamily so real
// external benchmarks can drive the same loop as the built-in families.
// Protocol (JSON over HTTP):
//   POST /reset {"family_id","seed","params"}
//     -> {"observation","available_actions":[...]}
//        plus an optional "episode_id" echoed back on every step
//   POST /step {"episode_id","action"}
//     -> {"observation","reward","done","truncated","available_actions":[...]}
// Transport failures and timeouts surface as BridgeError; batch runners
// convert those into failed trajectories rather than aborting.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ictforge/common.hpp"
#include "ictforge/envkit.hpp"

namespace ictforge::envkit::bridge {

struct BridgeOptions {
  std::string base_url;                 // e.g. "http://127.0.0.1:9000"
  std::string family_id = "bridge";     // as announced to the remote server
  int timeout_s = 60;                   // per call
  bool seeded_reset = false;            // remote guarantees seed-deterministic episodes
  bool grid_style = false;
  double success_threshold = 1.0;
  MetaSplit meta_split = MetaSplit::meta_train;
  std::vector<std::string> curated_actions = {"look"};  // static fallback vocabulary
};

namespace detail {

inline nlohmann::json post_json(const BridgeOptions& options, const std::string& path,
                                const nlohmann::json& payload) {
  httplib::Client http(options.base_url);
  http.set_connection_timeout(options.timeout_s, 0);
  http.set_read_timeout(options.timeout_s, 0);
  httplib::Result res = http.Post(path, payload.dump(), "application/json");
  if (!res)
    throw BridgeError("bridge: " + path + " transport failure against " + options.base_url +
                      " (" + httplib::to_string(res.error()) + ")");
  if (res->status != 200)
    throw BridgeError("bridge: " + path + " returned HTTP " + std::to_string(res->status) +
                      ": " + res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BridgeError(std::string("bridge: ") + path + " returned invalid JSON: " + e.what());
  }
}

inline std::string require_string(const nlohmann::json& j, const char* key,
                                  const char* context) {
  if (!j.contains(key) || !j[key].is_string())
    throw BridgeError(std::string("bridge: ") + context + " reply missing string field '" +
                      key + "'");
  return j[key].get<std::string>();
}

inline std::vector<std::string> read_actions(const nlohmann::json& j, const char* context) {
  if (!j.contains("available_actions") || !j["available_actions"].is_array())
    throw BridgeError(std::string("bridge: ") + context +
                      " reply missing array field 'available_actions'");
  return j["available_actions"].get<std::vector<std::string>>();
}

}  // namespace detail

class BridgeEnv final : public Environment {
 public:
  BridgeEnv(Task task, unsigned step_limit, BridgeOptions options, std::string episode_id,
            std::vector<std::string> actions)
      : Environment(std::move(task), step_limit),
        options_(std::move(options)),
        episode_id_(std::move(episode_id)),
        actions_(std::move(actions)) {}

  std::vector<std::string> available_actions() const override {
    return actions_.empty() ? options_.curated_actions : actions_;
  }

  std::unique_ptr<Environment> clone() const override {
    throw ContractViolation("bridge: remote episodes cannot be cloned");
  }

  std::string state_signature() const override {
    return "remote:" + episode_id_ + ":" + std::to_string(step_count());
  }

 private:
  StepOutcome apply(const std::string& action) override {
    const nlohmann::json reply = detail::post_json(
        options_, "/step", {{"episode_id", episode_id_}, {"action", action}});
    StepOutcome outcome;
    outcome.observation = detail::require_string(reply, "observation", "/step");
    if (!reply.contains("reward") || !reply["reward"].is_number())
      throw BridgeError("bridge: /step reply missing numeric field 'reward'");
    outcome.reward = reply["reward"].get<double>();
    outcome.done = reply.value("done", false);
    outcome.truncated = reply.value("truncated", false);
    actions_ = detail::read_actions(reply, "/step");
    return outcome;
  }

  BridgeOptions options_;
  std::string episode_id_;
  std::vector<std::string> actions_;
};

class BridgeFamily final : public TaskFamily {
 public:
  explicit BridgeFamily(BridgeOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw ConfigError("bridge: base_url is required");
  }

  const std::string& family_id() const override { return options_.family_id; }
  std::string description() const override {
    return "Remote environment served at " + options_.base_url;
  }
  double success_threshold() const override { return options_.success_threshold; }
  std::vector<std::string> curated_actions() const override { return options_.curated_actions; }
  MetaSplit meta_split() const override { return options_.meta_split; }
  bool grid_style() const override { return options_.grid_style; }
  bool replayable() const override { return options_.seeded_reset; }

  ResetResult reset(const Task& task, unsigned step_limit) const override {
    require_own_task(task);
    const nlohmann::json reply = detail::post_json(options_, "/reset",
                                                   {{"family_id", task.family_id},
                                                    {"seed", task.instance_seed},
                                                    {"params", task.params}});
    std::string observation = detail::require_string(reply, "observation", "/reset");
    std::vector<std::string> actions = detail::read_actions(reply, "/reset");
    // Servers that track sessions return an episode id; stateless ones may
    // omit it, in which case steps carry an empty id.
    const std::string episode_id = reply.value("episode_id", "");
    auto env = std::make_unique<BridgeEnv>(task, step_limit, options_, episode_id,
                                           std::move(actions));
    return {std::move(env), std::move(observation)};
  }

 protected:
  std::map<std::string, std::string> generate_params(std::uint64_t) const override {
    return {};  // the remote owns the seed -> instance mapping
  }

 private:
  BridgeOptions options_;
};

inline FamilyPtr bridge_connect(BridgeOptions options) {
  return std::make_shared<BridgeFamily>(std::move(options));
}

}  // namespace ictforge::envkit::bridge
