// Deterministic reflection-request fixture shared by the golden generator and
// the reflector tests: one successful episode and one truncated episode, built
// entirely by hand so the rendered request is stable byte for byte.
#pragma once

#include <ictforge/core.hpp>

#include <string>
#include <utility>
#include <vector>

namespace testsupport {

inline ictforge::core::SystemPrompt fixture_prev_prompt() {
  return ictforge::core::make_system_prompt(
      "You are an agent in a grid world. Complete your task efficiently.",
      ictforge::core::PromptOrigin::initial, 0, "fixture");
}

inline ictforge::core::MetaObservation fixture_meta_observation() {
  using namespace ictforge::core;

  Task t1;
  t1.family_id = "verbgrid-read";
  t1.instance_seed = 11;
  t1.split = Split::train;
  t1.params = {{"agent_r", "0"}, {"agent_c", "0"}, {"item_r", "0"}, {"item_c", "2"}};

  TrajectoryBuilder good(t1);
  good.add_step({"Hello Agent, welcome to the grid world! Explore and reach your goal.\n"
                 "\n"
                 "@.?..\n"
                 ".....\n"
                 ".....\n"
                 ".....\n"
                 ".....",
                 {"step e", "step w", "pickup"},
                 std::string("the scroll is two tiles east"),
                 "step e",
                 0.0});
  good.add_step({"You step e.\n"
                 "\n"
                 ".@?..\n"
                 ".....\n"
                 ".....\n"
                 ".....\n"
                 ".....",
                 {"step e", "step w", "pickup"},
                 std::string("keep going"),
                 "step e",
                 0.0});
  good.add_step({"You step e.\n"
                 "\n"
                 "..@..\n"
                 ".....\n"
                 ".....\n"
                 ".....\n"
                 ".....",
                 {"step e", "step w", "pickup", "read"},
                 std::string("standing on the scroll now"),
                 "pickup",
                 0.0});
  good.add_step({"You pick up the scroll.",
                 {"step e", "step w", "read"},
                 std::string("read it to finish"),
                 "read",
                 1.0});
  const Trajectory successful = good.finalize(/*truncated=*/false);

  Task t2;
  t2.family_id = "verbgrid-read";
  t2.instance_seed = 12;
  t2.split = Split::train;
  t2.params = {{"agent_r", "4"}, {"agent_c", "4"}, {"item_r", "0"}, {"item_c", "0"}};

  TrajectoryBuilder bad(t2);
  bad.add_step({"Hello Agent, welcome to the grid world! Explore and reach your goal.\n"
                "\n"
                "?....\n"
                ".....\n"
                ".....\n"
                ".....\n"
                "....@",
                {"step n", "step w", "pickup"},
                std::nullopt,
                "step s",
                0.0});
  bad.add_step({"You cannot go that way.",
                {"step n", "step w", "pickup"},
                std::string("try another direction"),
                "step s",
                0.0});
  const Trajectory truncated = bad.finalize(/*truncated=*/true);

  return make_meta_observation({successful, truncated}, {t1, t2},
                               fixture_prev_prompt().prompt_id);
}

}  // namespace testsupport
