#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ictforge/actors.hpp>
#include <ictforge/families.hpp>
#include <ictforge/reflectors.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "support/fixture_server.hpp"
#include "support/reflection_fixture.hpp"

using namespace ictforge;
using namespace ictforge::reflectors;
using nlohmann::json;

namespace {

std::string read_golden(const std::string& name) {
  const std::string path = std::string(ICTFORGE_GOLDEN_DIR) + "/" + name;
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file: " << path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

core::SystemPrompt prompt_of(const std::string& text) {
  return core::make_system_prompt(text, core::PromptOrigin::initial, 0, "test");
}

}  // namespace

// ---------------------------------------------------------------------------
// Request rendering (frozen templates)
// ---------------------------------------------------------------------------

TEST_CASE("the reflection request reproduces the frozen templates byte for byte") {
  const ReflectionRequest request = render_reflection_request(
      testsupport::fixture_prev_prompt(), testsupport::fixture_meta_observation());
  CHECK_EQ(request.system_text, read_golden("reflection_request_system.txt"));
  CHECK_EQ(request.user_text, read_golden("reflection_request_user.txt"));
}

TEST_CASE("the request embeds the previous prompt and every episode in order") {
  const core::SystemPrompt prev = prompt_of("UNIQUE-PREV-MARKER");
  const core::MetaObservation obs = testsupport::fixture_meta_observation();
  const ReflectionRequest request = render_reflection_request(prev, obs);

  CHECK(request.user_text.find("UNIQUE-PREV-MARKER") != std::string::npos);
  const std::size_t e1 = request.user_text.find("=== Episode 1 ===");
  const std::size_t e2 = request.user_text.find("=== Episode 2 ===");
  REQUIRE(e1 != std::string::npos);
  REQUIRE(e2 != std::string::npos);
  CHECK(e1 < e2);
  // Each episode body is the canonical pretty print, embedded verbatim.
  for (const core::Trajectory& t : obs.trajectories)
    CHECK(request.user_text.find(core::trajectory_pretty_print(t)) != std::string::npos);
  // An empty batch still renders the frame.
  const ReflectionRequest empty = render_reflection_request(
      prev, core::make_meta_observation({}, {}, prev.prompt_id));
  CHECK(empty.user_text.find("## Episode Trajectories") != std::string::npos);
  CHECK(empty.user_text.find("=== Episode") == std::string::npos);
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

TEST_CASE("parse_reflection handles both documented reply shapes") {
  const core::SystemPrompt fallback = prompt_of("old prompt");

  SUBCASE("section style") {
    const Reflection r = parse_reflection(
        "ANALYSIS:\nThe agent never read the scroll.\n\n"
        "IMPROVED PROMPT:\nYou are an agent. After picking up an item, read it.",
        fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.analysis, "The agent never read the scroll.");
    CHECK_EQ(r.improved_prompt.text, "You are an agent. After picking up an item, read it.");
    CHECK_EQ(r.improved_prompt.origin, core::PromptOrigin::reflector);
  }

  SUBCASE("banner style") {
    const Reflection r = parse_reflection(
        "Looking at the episodes, exploration stalled.\n"
        "=== IMPROVED PROMPT ===\nExplore systematically.",
        fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.improved_prompt.text, "Explore systematically.");
    CHECK_EQ(r.analysis, "Looking at the episodes, exploration stalled.");
  }

  SUBCASE("without an ANALYSIS header the whole preamble is the analysis") {
    const Reflection r = parse_reflection("some musings\nIMPROVED PROMPT:\nnew text", fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.analysis, "some musings");
    CHECK_EQ(r.improved_prompt.text, "new text");
  }

  SUBCASE("the last marker wins when a prompt quotes an earlier one") {
    const Reflection r = parse_reflection(
        "IMPROVED PROMPT:\nquoted draft\n\nOn reflection, a better version:\n"
        "IMPROVED PROMPT:\nfinal version",
        fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.improved_prompt.text, "final version");
  }

  SUBCASE("a trailing banner beats an earlier section marker") {
    const Reflection r = parse_reflection(
        "IMPROVED PROMPT:\ndraft\n=== IMPROVED PROMPT ===\nbanner version", fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.improved_prompt.text, "banner version");
  }

  SUBCASE("a section marker after the banner takes the tail") {
    const Reflection r = parse_reflection(
        "=== IMPROVED PROMPT ===\nearly\nIMPROVED PROMPT: late version", fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.improved_prompt.text, "late version");
  }

  SUBCASE("the improved text is trimmed") {
    const Reflection r = parse_reflection("IMPROVED PROMPT:\n\n   padded text \n\n", fallback);
    CHECK(r.parse_ok);
    CHECK_EQ(r.improved_prompt.text, "padded text");
  }
}

TEST_CASE("parse_reflection degrades to the fallback prompt, never throws") {
  const core::SystemPrompt fallback = prompt_of("old prompt");

  SUBCASE("no marker at all") {
    const Reflection r = parse_reflection("I could not decide on a prompt.", fallback);
    CHECK_FALSE(r.parse_ok);
    CHECK_EQ(r.improved_prompt, fallback);  // verbatim, identity included
    CHECK_EQ(r.analysis, "I could not decide on a prompt.");
    CHECK_EQ(r.raw_response, "I could not decide on a prompt.");
  }

  SUBCASE("marker with an empty body") {
    const Reflection r = parse_reflection("ANALYSIS: x\n\nIMPROVED PROMPT:\n   \n", fallback);
    CHECK_FALSE(r.parse_ok);
    CHECK_EQ(r.improved_prompt, fallback);
  }

  SUBCASE("empty response") {
    const Reflection r = parse_reflection("", fallback);
    CHECK_FALSE(r.parse_ok);
    CHECK_EQ(r.improved_prompt, fallback);
    CHECK_EQ(r.analysis, "");
  }
}

// ---------------------------------------------------------------------------
// Rule-based reflection
// ---------------------------------------------------------------------------

namespace {

/// A one-rule table whose predicate always fires.
RuleTable always(const std::string& id, const std::string& phrase) {
  return {{id, [](const core::MetaObservation&) { return true; }, phrase}};
}

}  // namespace

TEST_CASE("rule_reflect appends fired phrases once and reports what fired") {
  const core::MetaObservation obs = testsupport::fixture_meta_observation();
  const core::SystemPrompt prev = prompt_of("Base prompt.");

  SUBCASE("a fired rule appends its phrase on a new line") {
    const Reflection r = rule_reflect(always("r1", "Try harder."), prev, obs);
    CHECK(r.parse_ok);
    CHECK_EQ(r.improved_prompt.text, "Base prompt.\nTry harder.");
    CHECK_EQ(r.improved_prompt.origin, core::PromptOrigin::rule);
    CHECK_EQ(r.analysis, "Fired rules: r1");
  }

  SUBCASE("an already-present phrase is not appended again, case-insensitively") {
    const core::SystemPrompt has = prompt_of("Base prompt. TRY HARDER.");
    const Reflection r = rule_reflect(always("r1", "Try harder."), has, obs);
    CHECK_EQ(r.improved_prompt.text, has.text);
    CHECK_EQ(r.analysis, "Fired rules: r1");  // fired, but nothing to add
  }

  SUBCASE("idempotence: reflecting the improved prompt changes nothing") {
    const RuleTable rules = always("r1", "Try harder.");
    const Reflection once = rule_reflect(rules, prev, obs);
    const Reflection twice = rule_reflect(rules, once.improved_prompt, obs);
    CHECK_EQ(twice.improved_prompt.text, once.improved_prompt.text);
  }

  SUBCASE("a silent table reports that nothing fired") {
    const RuleTable rules = {
        {"never", [](const core::MetaObservation&) { return false; }, "Unused."}};
    const Reflection r = rule_reflect(rules, prev, obs);
    CHECK_EQ(r.analysis, "No rules fired.");
    CHECK_EQ(r.improved_prompt.text, prev.text);
  }

  SUBCASE("multiple fired rules append in table order") {
    RuleTable rules;
    rules.push_back(always("a", "First hint.")[0]);
    rules.push_back(always("b", "Second hint.")[0]);
    const Reflection r = rule_reflect(rules, prev, obs);
    CHECK_EQ(r.improved_prompt.text, "Base prompt.\nFirst hint.\nSecond hint.");
    CHECK_EQ(r.analysis, "Fired rules: a, b");
  }

  SUBCASE("the synthesized raw response parses back to the same improved prompt") {
    const Reflection r = rule_reflect(always("r1", "Try harder."), prev, obs);
    const Reflection back = parse_reflection(r.raw_response, prev);
    CHECK(back.parse_ok);
    CHECK_EQ(back.improved_prompt.text, r.improved_prompt.text);
    CHECK_EQ(back.analysis, r.analysis);
  }
}

TEST_CASE("the stock rule tables match their families") {
  using envkit::find_family;

  const auto ids = [](const RuleTable& t) {
    std::vector<std::string> out;
    for (const Rule& r : t) out.push_back(r.id);
    return out;
  };

  CHECK_EQ(ids(default_rules_for(*find_family("verbgrid-read"))),
           std::vector<std::string>(
               {"verbgrid-read/apply-verb", "verbgrid-read/coverage"}));
  // navigate and dark have no verb to apply
  CHECK_EQ(ids(default_rules_for(*find_family("verbgrid-navigate"))),
           std::vector<std::string>({"verbgrid-navigate/coverage"}));
  CHECK_EQ(ids(default_rules_for(*find_family("verbgrid-dark"))),
           std::vector<std::string>({"verbgrid-dark/coverage"}));
  CHECK_EQ(ids(default_rules_for(*find_family("housetext-cool"))),
           std::vector<std::string>(
               {"housetext-cool/open-closed", "housetext-cool/check-fridge"}));

  // The union table deduplicates by id.
  const std::vector<envkit::FamilyPtr> fams = {
      find_family("verbgrid-read"), find_family("verbgrid-read"),
      find_family("housetext-cool")};
  CHECK_EQ(ids(default_rules_for(fams)),
           std::vector<std::string>({"verbgrid-read/apply-verb", "verbgrid-read/coverage",
                                     "housetext-cool/open-closed",
                                     "housetext-cool/check-fridge"}));
}

TEST_CASE("stock predicates react to failures, not successes") {
  // The shared fixture: one success (with pickup) and one truncated failure
  // (without pickup). The verb rule keys on failed-with-pickup, so it must
  // stay silent; the coverage rule keys on failed-without-pickup and fires.
  const core::MetaObservation obs = testsupport::fixture_meta_observation();
  const core::SystemPrompt prev = prompt_of("Base.");
  const RuleTable rules = default_rules_for(*envkit::find_family("verbgrid-read"));
  const Reflection r = rule_reflect(rules, prev, obs);
  CHECK_EQ(r.analysis, "Fired rules: verbgrid-read/coverage");

  // Clone the fixture with the successful episode marked failed: now a failed
  // trajectory contains "pickup" and the verb rule fires too.
  core::MetaObservation all_failed = obs;
  all_failed.trajectories[0].success = false;
  const Reflection r2 = rule_reflect(rules, prev, all_failed);
  CHECK_EQ(r2.analysis, "Fired rules: verbgrid-read/apply-verb, verbgrid-read/coverage");
  CHECK(r2.improved_prompt.text.find("After picking up an item, read it.") !=
        std::string::npos);
}

TEST_CASE("every stock phrase closes the loop through the directive parser") {
  for (const envkit::FamilyPtr& family : envkit::builtin_families()) {
    const std::string set = envkit::family_set_of(family->family_id());
    for (const Rule& rule : default_rules_for(*family)) {
      const core::SystemPrompt sp = prompt_of("You are an agent.\n" + rule.phrase);
      const actors::DirectiveSet parsed = actors::parse_directives(sp, set);
      CAPTURE(rule.id);
      REQUIRE_FALSE(parsed.tokens.empty());

      const std::string suffix = rule.id.substr(rule.id.find('/') + 1);
      if (suffix == "apply-verb") {
        const std::string verb =
            family->family_id().substr(family->family_id().find('-') + 1);
        CHECK(parsed.contains("apply-verb:" + verb));
      } else if (suffix == "coverage") {
        CHECK(parsed.contains("avoid-revisit"));
      } else if (suffix == "open-closed") {
        CHECK(parsed.contains("open-before-search"));
      } else if (suffix == "check-fridge") {
        CHECK(parsed.contains("check:fridge"));
      } else {
        FAIL("unexpected rule id: " << rule.id);
      }
    }
  }
}

TEST_CASE("reflector origins stamp provenance") {
  RuleReflector rule(RuleTable{});
  CHECK_EQ(rule.origin(), core::PromptOrigin::rule);

  gateway::GatewayConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  gateway::ChatClient client(cfg);
  LlmReflector llm(client, {});
  CHECK_EQ(llm.origin(), core::PromptOrigin::reflector);
}

// ---------------------------------------------------------------------------
// LLM reflector
// ---------------------------------------------------------------------------

TEST_CASE("the LLM reflector sends the rendered request and parses the reply") {
  testsupport::ChatFixture fixture([](const json&) {
    return std::string(
        "ANALYSIS:\nEpisode 2 wasted moves.\n\n"
        "IMPROVED PROMPT:\nYou are an agent. Explore systematically.");
  });
  gateway::GatewayConfig cfg;
  cfg.base_url = fixture.base_url();
  cfg.api_key_env = "ICTFORGE_TEST_ABSENT_KEY";
  cfg.backoff_base_ms = 1;
  gateway::ChatClient client(cfg);

  LlmReflector reflector(client, gateway::ChatOptions{"reflector-model", 0.3, 512});
  const core::SystemPrompt prev = testsupport::fixture_prev_prompt();
  const core::MetaObservation obs = testsupport::fixture_meta_observation();
  const Reflection r = reflector.reflect(prev, obs);

  CHECK(r.parse_ok);
  CHECK_EQ(r.analysis, "Episode 2 wasted moves.");
  CHECK_EQ(r.improved_prompt.text, "You are an agent. Explore systematically.");
  CHECK_EQ(r.improved_prompt.origin, core::PromptOrigin::reflector);

  // The wire request is exactly the rendered pair.
  const ReflectionRequest expect = render_reflection_request(prev, obs);
  const auto requests = fixture.requests();
  REQUIRE_EQ(requests.size(), 1);
  const json& messages = requests[0].at("messages");
  REQUIRE_EQ(messages.size(), 2);
  CHECK_EQ(messages[0].at("role"), "system");
  CHECK_EQ(messages[0].at("content"), expect.system_text);
  CHECK_EQ(messages[1].at("role"), "user");
  CHECK_EQ(messages[1].at("content"), expect.user_text);
  CHECK_EQ(requests[0].at("model"), "reflector-model");
}

TEST_CASE("a malformed LLM reply keeps the previous prompt") {
  testsupport::ChatFixture fixture(
      [](const json&) { return std::string("I have no improved prompt to offer."); });
  gateway::GatewayConfig cfg;
  cfg.base_url = fixture.base_url();
  cfg.api_key_env = "ICTFORGE_TEST_ABSENT_KEY";
  cfg.backoff_base_ms = 1;
  gateway::ChatClient client(cfg);

  LlmReflector reflector(client, {});
  const core::SystemPrompt prev = testsupport::fixture_prev_prompt();
  const Reflection r = reflector.reflect(prev, testsupport::fixture_meta_observation());
  CHECK_FALSE(r.parse_ok);
  CHECK_EQ(r.improved_prompt, prev);
}

TEST_CASE("a dead endpoint degrades to the previous prompt instead of throwing") {
  gateway::GatewayConfig cfg;
  cfg.base_url = testsupport::dead_endpoint();
  cfg.api_key_env = "ICTFORGE_TEST_ABSENT_KEY";
  cfg.max_retries = 0;
  cfg.backoff_base_ms = 1;
  // Sandboxed network stacks may swallow the RST; don't wait out the
  // production timeouts to learn the port is dead.
  cfg.connect_timeout_s = 1;
  cfg.read_timeout_s = 1;
  gateway::ChatClient client(cfg);

  LlmReflector reflector(client, {});
  const core::SystemPrompt prev = testsupport::fixture_prev_prompt();
  Reflection r;
  REQUIRE_NOTHROW(r = reflector.reflect(prev, testsupport::fixture_meta_observation()));
  CHECK_FALSE(r.parse_ok);
  CHECK_EQ(r.improved_prompt, prev);
  CHECK(r.analysis.find("unavailable") != std::string::npos);
}
