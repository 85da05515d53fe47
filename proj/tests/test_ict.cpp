#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ictforge/families.hpp>
#include <ictforge/ict.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

using namespace ictforge;
using namespace ictforge::ict;

namespace {

/// Emits a fixed sequence of prompt texts, recording every call; once the
/// sequence is exhausted it echoes the previous prompt.
class SequenceReflector final : public reflectors::Reflector {
 public:
  explicit SequenceReflector(std::vector<std::string> texts) : texts_(std::move(texts)) {}

  reflectors::Reflection reflect(const core::SystemPrompt& prev,
                                 const core::MetaObservation& obs) override {
    calls.emplace_back(prev, obs);
    reflectors::Reflection out;
    const std::string text = calls.size() <= texts_.size() ? texts_[calls.size() - 1] : prev.text;
    out.improved_prompt =
        core::make_system_prompt(text, core::PromptOrigin::reflector, 0, "seq");
    out.parse_ok = true;
    return out;
  }

  core::PromptOrigin origin() const override { return core::PromptOrigin::reflector; }

  std::vector<std::pair<core::SystemPrompt, core::MetaObservation>> calls;

 private:
  std::vector<std::string> texts_;
};

ICTConfig read_config(unsigned turns, unsigned k = 2) {
  const envkit::FamilyPtr read = envkit::find_family("verbgrid-read");
  ICTConfig cfg;
  cfg.meta.families = {read};
  cfg.meta.k = k;
  cfg.meta.validation_tasks = read->validation_tasks();
  cfg.meta.master_seed = 1234;
  cfg.turns = turns;
  cfg.initial_prompt = "You are an agent.";
  cfg.run_id = "r";
  return cfg;
}

constexpr const char* kReadHint = "You are an agent. After picking up an item, read it.";

}  // namespace

// ---------------------------------------------------------------------------
// Loop shape
// ---------------------------------------------------------------------------

TEST_CASE("one run records N+1 turns wired exactly as the loop prescribes") {
  const unsigned N = 3;
  ICTConfig cfg = read_config(N);
  reflectors::RuleReflector reflector(
      reflectors::default_rules_for(*envkit::find_family("verbgrid-read")));
  const core::ICTRunRecord record = run_ict(cfg, reflector);

  REQUIRE_EQ(record.turns.size(), N + 1);
  CHECK_EQ(record.run_id, "r");

  // Turn 0: the initial prompt, observed but not evaluated.
  const core::TurnEntry& t0 = record.turns[0];
  CHECK_EQ(t0.turn_index, 0);
  CHECK_EQ(t0.prompt.text, "You are an agent.");
  CHECK_EQ(t0.prompt.origin, core::PromptOrigin::initial);
  CHECK_EQ(t0.prompt.prompt_id, "r/sp0");
  CHECK_FALSE(t0.validation_score.has_value());
  CHECK_FALSE(t0.validation_success_rate.has_value());

  for (unsigned i = 0; i <= N; ++i) {
    const core::TurnEntry& t = record.turns[i];
    CHECK_EQ(t.turn_index, i);
    CHECK_EQ(t.prompt.prompt_id, "r/sp" + std::to_string(i));
    CHECK_EQ(t.prompt.turn_index, i);
    // Each observation was produced under that same turn's prompt.
    CHECK_EQ(t.obs.produced_under, t.prompt.prompt_id);
    CHECK_EQ(t.obs.batch_size(), cfg.meta.k);
    if (i >= 1) {
      CHECK_EQ(t.prompt.origin, core::PromptOrigin::rule);
      REQUIRE(t.validation_score.has_value());
      REQUIRE(t.validation_success_rate.has_value());
    }
  }

  // The rule fires on the first reflection and solves the family.
  CHECK(record.turns[1].prompt.text.find("read it") != std::string::npos);
  CHECK_EQ(*record.turns[1].validation_success_rate, doctest::Approx(1.0));
  CHECK_EQ(record.best_prompt_id, "r/sp1");
  CHECK_EQ(record.best_score, doctest::Approx(32.0));

  // A genuine run record survives serialization.
  CHECK(core::record_round_trip(record) == record);
}

TEST_CASE("the reflector runs exactly N times, once per recorded observation") {
  const unsigned N = 4;
  ICTConfig cfg = read_config(N);
  SequenceReflector reflector({});  // always echoes the previous prompt
  const core::ICTRunRecord record = run_ict(cfg, reflector);

  REQUIRE_EQ(reflector.calls.size(), N);
  for (unsigned i = 1; i <= N; ++i) {
    // Reflection i consumed prompt i-1 and observation i-1...
    CHECK_EQ(reflector.calls[i - 1].first, record.turns[i - 1].prompt);
    CHECK(reflector.calls[i - 1].second == record.turns[i - 1].obs);
  }
  // ...so the final observation was recorded but never reflected upon.
  for (const auto& [prev, obs] : reflector.calls)
    CHECK_FALSE(obs == record.turns[N].obs);
}

TEST_CASE("fresh batches: no train task repeats anywhere in the record") {
  ICTConfig cfg = read_config(5);
  SequenceReflector reflector({kReadHint});
  const core::ICTRunRecord record = run_ict(cfg, reflector);

  std::set<std::string> keys;
  std::size_t total = 0;
  for (const core::TurnEntry& t : record.turns) {
    for (const core::Task& task : t.obs.batch_tasks) {
      keys.insert(task.family_id + "#" + std::to_string(task.instance_seed));
      ++total;
    }
  }
  CHECK_EQ(total, cfg.meta.k * (cfg.turns + 1));
  CHECK_EQ(keys.size(), total);
}

// ---------------------------------------------------------------------------
// Best-prompt tracking
// ---------------------------------------------------------------------------

TEST_CASE("ties go to the earliest turn and later regressions never displace") {
  // Scores per turn: 32, 32, 0 — strict '>' keeps turn 1.
  ICTConfig cfg = read_config(3);
  SequenceReflector reflector({kReadHint,
                               "You are an agent! READ IT whenever you hold something.",
                               "You are an agent."});
  const core::ICTRunRecord record = run_ict(cfg, reflector);

  CHECK_EQ(*record.turns[1].validation_score, doctest::Approx(32.0));
  CHECK_EQ(*record.turns[2].validation_score, doctest::Approx(32.0));
  CHECK_EQ(*record.turns[3].validation_score, doctest::Approx(0.0));
  CHECK_EQ(record.best_prompt_id, "r/sp1");
  CHECK_EQ(record.best_score, doctest::Approx(32.0));

  const auto [sp, score] = best_prompt(record);
  CHECK_EQ(sp.prompt_id, "r/sp1");
  CHECK_EQ(sp.text, kReadHint);
  CHECK_EQ(score, doctest::Approx(32.0));
}

TEST_CASE("an initial evaluation is reporting-only and never seeds the best tracker") {
  // sp_0 already solves the family; every reflection echoes it, so turn 1
  // scores the same 32. The winner must still be turn 1, not turn 0.
  ICTConfig cfg = read_config(2);
  cfg.initial_prompt = kReadHint;
  cfg.eval_initial = true;
  SequenceReflector reflector({});
  const core::ICTRunRecord record = run_ict(cfg, reflector);

  REQUIRE(record.turns[0].validation_score.has_value());
  CHECK_EQ(*record.turns[0].validation_score, doctest::Approx(32.0));
  CHECK_EQ(*record.turns[0].validation_success_rate, doctest::Approx(1.0));
  CHECK_EQ(record.best_prompt_id, "r/sp1");
  CHECK_EQ(record.best_score, doctest::Approx(32.0));
}

TEST_CASE("when nothing ever beats zero the initial prompt stays the winner") {
  ICTConfig cfg = read_config(2);
  SequenceReflector reflector({});  // echoes a prompt that never solves read
  const core::ICTRunRecord record = run_ict(cfg, reflector);
  CHECK_EQ(record.best_prompt_id, "r/sp0");
  CHECK_EQ(record.best_score, doctest::Approx(0.0));
}

TEST_CASE("best_prompt rejects a tampered record") {
  ICTConfig cfg = read_config(1);
  SequenceReflector reflector({kReadHint});
  core::ICTRunRecord record = run_ict(cfg, reflector);
  record.best_prompt_id = "r/sp99";
  CHECK_THROWS_AS(best_prompt(record), ContractViolation);
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

TEST_CASE("the config snapshot is embedded, defaulting to the run settings") {
  ICTConfig cfg = read_config(1);
  SUBCASE("default snapshot") {
    SequenceReflector reflector({});
    const core::ICTRunRecord record = run_ict(cfg, reflector);
    CHECK_EQ(record.config.at("k"), 2);
    CHECK_EQ(record.config.at("turns"), 1);
    CHECK_EQ(record.config.at("master_seed"), 1234);
    CHECK_EQ(record.config.at("eval_initial"), false);
    CHECK_EQ(record.config.at("actor"), "scripted");
    CHECK_EQ(record.config.at("families"),
             nlohmann::json::array({"verbgrid-read"}));
  }
  SUBCASE("a caller-supplied snapshot is stored verbatim") {
    cfg.config_snapshot = {{"note", "custom"}};
    SequenceReflector reflector({});
    const core::ICTRunRecord record = run_ict(cfg, reflector);
    CHECK_EQ(record.config, nlohmann::json({{"note", "custom"}}));
  }
}

TEST_CASE("the run config is validated before anything executes") {
  SequenceReflector reflector({});
  ICTConfig cfg = read_config(1);
  cfg.turns = 0;
  CHECK_THROWS_AS(run_ict(cfg, reflector), ConfigError);
  cfg = read_config(1);
  cfg.initial_prompt = "   ";
  CHECK_THROWS_AS(run_ict(cfg, reflector), ConfigError);
  cfg = read_config(1);
  cfg.run_id = "";
  CHECK_THROWS_AS(run_ict(cfg, reflector), ConfigError);
  CHECK(reflector.calls.empty());
}

// ---------------------------------------------------------------------------
// Turn statistics
// ---------------------------------------------------------------------------

namespace {

core::ICTRunRecord stats_fixture() {
  // Hand-built record with known numbers: rates 0, 13/32, 0.25, 1.
  core::ICTRunRecord record;
  record.run_id = "s";
  record.config = {{"k", 3}};
  const auto entry = [](unsigned i, std::optional<double> score, std::optional<double> rate) {
    core::TurnEntry t;
    t.turn_index = i;
    t.prompt = core::make_system_prompt("p" + std::to_string(i),
                                        i == 0 ? core::PromptOrigin::initial
                                               : core::PromptOrigin::reflector,
                                        i, "s");
    t.validation_score = score;
    t.validation_success_rate = rate;
    return t;
  };
  record.turns = {entry(0, std::nullopt, std::nullopt), entry(1, 13.5, 13.0 / 32.0),
                  entry(2, 8.0, 0.25), entry(3, 32.0, 1.0)};
  record.best_prompt_id = "s/sp3";
  record.best_score = 32.0;
  return record;
}

}  // namespace

TEST_CASE("turn_stats keeps evaluated turns and tracks the running best rate") {
  const std::vector<TurnStat> stats = turn_stats(stats_fixture());
  REQUIRE_EQ(stats.size(), 3);  // the unevaluated turn 0 is dropped
  CHECK_EQ(stats[0].turn_index, 1);
  CHECK_EQ(stats[0].val_score, doctest::Approx(13.5));
  CHECK_EQ(stats[0].best_so_far, doctest::Approx(13.0 / 32.0));
  CHECK_EQ(stats[1].best_so_far, doctest::Approx(13.0 / 32.0));  // 0.25 does not regress it
  CHECK_EQ(stats[2].best_so_far, doctest::Approx(1.0));
  for (std::size_t i = 1; i < stats.size(); ++i)
    CHECK(stats[i].best_so_far >= stats[i - 1].best_so_far);
}

TEST_CASE("format_stat_number renders round-trippable short decimals") {
  CHECK_EQ(format_stat_number(0.0), "0");
  CHECK_EQ(format_stat_number(1.0), "1");
  CHECK_EQ(format_stat_number(0.5), "0.5");
  CHECK_EQ(format_stat_number(13.5), "13.5");
  CHECK_EQ(format_stat_number(13.0 / 32.0), "0.40625");
  CHECK_EQ(format_stat_number(1.0 / 3.0), "0.3333333333");
}

TEST_CASE("the stats CSV carries the config and one row per evaluated turn") {
  const std::string csv = turn_stats_csv(stats_fixture());
  CHECK_EQ(csv,
           "# config: {\"k\":3}\n"
           "turn,val_score,val_rate,best_so_far\n"
           "1,13.5,0.40625,0.40625\n"
           "2,8,0.25,0.40625\n"
           "3,32,1,1\n");
}

TEST_CASE("write_turn_stats_csv writes those exact bytes") {
  const std::string path = "/tmp/ictforge_test_stats.csv";
  std::remove(path.c_str());
  write_turn_stats_csv(stats_fixture(), path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream read;
  read << in.rdbuf();
  CHECK_EQ(read.str(), turn_stats_csv(stats_fixture()));
  std::remove(path.c_str());

  CHECK_THROWS_AS(write_turn_stats_csv(stats_fixture(), "/nonexistent-dir/x.csv"), ConfigError);
}
