// ictforge: command-line front end.
//
//   ictforge run      — execute one full meta-loop, write record + stats CSV
//   ictforge dataset  — run the loop r times and persist the tuple dataset
//   ictforge score    — sample candidate groups per tuple and export scores
//   ictforge eval     — score a prompt file on a family's validation set
//   ictforge replay   — re-execute a recorded turn's batch and compare rewards
//
// A JSON config file (--config) provides defaults; explicit flags override
// it. Config problems exit with code 2; runtime problems with 1.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ictforge/ictforge.hpp"

namespace {

using nlohmann::json;
namespace ict = ictforge;

struct Options {
  std::string config_path;
  std::vector<std::string> families;
  std::string actor = "scripted";
  std::string reflector = "rule";
  unsigned k = 3;
  unsigned turns = 3;
  unsigned loops = 1;
  unsigned group_size = 4;
  std::uint64_t seed = 0;
  std::string endpoint;
  std::string model = "default";
  std::string out;
  unsigned max_parallel = 1;
  bool eval_initial = false;
  std::string prompt_path;   // eval input / optional sp_0 override
  std::string dataset_path;  // score input
  std::string record_path;   // replay input
  unsigned replay_turn = 1;
};

// Config file first, flags second: pre-scan argv for --config so the file's
// values become the defaults CLI11 then overrides.
void load_config_file(Options& o, int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") o.config_path = argv[i + 1];
  }
  if (o.config_path.empty()) return;
  std::ifstream in(o.config_path);
  if (!in) throw ict::ConfigError("cannot open config file: " + o.config_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ict::ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (doc.contains("families")) o.families = doc["families"].get<std::vector<std::string>>();
  o.actor = doc.value("actor", o.actor);
  o.reflector = doc.value("reflector", o.reflector);
  o.k = doc.value("k", o.k);
  o.turns = doc.value("turns", o.turns);
  o.loops = doc.value("loops", o.loops);
  o.group_size = doc.value("group_size", o.group_size);
  o.seed = doc.value("seed", o.seed);
  o.endpoint = doc.value("endpoint", o.endpoint);
  o.model = doc.value("model", o.model);
  o.out = doc.value("out", o.out);
  o.max_parallel = doc.value("max_parallel", o.max_parallel);
  o.eval_initial = doc.value("eval_initial", o.eval_initial);
  o.prompt_path = doc.value("prompt", o.prompt_path);
  o.dataset_path = doc.value("dataset", o.dataset_path);
  o.record_path = doc.value("record", o.record_path);
  o.replay_turn = doc.value("turn", o.replay_turn);
}

json effective_config(const Options& o, const std::string& subcommand) {
  json j;
  j["subcommand"] = subcommand;
  j["families"] = o.families;
  j["actor"] = o.actor;
  j["reflector"] = o.reflector;
  j["k"] = o.k;
  j["turns"] = o.turns;
  j["loops"] = o.loops;
  j["group_size"] = o.group_size;
  j["seed"] = o.seed;
  j["endpoint"] = o.endpoint;
  j["model"] = o.model;
  j["max_parallel"] = o.max_parallel;
  j["eval_initial"] = o.eval_initial;
  return j;
}

// Family ids accept both spellings: "verbgrid:read" and "verbgrid-read".
std::string normalize_family_id(std::string id) {
  for (char& c : id)
    if (c == ':') c = '-';
  return id;
}

std::vector<ict::envkit::FamilyPtr> resolve_families(const std::vector<std::string>& ids) {
  if (ids.empty()) return ict::envkit::builtin_families();
  std::vector<ict::envkit::FamilyPtr> out;
  for (const std::string& id : ids)
    out.push_back(ict::envkit::find_family(normalize_family_id(id)));
  return out;
}

std::vector<ict::core::Task> validation_union(const std::vector<ict::envkit::FamilyPtr>& fams) {
  std::vector<ict::core::Task> tasks;
  for (const auto& f : fams)
    for (ict::core::Task& t : f->validation_tasks()) tasks.push_back(std::move(t));
  return tasks;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ict::ConfigError("cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::string sibling_csv_path(const std::string& out) {
  const std::size_t dot = out.rfind('.');
  if (dot != std::string::npos && out.substr(dot) == ".json")
    return out.substr(0, dot) + ".csv";
  return out + ".csv";
}

struct Runtime {
  std::vector<ict::envkit::FamilyPtr> families;
  ict::actors::ActorConfig actor;
  std::unique_ptr<ict::gateway::ChatClient> client;  // present only when needed
  std::unique_ptr<ict::reflectors::Reflector> reflector;
};

Runtime build_runtime(const Options& o, bool needs_reflector) {
  Runtime rt;
  rt.families = resolve_families(o.families);

  if (o.actor == "scripted") {
    rt.actor.kind = ict::actors::ActorKind::scripted;
  } else if (o.actor == "llm") {
    rt.actor.kind = ict::actors::ActorKind::llm;
    rt.actor.llm = ict::actors::LlmSettings{o.model, 0.7, 512};
  } else {
    throw ict::ConfigError("unknown actor kind: " + o.actor + " (expected scripted|llm)");
  }

  const bool llm_reflector = needs_reflector && o.reflector == "llm";
  if (rt.actor.kind == ict::actors::ActorKind::llm || llm_reflector) {
    if (o.endpoint.empty())
      throw ict::ConfigError("--endpoint is required for llm actor/reflector");
    ict::gateway::GatewayConfig gc;
    gc.base_url = o.endpoint;
    gc.max_in_flight = std::max(1u, o.max_parallel);
    rt.client = std::make_unique<ict::gateway::ChatClient>(gc);
  }

  if (needs_reflector) {
    if (o.reflector == "rule") {
      rt.reflector = std::make_unique<ict::reflectors::RuleReflector>(
          ict::reflectors::default_rules_for(rt.families));
    } else if (o.reflector == "llm") {
      ict::gateway::ChatOptions opts;
      opts.model = o.model;
      opts.max_tokens = 2048;
      rt.reflector = std::make_unique<ict::reflectors::LlmReflector>(*rt.client, opts);
    } else {
      throw ict::ConfigError("unknown reflector kind: " + o.reflector + " (expected rule|llm)");
    }
  }
  return rt;
}

ict::metaenv::MetaEnvConfig meta_config(const Options& o, const Runtime& rt) {
  ict::metaenv::MetaEnvConfig meta;
  meta.families = rt.families;
  meta.k = o.k;
  meta.validation_tasks = validation_union(rt.families);
  meta.actor = rt.actor;
  meta.master_seed = o.seed;
  meta.max_parallel = o.max_parallel;
  meta.backend = rt.client.get();
  return meta;
}

std::string initial_prompt_text(const Options& o, const Runtime& rt) {
  if (!o.prompt_path.empty()) return read_text_file(o.prompt_path);
  return ict::actors::default_actor_prompt(
      ict::envkit::family_set_of(rt.families.front()->family_id()));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_run(const Options& o) {
  if (o.out.empty()) throw ict::ConfigError("run: --out is required");
  Runtime rt = build_runtime(o, /*needs_reflector=*/true);
  const json config = effective_config(o, "run");

  ict::ict::ICTConfig cfg;
  cfg.meta = meta_config(o, rt);
  cfg.turns = o.turns;
  cfg.initial_prompt = initial_prompt_text(o, rt);
  cfg.eval_initial = o.eval_initial;
  cfg.run_id = "run-" + ict::hex64(ict::fnv1a64(config.dump()));
  cfg.config_snapshot = config;

  const ict::core::ICTRunRecord record = ict::ict::run_ict(cfg, *rt.reflector);

  json doc = ict::core::record_to_json(record);
  doc["generated_at"] = iso_timestamp();
  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw ict::ConfigError("cannot open for writing: " + o.out);
  out << doc.dump(2) << "\n";
  ict::ict::write_turn_stats_csv(record, sibling_csv_path(o.out));

  const auto stats = ict::ict::turn_stats(record);
  const double best_rate = stats.empty() ? 0.0 : stats.back().best_so_far;
  std::cout << "best_score=" << record.best_score << " best_rate=" << best_rate
            << " record=" << o.out << "\n";
  return 0;
}

int cmd_dataset(const Options& o) {
  if (o.out.empty()) throw ict::ConfigError("dataset: --out is required");
  Runtime rt = build_runtime(o, /*needs_reflector=*/true);
  const json config = effective_config(o, "dataset");

  ict::traindata::DatasetConfig cfg;
  cfg.loops = o.loops;
  cfg.turns = o.turns;
  cfg.meta = meta_config(o, rt);
  cfg.initial_prompt = initial_prompt_text(o, rt);
  cfg.dataset_id = "dataset-" + ict::hex64(ict::fnv1a64(config.dump()));
  cfg.config_snapshot = config;

  // Each loop gets a fresh reflector from the same settings.
  const Options opts_copy = o;
  const auto factory = [&opts_copy]() -> std::unique_ptr<ict::reflectors::Reflector> {
    Runtime fresh = build_runtime(opts_copy, true);
    return std::move(fresh.reflector);
  };

  ict::traindata::DatasetBuildReport report;
  if (o.reflector == "rule") {
    // Rule reflectors are stateless; reuse one table without rebuilding.
    ict::reflectors::RuleTable table = ict::reflectors::default_rules_for(rt.families);
    report = ict::traindata::build_dataset(cfg, [&table] {
      return std::make_unique<ict::reflectors::RuleReflector>(table);
    });
  } else {
    report = ict::traindata::build_dataset(cfg, factory);
  }

  const std::size_t count = ict::traindata::write_dataset_jsonl(report.tuples, o.out, config);
  std::cout << "tuples=" << count << " out=" << o.out << "\n";
  if (report.failed_loops > 0) {
    std::cerr << "warning: " << report.failed_loops << " loop(s) failed:\n";
    for (const std::string& e : report.loop_errors) std::cerr << "  " << e << "\n";
  }
  return count > 0 ? 0 : 1;
}

int cmd_score(const Options& o) {
  if (o.dataset_path.empty()) throw ict::ConfigError("score: --dataset is required");
  if (o.out.empty()) throw ict::ConfigError("score: --out is required");
  if (o.group_size < 2) throw ict::ConfigError("score: --group-size must be >= 2");
  Runtime rt = build_runtime(o, /*needs_reflector=*/true);
  const json config = effective_config(o, "score");

  const std::vector<ict::traindata::DatasetTuple> tuples =
      ict::traindata::read_dataset_jsonl(o.dataset_path);
  if (tuples.empty()) throw ict::ConfigError("score: dataset is empty: " + o.dataset_path);

  std::vector<ict::traindata::CandidateScoreGroup> groups;
  groups.reserve(tuples.size());
  for (const ict::traindata::DatasetTuple& tuple : tuples) {
    groups.push_back(ict::traindata::score_group(tuple, *rt.reflector, o.group_size, rt.actor,
                                                 rt.families, o.max_parallel,
                                                 rt.client.get()));
  }
  const std::size_t count = ict::traindata::export_training_records(groups, o.out, config);
  std::cout << "groups=" << count << " out=" << o.out << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.prompt_path.empty()) throw ict::ConfigError("eval: --prompt is required");
  Runtime rt = build_runtime(o, /*needs_reflector=*/false);

  const ict::core::SystemPrompt sp = ict::core::make_system_prompt(
      read_text_file(o.prompt_path), ict::core::PromptOrigin::initial, 0, "eval");
  const std::vector<ict::core::Task> tasks = validation_union(rt.families);
  const std::vector<ict::core::Trajectory> trajs = ict::metaenv::run_batch(
      tasks, sp, rt.actor, rt.families, o.max_parallel, rt.client.get());

  double score_sum = 0.0;
  std::size_t successes = 0;
  for (const auto& t : trajs) {
    score_sum += t.total_reward;
    if (t.success) ++successes;
  }
  std::cout << "score_sum=" << score_sum
            << " success_rate=" << static_cast<double>(successes) / trajs.size() << "\n";
  return 0;
}

int cmd_replay(const Options& o) {
  if (o.record_path.empty()) throw ict::ConfigError("replay: --record is required");
  Runtime rt = build_runtime(o, /*needs_reflector=*/false);

  const json doc = json::parse(read_text_file(o.record_path));
  const ict::core::ICTRunRecord record = ict::core::record_from_json(doc);

  const ict::core::TurnEntry* entry = nullptr;
  for (const auto& t : record.turns)
    if (t.turn_index == o.replay_turn) entry = &t;
  if (entry == nullptr)
    throw ict::ConfigError("replay: record has no turn " + std::to_string(o.replay_turn));

  const std::vector<ict::core::Trajectory> replayed =
      ict::metaenv::run_batch(entry->obs.batch_tasks, entry->prompt, rt.actor, rt.families,
                              o.max_parallel, rt.client.get());

  bool all_match = true;
  for (std::size_t j = 0; j < replayed.size(); ++j) {
    const double recorded = entry->obs.trajectories[j].total_reward;
    const double now = replayed[j].total_reward;
    const bool match = recorded == now;
    all_match = all_match && match;
    std::cout << "task " << j << " (" << entry->obs.batch_tasks[j].family_id << "#"
              << entry->obs.batch_tasks[j].instance_seed << "): recorded=" << recorded
              << " replayed=" << now << (match ? "" : "  MISMATCH") << "\n";
  }
  std::cout << (all_match ? "replay: rewards reproduced exactly"
                          : "replay: reward disagreement detected")
            << "\n";
  return all_match ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Reflective prompt-optimization loop over episodic task families"};
  app.require_subcommand(1);

  try {
    load_config_file(o, argc, argv);
  } catch (const ict::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file (flags override it)");
    sub->add_option("--families", o.families, "task family ids (verbgrid:read style accepted)")
        ->delimiter(',');
    sub->add_option("--actor", o.actor, "actor kind: scripted|llm");
    sub->add_option("--k", o.k, "rollout batch size");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--endpoint", o.endpoint, "OpenAI-compatible base URL");
    sub->add_option("--model", o.model, "model name for llm components");
    sub->add_option("--max-parallel", o.max_parallel, "episode concurrency cap");
    sub->add_option("--out", o.out, "output path");
  };

  CLI::App* run = app.add_subcommand("run", "execute one full meta-loop");
  add_common(run);
  run->add_option("--reflector", o.reflector, "reflector kind: rule|llm");
  run->add_option("--turns", o.turns, "meta-turns N");
  run->add_option("--prompt", o.prompt_path, "file with the starting prompt");
  run->add_flag("--eval-initial", o.eval_initial, "also score the starting prompt");

  CLI::App* dataset = app.add_subcommand("dataset", "build the tuple dataset");
  add_common(dataset);
  dataset->add_option("--reflector", o.reflector, "reflector kind: rule|llm");
  dataset->add_option("--turns", o.turns, "meta-turns N per loop");
  dataset->add_option("--loops", o.loops, "independent loops r");
  dataset->add_option("--prompt", o.prompt_path, "file with the starting prompt");

  CLI::App* score = app.add_subcommand("score", "score candidate groups per tuple");
  add_common(score);
  score->add_option("--reflector", o.reflector, "reflector kind: rule|llm");
  score->add_option("--dataset", o.dataset_path, "input dataset JSONL");
  score->add_option("--group-size", o.group_size, "candidates per group G");

  CLI::App* eval = app.add_subcommand("eval", "score a prompt on validation tasks");
  add_common(eval);
  eval->add_option("--prompt", o.prompt_path, "file with the prompt to score");

  CLI::App* replay = app.add_subcommand("replay", "re-execute a recorded turn");
  add_common(replay);
  replay->add_option("--record", o.record_path, "run record JSON");
  replay->add_option("--turn", o.replay_turn, "turn index to replay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (dataset->parsed()) return cmd_dataset(o);
    if (score->parsed()) return cmd_score(o);
    if (eval->parsed()) return cmd_eval(o);
    if (replay->parsed()) return cmd_replay(o);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ict::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ict::SchemaVersionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
