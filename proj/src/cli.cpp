#include "goalforge/cli.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "goalforge/etltl.hpp"

#ifndef GOALFORGE_VERSION
#define GOALFORGE_VERSION "unknown"
#endif

namespace goalforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ExitCode exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
      return ExitCode::Usage;
    case ErrorKind::SteppedAfterTermination:
    case ErrorKind::DivergedNaN:
    case ErrorKind::CorruptCheckpoint:
    case ErrorKind::NonFiniteState:
    case ErrorKind::EmptyTrace:
    case ErrorKind::EmptyBatch:
      return ExitCode::Runtime;
    default:
      return ExitCode::Validation;
  }
}

void configure_logging(std::string_view fallback) {
  const char* env = std::getenv("GOALFORGE_LOG");
  std::string name = env && *env ? env : std::string(fallback);
  auto level = spdlog::level::from_str(name);
  if (level == spdlog::level::off && name != "off") {
    spdlog::warn("GOALFORGE_LOG='{}' is not a log level, using info", name);
    level = spdlog::level::info;
  }
  spdlog::set_level(level);
}

std::string content_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

namespace {

void require_file(const fs::path& path, std::string_view what) {
  if (!fs::is_regular_file(path)) {
    throw UsageError(std::string(what) + " file '" + path.string() + "' does not exist");
  }
}

std::shared_ptr<Environment> environment_or_usage(const std::string& name) {
  if (name != "tank" && name != "plate") {
    throw UsageError("unknown environment '" + name + "' (expected tank or plate)");
  }
  return make_environment(name);
}

}  // namespace

// ---------------------------------------------------------------------------
// compile
// ---------------------------------------------------------------------------

void cmd_compile(const CompileOptions& options, std::ostream& out) {
  require_file(options.goal, "goal");
  require_file(options.schema, "schema");
  auto schema = StateSchema::from_json_text(read_file(options.schema));
  auto program = parse_program(read_file(options.goal), schema);
  auto formula = translate(program);
  auto automaton = build(program);

  if (options.emit_etltl) write_file(*options.emit_etltl, formula.to_sexpr() + "\n");
  if (options.emit_automaton) write_file(*options.emit_automaton, automaton.to_json() + "\n");
  if (options.emit_dot) write_file(*options.emit_dot, automaton.to_dot());

  out << "goals:     ";
  for (std::size_t i = 0; i < program.atoms().size(); ++i) {
    out << (i ? ", " : "") << program.atoms()[i].name << " (" << to_string(program.atoms()[i].op) << ")";
  }
  out << "\nprogram:   " << pretty_print(program) << "\netltl:     " << formula.to_sexpr()
      << "\nautomaton: " << automaton.size() << " states, " << automaton.edges().size() << " edges, hash "
      << content_hash(automaton.to_json()) << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TrainOutput cmd_train(const TrainOptions& options, std::ostream& out) {
  require_file(options.goal, "goal");
  require_file(options.schema, "schema");
  if (options.config) require_file(*options.config, "config");
  if (options.out_dir.empty()) throw UsageError("an output directory is required");
  if (options.final_episodes == 0) throw UsageError("final assessment needs at least one episode");
  auto env = environment_or_usage(options.env);

  TrainerConfig config = options.config ? TrainerConfig::from_json(read_file(*options.config)) : TrainerConfig{};
  if (options.seed) config.seed = *options.seed;
  config.validate();

  const std::string goal_text = read_file(options.goal);
  const std::string schema_text = read_file(options.schema);
  auto schema = StateSchema::from_json_text(schema_text);
  Task task = make_task(goal_text, env, schema, config.max_episode_steps, derive_seed(config.seed, 4, 0));
  const std::string automaton_hash = content_hash(task.automaton.to_json());
  const std::string schema_hash = content_hash(schema.to_json_text());
  const std::uint64_t assess_seed = derive_seed(config.seed, 5, 0);

  TrainOutput output;
  output.manifest = options.out_dir / "manifest.json";
  output.curve = options.out_dir / "curve.csv";
  output.checkpoint = options.out_dir / "checkpoint.json";

  json manifest = {{"tool", "goalforge"},
                   {"version", GOALFORGE_VERSION},
                   {"command", "train"},
                   {"goal", fs::absolute(options.goal).string()},
                   {"schema", fs::absolute(options.schema).string()},
                   {"config", options.config ? fs::absolute(*options.config).string() : std::string()},
                   {"env", options.env},
                   {"seed", config.seed},
                   {"seeds", {{"scale_estimation", derive_seed(config.seed, 4, 0)}, {"final_assessment", assess_seed}}},
                   {"trainer", json::parse(config.to_json())},
                   {"automaton_hash", automaton_hash},
                   {"schema_hash", schema_hash}};
  write_file(output.manifest, manifest.dump(2) + "\n");

  output.result = train(task, config);
  if (output.result.curve.empty()) {
    throw Error(ErrorKind::InvalidConfig, "max_interactions is smaller than one training iteration");
  }
  write_file(output.curve, curve_csv(output.result.curve, task.program));

  json checkpoint = {{"tool", "goalforge"},
                     {"version", GOALFORGE_VERSION},
                     {"goal", goal_text},
                     {"schema", json::parse(schema_text)},
                     {"env", options.env},
                     {"trainer", json::parse(config.to_json())},
                     {"best_iteration", output.result.best_iteration},
                     {"interactions", output.result.interactions},
                     {"automaton_hash", automaton_hash},
                     {"schema_hash", schema_hash},
                     {"policy", json::parse(output.result.best.to_json())}};
  write_file(output.checkpoint, checkpoint.dump(2) + "\n");

  output.final_report = evaluate(task, as_controller(output.result.best), options.final_episodes, assess_seed);
  out << "trained " << options.env << " for " << output.result.curve.size() << " iterations, "
      << output.result.interactions << " interactions; best iteration " << output.result.best_iteration << "\n"
      << "final assessment over " << options.final_episodes << " episodes:\n"
      << output.final_report.to_table();
  return output;
}

// ---------------------------------------------------------------------------
// assess
// ---------------------------------------------------------------------------

AssessmentReport cmd_assess(const AssessOptions& options, std::ostream& out) {
  if (options.episodes == 0) throw UsageError("--episodes must be positive");
  require_file(options.checkpoint, "checkpoint");
  const std::string text = read_file(options.checkpoint);

  json doc;
  std::string goal_text, env_name, automaton_hash, schema_hash;
  StateSchema schema;
  std::size_t horizon = 0;
  try {
    doc = json::parse(text);
    goal_text = doc.at("goal").get<std::string>();
    env_name = doc.at("env").get<std::string>();
    automaton_hash = doc.at("automaton_hash").get<std::string>();
    schema_hash = doc.at("schema_hash").get<std::string>();
    schema = StateSchema::from_json_text(doc.at("schema").dump());
    horizon = doc.at("trainer").at("max_episode_steps").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("checkpoint is unreadable: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("checkpoint is unreadable: ") + e.what());
  }
  if (content_hash(schema.to_json_text()) != schema_hash) {
    throw Error(ErrorKind::CorruptCheckpoint, "checkpoint schema hash does not match its schema");
  }
  if (env_name != "tank" && env_name != "plate") {
    throw Error(ErrorKind::CorruptCheckpoint, "checkpoint names unknown environment '" + env_name + "'");
  }
  std::uint64_t train_seed = doc["trainer"].value("seed", std::uint64_t{0});
  std::optional<Task> task;
  try {
    task = make_task(goal_text, make_environment(env_name), schema, horizon, derive_seed(train_seed, 4, 0));
  } catch (const Error& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("checkpoint goal does not compile: ") + e.what());
  }
  if (content_hash(task->automaton.to_json()) != automaton_hash) {
    throw Error(ErrorKind::CorruptCheckpoint, "checkpoint automaton hash does not match the recompiled goal");
  }
  Policy policy = Policy::from_json(doc.at("policy").dump());
  if (policy.automaton_states() != task->automaton.size() ||
      policy.input_dim() != schema.size() + task->automaton.size() ||
      policy.output_dim() != static_cast<std::size_t>(task->env->action_dim())) {
    throw Error(ErrorKind::CorruptCheckpoint, "checkpoint policy does not fit the goal and environment");
  }

  std::ofstream log;
  if (options.log) {
    if (options.log->has_parent_path()) fs::create_directories(options.log->parent_path());
    log.open(*options.log, std::ios::trunc);
    if (!log) throw Error(ErrorKind::Io, "cannot write '" + options.log->string() + "'");
  }
  auto report = evaluate(*task, as_controller(policy), options.episodes, options.seed, options.log ? &log : nullptr);
  const std::string report_json = report.to_json();
  if (options.report) write_file(*options.report, report_json + "\n");
  out << report_json << "\n" << report.to_table();
  return report;
}

}  // namespace goalforge::cli
