#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

#include "goalforge/cli.hpp"

namespace cli = goalforge::cli;

int main(int argc, char** argv) {
  cli::configure_logging();
  CLI::App app{"goalforge: compile goal programs, train and assess goal-conditioned policies"};
  app.require_subcommand(1);

  cli::CompileOptions compile;
  std::string emit_etltl, emit_automaton, emit_dot;
  auto* c = app.add_subcommand("compile", "Parse a goal file and emit its formula and automaton");
  c->add_option("--goal", compile.goal, "Goal program file")->required();
  c->add_option("--schema", compile.schema, "State schema JSON")->required();
  c->add_option("--emit-etltl", emit_etltl, "Write the formula S-expression here");
  c->add_option("--emit-automaton", emit_automaton, "Write the automaton JSON here");
  c->add_option("--emit-dot", emit_dot, "Write the automaton DOT graph here");

  cli::TrainOptions train;
  std::string config_path;
  std::uint64_t seed = 0;
  auto* t = app.add_subcommand("train", "Train a policy with the cross-entropy method");
  t->add_option("--goal", train.goal, "Goal program file")->required();
  t->add_option("--schema", train.schema, "State schema JSON")->required();
  t->add_option("--env", train.env, "Environment: tank or plate")->required();
  t->add_option("--config", config_path, "Trainer config JSON");
  auto* seed_opt = t->add_option("--seed", seed, "Overrides the config seed");
  t->add_option("--out", train.out_dir, "Output directory")->required();
  t->add_option("--final-episodes", train.final_episodes, "Episodes for the final assessment")
      ->capture_default_str();

  cli::AssessOptions assess;
  std::string report_path, log_path;
  auto* a = app.add_subcommand("assess", "Assess a checkpoint over fresh episodes");
  a->add_option("--checkpoint", assess.checkpoint, "checkpoint.json from train")->required();
  a->add_option("--episodes", assess.episodes, "Number of episodes")->capture_default_str();
  a->add_option("--seed", assess.seed, "Episode seed")->capture_default_str();
  a->add_option("--report", report_path, "Write the report JSON here");
  a->add_option("--log", log_path, "Write the JSONL step log here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(cli::ExitCode::Usage);
  }

  try {
    if (c->parsed()) {
      if (!emit_etltl.empty()) compile.emit_etltl = emit_etltl;
      if (!emit_automaton.empty()) compile.emit_automaton = emit_automaton;
      if (!emit_dot.empty()) compile.emit_dot = emit_dot;
      cli::cmd_compile(compile, std::cout);
    } else if (t->parsed()) {
      if (!config_path.empty()) train.config = config_path;
      if (seed_opt->count()) train.seed = seed;
      cli::cmd_train(train, std::cout);
    } else if (a->parsed()) {
      if (!report_path.empty()) assess.report = report_path;
      if (!log_path.empty()) assess.log = log_path;
      cli::cmd_assess(assess, std::cout);
    }
  } catch (const cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return static_cast<int>(cli::ExitCode::Usage);
  } catch (const goalforge::Error& e) {
    std::cerr << e.what() << "\n";
    return static_cast<int>(cli::exit_code(e.kind()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(cli::ExitCode::Runtime);
  }
  return static_cast<int>(cli::ExitCode::Ok);
}
