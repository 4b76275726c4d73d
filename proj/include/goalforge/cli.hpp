#pragma once

// Command implementations behind the goalforge executable. Each command
// throws goalforge::Error or UsageError; exit_code() maps them to the
// process exit status.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "goalforge/trainer.hpp"

namespace goalforge::cli {

enum class ExitCode : int { Ok = 0, Validation = 1, Usage = 2, Runtime = 3 };

/// Bad flags or arguments; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExitCode exit_code(ErrorKind kind);

/// Sets the spdlog level from GOALFORGE_LOG (trace, debug, info, warn, err,
/// critical, off); unset keeps `fallback`.
void configure_logging(std::string_view fallback = "info");

/// 64-bit FNV-1a, printed as 16 hex digits in manifests and checkpoints.
std::string content_hash(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view text);

// ---------------------------------------------------------------------------

struct CompileOptions {
  std::filesystem::path goal;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> emit_etltl;
  std::optional<std::filesystem::path> emit_automaton;
  std::optional<std::filesystem::path> emit_dot;
};

/// Prints a summary to `out` and writes the requested artifacts.
void cmd_compile(const CompileOptions& options, std::ostream& out);

struct TrainOptions {
  std::filesystem::path goal;
  std::filesystem::path schema;
  std::string env;
  std::optional<std::filesystem::path> config;  // defaults when absent
  std::optional<std::uint64_t> seed;            // overrides the config seed
  std::filesystem::path out_dir;
  std::size_t final_episodes = 100;
};

struct TrainOutput {
  TrainResult result;
  AssessmentReport final_report;  // best policy over final_episodes
  std::filesystem::path manifest, curve, checkpoint;
};

/// Writes manifest.json first, then curve.csv and checkpoint.json, and prints
/// the final report table.
TrainOutput cmd_train(const TrainOptions& options, std::ostream& out);

struct AssessOptions {
  std::filesystem::path checkpoint;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> report;  // report JSON
  std::optional<std::filesystem::path> log;     // JSONL step log
};

/// Prints the report JSON and table. Throws CorruptCheckpoint when the
/// checkpoint does not parse or its hashes do not match the recompiled goal.
AssessmentReport cmd_assess(const AssessOptions& options, std::ostream& out);

}  // namespace goalforge::cli
