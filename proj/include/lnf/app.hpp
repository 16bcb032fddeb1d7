#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lnf/config.hpp"

namespace lnf {

enum ExitCode : int { kExitPass = 0, kExitFailure = 1, kExitUsage = 2 };

const std::vector<std::string>& subcommands();

struct RunResult {
  int status = kExitPass;
  std::string summary;
  nlohmann::ordered_json measured = nlohmann::ordered_json::object();
  nlohmann::ordered_json witness;  // null unless a check failed with a witness
  std::vector<std::string> files;  // relative to the output directory, in write order
};

// Runs one pipeline and writes its artifacts into c.output.dir. Scientific failures come back
// as status 1; malformed input throws.
RunResult run_pipeline(const std::string& subcommand, const ExperimentConfig& c, int jobs = 1);

struct Timestamps {
  std::string started;
  std::string finished;
  double runtime_s = 0.0;
};

// Everything outside the "timestamps" member depends only on the configuration and seed.
std::string manifest_json(const std::string& subcommand, const ExperimentConfig& c,
                          const RunResult& r, const Timestamps& ts);

std::string sha256_file(const std::filesystem::path& path);

struct CommandLine {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int jobs = 1;
};

// Load, run, write the manifest and map the outcome to an exit code.
int execute(const CommandLine& cmd, std::ostream& out, std::ostream& err);

}  // namespace lnf
