#include <iostream>

#include "CLI11.hpp"
#include "lnf/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Lattice normal form pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  lnf::CommandLine cmd;
  std::uint64_t seed = 0;
  std::string out_dir;
  app.add_option("--config", cmd.config_path, "YAML or JSON configuration file")->required();
  app.add_option("--set", cmd.overrides, "Override one value, section.key=value (repeatable)")->take_all();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* dir_opt = app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--jobs", cmd.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);

  const char* help[] = {"Spectrum table and band partition", "Cluster partition",
                        "Non-resonance certificate", "Monte Carlo resonant measure",
                        "Block resonant normal form", "Stability sweep over eps",
                        "Invariant suite"};
  for (std::size_t i = 0; i < lnf::subcommands().size(); ++i) {
    app.add_subcommand(lnf::subcommands()[i], help[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return lnf::kExitUsage;
  }
  cmd.subcommand = app.get_subcommands().front()->get_name();
  if (*seed_opt) cmd.seed = seed;
  if (*dir_opt) cmd.out_dir = out_dir;
  return lnf::execute(cmd, std::cout, std::cerr);
}
