#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnf/dynamics.hpp"
#include "lnf/normal_form.hpp"
#include "lnf/resonance.hpp"

namespace lnf {

// Malformed configuration; line and column are 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line = 0, int column = 0, const std::string& source = "");
  int line;
  int column;
};

struct LatticeSection {
  int dim = 1;
  std::vector<double> kappa;  // empty means 0
  std::vector<double> gram;   // empty means identity
  double k_enum = 8.0;
  bool operator==(const LatticeSection&) const = default;
};

struct ModelSection {
  std::string kind = "multiplier";  // torus | multiplier | ground_state | beam
  double multiplier_decay = 2.0;
  std::optional<std::uint64_t> multiplier_seed;  // derived from the master seed when absent
  bool fold_zero_mode = true;
  double p0 = 1.0;
  double f_p0 = 0.0;
  double mass = 1.0;
  std::string nonlinearity = "nls";  // nls | beam | none
  std::vector<double> coeffs{1.0};
  bool operator==(const ModelSection&) const = default;
};

struct ClustersSection {
  double delta = 0.5;
  double c_delta = 1.0;
  double c_max = 4.0;
  bool operator==(const ClustersSection&) const = default;
};

struct ResonanceSection {
  int r = 4;
  double gamma = 0.0;  // 0 selects gamma_factor times the measured minimum
  double gamma_factor = 0.9;
  double tau = 0.0;  // 0 selects d r + 2
  bool sampling = false;
  std::uint64_t samples = 100000;
  double budget = 5e7;
  int measure_vectors = 10;
  std::vector<double> measure_gammas{0.1, 0.01};
  std::uint64_t measure_samples = 10000;
  int measure_max_mode = 4;
  bool operator==(const ResonanceSection&) const = default;
};

struct NormalFormSection {
  int r = 1;
  int r_bar = 2;
  double radius = 1e-2;
  double k = 0.0;
  double nu = 0.0;
  double n_loc = 4.0;
  double mu_max = 0.5;
  bool operator==(const NormalFormSection&) const = default;
};

struct SimulateSection {
  std::vector<double> eps{1e-2};
  double s = 4.0;
  double dt = 0.0;
  double t_end = 0.0;  // 0 selects eps^-2
  std::string integrator = "strang";  // strang | rk4
  int stride = 100;
  double max_omega_dt = 0.1;
  double block_cutoff = 0.0;
  double decay = 1.0;
  bool normal_form_coords = false;
  bool operator==(const SimulateSection&) const = default;
};

struct OutputSection {
  std::string dir = "out";
  bool operator==(const OutputSection&) const = default;
};

struct ExperimentConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;
  LatticeSection lattice;
  ModelSection model;
  ClustersSection clusters;
  ResonanceSection resonance;
  NormalFormSection normalform;
  SimulateSection simulate;
  OutputSection output;
  bool operator==(const ExperimentConfig&) const = default;
};

// YAML, or JSON when the name ends in .json. Overrides are "section.key=value".
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>",
                              bool json = false, const std::vector<std::string>& overrides = {});

// Resolved configuration as JSON text; parse_config(config_json(c), "", true) == c.
std::string config_json(const ExperimentConfig& c);

// Stable per-purpose seed from the master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& label);

// Torus Laplacian the configured model is built on.
FrequencyModel build_base_model(const ExperimentConfig& c);
FrequencyModel build_model(const ExperimentConfig& c);
Setting build_setting(const ExperimentConfig& c);
Nonlinearity build_nonlinearity(const ExperimentConfig& c);
SimulationConfig build_simulation(const ExperimentConfig& c, double eps);
NormalFormConfig build_normal_form(const ExperimentConfig& c);

}  // namespace lnf
